import json
import os

import numpy as np
import pytest

from terrapix.dpixel import GlobalStats, Modality, ObservationSeries
from terrapix.shuffle import build_pairs, global_permute
from terrapix.synthdata import SynthSpec, compute_global_stats, generate, open_corpus


def make_series(rng, modality=Modality.S2, T=24, gap_prob=0.25):
    c = modality.channels
    values = rng.normal(size=(T, c)).astype(np.float32)
    mask = (rng.random(T) >= gap_prob).astype(np.uint8)
    if mask.sum() == 0:
        mask[0] = 1
    doys = np.sort(rng.choice(np.arange(1, 367), size=T, replace=False))
    return ObservationSeries(values=values, mask=mask, doys=doys, modality=modality)


def make_stats(rng=None):
    rng = rng or np.random.default_rng(0)
    return GlobalStats(
        s2_mean=rng.normal(size=10),
        s2_std=rng.uniform(0.5, 2.0, size=10),
        s1_mean=rng.normal(size=2),
        s1_std=rng.uniform(0.5, 2.0, size=2),
    )


@pytest.fixture(scope="session")
def tiny_spec():
    return SynthSpec(n_classes=3, n_tiles=2, height=10, width=10, s2_obs=30,
                     s1_obs=15, gap_prob=0.3, noise_std=0.05, year=2022, seed=11)


@pytest.fixture(scope="session")
def tiny_corpus(tiny_spec, tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    generate(tiny_spec, str(root))
    return str(root)


@pytest.fixture(scope="session")
def tiny_tiles(tiny_corpus):
    return open_corpus(tiny_corpus)


@pytest.fixture(scope="session")
def tiny_stats(tiny_tiles):
    return compute_global_stats(tiny_tiles)


@pytest.fixture(scope="session")
def tiny_pairs(tiny_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("pairs")
    build_pairs(tiny_corpus, L=12, min_valid=1, seed=5, out_dir=str(out),
                chunk_records=64)
    return str(out)


@pytest.fixture(scope="session")
def tiny_shuffled(tiny_pairs, tmp_path_factory):
    out = tmp_path_factory.mktemp("pairs_shuffled")
    global_permute(tiny_pairs, seed=6, out_dir=str(out), bucket_records=96,
                   chunk_records=64)
    return str(out)
