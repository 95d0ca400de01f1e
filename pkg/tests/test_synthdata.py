import filecmp
import json
import os

import numpy as np
import pytest

from terrapix.dpixel import Modality
from terrapix.synthdata import SynthSpec, compute_global_stats, generate, open_corpus


def test_spec_json_round_trip(tiny_spec):
    assert SynthSpec.from_json(tiny_spec.to_json()) == tiny_spec


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(n_classes=0)
    with pytest.raises(ValueError):
        SynthSpec(gap_prob=1.0)


def test_corpus_layout(tiny_corpus, tiny_spec):
    with open(os.path.join(tiny_corpus, "tiles.json")) as fh:
        ids = json.load(fh)
    assert len(ids) == tiny_spec.n_tiles
    for tid in ids:
        assert os.path.exists(os.path.join(tiny_corpus, tid, "meta.json"))
        assert os.path.exists(os.path.join(tiny_corpus, tid, "data.npz"))


def test_seed_fixed_byte_identical(tmp_path):
    spec = SynthSpec(n_classes=2, n_tiles=2, height=6, width=6, s2_obs=12,
                     s1_obs=8, seed=3)
    a, b = tmp_path / "a", tmp_path / "b"
    generate(spec, str(a))
    generate(spec, str(b))
    for tile in json.load(open(a / "tiles.json")):
        assert filecmp.cmp(a / tile / "data.npz", b / tile / "data.npz", shallow=False)


def test_gap_prob_zero_all_valid(tmp_path):
    spec = SynthSpec(n_classes=2, n_tiles=1, height=4, width=4, s2_obs=10,
                     s1_obs=6, gap_prob=0.0, seed=1)
    generate(spec, str(tmp_path / "c"))
    tile = open_corpus(str(tmp_path / "c"))[0]
    for modality in (Modality.S2, Modality.S1):
        _, mask, _ = tile.arrays(modality)
        assert mask.min() == 1


def test_two_classes_two_label_values(tmp_path):
    spec = SynthSpec(n_classes=2, n_tiles=1, height=8, width=8, s2_obs=10,
                     s1_obs=6, seed=2)
    generate(spec, str(tmp_path / "c"))
    tile = open_corpus(str(tmp_path / "c"))[0]
    assert set(np.unique(tile.labels)) == {0, 1}


def test_one_nn_on_clean_series_is_perfect(tmp_path):
    """Classes are separable by construction: 1-NN on near-clean series is 100%."""
    spec = SynthSpec(n_classes=3, n_tiles=1, height=10, width=10, s2_obs=24,
                     s1_obs=8, gap_prob=0.0, noise_std=0.01, seed=4)
    generate(spec, str(tmp_path / "c"))
    tile = open_corpus(str(tmp_path / "c"))[0]
    values, _, _ = tile.arrays(Modality.S2)
    t, h, w, c = values.shape
    x = values.transpose(1, 2, 0, 3).reshape(h * w, t * c)
    y = tile.labels.ravel()
    rng = np.random.default_rng(0)
    order = rng.permutation(h * w)
    train, test = order[: h * w // 2], order[h * w // 2 :]
    d2 = ((x[test][:, None, :] - x[train][None, :, :]) ** 2).sum(axis=2)
    preds = y[train][d2.argmin(axis=1)]
    assert np.all(preds == y[test])


def test_global_stats_oracle(tiny_tiles):
    stats = compute_global_stats(tiny_tiles)
    for modality, mean_got, std_got in (
        (Modality.S2, stats.s2_mean, stats.s2_std),
        (Modality.S1, stats.s1_mean, stats.s1_std),
    ):
        chunks = []
        for tile in tiny_tiles:
            values, mask, _ = tile.arrays(modality)
            chunks.append(values[mask.astype(bool)])
        flat = np.concatenate(chunks).astype(np.float64)
        np.testing.assert_allclose(mean_got, flat.mean(axis=0), rtol=1e-9)
        np.testing.assert_allclose(std_got, flat.std(axis=0), rtol=1e-6)


def test_tile_geometry_side_by_side(tiny_tiles):
    ps = tiny_tiles[0].meta["pixel_size"]
    w = tiny_tiles[0].meta["width"]
    for idx, tile in enumerate(tiny_tiles):
        assert tile.meta["origin_x"] == idx * w * ps
        assert tile.meta["origin_y"] == 0.0
