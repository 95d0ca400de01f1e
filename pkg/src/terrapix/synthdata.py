"""Synthetic corpus generator.

Pixels belong to one of K latent phenology classes; each class traces a
smooth seasonal curve per channel. Irregular sampling is simulated with
i.i.d. cloud gaps, and classes are laid out in contiguous spatial blocks
so that batch composition differs measurably between local and global
shuffling.

Tile-store layout (consumed by the shuffle and embedding-store modules):

    <root>/
      tiles.json                 list of tile ids
      <tile_id>/
        meta.json                tile id, geo origin, pixel size, CRS, year
        data.npz                 s2, s2_mask, s2_doys, s1, s1_mask, s1_doys, labels
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .dpixel import GlobalStats, Modality, ObservationSeries

PIXEL_SIZE = 10.0
CRS_ID = "synthetic/1"


@dataclass
class SynthSpec:
    n_classes: int = 4
    n_tiles: int = 4
    height: int = 16
    width: int = 16
    s2_obs: int = 60
    s1_obs: int = 30
    gap_prob: float = 0.3
    noise_std: float = 0.05
    year: int = 2022
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.n_tiles, self.height, self.width, self.s2_obs, self.s1_obs) < 1:
            raise ValueError("spec counts must be positive")
        if not (0.0 <= self.gap_prob < 1.0):
            raise ValueError("gap_prob must lie in [0, 1)")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        return cls(**json.loads(text))


class TileStore:
    """Read access to one tile directory of the corpus layout above."""

    def __init__(self, path: str):
        self.path = path
        with open(os.path.join(path, "meta.json")) as fh:
            self.meta = json.load(fh)
        self._npz = np.load(os.path.join(path, "data.npz"))

    @property
    def tile_id(self) -> str:
        return self.meta["tile_id"]

    @property
    def shape(self):
        return self._npz["labels"].shape

    @property
    def labels(self) -> np.ndarray:
        return self._npz["labels"]

    def series(self, row: int, col: int, modality: Modality) -> ObservationSeries:
        key = modality.value
        return ObservationSeries(
            values=self._npz[key][:, row, col, :],
            mask=self._npz[f"{key}_mask"][:, row, col],
            doys=self._npz[f"{key}_doys"],
            modality=modality,
        )

    def arrays(self, modality: Modality):
        """Raw (values, mask, doys) arrays: (T,H,W,C), (T,H,W), (T,)."""
        key = modality.value
        return self._npz[key], self._npz[f"{key}_mask"], self._npz[f"{key}_doys"]


def open_corpus(root: str) -> list:
    with open(os.path.join(root, "tiles.json")) as fh:
        ids = json.load(fh)
    return [TileStore(os.path.join(root, tid)) for tid in ids]


def _class_curves(rng: np.random.Generator, n_classes: int, channels: int):
    amp = rng.uniform(0.5, 1.5, size=(n_classes, channels))
    phase = rng.uniform(0.0, 1.0, size=(n_classes, channels))
    offset = rng.uniform(-1.0, 1.0, size=(n_classes, channels))
    return amp, phase, offset


def _render_modality(rng, spec, labels, n_obs, channels, amp, phase, offset):
    h, w = labels.shape
    doys = np.sort(rng.choice(np.arange(1, 367), size=n_obs, replace=False))
    t_norm = doys / 366.0
    # class curve value per (timestep, class, channel)
    curve = (
        amp[None, :, :] * np.sin(2.0 * np.pi * (t_norm[:, None, None] + phase[None, :, :]))
        + offset[None, :, :]
    )
    values = curve[:, labels, :]  # (T, H, W, C)
    values = values + rng.normal(0.0, spec.noise_std, size=values.shape)
    if spec.gap_prob > 0.0:
        mask = (rng.random(size=(n_obs, h, w)) >= spec.gap_prob).astype(np.uint8)
    else:
        mask = np.ones((n_obs, h, w), dtype=np.uint8)
    return values.astype(np.float32), mask, doys.astype(np.int64)


def _block_labels(rng, spec) -> np.ndarray:
    """Contiguous class blocks: split the tile into vertical strips."""
    h, w = spec.height, spec.width
    labels = np.zeros((h, w), dtype=np.int64)
    order = rng.permutation(spec.n_classes)
    edges = np.linspace(0, w, spec.n_classes + 1).astype(int)
    for k in range(spec.n_classes):
        labels[:, edges[k] : edges[k + 1]] = order[k]
    return labels


def generate(spec: SynthSpec, out_dir: str) -> list:
    """Write the corpus to out_dir; returns the list of tile ids."""
    root_rng = np.random.default_rng(spec.seed)
    amp2, ph2, off2 = _class_curves(root_rng, spec.n_classes, Modality.S2.channels)
    amp1, ph1, off1 = _class_curves(root_rng, spec.n_classes, Modality.S1.channels)

    os.makedirs(out_dir, exist_ok=True)
    tile_ids = []
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_tiles)
    for idx in range(spec.n_tiles):
        rng = np.random.default_rng(seeds[idx])
        tile_id = f"tile_{idx:03d}"
        labels = _block_labels(rng, spec)
        s2, s2_mask, s2_doys = _render_modality(
            rng, spec, labels, spec.s2_obs, 10, amp2, ph2, off2
        )
        s1, s1_mask, s1_doys = _render_modality(
            rng, spec, labels, spec.s1_obs, 2, amp1, ph1, off1
        )
        tdir = os.path.join(out_dir, tile_id)
        os.makedirs(tdir, exist_ok=True)
        np.savez(
            os.path.join(tdir, "data.npz"),
            s2=s2,
            s2_mask=s2_mask,
            s2_doys=s2_doys,
            s1=s1,
            s1_mask=s1_mask,
            s1_doys=s1_doys,
            labels=labels,
        )
        meta = {
            "tile_id": tile_id,
            "origin_x": idx * spec.width * PIXEL_SIZE,  # tiles side by side on one row
            "origin_y": 0.0,
            "pixel_size": PIXEL_SIZE,
            "crs": CRS_ID,
            "year": spec.year,
            "height": spec.height,
            "width": spec.width,
        }
        with open(os.path.join(tdir, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1)
        tile_ids.append(tile_id)

    with open(os.path.join(out_dir, "tiles.json"), "w") as fh:
        json.dump(tile_ids, fh)
    with open(os.path.join(out_dir, "spec.json"), "w") as fh:
        fh.write(spec.to_json())
    return tile_ids


def compute_global_stats(tiles: list) -> GlobalStats:
    """Channel mean/std over valid observations across the whole corpus."""
    out = {}
    for modality in (Modality.S2, Modality.S1):
        total = np.zeros(modality.channels)
        total_sq = np.zeros(modality.channels)
        count = 0
        for tile in tiles:
            values, mask, _ = tile.arrays(modality)
            sel = mask.astype(bool)
            flat = values[sel]  # (n_valid, C)
            total += flat.sum(axis=0, dtype=np.float64)
            total_sq += np.square(flat, dtype=np.float64).sum(axis=0)
            count += flat.shape[0]
        mean = total / max(count, 1)
        var = np.maximum(total_sq / max(count, 1) - mean**2, 0.0)
        out[modality] = (mean, np.sqrt(var))
    return GlobalStats(
        s2_mean=out[Modality.S2][0],
        s2_std=out[Modality.S2][1],
        s1_mean=out[Modality.S1][0],
        s1_std=out[Modality.S1][1],
    )
