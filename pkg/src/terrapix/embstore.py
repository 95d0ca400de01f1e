"""Embedding-tile product layer.

Runs the frozen encoder over every pixel of a source tile, quantizes the
resulting H x W x D map to int8 with per-dimension scales, stores tiles
with geo metadata, mosaics them for bounding-box queries, and renders
PCA false-color previews.

Tile file layout (little-endian):

    magic b"TPXT", version u32
    meta JSON (u32 length + bytes): tile id, year, H, W, D, geo fields
    scales   D x float32
    validity bitmap, packed bits, ceil(H*W/8) bytes
    payload  H*W*D int8, row-major
    CRC-32 (u32) over everything after the version field
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np
import torch

from .dpixel import GlobalStats, Modality
from .errors import ChecksumMismatch, DegenerateVariance, NoCoverage
from .synthdata import TileStore

TILE_MAGIC = b"TPXT"
TILE_VERSION = 1
SCALE_FLOOR = 1e-12


@dataclass
class EmbeddingTile:
    data: np.ndarray  # (H, W, D) int8
    scales: np.ndarray  # (D,) float32, > 0
    valid: np.ndarray  # (H, W) bool
    meta: dict  # tile_id, year, origin_x, origin_y, pixel_size, crs

    def __post_init__(self):
        h, w, d = self.data.shape
        if h < 1 or w < 1:
            raise ValueError("tile must be non-empty")
        if self.scales.shape != (d,) or np.any(self.scales <= 0):
            raise ValueError("scales must be positive, one per dimension")

    @property
    def shape(self):
        return self.data.shape

    def extent(self):
        """(x0, y0, x1, y1) in map units; y grows with row index."""
        h, w, _ = self.data.shape
        ps = self.meta["pixel_size"]
        x0, y0 = self.meta["origin_x"], self.meta["origin_y"]
        return (x0, y0, x0 + w * ps, y0 + h * ps)


@dataclass
class RegionQuery:
    x0: float
    y0: float
    x1: float
    y1: float
    year: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("bounding box must satisfy min < max on both axes")


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def _sample_indices(mask_counts, mask_flat, L, rng):
    """Sampled timestep indices for one pixel; None when nothing is valid."""
    valid = np.flatnonzero(mask_flat)
    if valid.size == 0:
        return None
    if valid.size >= L:
        return np.sort(rng.choice(valid, size=L, replace=False))
    return np.sort(rng.choice(valid, size=L, replace=True))


def _views_for_modality(tile, modality, stats, L, rng):
    """Standardized (values, doys) view arrays for every pixel of a tile."""
    values, mask, doys = tile.arrays(modality)
    mean, std = stats.for_modality(modality)
    t, h, w, c = values.shape
    out_values = np.zeros((h * w, L, c), dtype=np.float32)
    out_doys = np.zeros((h * w, L), dtype=np.float32)
    has_data = np.zeros(h * w, dtype=bool)
    doy_norm = doys.astype(np.float64) / 366.0
    std_values = ((values - mean) / std).astype(np.float32)
    mask_flat = mask.reshape(t, h * w)
    for p in range(h * w):
        picked = _sample_indices(None, mask_flat[:, p], L, rng)
        if picked is None:
            continue  # zero view == channel means in standardized space
        r, col = divmod(p, w)
        out_values[p] = std_values[picked, r, col, :]
        out_doys[p] = doy_norm[picked]
        has_data[p] = True
    return out_values, out_doys, has_data


def infer_tile(
    model,
    tile: TileStore,
    stats: GlobalStats,
    L: int = 40,
    n_draws: int = 1,
    seed: int = 0,
    batch_pixels: int = 2048,
):
    """Frozen-encoder embedding map for one tile.

    Returns (embeddings (H, W, D) float32, valid (H, W) bool). Pixels with
    no valid observation in either modality get an all-zero fill vector
    and a cleared validity flag. Multiple draws are averaged.
    """
    h, w = tile.shape
    d = model.cfg.d_repr
    acc = np.zeros((h * w, d), dtype=np.float64)
    valid = None
    model.eval()
    seeds = np.random.SeedSequence(seed).spawn(n_draws)
    for draw_seq in seeds:
        rng = np.random.default_rng(draw_seq)
        s2_v, s2_d, s2_ok = _views_for_modality(tile, Modality.S2, stats, L, rng)
        s1_v, s1_d, s1_ok = _views_for_modality(tile, Modality.S1, stats, L, rng)
        draw_valid = s2_ok | s1_ok
        valid = draw_valid if valid is None else (valid & draw_valid)
        with torch.no_grad():
            for start in range(0, h * w, batch_pixels):
                end = min(start + batch_pixels, h * w)
                out = model(
                    torch.from_numpy(s2_v[start:end]),
                    torch.from_numpy(s2_d[start:end]),
                    torch.from_numpy(s1_v[start:end]),
                    torch.from_numpy(s1_d[start:end]),
                    project=False,
                )
                acc[start:end] += out.repr.numpy().astype(np.float64)
    emb = (acc / n_draws).astype(np.float32)
    emb[~valid] = 0.0
    return emb.reshape(h, w, d), valid.reshape(h, w)


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------

def quantize(emb_map: np.ndarray, valid: np.ndarray, meta: dict) -> EmbeddingTile:
    """Per-dimension symmetric int8 quantization: scale_d = max|x| / 127."""
    if not np.isfinite(emb_map).all():
        raise ValueError("embedding map must be finite")
    max_abs = np.abs(emb_map).max(axis=(0, 1))
    scales = np.maximum(max_abs / 127.0, SCALE_FLOOR).astype(np.float32)
    q = np.clip(np.round(emb_map / scales), -127, 127).astype(np.int8)
    return EmbeddingTile(data=q, scales=scales, valid=valid.astype(bool), meta=dict(meta))


def dequantize(tile: EmbeddingTile) -> np.ndarray:
    return tile.data.astype(np.float32) * tile.scales


# ---------------------------------------------------------------------------
# Tile file IO
# ---------------------------------------------------------------------------

def write_tile_file(path: str, tile: EmbeddingTile):
    h, w, d = tile.data.shape
    meta = dict(tile.meta)
    meta.update({"height": h, "width": w, "depth": d})
    meta_bytes = json.dumps(meta).encode()
    body = bytearray()
    body += struct.pack("<I", len(meta_bytes)) + meta_bytes
    body += tile.scales.astype("<f4").tobytes()
    body += np.packbits(tile.valid.ravel()).tobytes()
    body += tile.data.tobytes()
    crc = zlib.crc32(bytes(body))
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    with os.fdopen(fd, "wb") as fh:
        fh.write(TILE_MAGIC)
        fh.write(struct.pack("<I", TILE_VERSION))
        fh.write(body)
        fh.write(struct.pack("<I", crc))
    os.replace(tmp, path)
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=1)


def read_tile_file(path: str) -> EmbeddingTile:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != TILE_MAGIC:
        raise ChecksumMismatch(f"bad magic in {path}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != TILE_VERSION:
        raise ChecksumMismatch(f"unsupported tile version {version}")
    body = raw[8:-4]
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"CRC mismatch in {path}")
    (meta_len,) = struct.unpack_from("<I", body, 0)
    meta = json.loads(body[4 : 4 + meta_len])
    h, w, d = meta["height"], meta["width"], meta["depth"]
    offset = 4 + meta_len
    scales = np.frombuffer(body, dtype="<f4", count=d, offset=offset).copy()
    offset += 4 * d
    n_bits = math.ceil(h * w / 8)
    bits = np.frombuffer(body, dtype=np.uint8, count=n_bits, offset=offset)
    valid = np.unpackbits(bits, count=h * w).astype(bool).reshape(h, w)
    offset += n_bits
    data = np.frombuffer(body, dtype=np.int8, count=h * w * d, offset=offset)
    return EmbeddingTile(
        data=data.reshape(h, w, d).copy(),
        scales=scales,
        valid=valid,
        meta={k: v for k, v in meta.items() if k not in ("height", "width", "depth")},
    )


class EmbeddingStore:
    """Directory of embedding tiles with bounding-box mosaic queries."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self._cache = {}

    def _path(self, tile_id: str, year: int) -> str:
        return os.path.join(self.root, f"{tile_id}_{year}.tpt")

    def write_tile(self, tile: EmbeddingTile):
        write_tile_file(self._path(tile.meta["tile_id"], tile.meta["year"]), tile)
        self._cache.pop((tile.meta["tile_id"], tile.meta["year"]), None)

    def read_tile(self, tile_id: str, year: int) -> EmbeddingTile:
        key = (tile_id, year)
        if key not in self._cache:
            self._cache[key] = read_tile_file(self._path(tile_id, year))
        return self._cache[key]

    def tiles(self, year: int | None = None) -> list:
        out = []
        for name in sorted(os.listdir(self.root)):
            if not name.endswith(".tpt.json"):
                continue
            with open(os.path.join(self.root, name)) as fh:
                meta = json.load(fh)
            if year is None or meta["year"] == year:
                out.append(meta)
        return out

    def fetch_region(self, query: RegionQuery):
        """Mosaic of dequantized tiles covering the query box.

        The box is snapped outward to the pixel grid. Returns
        (mosaic (H, W, D) float32, valid (H, W) bool, geo dict).
        """
        metas = [m for m in self.tiles(query.year) if _intersects(m, query)]
        if not metas:
            raise NoCoverage(f"no tile covers {query}")
        ps = metas[0]["pixel_size"]
        d = metas[0]["depth"]
        col0 = math.floor(query.x0 / ps)
        col1 = math.ceil(query.x1 / ps)
        row0 = math.floor(query.y0 / ps)
        row1 = math.ceil(query.y1 / ps)
        mosaic = np.zeros((row1 - row0, col1 - col0, d), dtype=np.float32)
        valid = np.zeros((row1 - row0, col1 - col0), dtype=bool)
        for meta in metas:
            tile = self.read_tile(meta["tile_id"], meta["year"])
            t_col = round(meta["origin_x"] / ps)
            t_row = round(meta["origin_y"] / ps)
            h, w, _ = tile.data.shape
            r_lo, r_hi = max(row0, t_row), min(row1, t_row + h)
            c_lo, c_hi = max(col0, t_col), min(col1, t_col + w)
            if r_lo >= r_hi or c_lo >= c_hi:
                continue
            src = dequantize(tile)[r_lo - t_row : r_hi - t_row, c_lo - t_col : c_hi - t_col]
            mosaic[r_lo - row0 : r_hi - row0, c_lo - col0 : c_hi - col0] = src
            valid[r_lo - row0 : r_hi - row0, c_lo - col0 : c_hi - col0] = tile.valid[
                r_lo - t_row : r_hi - t_row, c_lo - t_col : c_hi - t_col
            ]
        geo = {
            "origin_x": col0 * ps,
            "origin_y": row0 * ps,
            "pixel_size": ps,
            "year": query.year,
        }
        return mosaic, valid, geo


def _intersects(meta: dict, query: RegionQuery) -> bool:
    ps = meta["pixel_size"]
    x0, y0 = meta["origin_x"], meta["origin_y"]
    x1 = x0 + meta["width"] * ps
    y1 = y0 + meta["height"] * ps
    return not (query.x1 <= x0 or query.x0 >= x1 or query.y1 <= y0 or query.y0 >= y1)


# ---------------------------------------------------------------------------
# PCA false-color rendering
# ---------------------------------------------------------------------------

def pca_decompose(pixels: np.ndarray):
    """Mean and principal axes (rows, descending variance) of pixel vectors."""
    mean = pixels.mean(axis=0)
    centered = pixels - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    return mean, vt, s


def pca_rgb(mosaic: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Top-3 principal components, each min-max scaled to [0, 255]."""
    h, w, d = mosaic.shape
    pixels = mosaic.reshape(-1, d).astype(np.float64)
    fit = pixels[valid.ravel()] if valid is not None else pixels
    if fit.shape[0] < 3:
        raise ValueError("PCA needs at least 3 pixels")
    mean, axes, s = pca_decompose(fit)
    if s.size == 0 or s[0] <= 1e-12:
        # degenerate variance: uniform grayscale fallback
        return np.full((h, w, 3), 128, dtype=np.uint8)
    scores = (pixels - mean) @ axes[: min(3, axes.shape[0])].T
    if scores.shape[1] < 3:
        scores = np.pad(scores, ((0, 0), (0, 3 - scores.shape[1])))
    img = np.zeros((h * w, 3), dtype=np.uint8)
    for ch in range(3):
        col = scores[:, ch]
        lo, hi = col.min(), col.max()
        if hi - lo > 1e-12:
            img[:, ch] = np.round((col - lo) / (hi - lo) * 255).astype(np.uint8)
    return img.reshape(h, w, 3)
