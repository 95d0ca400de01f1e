"""Out-of-core pair construction and global shuffling.

Pipeline: every pixel that passes the validity filter contributes one
record of two independently sampled views per modality. Records are
packed into fixed-format chunk files, then globally permuted with a
two-pass scatter/shuffle that never holds more than one bucket in
memory.

Chunk byte layout (little-endian):

    header   <4sIIIIQ  magic b"TPXC", version, L, s2 channels, s1 channels, count
    records  count x { uid u64, 28*L float32 }
    footer   <I        CRC-32 of the records region

Per-record float block, in order (all length L rows):
    s2 view A values (L*10), s2 view A doys (L),
    s2 view B values (L*10), s2 view B doys (L),
    s1 view A values (L*2),  s1 view A doys (L),
    s1 view B values (L*2),  s1 view B doys (L)
"""

from __future__ import annotations

import json
import math
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .dpixel import GlobalStats, Modality, sample_view, standardize
from .errors import ChecksumMismatch, EmptyCorpus
from .synthdata import TileStore, compute_global_stats, open_corpus

MAGIC = b"TPXC"
VERSION = 1
HEADER = struct.Struct("<4sIIIIQ")
FOOTER = struct.Struct("<I")
MANIFEST_NAME = "shuffle_manifest.json"
STATS_NAME = "stats.json"

# float offsets inside one record, as multiples of L
_SLOTS = (("s2_a", 10), ("s2_a_doys", 1), ("s2_b", 10), ("s2_b_doys", 1),
          ("s1_a", 2), ("s1_a_doys", 1), ("s1_b", 2), ("s1_b_doys", 1))


def floats_per_record(L: int) -> int:
    return 28 * L


def record_dtype(L: int) -> np.dtype:
    return np.dtype([("uid", "<u8"), ("payload", "<f4", (floats_per_record(L),))])


@dataclass
class PairBatch:
    """A slab of pair records decoded into per-view arrays."""

    uids: np.ndarray  # (n,) uint64
    L: int
    payload: np.ndarray  # (n, 28*L) float32

    def __len__(self):
        return self.uids.shape[0]

    def view(self, name: str) -> np.ndarray:
        offset = 0
        for slot, width in _SLOTS:
            size = width * self.L
            if slot == name:
                block = self.payload[:, offset : offset + size]
                return block.reshape(len(self), self.L, width) if width > 1 else block
            offset += size
        raise KeyError(name)


def write_chunk(path: str, records: np.ndarray, L: int) -> int:
    """Write a structured record array; returns the CRC of the records region."""
    body = records.tobytes()
    crc = zlib.crc32(body)
    header = HEADER.pack(MAGIC, VERSION, L, 10, 2, records.shape[0])
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body)
        fh.write(FOOTER.pack(crc))
    os.replace(tmp, path)
    return crc


def read_chunk(path: str) -> tuple:
    """Read a chunk; returns (records structured array, L)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, L, c2, c1, count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC or version != VERSION or (c2, c1) != (10, 2):
        raise ChecksumMismatch(f"bad chunk header in {path}")
    body = raw[HEADER.size : -FOOTER.size]
    (crc,) = FOOTER.unpack_from(raw, len(raw) - FOOTER.size)
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"CRC mismatch in {path}")
    records = np.frombuffer(body, dtype=record_dtype(L))
    if records.shape[0] != count:
        raise ChecksumMismatch(f"record count mismatch in {path}")
    return records, L


class _ChunkWriter:
    """Accumulates records and flushes fixed-size chunks to a directory."""

    def __init__(self, out_dir: str, L: int, chunk_records: int):
        self.out_dir = out_dir
        self.L = L
        self.chunk_records = chunk_records
        self.pending = []
        self.pending_count = 0
        self.chunks = []
        os.makedirs(out_dir, exist_ok=True)

    def add(self, records: np.ndarray):
        self.pending.append(records)
        self.pending_count += records.shape[0]
        while self.pending_count >= self.chunk_records:
            self._flush(self.chunk_records)

    def _flush(self, n: int):
        stacked = np.concatenate(self.pending) if len(self.pending) > 1 else self.pending[0]
        out, rest = stacked[:n], stacked[n:]
        self.pending = [rest] if rest.shape[0] else []
        self.pending_count = rest.shape[0]
        name = f"chunk_{len(self.chunks):05d}.bin"
        crc = write_chunk(os.path.join(self.out_dir, name), out, self.L)
        self.chunks.append({"name": name, "count": int(out.shape[0]), "crc": crc})

    def close(self):
        if self.pending_count:
            self._flush(self.pending_count)


def _write_manifest(out_dir: str, chunks: list, seed: int, L: int, tile_ids: list):
    manifest = {
        "chunks": chunks,
        "total": int(sum(c["count"] for c in chunks)),
        "seed": int(seed),
        "L": int(L),
        "tile_ids": tile_ids,
        "stats": STATS_NAME,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def read_manifest(store_dir: str) -> dict:
    with open(os.path.join(store_dir, MANIFEST_NAME)) as fh:
        return json.load(fh)


def encode_uid(tile_index: int, row: int, col: int, width: int) -> int:
    return (tile_index << 32) | (row * width + col)


def decode_tile_index(uids: np.ndarray) -> np.ndarray:
    return (uids >> np.uint64(32)).astype(np.int64)


def build_pairs(
    tiles: list,
    L: int,
    min_valid: int,
    seed: int,
    out_dir: str,
    chunk_records: int = 4096,
    stats: GlobalStats | None = None,
) -> dict:
    """Construct two-view pair records for every pixel passing the filter.

    Both modalities must have at least min_valid valid timesteps. Views
    are standardized with corpus statistics before serialization.
    """
    if isinstance(tiles, str):
        tiles = open_corpus(tiles)
    if stats is None:
        stats = compute_global_stats(tiles)
    os.makedirs(out_dir, exist_ok=True)
    stats.save(os.path.join(out_dir, STATS_NAME))

    writer = _ChunkWriter(out_dir, L, chunk_records)
    tile_seeds = np.random.SeedSequence(seed).spawn(len(tiles))
    dtype = record_dtype(L)
    total = 0
    for tile_index, tile in enumerate(tiles):
        rng = np.random.default_rng(tile_seeds[tile_index])
        h, w = tile.shape
        s2_mask = tile.arrays(Modality.S2)[1]
        s1_mask = tile.arrays(Modality.S1)[1]
        s2_counts = s2_mask.sum(axis=0)
        s1_counts = s1_mask.sum(axis=0)
        keep = (s2_counts >= min_valid) & (s1_counts >= min_valid)
        rows, cols = np.nonzero(keep)
        if rows.size == 0:
            continue
        records = np.empty(rows.size, dtype=dtype)
        for i, (r, c) in enumerate(zip(rows, cols)):
            s2 = tile.series(r, c, Modality.S2)
            s1 = tile.series(r, c, Modality.S1)
            parts = []
            for series, modality in ((s2, Modality.S2), (s1, Modality.S1)):
                for _ in range(2):  # views A and B, sampled independently
                    view = standardize(sample_view(series, L, rng), stats, modality)
                    parts.append(view.values.ravel())
                    parts.append(view.doys)
            records["uid"][i] = encode_uid(tile_index, int(r), int(c), w)
            records["payload"][i] = np.concatenate(parts)
        writer.add(records)
        total += rows.size

    if total == 0:
        raise EmptyCorpus("no pixel passed the validity filter")
    writer.close()
    return _write_manifest(out_dir, writer.chunks, seed, L, [t.tile_id for t in tiles])


def global_permute(
    in_dir: str,
    seed: int,
    out_dir: str,
    bucket_records: int = 8192,
    chunk_records: int = 4096,
) -> dict:
    """Uniformly permute all records across chunks with bounded memory.

    Pass 1 scatters records to uniformly chosen buckets; pass 2 shuffles
    each bucket in memory and streams it out. Equivalent to sorting by
    i.i.d. random keys, hence a uniform permutation of the record multiset.
    """
    manifest = read_manifest(in_dir)
    L = manifest["L"]
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    n_buckets = max(1, math.ceil(manifest["total"] / bucket_records))

    bucket_paths = [os.path.join(out_dir, f".bucket_{b:05d}") for b in range(n_buckets)]
    handles = [open(p, "wb") for p in bucket_paths]
    try:
        for entry in manifest["chunks"]:
            records, _ = read_chunk(os.path.join(in_dir, entry["name"]))
            assignment = rng.integers(0, n_buckets, size=records.shape[0])
            for b in np.unique(assignment):
                handles[b].write(records[assignment == b].tobytes())
    finally:
        for fh in handles:
            fh.close()

    writer = _ChunkWriter(out_dir, L, chunk_records)
    dtype = record_dtype(L)
    for path in bucket_paths:
        records = np.fromfile(path, dtype=dtype)
        if records.shape[0]:
            writer.add(records[rng.permutation(records.shape[0])])
        os.remove(path)
    writer.close()
    result = _write_manifest(out_dir, writer.chunks, seed, L, manifest["tile_ids"])
    stats_src = os.path.join(in_dir, STATS_NAME)
    if os.path.exists(stats_src):
        with open(stats_src) as fh:
            with open(os.path.join(out_dir, STATS_NAME), "w") as out:
                out.write(fh.read())
    return result


def read_batches(store_dir: str, batch_size: int):
    """Yield PairBatch objects in on-disk order; last batch may be short."""
    manifest = read_manifest(store_dir)
    L = manifest["L"]
    carry = None
    for entry in manifest["chunks"]:
        records, _ = read_chunk(os.path.join(store_dir, entry["name"]))
        if carry is not None:
            records = np.concatenate([carry, records])
            carry = None
        n_full = records.shape[0] // batch_size
        for i in range(n_full):
            sel = records[i * batch_size : (i + 1) * batch_size]
            yield PairBatch(uids=sel["uid"].copy(), L=L, payload=sel["payload"].copy())
        rest = records[n_full * batch_size :]
        if rest.shape[0]:
            carry = rest.copy()
    if carry is not None and carry.shape[0]:
        yield PairBatch(uids=carry["uid"].copy(), L=L, payload=carry["payload"].copy())
