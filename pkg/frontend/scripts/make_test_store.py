"""Build a tiny embedding store for the live UI loop test.

One 8x8 tile, 4-D embeddings, left half and right half in two tight
clusters so a k=1 classifier trained on a few labels paints each half
with its class color.
"""

import sys

import numpy as np

from terrapix.embstore import EmbeddingStore, quantize


def main(out_dir: str) -> None:
    rng = np.random.default_rng(0)
    emb = np.zeros((8, 8, 4), dtype=np.float32)
    emb[:, :4] = rng.normal(0, 0.05, size=(8, 4, 4)) + 2.0
    emb[:, 4:] = rng.normal(0, 0.05, size=(8, 4, 4)) - 2.0
    meta = {
        "tile_id": "tile_000",
        "year": 2022,
        "origin_x": 0.0,
        "origin_y": 0.0,
        "pixel_size": 10.0,
        "crs": "synthetic/1",
    }
    EmbeddingStore(out_dir).write_tile(quantize(emb, np.ones((8, 8), bool), meta))


if __name__ == "__main__":
    main(sys.argv[1])
