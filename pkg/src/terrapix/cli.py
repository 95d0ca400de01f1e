"""Command-line entry points for the pipeline stages and the service."""

from __future__ import annotations

import csv
import json
import os

import click
import numpy as np


@click.group()
def main():
    """Pixel-wise self-supervised embedding pipeline."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth(spec_path, out_dir):
    """Generate a synthetic tile corpus."""
    from .synthdata import SynthSpec, generate

    with open(spec_path) as fh:
        spec = SynthSpec.from_json(fh.read())
    tile_ids = generate(spec, out_dir)
    click.echo(f"wrote {len(tile_ids)} tiles to {out_dir}")


@main.group()
def shuffle():
    """Pair construction and global permutation."""


@shuffle.command("build")
@click.option("--tiles", "tiles_dir", required=True, type=click.Path(exists=True))
@click.option("--L", "seq_len", default=40, show_default=True)
@click.option("--min-valid", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--chunk-records", default=4096, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def shuffle_build(tiles_dir, seq_len, min_valid, seed, chunk_records, out_dir):
    """Build two-view pair records from a tile corpus."""
    from .shuffle import build_pairs

    manifest = build_pairs(tiles_dir, seq_len, min_valid, seed, out_dir,
                           chunk_records=chunk_records)
    click.echo(f"{manifest['total']} records in {len(manifest['chunks'])} chunks")


@shuffle.command("permute")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--bucket-records", default=8192, show_default=True)
def shuffle_permute(in_dir, seed, out_dir, bucket_records):
    """Globally permute a pair store out-of-core."""
    from .shuffle import global_permute

    out_dir = out_dir or in_dir.rstrip("/\\") + "_shuffled"
    manifest = global_permute(in_dir, seed, out_dir, bucket_records=bucket_records)
    click.echo(f"permuted {manifest['total']} records into {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def train(config_path, store_dir, out_dir):
    """Pretrain the dual encoder over a shuffled pair store."""
    from .trainer import load_run_config, run_training

    cfg, enc_cfg = load_run_config(config_path)
    _, records, ckpt = run_training(
        store_dir, cfg, enc_cfg, out_dir,
        log_hook=lambda r: click.echo(
            f"step {r.step} lr {r.lr:.2e} l_bt {r.l_bt:.4f} "
            f"l_mix {r.l_mix:.4f} total {r.l_total:.4f}"
        ),
    )
    click.echo(f"finished {len(records)} steps; checkpoint at {ckpt}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--tiles", "tiles_dir", required=True, type=click.Path(exists=True))
@click.option("--year", required=True, type=int)
@click.option("--n-draws", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "store_dir", required=True, type=click.Path())
def infer(checkpoint, tiles_dir, year, n_draws, seed, store_dir):
    """Produce quantized embedding tiles for every tile in a corpus."""
    from .dpixel import GlobalStats
    from .embstore import EmbeddingStore, infer_tile, quantize
    from .encoder import load_checkpoint
    from .synthdata import open_corpus

    model, extra = load_checkpoint(checkpoint)
    stats = GlobalStats.from_json(json.dumps(extra["stats"]))
    store = EmbeddingStore(store_dir)
    for tile in open_corpus(tiles_dir):
        emb, valid = infer_tile(model, tile, stats, L=model.cfg.L,
                                n_draws=n_draws, seed=seed)
        meta = {
            "tile_id": tile.tile_id,
            "year": year,
            "origin_x": tile.meta["origin_x"],
            "origin_y": tile.meta["origin_y"],
            "pixel_size": tile.meta["pixel_size"],
            "crs": tile.meta["crs"],
        }
        store.write_tile(quantize(emb, valid, meta))
        click.echo(f"stored {tile.tile_id}")


def _parse_bbox(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise click.BadParameter("bbox must be x0,y0,x1,y1")
    return parts


@main.command()
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--bbox", required=True)
@click.option("--year", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def fetch(store_dir, bbox, year, out_path):
    """Mosaic embeddings for a bounding box into an npz file."""
    from .embstore import EmbeddingStore, RegionQuery

    x0, y0, x1, y1 = _parse_bbox(bbox)
    mosaic, valid, geo = EmbeddingStore(store_dir).fetch_region(
        RegionQuery(x0, y0, x1, y1, year)
    )
    np.savez(out_path, embeddings=mosaic, valid=valid, **geo)
    click.echo(f"wrote {mosaic.shape} mosaic to {out_path}")


@main.command()
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--bbox", required=True)
@click.option("--year", required=True, type=int)
@click.option("--png", "png_path", required=True, type=click.Path())
def pca(store_dir, bbox, year, png_path):
    """Render a PCA false-color preview of a region."""
    from PIL import Image

    from .embstore import EmbeddingStore, RegionQuery, pca_rgb

    x0, y0, x1, y1 = _parse_bbox(bbox)
    mosaic, valid, _ = EmbeddingStore(store_dir).fetch_region(
        RegionQuery(x0, y0, x1, y1, year)
    )
    Image.fromarray(pca_rgb(mosaic, valid)).save(png_path)
    click.echo(f"wrote {png_path}")


@main.command()
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_csv", required=True, type=click.Path(exists=True))
@click.option("--task", type=click.Choice(["classify", "regress"]), default="classify")
@click.option("--epochs", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--report", "report_path", required=True, type=click.Path())
def probe(store_dir, labels_csv, task, epochs, seed, report_path):
    """Train an MLP probe on labeled coordinates (CSV: x,y,year,label)."""
    from .downstream import LabeledSet, ProbeConfig, f1, regression_metrics, train_probe
    from .embstore import EmbeddingStore, RegionQuery

    rows = []
    with open(labels_csv) as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["x"]), float(row["y"]), int(row["year"]),
                         float(row["label"])))
    if not rows:
        raise click.ClickException("label CSV is empty")
    store = EmbeddingStore(store_dir)
    embeddings, labels = [], []
    for x, y, year, label in rows:
        ps = store.tiles(year)[0]["pixel_size"]
        mosaic, _, _ = store.fetch_region(RegionQuery(x, y, x + ps, y + ps, year))
        embeddings.append(mosaic[0, 0])
        labels.append(label)
    embeddings = np.stack(embeddings)
    labels = np.asarray(labels)
    if task == "classify":
        labels = labels.astype(np.int64)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    n_val = max(1, len(labels) // 5)
    val_idx, train_idx = order[:n_val], order[n_val:]
    cfg = ProbeConfig(task=task, n_classes=int(labels.max()) + 1 if task == "classify" else 2,
                      epochs=epochs, seed=seed)
    fitted = train_probe(
        LabeledSet(embeddings[train_idx], labels[train_idx], "train"),
        LabeledSet(embeddings[val_idx], labels[val_idx], "val"),
        cfg,
    )
    preds = fitted.predict(embeddings[val_idx])
    if task == "classify":
        report = {"macro_f1": f1(preds, labels[val_idx], "macro"),
                  "weighted_f1": f1(preds, labels[val_idx], "weighted")}
    else:
        rmse, r2, bias = regression_metrics(preds, labels[val_idx])
        report = {"rmse": rmse, "r2": r2, "mean_bias": bias}
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=1)
    click.echo(json.dumps(report))


@main.command()
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--sessions", "sessions_dir", required=True, type=click.Path())
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(store_dir, sessions_dir, static_dir, host, port):
    """Run the interactive labeling service."""
    import uvicorn

    from .service import create_app

    if static_dir is None:
        bundled = os.path.join(os.path.dirname(__file__), "..", "..", "frontend", "dist")
        static_dir = bundled if os.path.isdir(bundled) else None
    app = create_app(store_dir, sessions_dir, static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
