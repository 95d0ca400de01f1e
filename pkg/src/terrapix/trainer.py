"""Pretraining loop: AdamW, linear warmup + cosine decay, gradient
clipping, mixup consistency, effective-rank telemetry and checkpointing."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, asdict

import numpy as np
import torch

from . import objective
from .encoder import DualEncoder, EncoderConfig, build_model, save_checkpoint
from .errors import DegenerateInput, NonFiniteLoss, OutOfRange
from .shuffle import PairBatch, read_batches, read_manifest, STATS_NAME


@dataclass
class TrainConfig:
    base_lr: float = 0.002
    weight_decay: float = 1e-6
    warmup_fraction: float = 0.10
    grad_clip_norm: float = 2.0
    batch_size: int = 256
    total_steps: int | None = None  # default: one pass over the store
    lambda_bt: float = 5e-3
    lambda_mix: float = 1.0
    beta_alpha: float = 1.0  # Beta(1,1) == U(0,1) mixing coefficient
    beta_beta: float = 1.0
    mix_alg_scale: bool = False  # pseudocode loss variant with extra lambda factor
    rankme_every: int = 50
    checkpoint_every: int = 0  # 0 -> final checkpoint only
    seed: int = 0

    def __post_init__(self):
        if min(self.base_lr, self.grad_clip_norm, self.batch_size) <= 0:
            raise ValueError("config values must be positive")
        if not (0.0 < self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction must lie in (0, 1)")


@dataclass
class TrainLogRecord:
    step: int
    lr: float
    l_bt: float
    l_mix: float
    l_total: float
    rankme_proj: float | None
    rankme_repr: float | None
    wall_ms: float


def load_run_config(path: str) -> tuple:
    """Parse a JSON/TOML run file into (TrainConfig, EncoderConfig)."""
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            try:
                import tomllib
            except ImportError:
                import tomli as tomllib
            doc = tomllib.load(fh)
        else:
            doc = json.loads(fh.read())
    enc = EncoderConfig.from_dict(doc.get("encoder", {}))
    train = TrainConfig(**{k: v for k, v in doc.items() if k != "encoder"})
    return train, enc


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear 0 -> base_lr over warmup, then cosine decay to 0."""
    total = cfg.total_steps
    if total is None or total <= 0:
        raise ValueError("total_steps must be set for scheduling")
    if step < 0 or step > total:
        raise OutOfRange(f"step {step} outside [0, {total}]")
    warmup = max(1, round(cfg.warmup_fraction * total))
    if step <= warmup:
        return cfg.base_lr * step / warmup
    progress = (step - warmup) / (total - warmup)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def rankme(z) -> float:
    """Normalized singular-value entropy of a batch, in [0, 1]."""
    if not torch.is_tensor(z):
        z = torch.as_tensor(np.asarray(z))
    z = z.detach().to(torch.float64)
    if z.shape[0] < 2:
        raise ValueError("rankme needs a batch of at least 2 rows")
    if torch.count_nonzero(z) == 0:
        raise DegenerateInput("rankme undefined for an all-zero matrix")
    s = torch.linalg.svdvals(z)
    p = s / s.sum()
    nonzero = p[p > 0]
    entropy = -(nonzero * nonzero.log()).sum()
    return float(entropy / math.log(z.shape[1]))


def batch_to_tensors(batch: PairBatch) -> dict:
    names = ("s2_a", "s2_a_doys", "s2_b", "s2_b_doys",
             "s1_a", "s1_a_doys", "s1_b", "s1_b_doys")
    return {n: torch.from_numpy(np.ascontiguousarray(batch.view(n))) for n in names}


def train_step(
    batch: dict,
    model: DualEncoder,
    opt: torch.optim.Optimizer,
    cfg: TrainConfig,
    step: int,
    rng: np.random.Generator,
) -> TrainLogRecord:
    """One optimization step over a pair batch (tensors from batch_to_tensors)."""
    t0 = time.perf_counter()
    model.train()
    lr = lr_at(step + 1, cfg)
    for group in opt.param_groups:
        group["lr"] = lr

    out_a = model(batch["s2_a"], batch["s2_a_doys"], batch["s1_a"], batch["s1_a_doys"],
                  project=True)
    out_b = model(batch["s2_b"], batch["s2_b_doys"], batch["s1_b"], batch["s1_b_doys"],
                  project=True)

    n = batch["s2_a"].shape[0]
    alpha = float(rng.beta(cfg.beta_alpha, cfg.beta_beta))
    perm = torch.from_numpy(rng.permutation(n))
    views_a = (batch["s2_a"], batch["s2_a_doys"], batch["s1_a"], batch["s1_a_doys"])
    views_b = (batch["s2_b"], batch["s2_b_doys"], batch["s1_b"], batch["s1_b_doys"])
    mixed, _ = objective.mix_views(views_a, views_b, alpha, perm)
    out_m = model(*mixed, project=True)

    z_a = objective.batch_standardize(out_a.proj)
    z_b = objective.batch_standardize(out_b.proj)
    z_m = objective.batch_standardize(out_m.proj)
    z_s = z_b[perm]  # column stats are permutation-invariant

    l_bt, _, _ = objective.barlow_loss(cross_corr(z_a, z_b), cfg.lambda_bt)
    alg_scale = cfg.lambda_mix * cfg.lambda_bt if cfg.mix_alg_scale else None
    l_mix = objective.mixup_loss(z_m, z_a, z_s, alpha, alg_scale=alg_scale)
    loss = objective.total_loss(l_bt, l_mix, cfg.lambda_mix)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"step {step}: l_bt={float(l_bt)} l_mix={float(l_mix)}")

    opt.zero_grad(set_to_none=True)
    loss.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
    opt.step()

    tele_proj = tele_repr = None
    if cfg.rankme_every and step % cfg.rankme_every == 0:
        tele_proj = rankme(out_a.proj)
        tele_repr = rankme(out_a.repr)
    return TrainLogRecord(
        step=step,
        lr=lr,
        l_bt=float(l_bt.detach()),
        l_mix=float(l_mix.detach()),
        l_total=float(loss.detach()),
        rankme_proj=tele_proj,
        rankme_repr=tele_repr,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


def cross_corr(z_a, z_b):
    return objective.cross_correlation(z_a, z_b)


def make_optimizer(model: DualEncoder, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(
        model.parameters(),
        lr=0.0,
        betas=(0.9, 0.999),
        eps=1e-8,
        weight_decay=cfg.weight_decay,
    )


def run_training(
    store_dir: str,
    cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    out_dir: str,
    log_hook=None,
) -> tuple:
    """Train over the shuffle store; returns (model, log records, ckpt path).

    One pass over the store by default; a total_steps cap recycles or
    truncates the stream as needed.
    """
    manifest = read_manifest(store_dir)
    n_batches = math.ceil(manifest["total"] / cfg.batch_size)
    if cfg.total_steps is None:
        cfg.total_steps = n_batches
    os.makedirs(out_dir, exist_ok=True)

    torch.manual_seed(cfg.seed)
    model = build_model(enc_cfg, seed=cfg.seed)
    opt = make_optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)

    stats_path = os.path.join(store_dir, STATS_NAME)
    extra = {"train": asdict(cfg)}
    if os.path.exists(stats_path):
        with open(stats_path) as fh:
            extra["stats"] = json.load(fh)

    records = []
    log_path = os.path.join(out_dir, "train_log.jsonl")
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    stream = read_batches(store_dir, cfg.batch_size)
    with open(log_path, "w") as log_fh:
        for step in range(cfg.total_steps):
            try:
                batch = next(stream)
            except StopIteration:
                stream = read_batches(store_dir, cfg.batch_size)
                batch = next(stream)
            if len(batch) < 2:  # standardization needs >= 2 rows
                continue
            record = train_step(batch_to_tensors(batch), model, opt, cfg, step, rng)
            records.append(record)
            log_fh.write(json.dumps(asdict(record)) + "\n")
            if log_hook is not None:
                log_hook(record)
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"checkpoint_{step + 1:06d}.bin"),
                                model, extra)
    save_checkpoint(ckpt_path, model, extra)
    return model, records, ckpt_path
