"""Dual-branch time-series encoder.

Per modality: linear channel embedding plus a learnable map of (sin, cos)
day-of-year features, a pre-norm transformer stack, and GRU pooling whose
final hidden state is projected to the 128-D branch output. Branch outputs
are fused by a 2-layer MLP; a wide batch-normalized projector is used only
during training.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .errors import NonFiniteActivation, NonFiniteGradient, ShapeMismatch

S2_CHANNELS = 10
S1_CHANNELS = 2


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    L: int = 40
    d_repr: int = 128
    projector_hidden_layers: int = 2
    projector_width: int = 512
    ffn_mult: int = 8
    quantize: bool = False
    use_s1: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_repr > self.projector_width:
            raise ValueError("d_repr must not exceed projector_width")

    @property
    def ffn_width(self) -> int:
        return self.ffn_mult * self.d_model

    @classmethod
    def paper(cls) -> "EncoderConfig":
        """Full-scale configuration (4 hidden projector layers, 16384 wide)."""
        return cls(
            d_model=512,
            n_layers=4,
            n_heads=4,
            L=40,
            d_repr=128,
            projector_hidden_layers=4,
            projector_width=16384,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderConfig":
        return cls(**doc)


@dataclass
class ForwardOutput:
    repr: torch.Tensor  # (B, d_repr)
    proj: torch.Tensor | None = None  # (B, projector_width) in train mode


def doy_features(doys: torch.Tensor) -> torch.Tensor:
    """Normalized DoY -> (sin, cos) features, stacked on the last axis."""
    angle = 2.0 * math.pi * doys
    return torch.stack([torch.sin(angle), torch.cos(angle)], dim=-1)


def fake_quantize(z: torch.Tensor) -> torch.Tensor:
    """Simulated int8 symmetric quantization with straight-through gradient."""
    scale = z.detach().abs().amax(dim=0).clamp_min(1e-12) / 127.0
    q = torch.round(z / scale).clamp(-127.0, 127.0) * scale
    return z + (q - z).detach()


class BranchEncoder(nn.Module):
    def __init__(self, channels: int, cfg: EncoderConfig):
        super().__init__()
        d = cfg.d_model
        self.channels = channels
        self.phi = nn.Linear(channels, d)
        self.psi = nn.Linear(2, d)
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.ffn_width,
            dropout=0.0,
            batch_first=True,
            norm_first=True,
        )
        self.transformer = nn.TransformerEncoder(
            layer, cfg.n_layers, norm=nn.LayerNorm(d), enable_nested_tensor=False
        )
        self.gru = nn.GRU(d, d, batch_first=True)
        self.out = nn.Linear(d, cfg.d_repr)

    def embed(self, values: torch.Tensor, doys: torch.Tensor) -> torch.Tensor:
        """Token sequence e_t = phi(values_t) + psi(sin/cos of DoY_t)."""
        if values.shape[-1] != self.channels:
            raise ShapeMismatch(
                f"expected {self.channels} channels, got {values.shape[-1]}"
            )
        return self.phi(values) + self.psi(doy_features(doys))

    def encode(self, tokens: torch.Tensor) -> torch.Tensor:
        """Transformer stack, then the final GRU hidden state -> d_repr."""
        squeeze = tokens.dim() == 2
        if squeeze:
            tokens = tokens.unsqueeze(0)
        h = self.transformer(tokens)
        _, h_n = self.gru(h)
        z = self.out(h_n[-1])
        if not torch.isfinite(z).all():
            raise NonFiniteActivation("branch output contains NaN/Inf")
        return z.squeeze(0) if squeeze else z

    def forward(self, values: torch.Tensor, doys: torch.Tensor) -> torch.Tensor:
        return self.encode(self.embed(values, doys))


def _projector(cfg: EncoderConfig) -> nn.Sequential:
    w = cfg.projector_width
    layers = [nn.Linear(cfg.d_repr, w), nn.BatchNorm1d(w), nn.ReLU(inplace=True)]
    for _ in range(cfg.projector_hidden_layers):
        layers += [nn.Linear(w, w), nn.BatchNorm1d(w), nn.ReLU(inplace=True)]
    layers.append(nn.Linear(w, w))
    return nn.Sequential(*layers)


class DualEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.s2 = BranchEncoder(S2_CHANNELS, cfg)
        self.s1 = BranchEncoder(S1_CHANNELS, cfg)
        r = cfg.d_repr
        self.fusion = nn.Sequential(
            nn.Linear(2 * r, 2 * r), nn.ReLU(inplace=True), nn.Linear(2 * r, r)
        )
        self.projector = _projector(cfg)

    def fuse(self, z_s2: torch.Tensor, z_s1: torch.Tensor) -> torch.Tensor:
        if z_s2.shape[-1] != self.cfg.d_repr or z_s1.shape[-1] != self.cfg.d_repr:
            raise ShapeMismatch("fusion inputs must be d_repr wide")
        return self.fusion(torch.cat([z_s2, z_s1], dim=-1))

    def project(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.cfg.d_repr:
            raise ShapeMismatch("projector input must be d_repr wide")
        return self.projector(z)

    def forward(self, s2_values, s2_doys, s1_values, s1_doys, project=None) -> ForwardOutput:
        z_s2 = self.s2(s2_values, s2_doys)
        if self.cfg.use_s1:
            z_s1 = self.s1(s1_values, s1_doys)
        else:
            z_s1 = torch.zeros_like(z_s2)
        z = self.fuse(z_s2, z_s1)
        if self.cfg.quantize:
            z = fake_quantize(z)
        if project is None:
            project = self.training
        proj = self.project(z) if project else None
        return ForwardOutput(repr=z, proj=proj)


def init_weights(model: nn.Module, seed: int = 0) -> nn.Module:
    """Truncated normal (std 0.02) linear/attention init, orthogonal GRU recurrence."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "gru.weight_hh" in name:
                for block in p.chunk(3, dim=0):
                    a = torch.randn(block.shape, generator=gen)
                    q, r = torch.linalg.qr(a)
                    q = q * torch.sign(torch.diagonal(r))
                    block.copy_(q)
            elif p.dim() >= 2:
                p.copy_(torch.nn.init.trunc_normal_(
                    torch.empty_like(p), std=0.02, a=-0.04, b=0.04, generator=gen))
            elif "bias" in name:
                p.zero_()
            # 1-D weights (layer/batch norm scales) keep their default of 1
    return model


def build_model(cfg: EncoderConfig, seed: int = 0) -> DualEncoder:
    model = DualEncoder(cfg)
    init_weights(model, seed)
    return model


def gradients(loss: torch.Tensor, model: nn.Module) -> dict:
    """Reverse-mode gradients for every parameter, checked for finiteness."""
    params = dict(model.named_parameters())
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    out = {}
    for (name, p), g in zip(params.items(), grads):
        g = torch.zeros_like(p) if g is None else g
        if not torch.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient in {name}")
        out[name] = g
    return out


# ---------------------------------------------------------------------------
# Parameter accounting (shape arithmetic; no tensors allocated)
# ---------------------------------------------------------------------------

def _branch_count(channels: int, cfg: EncoderConfig) -> int:
    d, f, r = cfg.d_model, cfg.ffn_width, cfg.d_repr
    phi = channels * d + d
    psi = 2 * d + d
    per_layer = (3 * d * d + 3 * d) + (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
    final_norm = 2 * d
    gru = 2 * 3 * d * d + 6 * d
    out = d * r + r
    return phi + psi + cfg.n_layers * per_layer + final_norm + gru + out


def _projector_count(cfg: EncoderConfig) -> int:
    w, r = cfg.projector_width, cfg.d_repr
    # each BatchNorm1d: 2w affine params + 2w running stats + 1 step counter
    bn = 4 * w + 1
    total = (r * w + w) + bn
    total += cfg.projector_hidden_layers * (w * w + w + bn)
    total += w * w + w
    return total


def parameter_breakdown(cfg: EncoderConfig) -> dict:
    """Entry counts per component (parameters plus persistent buffers)."""
    r = cfg.d_repr
    fusion = (2 * r) * (2 * r) + 2 * r + (2 * r) * r + r
    counts = {
        "s2_encoder": _branch_count(S2_CHANNELS, cfg),
        "s1_encoder": _branch_count(S1_CHANNELS, cfg),
        "fusion": fusion,
        "projector": _projector_count(cfg),
    }
    counts["encoders"] = counts["s2_encoder"] + counts["s1_encoder"]
    counts["total"] = counts["encoders"] + counts["fusion"] + counts["projector"]
    return counts


def state_entry_count(model: nn.Module) -> int:
    """numel over the full state dict (parameters and buffers)."""
    return int(sum(t.numel() for t in model.state_dict().values()))


# ---------------------------------------------------------------------------
# Checkpoint format: versioned binary, little-endian, JSON sidecar
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"TPXW"
CKPT_VERSION = 1
_DTYPE_F32 = 0
_DTYPE_I64 = 1


def save_checkpoint(path: str, model: DualEncoder, extra: dict | None = None):
    cfg_doc = {"encoder": model.cfg.to_dict(), **(extra or {})}
    cfg_bytes = json.dumps(cfg_doc).encode()
    state = model.state_dict()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            if tensor.dtype == torch.int64:
                code, arr = _DTYPE_I64, tensor.numpy().astype("<i8")
            else:
                code, arr = _DTYPE_F32, tensor.to(torch.float32).numpy().astype("<f4")
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{max(arr.ndim, 0)}I", *arr.shape))
            fh.write(arr.tobytes())
    with open(path + ".json", "w") as fh:
        json.dump(cfg_doc, fh, indent=1)


def load_checkpoint(path: str) -> tuple:
    """Returns (model, extra config dict)."""
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError("not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        cfg_doc = json.loads(fh.read(cfg_len))
        (n_entries,) = struct.unpack("<I", fh.read(4))
        state = {}
        for _ in range(n_entries):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            count = int(np.prod(shape)) if ndim else 1
            if code == _DTYPE_I64:
                arr = np.frombuffer(fh.read(8 * count), dtype="<i8").reshape(shape)
                state[name] = torch.from_numpy(arr.copy())
            else:
                arr = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
                state[name] = torch.from_numpy(arr.copy())
    cfg = EncoderConfig.from_dict(cfg_doc["encoder"])
    model = DualEncoder(cfg)
    model.load_state_dict(state)
    model.eval()
    extra = {k: v for k, v in cfg_doc.items() if k != "encoder"}
    return model, extra
