"""Pretraining objective: redundancy-reduction loss plus mixup consistency.

All correlation products are scaled by 1/N, consistently between the
actual and target matrices. Standardization uses the population (1/N)
variance so that diag(C) is exactly 1 when both views coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import BatchTooSmall, InvalidPermutation, ShapeMismatch

DEFAULT_LAMBDA_BT = 5e-3
DEFAULT_LAMBDA_MIX = 1.0
STD_EPS = 1e-5


@dataclass
class LossBreakdown:
    invariance: float
    redundancy: float
    l_bt: float
    l_mix: float
    l_total: float
    alpha_mix: float


def batch_standardize(z: torch.Tensor, eps: float = STD_EPS) -> torch.Tensor:
    """Zero mean, unit population variance per column; eps guards the std floor."""
    if z.shape[0] < 2:
        raise BatchTooSmall("batch standardization needs at least 2 rows")
    mean = z.mean(dim=0)
    std = z.var(dim=0, unbiased=False).sqrt().clamp_min(eps)
    return (z - mean) / std


def cross_correlation(za: torch.Tensor, zb: torch.Tensor) -> torch.Tensor:
    """C = Z_A^T Z_B / N for batch-standardized inputs."""
    if za.shape != zb.shape:
        raise ShapeMismatch("cross-correlation inputs must share shape")
    return za.T @ zb / za.shape[0]


def barlow_loss(c: torch.Tensor, lambda_bt: float = DEFAULT_LAMBDA_BT) -> tuple:
    """sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2."""
    if c.shape[0] != c.shape[1]:
        raise ShapeMismatch("correlation matrix must be square")
    diag = torch.diagonal(c)
    invariance = ((1.0 - diag) ** 2).sum()
    redundancy = (c**2).sum() - (diag**2).sum()
    return invariance + lambda_bt * redundancy, invariance, redundancy


def mix_views(views_a: tuple, views_b: tuple, alpha: float, perm: torch.Tensor) -> tuple:
    """Y_S = Y_B[perm]; Y_M = alpha * Y_A + (1 - alpha) * Y_S, per view tensor.

    Returns (mixed views, shuffled views), each a tuple matching the inputs.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    n = views_a[0].shape[0]
    if perm.shape != (n,) or not torch.equal(
        torch.sort(perm).values, torch.arange(n, device=perm.device)
    ):
        raise InvalidPermutation("perm must be a permutation of batch indices")
    shuffled = tuple(vb[perm] for vb in views_b)
    mixed = tuple(alpha * va + (1.0 - alpha) * ys for va, ys in zip(views_a, shuffled))
    return mixed, shuffled


def mixup_loss(
    z_m: torch.Tensor,
    z_a: torch.Tensor,
    z_s: torch.Tensor,
    alpha: float,
    alg_scale: float | None = None,
) -> torch.Tensor:
    """Consistency between mixed-view correlations and their linear targets.

    Default is the half-sum of squared Frobenius norms; alg_scale, when
    given, multiplies the plain sum of the two squared norms instead (the
    pseudocode variant with an extra lambda factor).
    """
    if z_m.shape != z_a.shape or z_m.shape != z_s.shape:
        raise ShapeMismatch("mixup inputs must share shape")
    c_ma = cross_correlation(z_m, z_a)
    c_ms = cross_correlation(z_m, z_s)
    t_ma = alpha * cross_correlation(z_a, z_a) + (1.0 - alpha) * cross_correlation(z_s, z_a)
    t_ms = alpha * cross_correlation(z_a, z_s) + (1.0 - alpha) * cross_correlation(z_s, z_s)
    diff = ((c_ma - t_ma) ** 2).sum() + ((c_ms - t_ms) ** 2).sum()
    if alg_scale is not None:
        return alg_scale * diff
    return 0.5 * diff


def total_loss(l_bt: torch.Tensor, l_mix: torch.Tensor, lambda_mix: float = DEFAULT_LAMBDA_MIX):
    return l_bt + lambda_mix * l_mix
