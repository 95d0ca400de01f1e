import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from terrapix import objective
from terrapix.errors import BatchTooSmall, InvalidPermutation, ShapeMismatch


def _rand(n, d, seed, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(n, d, generator=gen, dtype=dtype)


def brute_cross_correlation(za, zb):
    n, d = za.shape
    c = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            c[i, j] = sum(za[k, i] * zb[k, j] for k in range(n)) / n
    return c


def brute_barlow(c, lam):
    d = c.shape[0]
    inv = sum((1.0 - c[i, i]) ** 2 for i in range(d))
    red = sum(c[i, j] ** 2 for i in range(d) for j in range(d) if i != j)
    return inv + lam * red


def brute_mixup(z_m, z_a, z_s, alpha):
    c_ma = brute_cross_correlation(z_m, z_a)
    c_ms = brute_cross_correlation(z_m, z_s)
    t_ma = alpha * brute_cross_correlation(z_a, z_a) + (1 - alpha) * brute_cross_correlation(z_s, z_a)
    t_ms = alpha * brute_cross_correlation(z_a, z_s) + (1 - alpha) * brute_cross_correlation(z_s, z_s)
    return 0.5 * (((c_ma - t_ma) ** 2).sum() + ((c_ms - t_ms) ** 2).sum())


def test_batch_standardize_moments():
    z = _rand(64, 7, 0)
    out = objective.batch_standardize(z)
    np.testing.assert_allclose(out.mean(dim=0).numpy(), np.zeros(7), atol=1e-12)
    np.testing.assert_allclose(out.var(dim=0, unbiased=False).numpy(), np.ones(7),
                               atol=1e-10)


def test_batch_standardize_constant_column_floor():
    z = torch.ones(8, 3, dtype=torch.float64)
    out = objective.batch_standardize(z)
    assert torch.isfinite(out).all()
    np.testing.assert_allclose(out.numpy(), np.zeros((8, 3)), atol=1e-12)


def test_batch_standardize_too_small():
    with pytest.raises(BatchTooSmall):
        objective.batch_standardize(torch.zeros(1, 4))


def test_cross_correlation_oracle():
    za, zb = _rand(9, 5, 1), _rand(9, 5, 2)
    got = objective.cross_correlation(za, zb).numpy()
    np.testing.assert_allclose(got, brute_cross_correlation(za.numpy(), zb.numpy()),
                               atol=1e-9)


def test_cross_correlation_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        objective.cross_correlation(torch.zeros(4, 3), torch.zeros(4, 2))


def test_cross_correlation_identity_for_identical_standardized_views():
    z = objective.batch_standardize(_rand(128, 6, 3))
    c = objective.cross_correlation(z, z)
    np.testing.assert_allclose(torch.diagonal(c).numpy(), np.ones(6), atol=1e-6)


def test_barlow_loss_hand_case():
    c = torch.tensor([[1.0, 0.5], [-0.25, 0.0]], dtype=torch.float64)
    loss, inv, red = objective.barlow_loss(c, lambda_bt=0.1)
    # by hand: (1-1)^2 + (1-0)^2 = 1; off-diag 0.25 + 0.0625 = 0.3125
    assert abs(float(inv) - 1.0) < 1e-12
    assert abs(float(red) - 0.3125) < 1e-12
    assert abs(float(loss) - (1.0 + 0.1 * 0.3125)) < 1e-12


def test_barlow_loss_zero_at_identity():
    loss, _, _ = objective.barlow_loss(torch.eye(8, dtype=torch.float64))
    assert float(loss) == 0.0


def test_barlow_loss_oracle():
    c = _rand(6, 6, 4)
    loss, _, _ = objective.barlow_loss(c, lambda_bt=5e-3)
    assert abs(float(loss) - brute_barlow(c.numpy(), 5e-3)) < 1e-9


def test_barlow_loss_requires_square():
    with pytest.raises(ShapeMismatch):
        objective.barlow_loss(torch.zeros(3, 4))


def test_mix_views_endpoints_and_validation():
    va = (_rand(6, 4, 5), _rand(6, 2, 6))
    vb = (_rand(6, 4, 7), _rand(6, 2, 8))
    perm = torch.tensor([3, 1, 0, 5, 4, 2])
    mixed, shuffled = objective.mix_views(va, vb, alpha=0.0, perm=perm)
    for m, s in zip(mixed, shuffled):
        assert torch.equal(m, s)
    mixed, _ = objective.mix_views(va, vb, alpha=1.0, perm=perm)
    for m, a in zip(mixed, va):
        assert torch.equal(m, a)
    for s, b in zip(shuffled, vb):
        assert torch.equal(s, b[perm])
    with pytest.raises(InvalidPermutation):
        objective.mix_views(va, vb, 0.5, torch.tensor([0, 0, 1, 2, 3, 4]))
    with pytest.raises(ValueError):
        objective.mix_views(va, vb, 1.5, perm)


def test_mix_views_linear_combination():
    va = (_rand(5, 3, 9),)
    vb = (_rand(5, 3, 10),)
    perm = torch.tensor([4, 3, 2, 1, 0])
    alpha = 0.3
    mixed, shuffled = objective.mix_views(va, vb, alpha, perm)
    expected = alpha * va[0] + (1 - alpha) * vb[0][perm]
    np.testing.assert_allclose(mixed[0].numpy(), expected.numpy(), atol=1e-12)


def test_mixup_loss_oracle():
    z_m, z_a, z_s = _rand(8, 5, 11), _rand(8, 5, 12), _rand(8, 5, 13)
    got = float(objective.mixup_loss(z_m, z_a, z_s, alpha=0.4))
    want = brute_mixup(z_m.numpy(), z_a.numpy(), z_s.numpy(), 0.4)
    assert abs(got - want) < 1e-9


def test_mixup_loss_alg_scale_variant():
    z_m, z_a, z_s = _rand(8, 5, 14), _rand(8, 5, 15), _rand(8, 5, 16)
    base = float(objective.mixup_loss(z_m, z_a, z_s, alpha=0.7))
    scaled = float(objective.mixup_loss(z_m, z_a, z_s, alpha=0.7, alg_scale=5e-3))
    assert abs(scaled - 5e-3 * (2.0 * base)) < 1e-12


def test_mixup_loss_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        objective.mixup_loss(torch.zeros(4, 3), torch.zeros(4, 3), torch.zeros(4, 2), 0.5)


def test_total_loss():
    l = objective.total_loss(torch.tensor(2.0), torch.tensor(3.0), lambda_mix=0.5)
    assert float(l) == 3.5


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 20), d=st.integers(1, 10))
def test_barlow_loss_nonnegative(seed, n, d):
    z = objective.batch_standardize(_rand(n, d, seed))
    loss, inv, red = objective.barlow_loss(objective.cross_correlation(z, z))
    assert float(loss) >= 0.0
    assert float(inv) >= 0.0 and float(red) >= -1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.0, 1.0))
def test_mixup_matches_brute_force(seed, alpha):
    z_m, z_a, z_s = _rand(6, 4, seed), _rand(6, 4, seed + 1), _rand(6, 4, seed + 2)
    got = float(objective.mixup_loss(z_m, z_a, z_s, alpha))
    want = brute_mixup(z_m.numpy(), z_a.numpy(), z_s.numpy(), alpha)
    assert abs(got - want) < 1e-9
