import numpy as np
import pytest
import torch

from terrapix.encoder import (
    DualEncoder,
    EncoderConfig,
    build_model,
    doy_features,
    fake_quantize,
    gradients,
    load_checkpoint,
    parameter_breakdown,
    save_checkpoint,
    state_entry_count,
)
from terrapix.errors import ShapeMismatch

TINY = EncoderConfig(d_model=8, n_layers=1, n_heads=2, L=4, d_repr=8,
                     projector_hidden_layers=1, projector_width=16)


def _inputs(cfg, batch=3, seed=0):
    gen = torch.Generator().manual_seed(seed)
    s2 = torch.randn(batch, cfg.L, 10, generator=gen)
    s1 = torch.randn(batch, cfg.L, 2, generator=gen)
    d2 = torch.rand(batch, cfg.L, generator=gen)
    d1 = torch.rand(batch, cfg.L, generator=gen)
    return s2, d2, s1, d1


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(d_model=10, n_heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(d_repr=64, projector_width=32)


def test_doy_features_oracle():
    doys = torch.tensor([0.0, 0.25, 0.5])
    feats = doy_features(doys)
    np.testing.assert_allclose(feats.numpy(),
                               [[0, 1], [1, 0], [0, -1]], atol=1e-6)


def test_forward_shapes_sweep():
    for cfg in (TINY, EncoderConfig(d_model=16, n_layers=2, n_heads=4, L=6,
                                    d_repr=12, projector_hidden_layers=0,
                                    projector_width=20)):
        model = build_model(cfg, seed=0)
        out = model(*_inputs(cfg, batch=5), project=True)
        assert out.repr.shape == (5, cfg.d_repr)
        assert out.proj.shape == (5, cfg.projector_width)
        model.eval()
        out = model(*_inputs(cfg, batch=5))
        assert out.proj is None  # projector only runs in train mode by default


def test_forward_deterministic_given_seed():
    a = build_model(TINY, seed=7)
    b = build_model(TINY, seed=7)
    xa = a(*_inputs(TINY), project=True)
    xb = b(*_inputs(TINY), project=True)
    assert torch.equal(xa.repr, xb.repr)
    assert torch.equal(xa.proj, xb.proj)
    c = build_model(TINY, seed=8)
    assert not torch.equal(c(*_inputs(TINY), project=True).repr, xa.repr)


def test_branch_rejects_wrong_channels():
    model = build_model(TINY)
    s2, d2, s1, d1 = _inputs(TINY)
    with pytest.raises(ShapeMismatch):
        model(s1, d1, s1, d1)  # 2 channels where 10 are expected


def test_use_s1_false_ignores_radar():
    cfg = EncoderConfig(d_model=8, n_layers=1, n_heads=2, L=4, d_repr=8,
                        projector_hidden_layers=0, projector_width=16, use_s1=False)
    model = build_model(cfg, seed=0).eval()
    s2, d2, s1, d1 = _inputs(cfg)
    out1 = model(s2, d2, s1, d1, project=False)
    out2 = model(s2, d2, torch.randn_like(s1), d1, project=False)
    assert torch.equal(out1.repr, out2.repr)


def test_fake_quantize_bounds_and_gradient():
    z = torch.randn(32, 6, requires_grad=True)
    q = fake_quantize(z)
    scale = z.detach().abs().amax(dim=0) / 127.0
    assert ((q - z.detach()).abs() <= scale / 2 + 1e-7).all()
    # straight-through: gradient of sum(q) w.r.t. z is all ones
    q.sum().backward()
    assert torch.equal(z.grad, torch.ones_like(z))


def test_quantize_flag_changes_forward():
    cfg_q = EncoderConfig(d_model=8, n_layers=1, n_heads=2, L=4, d_repr=8,
                          projector_hidden_layers=0, projector_width=16, quantize=True)
    cfg_p = EncoderConfig(**{**cfg_q.to_dict(), "quantize": False})
    mq = build_model(cfg_q, seed=0).eval()
    mp = build_model(cfg_p, seed=0).eval()
    x = _inputs(cfg_q, batch=16)
    rq = mq(*x, project=False).repr
    rp = mp(*x, project=False).repr
    scale = rp.abs().amax(dim=0) / 127.0
    assert ((rq - rp).abs() <= scale / 2 + 1e-7).all()


def test_parameter_breakdown_matches_torch():
    for cfg in (EncoderConfig(), TINY):
        counts = parameter_breakdown(cfg)
        model = DualEncoder(cfg)
        assert counts["total"] == state_entry_count(model)
        got_proj = sum(t.numel() for n, t in model.state_dict().items()
                       if n.startswith("projector"))
        assert counts["projector"] == got_proj


def test_paper_scale_parameter_accounting():
    """Shape arithmetic only; the 1.39B-entry model is never allocated."""
    counts = parameter_breakdown(EncoderConfig.paper())
    assert abs(counts["encoders"] - 45_697_026) / 45_697_026 < 0.01
    assert counts["projector"] == 1_344_700_421
    assert abs(counts["total"] - 1_390_528_647) / 1_390_528_647 < 0.01


def test_gradients_cover_every_parameter():
    model = build_model(TINY, seed=1)
    model.train()
    out = model(*_inputs(TINY, batch=4), project=True)
    grads = gradients(out.proj.square().sum() + out.repr.sum(), model)
    assert set(grads) == {n for n, _ in model.named_parameters()}
    assert all(torch.isfinite(g).all() for g in grads.values())


def test_linear_layer_gradient_closed_form():
    """dL/dW of L = sum(W x + b) over a batch is ones ⊗ sum(x)."""
    model = build_model(TINY, seed=2)
    x = torch.randn(5, 10)
    loss = model.s2.phi(x).sum()
    grads = gradients(loss, model)
    expected_w = torch.ones(TINY.d_model, 1) @ x.sum(dim=0, keepdim=True)
    np.testing.assert_allclose(grads["s2.phi.weight"].numpy(), expected_w.numpy(),
                               atol=1e-5)
    np.testing.assert_allclose(grads["s2.phi.bias"].numpy(),
                               np.full(TINY.d_model, 5.0), atol=1e-5)


def test_checkpoint_round_trip(tmp_path):
    model = build_model(TINY, seed=3)
    # exercise BN running stats so buffers are non-trivial
    model.train()
    model(*_inputs(TINY, batch=8), project=True)
    path = str(tmp_path / "model.bin")
    save_checkpoint(path, model, extra={"note": {"steps": 12}})
    loaded, extra = load_checkpoint(path)
    assert extra == {"note": {"steps": 12}}
    assert not loaded.training
    model.eval()
    x = _inputs(TINY, batch=4, seed=9)
    assert torch.equal(model(*x, project=True).proj, loaded(*x, project=True).proj)
    for name, t in model.state_dict().items():
        if t.dtype == torch.int64:
            assert torch.equal(loaded.state_dict()[name], t)
        else:
            assert torch.equal(loaded.state_dict()[name], t.to(torch.float32))
    assert (tmp_path / "model.bin.json").exists()


def test_checkpoint_rejects_garbage(tmp_path):
    path = str(tmp_path / "bad.bin")
    open(path, "wb").write(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(path)
