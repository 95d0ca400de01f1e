import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrapix.dpixel import (
    DOY_DENOM,
    GlobalStats,
    Modality,
    ObservationSeries,
    encode_doy,
    sample_view,
    standardize,
    valid_indices,
)
from terrapix.errors import ChannelMismatch, NoValidObservations, OutOfRange

from .conftest import make_series, make_stats


def test_modality_channels():
    assert Modality.S2.channels == 10
    assert Modality.S1.channels == 2


def test_series_validation_rejects_bad_shapes():
    values = np.zeros((4, 10), dtype=np.float32)
    good = dict(values=values, mask=np.ones(4), doys=[10, 20, 30, 40],
                modality=Modality.S2)
    ObservationSeries(**good)
    with pytest.raises(ValueError):
        ObservationSeries(values=values, mask=np.ones(3), doys=[10, 20, 30, 40],
                          modality=Modality.S2)
    with pytest.raises(ValueError):
        ObservationSeries(values=values, mask=np.ones(4), doys=[10, 20, 20, 40],
                          modality=Modality.S2)
    with pytest.raises(ValueError):
        ObservationSeries(values=values, mask=np.ones(4), doys=[0, 20, 30, 40],
                          modality=Modality.S2)
    with pytest.raises(ValueError):
        ObservationSeries(values=np.zeros((4, 3)), mask=np.ones(4),
                          doys=[10, 20, 30, 40], modality=Modality.S2)


def test_valid_indices():
    rng = np.random.default_rng(0)
    series = make_series(rng, T=10, gap_prob=0.5)
    assert valid_indices(series) == np.flatnonzero(series.mask).tolist()


def test_sample_view_without_replacement_when_enough():
    rng = np.random.default_rng(1)
    series = make_series(rng, T=30, gap_prob=0.0)
    view = sample_view(series, L=20, rng=np.random.default_rng(2))
    # without replacement: all sampled rows are distinct series rows
    assert view.values.shape == (20, 10)
    rows = {tuple(r) for r in view.values}
    assert len(rows) == 20


def test_sample_view_with_replacement_when_short():
    rng = np.random.default_rng(3)
    series = make_series(rng, T=5, gap_prob=0.0)
    view = sample_view(series, L=12, rng=np.random.default_rng(4))
    assert view.values.shape == (12, 10)
    # only 5 source rows exist, so duplicates are forced
    rows = {tuple(r) for r in view.values}
    assert len(rows) <= 5


def test_sample_view_doys_sorted_and_normalized():
    rng = np.random.default_rng(5)
    series = make_series(rng, T=40, gap_prob=0.2)
    view = sample_view(series, L=16, rng=np.random.default_rng(6))
    assert np.all(np.diff(view.doys) >= 0)
    assert view.doys.min() >= 0.0 and view.doys.max() <= 1.0
    # normalization divides the raw doys by the leap-year denominator
    raw = np.round(view.doys.astype(np.float64) * DOY_DENOM).astype(int)
    assert set(raw.tolist()) <= set(series.doys.tolist())


def test_sample_view_skips_masked_rows():
    values = np.arange(50, dtype=np.float32).reshape(5, 10)
    mask = np.array([1, 0, 1, 0, 1])
    series = ObservationSeries(values=values, mask=mask, doys=[10, 20, 30, 40, 50],
                               modality=Modality.S2)
    view = sample_view(series, L=3, rng=np.random.default_rng(0))
    allowed = {tuple(values[i]) for i in (0, 2, 4)}
    assert all(tuple(r) in allowed for r in view.values)


def test_sample_view_no_valid_raises():
    values = np.zeros((3, 2), dtype=np.float32)
    series = ObservationSeries(values=values, mask=np.zeros(3), doys=[5, 6, 7],
                               modality=Modality.S1)
    with pytest.raises(NoValidObservations):
        sample_view(series, L=4, rng=np.random.default_rng(0))


def test_standardize_oracle():
    rng = np.random.default_rng(7)
    stats = make_stats(rng)
    series = make_series(rng, T=20, gap_prob=0.0)
    view = sample_view(series, L=8, rng=np.random.default_rng(8))
    out = standardize(view, stats, Modality.S2)
    expected = (view.values - stats.s2_mean) / stats.s2_std
    np.testing.assert_allclose(out.values, expected.astype(np.float32), rtol=1e-6)
    np.testing.assert_array_equal(out.doys, view.doys)


def test_standardize_channel_mismatch():
    stats = make_stats()
    rng = np.random.default_rng(9)
    series = make_series(rng, modality=Modality.S1, T=10, gap_prob=0.0)
    view = sample_view(series, L=4, rng=rng)
    with pytest.raises(ChannelMismatch):
        standardize(view, stats, Modality.S2)


def test_encode_doy_unit_circle():
    t = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    s, c = encode_doy(t)
    np.testing.assert_allclose(s**2 + c**2, np.ones_like(t), atol=1e-12)
    np.testing.assert_allclose(s[1], math.sin(math.pi / 2), atol=1e-12)
    np.testing.assert_allclose(c[2], -1.0, atol=1e-12)
    with pytest.raises(OutOfRange):
        encode_doy([1.5])
    with pytest.raises(OutOfRange):
        encode_doy([-0.1])


def test_global_stats_json_round_trip():
    stats = make_stats()
    again = GlobalStats.from_json(stats.to_json())
    np.testing.assert_allclose(again.s2_mean, stats.s2_mean)
    np.testing.assert_allclose(again.s1_std, stats.s1_std)


def test_global_stats_rejects_tiny_std():
    with pytest.raises(ValueError):
        GlobalStats(s2_mean=np.zeros(10), s2_std=np.full(10, 1e-7),
                    s1_mean=np.zeros(2), s1_std=np.ones(2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), L=st.integers(1, 25), T=st.integers(1, 40))
def test_sample_view_properties(seed, L, T):
    rng = np.random.default_rng(seed)
    series = make_series(rng, T=T, gap_prob=0.3)
    view = sample_view(series, L, np.random.default_rng(seed + 1))
    assert view.values.shape == (L, 10)
    assert view.doys.shape == (L,)
    assert np.all(np.diff(view.doys) >= 0)
    assert 0.0 <= view.doys.min() and view.doys.max() <= 1.0
