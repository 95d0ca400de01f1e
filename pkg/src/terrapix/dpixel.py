"""Per-pixel data model and preprocessing.

A d-pixel bundles everything observed at one location over one calendar
year: per-modality value series, validity masks and day-of-year stamps.
Views of fixed length L are drawn from the valid timesteps, standardized
with corpus-wide channel statistics and time-stamped with normalized DoY.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ChannelMismatch, NoValidObservations, OutOfRange

DOY_DENOM = 366.0  # covers leap years, keeps normalized DoY in [0, 1]
MIN_STD = 1e-6


class Modality(Enum):
    S2 = "s2"  # 10 optical bands
    S1 = "s1"  # 2 radar polarizations

    @property
    def channels(self) -> int:
        return 10 if self is Modality.S2 else 2


@dataclass
class ObservationSeries:
    """One modality's raw time series at a single pixel."""

    values: np.ndarray  # (T, C) float32
    mask: np.ndarray  # (T,) {0,1}
    doys: np.ndarray  # (T,) int, strictly increasing, in [1, 366]
    modality: Modality

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.mask = np.asarray(self.mask)
        self.doys = np.asarray(self.doys)
        t = self.values.shape[0]
        if self.mask.shape != (t,) or self.doys.shape != (t,):
            raise ValueError("values, mask and doys must share length T")
        if self.values.ndim != 2 or self.values.shape[1] != self.modality.channels:
            raise ValueError(
                f"{self.modality.value} series must have {self.modality.channels} channels"
            )
        if t > 1 and not np.all(np.diff(self.doys) > 0):
            raise ValueError("doys must be strictly increasing")
        if t and (self.doys.min() < 1 or self.doys.max() > 366):
            raise ValueError("doys must lie in [1, 366]")


@dataclass
class DPixel:
    s2: ObservationSeries
    s1: ObservationSeries
    location: tuple  # (tile id, row, col)


@dataclass
class SampledView:
    """Fixed-length view drawn from the valid timesteps of one series."""

    values: np.ndarray  # (L, C) float32
    doys: np.ndarray  # (L,) float, normalized to [0, 1]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.doys = np.asarray(self.doys, dtype=np.float32)


@dataclass
class GlobalStats:
    """Per-channel standardization statistics for both modalities."""

    s2_mean: np.ndarray
    s2_std: np.ndarray
    s1_mean: np.ndarray
    s1_std: np.ndarray

    def __post_init__(self):
        for name in ("s2_mean", "s2_std", "s1_mean", "s1_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.s2_mean.shape != (10,) or self.s2_std.shape != (10,):
            raise ValueError("s2 stats must have 10 channels")
        if self.s1_mean.shape != (2,) or self.s1_std.shape != (2,):
            raise ValueError("s1 stats must have 2 channels")
        if np.any(self.s2_std <= MIN_STD) or np.any(self.s1_std <= MIN_STD):
            raise ValueError(f"std must exceed {MIN_STD} for every channel")

    def for_modality(self, modality: Modality):
        if modality is Modality.S2:
            return self.s2_mean, self.s2_std
        return self.s1_mean, self.s1_std

    def to_json(self) -> str:
        return json.dumps(
            {
                "s2": {"mean": self.s2_mean.tolist(), "std": self.s2_std.tolist()},
                "s1": {"mean": self.s1_mean.tolist(), "std": self.s1_std.tolist()},
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GlobalStats":
        doc = json.loads(text)
        return cls(
            s2_mean=doc["s2"]["mean"],
            s2_std=doc["s2"]["std"],
            s1_mean=doc["s1"]["mean"],
            s1_std=doc["s1"]["std"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "GlobalStats":
        with open(path) as fh:
            return cls.from_json(fh.read())


def valid_indices(series: ObservationSeries) -> list:
    """Indices of timesteps with mask == 1, ascending."""
    return np.flatnonzero(series.mask == 1).tolist()


def sample_view(series: ObservationSeries, L: int, rng: np.random.Generator) -> SampledView:
    """Draw a fixed-length view from the valid timesteps.

    Without replacement when enough valid steps exist, with replacement
    otherwise; rows are ordered by day of year.
    """
    valid = np.flatnonzero(series.mask == 1)
    if valid.size == 0:
        raise NoValidObservations("series has no valid timesteps")
    if valid.size >= L:
        picked = rng.choice(valid, size=L, replace=False)
    else:
        picked = rng.choice(valid, size=L, replace=True)
    picked = np.sort(picked)  # doys strictly increasing, so index order == doy order
    return SampledView(
        values=series.values[picked],
        doys=series.doys[picked].astype(np.float64) / DOY_DENOM,
    )


def standardize(view: SampledView, stats: GlobalStats, modality: Modality) -> SampledView:
    """(x - mean) / std per channel; doys pass through."""
    mean, std = stats.for_modality(modality)
    if view.values.shape[1] != mean.shape[0]:
        raise ChannelMismatch(
            f"view has {view.values.shape[1]} channels, stats expect {mean.shape[0]}"
        )
    return SampledView(values=(view.values - mean) / std, doys=view.doys)


def encode_doy(normalized_doy):
    """Map normalized DoY in [0, 1] to (sin, cos) on the unit circle."""
    t = np.asarray(normalized_doy, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise OutOfRange("normalized DoY must lie in [0, 1]")
    angle = 2.0 * math.pi * t
    return np.sin(angle), np.cos(angle)
