"""Per-frame integrated counts over a region pair."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneracyError, ValidationError
from ..geometry import RegionPair
from ..scene import FrameStack


@dataclass(frozen=True)
class PairSeries:
    """Integrated idler and signal counts, one entry per frame."""

    n_i: np.ndarray
    n_s: np.ndarray

    def __post_init__(self):
        n_i = np.asarray(self.n_i, dtype=float).ravel()
        n_s = np.asarray(self.n_s, dtype=float).ravel()
        if n_i.shape != n_s.shape:
            raise ValidationError(f"series lengths differ: {n_i.size} vs {n_s.size}")
        if n_i.size == 0:
            raise ValidationError("series is empty")
        object.__setattr__(self, "n_i", n_i)
        object.__setattr__(self, "n_s", n_s)

    @property
    def frame_count(self) -> int:
        return self.n_i.size

    def take(self, idx) -> "PairSeries":
        return PairSeries(self.n_i[idx], self.n_s[idx])


def region_sum(data: np.ndarray, rect) -> np.ndarray:
    """Per-frame sum of ``data[:, y0:y1, x0:x1]`` with bounds checking."""
    x0, y0, x1, y1 = rect
    _, h, w = data.shape
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValidationError(f"region {tuple(rect)} lies outside the {w}x{h} frame")
    return data[:, y0:y1, x0:x1].sum(axis=(1, 2))


def extract_series(frames: FrameStack, pair: RegionPair) -> PairSeries:
    """Sum each frame over the idler and signal regions."""
    if len(frames) == 0:
        raise ValidationError("frame stack is empty")
    return PairSeries(region_sum(frames.data, pair.region_i), region_sum(frames.data, pair.region_s))


def alpha_hat(series: PairSeries, background: PairSeries | None = None) -> tuple[float, float]:
    """Balancing factor ``<N_i> / <N_s>`` and its standard error.

    With ``background`` the background means are subtracted from both arms
    first, so that stray light and offsets do not bias the ratio away from
    ``eta_i / eta_s``.
    """
    n = series.frame_count
    if n < 2:
        raise ValidationError("need at least 2 frames")
    mi, ms = series.n_i.mean(), series.n_s.mean()
    c = np.cov(series.n_i, series.n_s, ddof=1)
    var_mi, var_ms, cov_m = c[0, 0] / n, c[1, 1] / n, c[0, 1] / n
    if background is not None:
        nb = background.frame_count
        if nb < 2:
            raise ValidationError("need at least 2 background frames")
        mi -= background.n_i.mean()
        ms -= background.n_s.mean()
        var_mi += background.n_i.var(ddof=1) / nb
        var_ms += background.n_s.var(ddof=1) / nb
    if not (ms > 0):
        raise DegeneracyError("alpha undefined: mean signal count is not positive")
    a = mi / ms
    var = (var_mi - 2 * a * cov_m + a * a * var_ms) / (ms * ms)
    return float(a), math.sqrt(max(var, 0.0))
