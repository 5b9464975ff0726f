"""Noise reduction factor and its background correction."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DegeneracyError, ValidationError
from ..geometry import RegionPair
from ..scene import FrameStack
from .series import PairSeries, extract_series


@dataclass(frozen=True)
class _RatioParts:
    """Sample variance of a difference over the mean of a sum, with the
    sampling (co)variances needed for the delta method."""

    var_diff: float
    mean_sum: float
    var_var: float
    var_mean: float
    cov: float

    @property
    def ratio(self) -> float:
        return self.var_diff / self.mean_sum

    @property
    def u_ratio(self) -> float:
        m, r = self.mean_sum, self.ratio
        v = (self.var_var - 2.0 * r * self.cov + r * r * self.var_mean) / (m * m)
        return math.sqrt(max(v, 0.0))


def _ratio_parts(n_i: np.ndarray, n_s: np.ndarray, alpha: float) -> _RatioParts:
    n = n_i.size
    if n < 4:
        raise ValidationError(f"need at least 4 frames for the noise reduction factor, got {n}")
    d = n_i - alpha * n_s
    s = n_i + alpha * n_s
    dd = d - d.mean()
    ds = s - s.mean()
    v = dd @ dd / (n - 1)
    m = s.mean()
    if not (m > 0):
        raise DegeneracyError("noise reduction factor undefined: mean of N_i + alpha N_s is not positive")
    m4 = np.mean(dd**4)
    var_v = (m4 - v * v * (n - 3) / (n - 1)) / n
    var_m = ds @ ds / (n - 1) / n
    cov = np.mean(dd * dd * ds) / n
    return _RatioParts(float(v), float(m), float(max(var_v, 0.0)), float(var_m), float(cov))


@dataclass(frozen=True)
class NrfEstimate:
    """Noise reduction factors of one region pair.

    Attributes
    ----------
    alpha : float
        Balancing factor used for ``sigma_alpha``.
    sigma_raw : float
        Unbalanced factor (``alpha = 1``).
    sigma_alpha : float
        Balanced factor.
    sigma_alpha_b : float
        Balanced and background-corrected factor; equals ``sigma_alpha``
        until :func:`background_correct` is applied.
    u_sigma : float
        Standard error of ``sigma_alpha_b``.
    u_sigma_raw : float
        Standard error of ``sigma_raw``.
    """

    alpha: float
    sigma_raw: float
    sigma_alpha: float
    sigma_alpha_b: float
    u_sigma: float
    u_sigma_raw: float
    n: int
    parts: _RatioParts
    background_corrected: bool = False


def nrf(series: PairSeries, alpha: float = 1.0) -> NrfEstimate:
    """``Var(N_i - alpha N_s) / <N_i + alpha N_s>`` with ``n - 1`` normalization."""
    if not (alpha > 0):
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    raw = _ratio_parts(series.n_i, series.n_s, 1.0)
    bal = raw if alpha == 1.0 else _ratio_parts(series.n_i, series.n_s, alpha)
    return NrfEstimate(
        alpha=float(alpha),
        sigma_raw=raw.ratio,
        sigma_alpha=bal.ratio,
        sigma_alpha_b=bal.ratio,
        u_sigma=bal.u_ratio,
        u_sigma_raw=raw.u_ratio,
        n=series.frame_count,
        parts=bal,
    )


def background_correct_series(estimate: NrfEstimate, background: PairSeries) -> NrfEstimate:
    """Subtract dark-frame variances and means from the balanced factor.

    ``sigma_B = (V - V_bg,i - alpha^2 V_bg,s) / (M - m_bg,i - alpha m_bg,s)``
    """
    nb = background.frame_count
    if nb < 4:
        raise ValidationError(f"need at least 4 background frames, got {nb}")
    a = estimate.alpha
    p = estimate.parts
    vbi = background.n_i.var(ddof=1)
    vbs = background.n_s.var(ddof=1)
    mbi = background.n_i.mean()
    mbs = background.n_s.mean()
    num = p.var_diff - vbi - a * a * vbs
    den = p.mean_sum - mbi - a * mbs
    var_den = p.var_mean + (vbi + a * a * vbs) / nb
    # a denominator within 3 standard errors of zero means no detectable light
    if not (den > 3.0 * math.sqrt(var_den)):
        raise DegeneracyError(
            f"background-corrected denominator {den:.6g} is not significantly positive "
            f"(standard error {math.sqrt(var_den):.3g}); background dominates the signal"
        )

    def var_of_var(x):
        dx = x - x.mean()
        v = dx @ dx / (nb - 1)
        return max((np.mean(dx**4) - v * v * (nb - 3) / (nb - 1)) / nb, 0.0)

    var_num = p.var_var + var_of_var(background.n_i) + a**4 * var_of_var(background.n_s)
    sb = num / den
    u = math.sqrt(max((var_num - 2.0 * sb * p.cov + sb * sb * var_den) / (den * den), 0.0))
    return replace(estimate, sigma_alpha_b=float(sb), u_sigma=u, background_corrected=True)


def background_correct(estimate: NrfEstimate, bg_frames: FrameStack, pair: RegionPair, alpha: float | None = None) -> NrfEstimate:
    """Background correction using dark frames integrated over the same regions."""
    if alpha is not None and not math.isclose(alpha, estimate.alpha, rel_tol=1e-12):
        raise ValidationError("alpha differs from the one used for the estimate")
    return background_correct_series(estimate, extract_series(bg_frames, pair))
