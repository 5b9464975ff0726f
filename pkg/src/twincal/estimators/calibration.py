"""Detection efficiency from the noise reduction factor.

The balanced factor obeys ``sigma_alpha = (1 + alpha) / 2 - eta A`` where
``A`` is the geometric correction of the region pair.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegeneracyError, TwinCalError, ValidationError
from ..geometry import A_gradient, A_of, RegionPair
from ..scene import FrameStack
from .nrf import background_correct_series, nrf
from .series import PairSeries, alpha_hat, extract_series

MIN_BOOTSTRAP = 100
# rounding slack before an estimate counts as outside [0, 1]
RANGE_TOL = 1e-12


class EfficiencyRangeWarning(UserWarning):
    """An efficiency estimate fell outside [0, 1]."""


def eta_from_point(sigma_alpha_b: float, alpha: float, a_coeff: float) -> float:
    """Invert ``sigma = (1 + alpha) / 2 - eta A`` for ``eta``.

    No clamping: values outside [0, 1] are returned with a warning.
    """
    if not (a_coeff > 0):
        raise ValidationError(f"A must be > 0, got {a_coeff}")
    eta = ((1.0 + alpha) / 2.0 - sigma_alpha_b) / a_coeff
    if not (-RANGE_TOL <= eta <= 1.0 + RANGE_TOL):
        warnings.warn(f"efficiency estimate {eta:.6g} outside [0, 1]", EfficiencyRangeWarning, stacklevel=2)
    return eta


def eta_uncertainty(sigma_alpha_b, u_sigma, alpha, u_alpha, a_coeff, u_a) -> float:
    """First-order uncertainty of :func:`eta_from_point` with independent inputs."""
    eta = ((1.0 + alpha) / 2.0 - sigma_alpha_b) / a_coeff
    return math.sqrt((u_sigma / a_coeff) ** 2 + (u_alpha / (2 * a_coeff)) ** 2 + (eta * u_a / a_coeff) ** 2)


def eta_partner(eta_i: float, alpha: float, u_eta_i: float = 0.0, u_alpha: float = 0.0) -> tuple[float, float]:
    """Efficiency of the other arm, ``eta_s = eta_i / alpha``, and its uncertainty."""
    if not (alpha > 0):
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    eta_s = eta_i / alpha
    return eta_s, math.hypot(u_eta_i / alpha, eta_s * u_alpha / alpha)


@dataclass(frozen=True)
class LinearFit:
    """Straight-line diagnostics of ``sigma_alpha_b`` against ``A``.

    ``eta_constrained`` is the slope with the intercept fixed to
    ``(1 + alpha) / 2``; ``slope``/``intercept``/``pearson_r`` belong to the
    free two-parameter fit.  ``r_uncentered`` is the cosine between ``A`` and
    ``(1 + alpha) / 2 - sigma``, the agreement measure of the one-parameter
    model through the origin.
    """

    eta_constrained: float
    u_eta_constrained: float
    slope: float
    intercept: float
    pearson_r: float
    r_uncentered: float


@dataclass(frozen=True)
class LRow:
    L: float
    A: float
    alpha: float
    sigma_alpha_b: float
    u_sigma: float
    eta: float
    u_eta: float
    flagged: bool


@dataclass(frozen=True)
class CalibrationResult:
    """Per-size estimates, their bootstrap covariance and the averaged efficiency."""

    per_l: list[LRow]
    eta_bar: float
    u_eta: float
    cov_matrix: np.ndarray
    fit: LinearFit | None
    u_eta_syst: float = 0.0
    n_boot: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def u_eta_rel(self) -> float:
        return self.u_eta / abs(self.eta_bar) if self.eta_bar else math.inf


def _moments(w, x, y, wsum):
    """Weighted means of ``x, y, x^2, y^2, x y`` per replicate (rows of ``w``)."""
    return (w @ x.T / wsum, w @ y.T / wsum, w @ (x * x).T / wsum, w @ (y * y).T / wsum, w @ (x * y).T / wsum)


def _eta_batch(w, ni, ns, wb, bi, bs, a_coeff):
    """Efficiency per replicate and size from frame multiplicities.

    ``w`` has one row per replicate and one column per frame; ``ni, ns``
    have one row per size.  Same algebra as the single-shot estimators.
    """
    nf = ni.shape[1]
    mi, ms, mii, mss, mis = _moments(w, ni, ns, nf)
    if bi is not None:
        nb = bi.shape[1]
        gi, gs, gii, gss, _ = _moments(wb, bi, bs, nb)
        vbi = (gii - gi * gi) * nb / (nb - 1)
        vbs = (gss - gs * gs) * nb / (nb - 1)
    else:
        gi = gs = vbi = vbs = 0.0
    alpha = (mi - gi) / (ms - gs)
    var_d = (mii - 2 * alpha * mis + alpha * alpha * mss - (mi - alpha * ms) ** 2) * nf / (nf - 1)
    sig = (var_d - vbi - alpha * alpha * vbs) / (mi + alpha * ms - gi - alpha * gs)
    return ((1 + alpha) / 2 - sig) / a_coeff


def _linear_fit(A, sigma, alpha, cov_eta) -> LinearFit | None:
    if len(A) < 2:
        return None
    y = (1 + alpha) / 2 - sigma
    saa = A @ A
    eta_c = float(A @ y / saa)
    cov_y = cov_eta * np.outer(A, A)
    u_c = math.sqrt(max(float(A @ cov_y @ A), 0.0)) / saa
    if np.ptp(A) > 0 and np.ptp(sigma) > 0:
        slope, intercept = np.polyfit(A, sigma, 1)
        r = float(np.corrcoef(A, sigma)[0, 1])
    else:
        slope = intercept = r = math.nan
    r0 = float(A @ y / math.sqrt(saa * (y @ y))) if y @ y > 0 else math.nan
    return LinearFit(eta_c, u_c, float(slope), float(intercept), r, r0)


def bootstrap_weights(n: int, n_boot: int, seed: int, stream: int) -> np.ndarray:
    """Frame multiplicities for each replicate; replicate ``b`` owns substream ``(seed, stream, b)``."""
    w = np.empty((n_boot, n))
    for b in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, b)))
        w[b] = np.bincount(rng.integers(0, n, n), minlength=n)
    return w


def multi_l_calibration(
    frames: FrameStack,
    pairs: list[RegionPair],
    r: float,
    d: float = 0.0,
    beta: float = 0.5,
    mu: float = 0.0,
    bg_frames: FrameStack | None = None,
    *,
    n_boot: int = 1000,
    seed: int = 0,
    u_r: float = 0.0,
    u_d: float = 0.0,
) -> CalibrationResult:
    """Efficiency from nested region pairs with bootstrap covariance across sizes.

    Parameters
    ----------
    frames, bg_frames : FrameStack
        Light frames and optional dark frames over the same sensor.
    pairs : list of RegionPair
        Nested pairs of strictly increasing size.
    r, d, beta, mu : float
        Geometry entering ``A``: coherence radius (um), centring offset
        (um), border collection efficiency and mean photons per mode.
    n_boot : int
        Bootstrap replicates over frames (light and dark resampled
        independently).
    u_r, u_d : float
        Uncertainties of ``r`` and ``d``, propagated into ``u_eta_syst``.
    """
    if not pairs:
        raise ValidationError("no region pairs given")
    Ls = [p.L for p in pairs]
    if any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValidationError("region sizes must be strictly increasing")
    if n_boot < MIN_BOOTSTRAP:
        raise ValidationError(f"need at least {MIN_BOOTSTRAP} bootstrap replicates, got {n_boot}")

    rows, ni, ns, bi, bs, A = [], [], [], [], [], []
    for p in pairs:
        try:
            a_l = A_of(p.L, d, r, beta, mu)
            s = extract_series(frames, p)
            b = extract_series(bg_frames, p) if bg_frames is not None else None
            alpha, _ = alpha_hat(s, b)
            est = nrf(s, alpha)
            if b is not None:
                est = background_correct_series(est, b)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                eta = eta_from_point(est.sigma_alpha_b, alpha, a_l)
            for wmsg in caught:
                warnings.warn(f"L = {p.L:g} um: {wmsg.message}", EfficiencyRangeWarning, stacklevel=2)
        except TwinCalError as e:
            raise type(e)(f"L = {p.L:g} um: {e}") from e
        rows.append((p.L, a_l, alpha, est.sigma_alpha_b, est.u_sigma, eta, not (-RANGE_TOL <= eta <= 1 + RANGE_TOL)))
        ni.append(s.n_i)
        ns.append(s.n_s)
        if b is not None:
            bi.append(b.n_i)
            bs.append(b.n_s)
        A.append(a_l)

    ni, ns, A = np.array(ni), np.array(ns), np.array(A)
    w = bootstrap_weights(ni.shape[1], n_boot, seed, 0)
    if bg_frames is not None:
        bi, bs = np.array(bi), np.array(bs)
        wb = bootstrap_weights(bi.shape[1], n_boot, seed, 1)
    else:
        bi = bs = wb = None
    with np.errstate(divide="ignore", invalid="ignore"):
        boot = _eta_batch(w, ni, ns, wb, bi, bs, A)
    if not np.all(np.isfinite(boot)):
        raise DegeneracyError("bootstrap replicate produced a non-finite efficiency")
    cov = np.atleast_2d(np.cov(boot, rowvar=False, ddof=1))

    etas = np.array([row[5] for row in rows])
    u_single = np.sqrt(np.diag(cov))
    per_l = [LRow(*row[:6], float(u), row[6]) for row, u in zip(rows, u_single)]
    eta_bar = float(etas.mean())
    u_eta = math.sqrt(max(float(cov.mean()), 0.0))

    grads = np.array([A_gradient(L, d, r, beta, mu) for L in Ls])
    deta = -(etas / A)[:, None] * grads  # d eta_L / d(L, d, r)
    u_syst = math.hypot(deta[:, 1].mean() * u_d, deta[:, 2].mean() * u_r)

    sig = np.array([row[3] for row in rows])
    alph = np.array([row[2] for row in rows])
    fit = _linear_fit(A, sig, alph, cov)
    return CalibrationResult(per_l, eta_bar, u_eta, cov, fit, u_syst, n_boot,
                             meta={"r": r, "d": d, "beta": beta, "mu": mu, "seed": seed})
