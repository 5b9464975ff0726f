"""Alignment scan of the centre of symmetry and its parabolic fit."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneracyError, ValidationError
from .nrf import nrf
from .series import PairSeries, alpha_hat


@dataclass(frozen=True)
class ScanPoint:
    d: float  # displacement (um)
    sigma: float
    u_sigma: float


def center_scan(scan, balance: bool = False) -> list[ScanPoint]:
    """Noise reduction factor at each scan displacement.

    Parameters
    ----------
    scan : sequence of (displacement, series)
        ``series`` is a :class:`PairSeries` or a sequence of them; several
        region pairs at one displacement are averaged.
    balance : bool
        Use the balanced factor instead of the raw ``alpha = 1`` one.
    """
    points = []
    for d, series in scan:
        group = [series] if isinstance(series, PairSeries) else list(series)
        if not group:
            raise ValidationError(f"no series at displacement {d}")
        sig, var = [], []
        for s in group:
            est = nrf(s, alpha_hat(s)[0]) if balance else nrf(s, 1.0)
            sig.append(est.sigma_alpha if balance else est.sigma_raw)
            var.append((est.u_sigma if balance else est.u_sigma_raw) ** 2)
        # distinct region pairs are disjoint, so their estimates are independent
        points.append(ScanPoint(float(d), float(np.mean(sig)), math.sqrt(sum(var)) / len(group)))
    if len({p.d for p in points}) < 3:
        raise ValidationError("a centring scan needs at least 3 distinct displacements")
    return points


@dataclass(frozen=True)
class ParabolaFit:
    """``sigma(d) = a d^2 + b d + c`` and its vertex."""

    d_min: float
    u_dmin: float
    coeffs: tuple[float, float, float]
    cov: np.ndarray
    chi2: float
    dof: int


def parabola_fit(points) -> ParabolaFit:
    """Weighted least-squares parabola through ``(d, sigma, u_sigma)`` points.

    With all ``u_sigma > 0`` the weights are ``1 / u_sigma^2`` and the
    parameter covariance is absolute, inflated by the reduced chi-square
    when that exceeds 1.  Otherwise the fit is unweighted and the
    covariance is scaled by the residual variance.
    """
    pts = [(p.d, p.sigma, p.u_sigma) if isinstance(p, ScanPoint) else tuple(p) for p in points]
    if len(pts) < 3:
        raise ValidationError("parabola fit needs at least 3 points")
    arr = np.array([(p[0], p[1], p[2] if len(p) > 2 else 0.0) for p in pts], dtype=float)
    d, y, u = arr.T
    if len(np.unique(d)) < 3:
        raise ValidationError("parabola fit needs at least 3 distinct displacements")
    d0 = d.mean()
    scale = np.ptp(d) or 1.0
    t = (d - d0) / scale
    X = np.column_stack([t * t, t, np.ones_like(t)])
    weighted = bool(np.all(u > 0))
    w = 1.0 / u if weighted else np.ones_like(u)
    coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    res = (y - X @ coef) * w
    chi2 = float(res @ res)
    dof = len(y) - 3
    xtx_inv = np.linalg.inv((X * w[:, None]).T @ (X * w[:, None]))
    if weighted:
        # a parabola is only a local model of the scan curve; inflate by the
        # reduced chi-square when the residuals exceed the stated errors
        cov_t = xtx_inv * (max(chi2 / dof, 1.0) if dof > 0 else 1.0)
    else:
        cov_t = xtx_inv * (chi2 / dof if dof > 0 else 0.0)
    a_t, b_t, c_t = coef
    if not (a_t > 1e-9 * max(abs(b_t), abs(c_t), 1e-300)):
        raise DegeneracyError("parabola opens downward or is flat: the scan does not bracket a minimum")
    v_t = -b_t / (2 * a_t)
    if not (t.min() <= v_t <= t.max()):
        raise DegeneracyError(
            f"parabola vertex {d0 + scale * v_t:.6g} lies outside the scanned range "
            f"[{d.min():.6g}, {d.max():.6g}]: the scan does not bracket the minimum"
        )
    jac = np.array([b_t / (2 * a_t * a_t), -1.0 / (2 * a_t), 0.0])
    u_t = math.sqrt(max(float(jac @ cov_t @ jac), 0.0))
    # back to physical units
    a = a_t / scale**2
    b = b_t / scale - 2 * a * d0
    c = c_t - b_t * d0 / scale + a * d0 * d0
    T = np.array([[1 / scale**2, 0, 0], [-2 * d0 / scale**2, 1 / scale, 0], [d0 * d0 / scale**2, -d0 / scale, 1]])
    return ParabolaFit(
        d_min=float(d0 + scale * v_t),
        u_dmin=float(scale * u_t),
        coeffs=(float(a), float(b), float(c)),
        cov=T @ cov_t @ T.T,
        chi2=chi2,
        dof=dof,
    )


def scan_points(d: Sequence[float], sigma: Sequence[float], u_sigma: Sequence[float] | None = None) -> list[ScanPoint]:
    if u_sigma is None:
        u_sigma = [0.0] * len(d)
    return [ScanPoint(float(a), float(b), float(c)) for a, b, c in zip(d, sigma, u_sigma)]
