"""Detection regions, mode counting and the geometric correction ``A``.

Regions are half-open rectangles ``(x0, y0, x1, y1)`` in read-out (super-)
pixel units.  Coordinates are integers so point symmetry about the centre of
symmetry holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import SensorModel

# L must exceed r and d by at least this factor for the closed forms to apply.
GUARD_RATIO = 4.0


@dataclass(frozen=True)
class ModeCounts:
    """Numbers of correlated, uncorrelated and border modes in one region."""

    m_c: float
    m_u: float
    m_b: float

    def __post_init__(self):
        for name in ("m_c", "m_u", "m_b"):
            v = getattr(self, name)
            if not (v >= 0):
                raise ValidationError(f"{name} must be >= 0, got {v}")


@dataclass(frozen=True)
class RegionPair:
    """Idler and signal rectangles, point-symmetric about ``cs``.

    ``cs`` is in micrometres; ``pitch`` is the read-out pixel size so that
    ``L = (x1 - x0) * pitch``.
    """

    region_i: tuple[int, int, int, int]
    region_s: tuple[int, int, int, int]
    cs: tuple[float, float]
    pitch: float

    @property
    def L(self) -> float:
        return (self.region_i[2] - self.region_i[0]) * self.pitch

    @property
    def size_px(self) -> int:
        return self.region_i[2] - self.region_i[0]


def effective_offset(d_offset) -> float:
    """Scalar offset entering the mode counts for a 2-D offset ``(dx, dy)``.

    Each axis misalignment opens its own strip of uncorrelated modes along
    one pair of region sides, so the magnitudes add.
    """
    dx, dy = d_offset
    return abs(float(dx)) + abs(float(dy))


def _check_guard(L, d, r):
    if not (L > 0):
        raise ValidationError(f"L must be > 0, got {L}")
    if not (r > 0):
        raise ValidationError(f"r must be > 0, got {r}")
    if not (d >= 0):
        raise ValidationError(f"d must be >= 0, got {d}")
    if L < GUARD_RATIO * r:
        raise ValidationError(f"validity guard violated: L/r = {L / r:.3f} < {GUARD_RATIO:g}")
    if L < GUARD_RATIO * d:
        raise ValidationError(f"validity guard violated: L/d = {L / d:.3f} < {GUARD_RATIO:g}")


def mode_counts(L: float, d: float, r: float) -> ModeCounts:
    """Closed-form mode counts for a square region of side ``L``.

    Parameters
    ----------
    L : float
        Region side (um).
    d : float
        Offset of the pixel grid from the centre of symmetry (um).
    r : float
        Coherence radius (um).
    """
    _check_guard(L, d, r)
    cell = math.pi * r * r
    return ModeCounts(
        m_c=(L * L - 2.0 * L * d) / cell,
        m_u=2.0 * L * d / cell,
        m_b=2.0 * L / r,
    )


def compute_A(counts: ModeCounts, beta: float = 0.5, mu: float = 0.0) -> float:
    """Geometric correction ``(M_c + M_b beta^2 - M_u mu) / (M_c + M_u + M_b beta)``."""
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta must lie in [0, 1], got {beta}")
    den = counts.m_c + counts.m_u + counts.m_b * beta
    if not (den > 0):
        raise ValidationError("A is undefined: no collected modes (zero denominator)")
    return (counts.m_c + counts.m_b * beta**2 - counts.m_u * mu) / den


def A_of(L: float, d: float, r: float, beta: float = 0.5, mu: float = 0.0) -> float:
    return compute_A(mode_counts(L, d, r), beta, mu)


def A_gradient(L: float, d: float, r: float, beta: float = 0.5, mu: float = 0.0) -> np.ndarray:
    """Analytic ``(dA/dL, dA/dd, dA/dr)``."""
    m = mode_counts(L, d, r)
    cell = math.pi * r * r
    num = m.m_c + m.m_b * beta**2 - m.m_u * mu
    den = m.m_c + m.m_u + m.m_b * beta
    a = num / den
    # derivatives of (m_c, m_u, m_b) with respect to L, d, r
    dm = {
        "L": ((2 * L - 2 * d) / cell, 2 * d / cell, 2.0 / r),
        "d": (-2 * L / cell, 2 * L / cell, 0.0),
        "r": (-2 * m.m_c / r, -2 * m.m_u / r, -m.m_b / r),
    }
    out = []
    for key in ("L", "d", "r"):
        dc, du, db = dm[key]
        dnum = dc + db * beta**2 - du * mu
        dden = dc + du + db * beta
        out.append((dnum - a * dden) / den)
    return np.array(out)


def uncertainty_of_A(L: float, d: float, u_d: float, r: float, u_r: float,
                     beta: float = 0.5, mu: float = 0.0) -> tuple[float, float]:
    """``A`` and its first-order uncertainty from independent ``u_d`` and ``u_r``."""
    if u_d < 0 or u_r < 0:
        raise ValidationError("uncertainties must be >= 0")
    a = A_of(L, d, r, beta, mu)
    g = A_gradient(L, d, r, beta, mu)
    return a, math.hypot(g[1] * u_d, g[2] * u_r)


def place_regions(sensor: SensorModel, L: float, center_i, cs=None) -> RegionPair:
    """Square idler region of side ``L`` around ``center_i`` and its mirror image.

    Parameters
    ----------
    sensor : SensorModel
    L : float
        Side in micrometres, a whole number of read-out pixels.
    center_i : (float, float)
        Idler region centre in read-out pixel units.  Regions grown from the
        same centre are nested.
    cs : (float, float), optional
        Centre of symmetry in micrometres; defaults to the sensor's.  Twice
        its read-out-pixel coordinate must be an integer.
    """
    p = sensor.readout_pitch
    k = L / p
    if not (k > 0) or abs(k - round(k)) > 1e-9:
        raise ValidationError(f"L = {L} um is not a whole number of {p} um read-out pixels")
    k = int(round(k))
    cs_um = sensor.cs_um if cs is None else np.asarray(cs, dtype=float)
    two_cs = 2.0 * cs_um / p
    if np.any(np.abs(two_cs - np.round(two_cs)) > 1e-9):
        raise ValidationError("centre of symmetry must sit on a read-out pixel edge or centre")
    tx, ty = (int(v) for v in np.round(two_cs))
    x0 = int(math.floor(center_i[0] - k / 2.0))
    y0 = int(math.floor(center_i[1] - k / 2.0))
    ri = (x0, y0, x0 + k, y0 + k)
    rs = (tx - ri[2], ty - ri[3], tx - ri[0], ty - ri[1])
    ny, nx = sensor.readout_shape
    for name, rr in (("idler", ri), ("signal", rs)):
        if rr[0] < 0 or rr[1] < 0 or rr[2] > nx or rr[3] > ny:
            raise ValidationError(f"{name} region {rr} of side L = {L} um falls outside the {nx}x{ny} read-out grid")
    if ri[0] < rs[2] and rs[0] < ri[2] and ri[1] < rs[3] and rs[1] < ri[3]:
        raise ValidationError(f"idler and signal regions overlap at L = {L} um")
    return RegionPair(ri, rs, (float(cs_um[0]), float(cs_um[1])), p)


def nested_regions(sensor: SensorModel, L_list, center_i, cs=None) -> list[RegionPair]:
    """Region pairs for strictly increasing sizes about a fixed centre."""
    L_list = list(L_list)
    if not L_list:
        raise ValidationError("L list is empty")
    if any(b <= a for a, b in zip(L_list, L_list[1:])):
        raise ValidationError("L list must be strictly increasing")
    return [place_regions(sensor, L, center_i, cs) for L in L_list]
