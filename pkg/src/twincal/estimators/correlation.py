"""Spatial idler/signal cross-correlation and the coherence radius."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneracyError, ValidationError
from ..scene import FrameStack


@dataclass(frozen=True)
class CorrelationMap:
    """Correlation coefficient ``values[iy, ix]`` at shift ``(shifts_x[ix], shifts_y[iy])``.

    Shifts are in stored pixels; ``pitch`` converts them to micrometres.
    """

    shifts_x: np.ndarray
    shifts_y: np.ndarray
    values: np.ndarray
    pitch: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.shifts_y), len(self.shifts_x)):
            raise ValidationError("map values do not match the shift grid")
        if np.any(np.abs(v) > 1.0 + 1e-9):
            raise ValidationError("correlation coefficient outside [-1, 1]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "shifts_x", np.asarray(self.shifts_x, dtype=float))
        object.__setattr__(self, "shifts_y", np.asarray(self.shifts_y, dtype=float))


def cross_correlation_map(frames: FrameStack, base_region, shift_range: int, cs_px=None) -> CorrelationMap:
    """Mean over the base region of per-pixel correlation coefficients.

    ``c(xi) = mean_x corr(N_i(x), N_s(-x + xi))`` where ``-x`` is the
    reflection of pixel ``x`` through the centre of symmetry.

    Parameters
    ----------
    frames : FrameStack
        Unbinned frames.
    base_region : (x0, y0, x1, y1)
        Idler pixels, half-open.
    shift_range : int
        Shifts run over ``-shift_range .. shift_range`` on both axes.
    cs_px : (float, float), optional
        Centre of symmetry in stored-pixel units, on a pixel edge or centre.
        Defaults to the frame centre.
    """
    data = frames.data
    nf, h, w = data.shape
    if nf < 3:
        raise ValidationError("need at least 3 frames")
    if cs_px is None:
        cs_px = (w / 2.0, h / 2.0)
    two = 2.0 * np.asarray(cs_px, dtype=float)
    if np.any(np.abs(two - np.round(two)) > 1e-9):
        raise ValidationError("centre of symmetry must sit on a pixel edge or centre")
    mx, my = (int(v) - 1 for v in np.round(two))
    x0, y0, x1, y1 = base_region
    s = int(shift_range)
    if s < 0:
        raise ValidationError("shift_range must be >= 0")
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValidationError(f"base region {tuple(base_region)} lies outside the {w}x{h} frame")
    # signal window covering every shifted partner pixel
    sx0, sx1 = mx - (x1 - 1) - s, mx - x0 + s + 1
    sy0, sy1 = my - (y1 - 1) - s, my - y0 + s + 1
    if sx0 < 0 or sy0 < 0 or sx1 > w or sy1 > h:
        raise ValidationError("shift range reaches outside the frame on the signal side")

    def standardize(block, origin):
        mean = block.mean(axis=0)
        dev = block - mean
        sd = np.sqrt((dev * dev).sum(axis=0) / (nf - 1))
        bad = np.argwhere(sd == 0)
        if len(bad):
            yy, xx = bad[0]
            raise DegeneracyError(f"pixel (x={xx + origin[0]}, y={yy + origin[1]}) has zero temporal variance")
        return dev / sd

    zi = standardize(data[:, y0:y1, x0:x1], (x0, y0))
    zs = standardize(data[:, sy0:sy1, sx0:sx1], (sx0, sy0))
    # reflect the signal window so that index [y, x] pairs with idler [y, x] at zero shift
    zs = zs[:, ::-1, ::-1]
    ny, nx = y1 - y0, x1 - x0
    shifts = np.arange(-s, s + 1)
    out = np.empty((len(shifts), len(shifts)))
    zi2 = zi.reshape(nf, -1)
    for a, xi_y in enumerate(shifts):
        for b, xi_x in enumerate(shifts):
            # partner of idler (x, y) is signal pixel m - x + xi; after the flip
            # that is window index (x - x0) + s - xi
            blk = zs[:, s - xi_y:s - xi_y + ny, s - xi_x:s - xi_x + nx]
            out[a, b] = np.einsum("fp,fp->", zi2, blk.reshape(nf, -1)) / ((nf - 1) * ny * nx)
    pitch = frames.pitch if frames.pitch is not None else 1.0
    if np.any(np.abs(out) > 1.0 + 1e-9):
        raise DegeneracyError(f"correlation coefficient {np.abs(out).max():.12g} exceeds 1 beyond rounding")
    # rounding excursions only
    return CorrelationMap(shifts, shifts, np.clip(out, -1.0, 1.0), pitch)


@dataclass(frozen=True)
class CoherenceEstimate:
    """Coherence radius (taken as the FWHM of the correlation peak)."""

    r: float
    u_r: float
    fwhm_x: float
    fwhm_y: float
    peak: float
    center: tuple[float, float]
    under_resolved: bool


def _log_vertex(c_m, c_0, c_p):
    """Sub-sample offset and height of a Gaussian through three samples."""
    if min(c_m, c_0, c_p) <= 0:
        return 0.0, c_0
    lm, l0, lp = math.log(c_m), math.log(c_0), math.log(c_p)
    curv = lm - 2 * l0 + lp
    if curv >= 0:
        return 0.0, c_0
    off = 0.5 * (lm - lp) / curv
    return off, math.exp(l0 - 0.25 * (lm - lp) * off)


def _half_width(profile, k0, off, half, step):
    """Distance from the fitted centre to the half-maximum crossing on each side.

    Returns ``(gauss, linear, n_above)`` per side: the crossing from
    interpolating ``ln c`` linearly in squared distance, the crossing from
    plain linear interpolation, and the number of samples above half maximum.
    """
    res = []
    for direction in (-1, 1):
        k = k0
        n_above = 1
        while 0 <= k + direction < len(profile) and profile[k + direction] >= half:
            k += direction
            n_above += 1
        inner = abs((k - k0) - off)
        nxt = k + direction
        if not (0 <= nxt < len(profile)):
            raise DegeneracyError("correlation peak is not resolved within the shift range")
        outer = abs((nxt - k0) - off)
        c_in, c_out = profile[k], profile[nxt]
        lin = inner + (outer - inner) * (c_in - half) / (c_in - c_out)
        if c_out <= 0 or c_in <= 0:
            gauss = inner
        else:
            t = (math.log(c_in) - math.log(half)) / (math.log(c_in) - math.log(c_out))
            gauss = math.sqrt(inner**2 + t * (outer**2 - inner**2))
        res.append((gauss * step, lin * step, n_above))
    return res


def coherence_radius(cmap: CorrelationMap) -> CoherenceEstimate:
    """FWHM of the correlation peak, averaged over the x and y profiles.

    Half-maximum crossings are interpolated in ``(distance^2, ln c)``, which
    is exact for a Gaussian peak; the difference to plain linear
    interpolation enters ``u_r`` as a grid term, together with half the
    spread between the two axes.
    """
    v = cmap.values
    iy, ix = np.unravel_index(np.argmax(v), v.shape)
    peak = v[iy, ix]
    if np.count_nonzero(v == peak) > 1:
        raise DegeneracyError("correlation map has no unique maximum")
    ring = np.concatenate([v[0, :], v[-1, :], v[1:-1, 0], v[1:-1, -1]])
    med = np.median(ring)
    mad = np.median(np.abs(ring - med))
    if not (peak - med > 5.0 * mad) or not (peak > 0):
        raise DegeneracyError(
            f"no correlation peak above the noise floor (peak {peak:.4g}, floor {med:.4g}, MAD {mad:.3g})"
        )
    row = v[iy, :]
    col = v[:, ix]
    if not (0 < ix < v.shape[1] - 1 and 0 < iy < v.shape[0] - 1):
        raise DegeneracyError("correlation peak sits on the edge of the shift range")
    offx, hx = _log_vertex(row[ix - 1], row[ix], row[ix + 1])
    offy, hy = _log_vertex(col[iy - 1], col[iy], col[iy + 1])
    sx = cmap.pitch * (cmap.shifts_x[1] - cmap.shifts_x[0]) if len(cmap.shifts_x) > 1 else cmap.pitch
    sy = cmap.pitch * (cmap.shifts_y[1] - cmap.shifts_y[0]) if len(cmap.shifts_y) > 1 else cmap.pitch
    # each profile is judged against its own fitted height
    wx = _half_width(row, ix, offx, 0.5 * hx, sx)
    wy = _half_width(col, iy, offy, 0.5 * hy, sy)
    fx = wx[0][0] + wx[1][0]
    fy = wy[0][0] + wy[1][0]
    grid = 0.5 * (abs(fx - (wx[0][1] + wx[1][1])) + abs(fy - (wy[0][1] + wy[1][1]))) / 2.0
    # only the peak sample itself is above half maximum along some axis
    under = any(w[0][2] == 1 and w[1][2] == 1 for w in (wx, wy))
    return CoherenceEstimate(
        r=0.5 * (fx + fy),
        u_r=math.hypot(0.5 * abs(fx - fy), grid),
        fwhm_x=fx,
        fwhm_y=fy,
        peak=float(peak),
        center=(float(cmap.shifts_x[ix] + offx), float(cmap.shifts_y[iy] + offy)),
        under_resolved=under,
    )
