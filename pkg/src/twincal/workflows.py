"""Composite simulation-plus-estimation procedures."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .estimators.centering import ParabolaFit, ScanPoint, center_scan, parabola_fit
from .estimators.series import extract_series
from .geometry import RegionPair, place_regions
from .scene import SceneModel, SensorModel, build_lattice
from .simulate import simulate_stack


def single_pixel_pairs(sensor: SensorModel, cells) -> list[RegionPair]:
    """One-read-out-pixel region pairs at the given idler pixel indices."""
    p = sensor.readout_pitch
    return [place_regions(sensor, p, (x + 0.5, y + 0.5)) for x, y in cells]


def default_scan_cells(sensor: SensorModel) -> list[tuple[int, int]]:
    """Idler pixels one pixel in from the sensor and symmetry-line edges."""
    ny, nx = sensor.readout_shape
    cx = int(round(sensor.cs_um[0] / sensor.readout_pitch))
    return [(x, y) for y in range(1, ny - 1) for x in range(1, cx - 1)]


def simulate_scan(scene: SceneModel, sensor: SensorModel, axis: int, displacements, n_frames: int,
                  seed: int, pairs: list[RegionPair], stream0: int = 0, workers: int = 1):
    """Frames at each sensor displacement along ``axis``, reduced to region series.

    Moving the sensor by ``u`` changes the offset of the centre of symmetry
    from the pixel grid to ``d - u`` on that axis.
    """
    scan = []
    for j, u in enumerate(displacements):
        d = list(scene.d_offset)
        d[axis] -= u
        sc = replace(scene, d_offset=tuple(d))
        lat = build_lattice(sc, sensor)
        st = simulate_stack(sc, sensor, lat, n_frames, seed, stream=stream0 + j, workers=workers)
        scan.append((float(u), [extract_series(st, p) for p in pairs]))
    return scan


@dataclass(frozen=True)
class AxisScan:
    axis: int
    points: list[ScanPoint]
    fit: ParabolaFit


def scan_axis(scene, sensor, axis, center, step, n_steps, n_frames, seed, pairs, stream0=0,
              balance=False, workers=1) -> AxisScan:
    half = (n_steps - 1) / 2.0
    disp = [center + step * (k - half) for k in range(n_steps)]
    scan = simulate_scan(scene, sensor, axis, disp, n_frames, seed, pairs, stream0, workers)
    pts = center_scan(scan, balance=balance)
    return AxisScan(axis, pts, parabola_fit(pts))


def centering(scene: SceneModel, sensor: SensorModel, *, step: float = 10.0, n_steps: int = 11,
              n_frames: int = 500, seed: int = 0, passes: int = 3, cells=None, balance=False,
              workers: int = 1) -> list[AxisScan]:
    """x scan then y scan, repeated around the latest vertex estimate.

    A scan that is not centred on the minimum sees an asymmetric,
    V-shaped curve and pulls the parabola vertex toward its own centre;
    re-centring removes most of that pull.  Returns every axis scan in
    order; the last two hold the final x and y estimates.
    """
    pairs = single_pixel_pairs(sensor, cells if cells is not None else default_scan_cells(sensor))
    center = [0.0, 0.0]
    done = []
    stream = 0
    for _ in range(passes):
        for axis in (0, 1):
            # the sensor already sits at the current best position on the other axis
            d = list(scene.d_offset)
            d[1 - axis] -= center[1 - axis]
            sc = replace(scene, d_offset=tuple(d))
            res = scan_axis(sc, sensor, axis, center[axis], step, n_steps, n_frames, seed, pairs,
                            stream, balance, workers)
            stream += n_steps
            center[axis] = res.fit.d_min
            done.append(res)
    return done


def center_estimate(scans: list[AxisScan]) -> tuple[np.ndarray, np.ndarray]:
    """Final (x, y) offset estimate and its uncertainty."""
    last = {s.axis: s for s in scans}
    return (np.array([last[0].fit.d_min, last[1].fit.d_min]),
            np.array([last[0].fit.u_dmin, last[1].fit.u_dmin]))
