from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twincal.errors import DegeneracyError, ValidationError
from twincal.estimators.centering import center_scan, parabola_fit, scan_points
from twincal.estimators.series import PairSeries, alpha_hat
from twincal.scene import SceneModel, SensorModel
from twincal.workflows import center_estimate, centering, simulate_scan, single_pixel_pairs

SENSOR = SensorModel(240, 144, pixel_pitch=20.0, bin_factor=24)


def _scene(dx=0.0, dy=0.0, mu=0.5):
    return SceneModel(mu=mu, r_coh=43.0, eta_i=0.72, eta_s=0.784, d_offset=(dx, dy), fidelity="spread")


def test_exact_parabola():
    d = np.arange(-5.0, 16.0)
    fit = parabola_fit(scan_points(d, (d - 5) ** 2 + 2))
    assert fit.d_min == pytest.approx(5.0, abs=1e-12)
    assert fit.u_dmin == pytest.approx(0.0, abs=1e-9)
    assert fit.coeffs == pytest.approx((1.0, -10.0, 27.0))


def test_symmetric_noisy_points():
    rng = np.random.default_rng(2)
    d = np.linspace(-50, 50, 11)
    noise = rng.normal(0, 0.01, 6)
    y = 0.3 + 1e-4 * d**2 + np.concatenate([noise[:0:-1], noise])
    fit = parabola_fit(scan_points(d, y, [0.01] * 11))
    assert abs(fit.d_min) <= max(fit.u_dmin, 1e-9)


def test_weighted_covariance_matches_monte_carlo():
    rng = np.random.default_rng(3)
    d = np.linspace(-50, 50, 11)
    truth = 0.3 + 1e-4 * (d - 8) ** 2
    mins = [parabola_fit(scan_points(d, truth + rng.normal(0, 0.01, 11), [0.01] * 11)).d_min for _ in range(500)]
    u = parabola_fit(scan_points(d, truth, [0.01] * 11)).u_dmin
    assert u == pytest.approx(np.std(mins), rel=0.15)


def test_non_convex_rejected():
    d = np.arange(5.0)
    with pytest.raises(DegeneracyError):
        parabola_fit(scan_points(d, -(d**2)))
    with pytest.raises(DegeneracyError):
        parabola_fit(scan_points(d, 2 * d + 1))


def test_too_few_points():
    with pytest.raises(ValidationError):
        parabola_fit(scan_points([0, 1], [1, 2]))
    s = PairSeries(np.arange(10.0), np.arange(10.0) + 1)
    with pytest.raises(ValidationError):
        center_scan([(0, s), (1, s), (1, s)])


@settings(max_examples=50, deadline=None)
@given(
    shift=st.floats(-10, 10),
    scale=st.floats(0.1, 10),
    d0=st.floats(-20, 20),
)
def test_argmin_invariance(shift, scale, d0):
    d = np.linspace(-30, 30, 9)
    y = 0.4 + 2e-4 * (d - d0) ** 2 + 0.01 * np.sin(d)
    base = parabola_fit(scan_points(d, y)).d_min
    moved = parabola_fit(scan_points(d, scale * y + shift)).d_min
    assert moved == pytest.approx(base, abs=1e-9)


def test_scan_symmetry():
    pairs = single_pixel_pairs(SENSOR, [(x, y) for x in (1, 2, 3) for y in (1, 2, 3, 4)])
    scan = simulate_scan(_scene(), SENSOR, 0, [-40.0, 0.0, 40.0], 800, 4, pairs)
    pts = center_scan(scan)
    assert abs(pts[0].sigma - pts[2].sigma) < 3 * np.hypot(pts[0].u_sigma, pts[2].u_sigma)
    assert pts[1].sigma < min(pts[0].sigma, pts[2].sigma)


def test_scan_plateau_far_from_center():
    """Shifting by many coherence radii leaves only uncorrelated light.

    A small mu keeps the thermal excess noise negligible, so each pair sits
    at its own (1 + alpha) / 2.  Idler pixels stay clear of the shifted
    signal beam.
    """
    pairs = single_pixel_pairs(SENSOR, [(x, y) for x in (1, 2) for y in (1, 2, 3, 4)])
    scan = simulate_scan(_scene(mu=0.005), SENSOR, 0, [0.0, 300.0, 350.0], 2000, 5, pairs)
    pts = center_scan(scan, balance=True)
    for (_, group), p in zip(scan[1:], pts[1:]):
        plateau = np.mean([(1 + alpha_hat(s)[0]) / 2 for s in group])
        assert abs(p.sigma - plateau) < 3 * p.u_sigma
    assert pts[0].sigma < pts[1].sigma - 10 * pts[0].u_sigma


@pytest.mark.slow
def test_centering_recovers_offset():
    scans = centering(_scene(30.0, -20.0), SENSOR, seed=5)
    est, u = center_estimate(scans)
    assert np.all(np.abs(est - [30.0, -20.0]) < 3 * u)
    assert np.all(u < 5.0)
