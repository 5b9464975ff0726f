from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twincal.errors import ValidationError
from twincal.geometry import (
    A_gradient,
    A_of,
    ModeCounts,
    compute_A,
    effective_offset,
    mode_counts,
    nested_regions,
    place_regions,
    uncertainty_of_A,
)
from twincal.scene import SensorModel


def test_counts_large_region():
    m = mode_counts(2630, 0, 43)
    assert m.m_c == pytest.approx(2630**2 / (math.pi * 43**2))
    assert m.m_c == pytest.approx(1190.8, abs=0.05)
    assert m.m_b == pytest.approx(122.3, abs=0.05)
    assert m.m_u == 0


def test_counts_small_region():
    m = mode_counts(679, 0, 43)
    assert m.m_c == pytest.approx(79.4, abs=0.05)
    assert m.m_b == pytest.approx(31.6, abs=0.05)


def test_counts_offset():
    m = mode_counts(1000, 20, 40)
    cell = math.pi * 1600
    assert m.m_u == pytest.approx(2 * 1000 * 20 / cell)
    assert m.m_c + m.m_u == pytest.approx(1000**2 / cell)


@pytest.mark.parametrize("L,d,r,word", [(100, 0, 43, "L/r"), (1000, 300, 43, "L/d")])
def test_guard(L, d, r, word):
    with pytest.raises(ValidationError, match=word):
        mode_counts(L, d, r)


def test_A_reference_geometry():
    assert A_of(2630, 0, 43, 0.5, 1e-7) == pytest.approx(0.9756, abs=5e-4)


def test_A_small_region_hand_value():
    # (79.37 + 31.58/4) / (79.37 + 31.58/2)
    mc, mb = 679**2 / (math.pi * 43**2), 2 * 679 / 43
    assert A_of(679, 0, 43, 0.5, 0.0) == pytest.approx((mc + mb / 4) / (mc + mb / 2), rel=1e-12)
    assert A_of(679, 0, 43, 0.5, 0.0) == pytest.approx(0.9171, abs=1e-4)


def test_A_ideal():
    assert compute_A(ModeCounts(100, 0, 0), 0.3, 0.0) == 1.0


def test_A_zero_denominator():
    with pytest.raises(ValidationError):
        compute_A(ModeCounts(0, 0, 0))


def test_mu_insensitivity():
    a0 = A_of(2630, 2.7, 43, 0.5, 0.0)
    assert abs(A_of(2630, 2.7, 43, 0.5, 1e-7) - a0) < 1e-6


def test_gradient_matches_central_differences():
    args = (2630.0, 5.0, 43.0)
    g = A_gradient(*args, 0.5, 0.01)
    for k in range(3):
        h = 1e-4 * args[k]
        up, dn = list(args), list(args)
        up[k] += h
        dn[k] -= h
        fd = (A_of(*up, 0.5, 0.01) - A_of(*dn, 0.5, 0.01)) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-6)


def test_uncertainty_zero_inputs():
    a, u = uncertainty_of_A(2630, 0, 0, 43, 0)
    assert u == 0 and a == A_of(2630, 0, 43)


def test_uncertainty_magnitude():
    _, u = uncertainty_of_A(2630, 0, 2.7, 43, 3)
    assert 0.0025 / 2 <= u <= 0.0025 * 2


def test_effective_offset():
    assert effective_offset((3.0, -4.0)) == 7.0


@settings(max_examples=60, deadline=None)
@given(
    L=st.floats(500, 5000),
    d=st.floats(0, 100),
    r=st.floats(10, 100),
    k=st.floats(0.1, 10),
)
def test_counts_scale_invariance(L, d, r, k):
    a, b = mode_counts(L, d, r), mode_counts(k * L, k * d, k * r)
    assert b.m_b * k * r / (k * L) == pytest.approx(a.m_b * r / L, rel=1e-9)
    assert b.m_c * (k * r) ** 2 / (k * L) ** 2 == pytest.approx(a.m_c * r**2 / L**2, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    mc=st.floats(1, 1e4),
    mu_=st.floats(0, 1e3),
    mb=st.floats(0, 1e3),
    beta=st.floats(0, 1),
    mu=st.floats(0, 1),
    du=st.floats(0, 100),
    db=st.floats(0, 100),
)
def test_A_monotone(mc, mu_, mb, beta, mu, du, db):
    a = compute_A(ModeCounts(mc, mu_, mb), beta, mu)
    assert a <= 1 + 1e-12
    den = mc + mu_ + mb * beta
    assert a == pytest.approx(1 - (mu_ * (1 + mu) + mb * (beta - beta**2)) / den, rel=1e-9, abs=1e-12)
    assert compute_A(ModeCounts(mc, mu_ + du, mb), beta, mu) <= a + 1e-12
    # the border deficit lowers A when it is the only loss
    a0 = compute_A(ModeCounts(mc, 0.0, mb), beta, mu)
    assert compute_A(ModeCounts(mc, 0.0, mb + db), beta, mu) <= a0 + 1e-12


SENSOR = SensorModel(256, 128, bin_factor=4)


def test_regions_symmetric():
    p = place_regions(SENSOR, 160.0, (16, 16))
    cs = SENSOR.cs_um / SENSOR.readout_pitch
    xi0, yi0, xi1, yi1 = p.region_i
    xs0, ys0, xs1, ys1 = p.region_s
    assert (xi0 + xs1, xi1 + xs0) == (2 * cs[0], 2 * cs[0])
    assert (yi0 + ys1, yi1 + ys0) == (2 * cs[1], 2 * cs[1])
    assert p.L == 160.0 and p.size_px == 2


def test_regions_too_large():
    with pytest.raises(ValidationError, match="outside"):
        place_regions(SENSOR, 40 * 80.0, (16, 16))


def test_regions_fractional_size():
    with pytest.raises(ValidationError, match="whole number"):
        place_regions(SENSOR, 100.0, (16, 16))


def test_regions_nested():
    pairs = nested_regions(SENSOR, [k * 80.0 for k in range(4, 31, 3)], (16, 16))
    for a, b in zip(pairs, pairs[1:]):
        for ra, rb in ((a.region_i, b.region_i), (a.region_s, b.region_s)):
            assert rb[0] <= ra[0] and rb[1] <= ra[1] and ra[2] <= rb[2] and ra[3] <= rb[3]


def test_regions_reject_unsorted():
    with pytest.raises(ValidationError):
        nested_regions(SENSOR, [320.0, 160.0], (16, 16))


def test_regions_reject_overlap():
    with pytest.raises(ValidationError, match="overlap"):
        place_regions(SENSOR, 10 * 80.0, (30, 16))
