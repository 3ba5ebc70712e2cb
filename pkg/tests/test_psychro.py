"""Psychrometric core tests.

Reference saturation pressures (kPa) are standard published table values,
frozen here as the oracle before the implementation was written:

    0 degC -> 0.6113, 10 -> 1.2281, 20 -> 2.3388, 30 -> 4.2455, 40 -> 7.3814
"""

import math
import random

import pytest

from greenloop import psychro

# frozen oracle: standard saturation-pressure table, kPa
REFERENCE_ES = {0.0: 0.6113, 10.0: 1.2281, 20.0: 2.3388, 30.0: 4.2455, 40.0: 7.3814}


def test_es_at_zero_is_leading_coefficient():
    # exponent vanishes at 0 degC
    assert psychro.saturation_vapor_pressure(0.0) == pytest.approx(0.61094, abs=1e-12)


def test_es_matches_reference_tables_within_half_percent():
    for t, ref in REFERENCE_ES.items():
        es = psychro.saturation_vapor_pressure(t)
        assert abs(es - ref) / ref < 0.005, f"e_s({t}) = {es} vs reference {ref}"


def test_es_spot_values():
    assert psychro.saturation_vapor_pressure(20.0) == pytest.approx(2.33344, abs=5e-5)
    assert psychro.saturation_vapor_pressure(25.0) == pytest.approx(3.16174, abs=5e-5)


def test_es_strictly_increasing():
    ts = [psychro.T_MIN + i * 0.5 for i in range(int((psychro.T_MAX - psychro.T_MIN) / 0.5) + 1)]
    es = [psychro.saturation_vapor_pressure(t) for t in ts]
    assert all(b > a for a, b in zip(es, es[1:]))


def test_es_domain_errors():
    with pytest.raises(psychro.DomainError):
        psychro.saturation_vapor_pressure(-25.0)
    with pytest.raises(psychro.DomainError):
        psychro.saturation_vapor_pressure(61.0)
    with pytest.raises(psychro.DomainError):
        psychro.saturation_vapor_pressure(float("nan"))


def test_vpd_saturated_air_is_zero():
    assert psychro.vpd(25.0, 100.0) == pytest.approx(0.0, abs=1e-15)


def test_vpd_spot_value():
    assert psychro.vpd(25.0, 60.0) == pytest.approx(1.26469, abs=5e-5)


def test_vpd_monotone_in_rh_and_t():
    rng = random.Random(7)
    for _ in range(200):
        t = rng.uniform(-10.0, 50.0)
        rh = rng.uniform(0.0, 99.0)
        assert psychro.vpd(t, rh) > psychro.vpd(t, rh + 1.0)
        if t + 1.0 <= psychro.T_MAX:
            assert psychro.vpd(t + 1.0, rh) > psychro.vpd(t, rh)


def test_leaf_vpd_reduces_to_air_vpd():
    for t, rh in [(25.0, 60.0), (18.0, 80.0), (30.0, 40.0)]:
        assert psychro.leaf_vpd(t, t, rh).value == psychro.vpd(t, rh)


def test_leaf_vpd_condensation_flag():
    res = psychro.leaf_vpd(20.0, 25.0, 95.0)
    assert res.value < 0.0
    assert res.condensation
    # warm leaf exceeds the air deficit
    assert psychro.leaf_vpd(26.0, 25.0, 60.0).value > psychro.vpd(25.0, 60.0)


def test_canopy_vpd_is_mean_of_points():
    a = psychro.leaf_vpd(24.0, 25.0, 60.0).value
    b = psychro.leaf_vpd(26.0, 25.0, 60.0).value
    got = psychro.canopy_vpd([24.0, 26.0], 25.0, 60.0)
    assert got.value == pytest.approx((a + b) / 2.0, rel=1e-12)
    with pytest.raises(psychro.DomainError):
        psychro.canopy_vpd([24.0], 25.0, 60.0)


def test_rh_for_target_round_trip():
    rng = random.Random(11)
    for _ in range(300):
        t = rng.uniform(5.0, 40.0)
        rh = rng.uniform(0.0, 100.0)
        target = psychro.vpd(t, rh)
        back = psychro.rh_for_target(t, target)
        assert abs(psychro.vpd(t, back) - target) < 1e-9
        assert back == pytest.approx(rh, abs=1e-9)


def test_rh_for_target_edges():
    assert psychro.rh_for_target(25.0, 0.0) == pytest.approx(100.0)
    assert psychro.rh_for_target(25.0, 1.26469) == pytest.approx(60.0, abs=1e-3)
    with pytest.raises(psychro.Unattainable):
        psychro.rh_for_target(10.0, 5.0)


def test_sensitivities_match_finite_differences():
    h = 1e-4
    rng = random.Random(3)
    for _ in range(100):
        t = rng.uniform(0.0, 45.0)
        rh = rng.uniform(5.0, 95.0)
        dt, drh = psychro.vpd_sensitivities(t, rh)
        fd_t = (psychro.vpd(t + h, rh) - psychro.vpd(t - h, rh)) / (2 * h)
        fd_rh = (psychro.vpd(t, rh + h) - psychro.vpd(t, rh - h)) / (2 * h)
        assert abs(dt - fd_t) / max(abs(fd_t), 1e-12) < 1e-6
        assert abs(drh - fd_rh) / max(abs(fd_rh), 1e-12) < 1e-6


def test_sensitivity_ratio_band():
    # temperature moves VPD 2-3x harder than humidity over the working grid;
    # the pointwise ratio spans ~[1.7, 3.7] at the grid corners (fixed by the
    # Tetens form itself), so the 2-3x claim is checked on the grid mean
    dt, drh = psychro.vpd_sensitivities(25.0, 60.0)
    assert abs(dt / drh) == pytest.approx(2.3849, abs=1e-3)
    ratios = []
    for t in range(20, 31):
        for rh in range(40, 71):
            dt, drh = psychro.vpd_sensitivities(float(t), float(rh))
            ratios.append(abs(dt) / abs(drh))
    mean = sum(ratios) / len(ratios)
    assert 2.0 <= mean <= 3.0, f"grid-mean ratio {mean}"
    assert min(ratios) == pytest.approx(1.724, abs=5e-3)
    assert max(ratios) == pytest.approx(3.715, abs=5e-3)


def test_sensitivity_dt_vanishes_at_saturation():
    dt, _ = psychro.vpd_sensitivities(25.0, 100.0)
    assert dt == pytest.approx(0.0, abs=1e-15)


def test_vpd_never_negative():
    rng = random.Random(19)
    for _ in range(500):
        t = rng.uniform(psychro.T_MIN, psychro.T_MAX)
        rh = rng.uniform(0.0, 100.0)
        assert psychro.vpd(t, rh) >= 0.0
