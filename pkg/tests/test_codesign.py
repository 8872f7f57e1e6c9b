import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holobeam.beamopt import (
    JcasUser,
    SensingTarget,
    codesign_maxmin,
    max_user_snr,
    monotone,
    qt_auxiliary,
    qt_surrogate,
)
from holobeam.rhs import RhsConfig, polar_from_broadside
from holobeam.wavefield import planar_steering

from conftest import LAM, deg


def bs(a_deg):
    return polar_from_broadside(deg(a_deg))


# ---------------------------------------------------------------- quadratic transform


def test_qt_fixed_point_example():
    lam = qt_auxiliary(1.0, 2.0)
    assert lam == 0.5
    assert qt_surrogate(lam, 1.0, 2.0) == 0.5


def test_qt_rejects_non_positive_g():
    with pytest.raises(ValueError):
        qt_auxiliary(1.0, 0.0)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(re=finite, im=finite, G=st.floats(1e-3, 1e3))
def test_qt_exact_at_optimal_auxiliary(re, im, G):
    A = complex(re, im)
    val = qt_surrogate(qt_auxiliary(A, G), A, G)
    ref = abs(A) ** 2 / G
    assert abs(val - ref) <= 1e-12 * max(ref, 1e-300) or ref == 0 and abs(val) < 1e-300


@given(re=finite, im=finite, G=st.floats(1e-3, 1e3), dre=finite, dim=finite)
def test_qt_surrogate_is_a_lower_bound(re, im, G, dre, dim):
    A = complex(re, im)
    lam = complex(dre, dim)
    assert qt_surrogate(lam, A, G) <= abs(A) ** 2 / G * (1 + 1e-12) + 1e-9


def test_qt_vector_form():
    rng = np.random.default_rng(0)
    A = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    val = qt_surrogate(qt_auxiliary(A, 3.0), A, 3.0)
    assert val == pytest.approx(np.sum(np.abs(A) ** 2) / 3.0, rel=1e-12)


# ---------------------------------------------------------------- max-min co-design


def test_validation():
    cfg = RhsConfig(1, 4, LAM / 3, LAM)
    t = [SensingTarget(bs(0), 1.0)]
    with pytest.raises(ValueError):
        codesign_maxmin(cfg, cfg, [])
    with pytest.raises(ValueError):
        codesign_maxmin(cfg, cfg, t, efficiencies=(0.0, 1.0))
    with pytest.raises(ValueError):
        codesign_maxmin(cfg, cfg, t, efficiencies=(1.0, 1.2))


def test_all_zero_reflections_report_zero_sinr():
    cfg = RhsConfig(1, 4, LAM / 3, LAM)
    rep = codesign_maxmin(cfg, cfg, [SensingTarget(bs(0), 0.0), SensingTarget(bs(10), 0.0)])
    assert rep.status == "zero-sinr"
    assert rep.objective == 0.0


def test_three_targets_monotone_and_tau_is_min_sinr():
    cfg = RhsConfig(2, 6, LAM / 3, LAM)
    targets = [SensingTarget(bs(a), b) for a, b in [(-30, 1.0), (10, 0.8), (40, 0.6j)]]
    rep = codesign_maxmin(cfg, cfg, targets, restarts=1, max_rounds=30)
    assert rep.feasible
    assert monotone(rep.objective_trace)
    assert min(rep.extras["target_sinr"]) == pytest.approx(rep.objective, rel=1e-6)
    assert rep.min_leakage_slack >= -1e-9


def test_user_floor_respected():
    cfg = RhsConfig(1, 10, LAM / 3, LAM)
    h = planar_steering(cfg, bs(-40))
    top = max_user_snr(cfg, h, 1.0)
    rep = codesign_maxmin(cfg, cfg, [SensingTarget(bs(20), 1.0)], users=[JcasUser(h, 0.3 * top)], restarts=1, max_rounds=20)
    assert rep.feasible
    assert monotone(rep.objective_trace)
    assert rep.extras["user_sinr"][0] >= 0.3 * top * (1 - 1e-6)


def test_transmit_efficiency_scales_user_snr_linearly():
    cfg = RhsConfig(1, 16, LAM / 3, LAM)
    h = planar_steering(cfg, polar_from_broadside(0.3))
    z = {u: max_user_snr(cfg, h, u) for u in (0.25, 0.5, 1.0)}
    for a in z:
        for b in z:
            assert z[a] / z[b] == pytest.approx(a / b, rel=1e-2)


def test_efficiency_ordering():
    cfg = RhsConfig(1, 16, LAM / 3, LAM)
    t = [SensingTarget(bs(20), 1.0)]
    nu = {e: codesign_maxmin(cfg, cfg, t, efficiencies=e).objective for e in [(0.8, 0.8), (0.8, 0.5), (0.5, 0.8)]}
    assert nu[(0.8, 0.8)] > nu[(0.8, 0.5)] > nu[(0.5, 0.8)]
