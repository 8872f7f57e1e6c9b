import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holobeam.errors import ConfigurationError
from holobeam.rhs import (
    ApertureWindow,
    Beamformer,
    HolographicPattern,
    RhsConfig,
    apply_beamformer,
    build_propagation_matrix,
    is_feasible,
    leakage_margins,
    leakage_weights,
    pattern_for_direction,
    pattern_for_point,
    quantize_pattern,
    scale_to_leakage,
    superpose_patterns,
)

LAM = 0.01


# ---------------------------------------------------------------- configuration


def test_config_rejects_bad_geometry():
    with pytest.raises(ConfigurationError):
        RhsConfig(1, 4, 0.0, LAM)
    with pytest.raises(ConfigurationError):
        RhsConfig(1, 4, LAM / 3, -1.0)
    with pytest.raises(ConfigurationError):
        RhsConfig(0, 4, LAM / 3, LAM)


def test_attenuation_range_validated():
    with pytest.raises(ConfigurationError):
        RhsConfig(1, 4, LAM / 3, LAM, attenuation=0.5)
    with pytest.raises(ConfigurationError):
        RhsConfig(1, 4, LAM / 3, LAM, attenuation=11.0)


def test_wide_spacing_warns_but_builds():
    with pytest.warns(UserWarning, match="half a wavelength"):
        cfg = RhsConfig(1, 4, 0.6 * LAM, LAM)
    assert cfg.size == 4


def test_power_split_validation():
    with pytest.raises(ConfigurationError):
        RhsConfig(2, 4, LAM / 3, LAM, power_split=(1.0,))
    with pytest.raises(ConfigurationError):
        RhsConfig(1, 4, LAM / 3, LAM, power_split=(0.0,))
    assert RhsConfig(2, 4, LAM / 3, LAM).power_split == (1.0, 1.0)


def test_element_index_layout():
    cfg = RhsConfig(3, 4, LAM / 3, LAM)
    assert cfg.row_index().tolist() == [0, 1, 2] * 4
    assert cfg.col_index().tolist() == [0] * 3 + [1] * 3 + [2] * 3 + [3] * 3


# ---------------------------------------------------------------- propagation


def test_single_element_at_feed_is_unity():
    F = build_propagation_matrix(RhsConfig(1, 1, LAM / 3, LAM))
    assert F.shape == (1, 1)
    assert F[0, 0] == 1 + 0j


def test_half_guided_wavelength_gives_pi_phase():
    n_wg = math.sqrt(3.0)
    d = LAM / n_wg / 2
    cfg = RhsConfig(1, 2, d, LAM)
    F = build_propagation_matrix(cfg)
    assert F[1, 0] == pytest.approx(-math.exp(-3.0 * d), rel=1e-12, abs=1e-15)
    assert abs(F[1, 0]) == pytest.approx(math.exp(-3.0 * d), rel=1e-14)


def test_fifty_element_magnitude_profile_matches_direct_evaluation(pareto_cfg):
    F = build_propagation_matrix(pareto_cfg)
    d = pareto_cfg.element_spacing
    oracle = np.array([math.sqrt(1.0) * math.exp(-3.0 * n * d) for n in range(50)])
    np.testing.assert_allclose(np.abs(F[:, 0]), oracle, rtol=1e-13)


def test_propagation_is_block_diagonal_by_row():
    cfg = RhsConfig(3, 5, LAM / 4, LAM, power_split=(1.0, 0.5, 0.25))
    F = build_propagation_matrix(cfg)
    rows = cfg.row_index()
    for n in range(cfg.size):
        for l in range(cfg.feed_count):
            if rows[n] != l:
                assert F[n, l] == 0
    col0 = F[cfg.col_index() == 0]
    np.testing.assert_allclose(np.abs(col0[[0, 1, 2], [0, 1, 2]]) ** 2, [1.0, 0.5, 0.25])


@given(
    rows=st.integers(1, 3),
    cols=st.integers(2, 20),
    frac=st.floats(0.1, 0.5),
    alpha=st.floats(1.0, 10.0),
)
def test_propagation_decays_along_each_row(rows, cols, frac, alpha):
    cfg = RhsConfig(rows, cols, frac * LAM, LAM, attenuation=alpha)
    F = build_propagation_matrix(cfg)
    mag = np.abs(F).sum(axis=1).reshape(cols, rows)
    assert np.all(np.diff(mag, axis=0) < 0)
    assert np.all(np.abs(F) <= 1.0)


# ---------------------------------------------------------------- patterns


def _axis_direction(cos_theta):
    return (math.acos(cos_theta), 0.0)


def test_pattern_in_phase_element_is_one():
    cfg = RhsConfig(1, 4, LAM / 3, LAM)
    p = pattern_for_direction(cfg, (1.0, 0.0))
    assert p.amplitudes[0] == pytest.approx(1.0, abs=1e-15)  # both phases zero at the feed


def test_pattern_anti_phase_element_is_zero():
    cfg = RhsConfig(1, 2, LAM / 3, LAM)
    # d (k_s - k0 cos theta) = pi  =>  cos theta = n_wg - lambda / (2 d)
    p = pattern_for_direction(cfg, _axis_direction(math.sqrt(3.0) - 1.5))
    assert p.amplitudes[1] == pytest.approx(0.0, abs=1e-15)


def test_pattern_quadrature_element_is_half():
    cfg = RhsConfig(1, 2, LAM / 3, LAM)
    p = pattern_for_direction(cfg, _axis_direction(math.sqrt(3.0) - 0.75))
    assert p.amplitudes[1] == pytest.approx(0.5, abs=1e-12)


@given(theta=st.floats(0.0, math.pi - 1e-6), phi=st.floats(0.0, 2 * math.pi - 1e-6))
def test_pattern_amplitudes_in_box(theta, phi):
    cfg = RhsConfig(2, 6, LAM / 4, LAM)
    a = pattern_for_direction(cfg, (theta, phi)).amplitudes
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_pattern_rejects_out_of_box_values():
    with pytest.raises(ValueError):
        HolographicPattern(np.array([0.2, 1.2]))
    with pytest.raises(ValueError):
        HolographicPattern(np.array([-0.1]))
    p = HolographicPattern(np.array([0.5]))
    with pytest.raises(ValueError):
        p.amplitudes[0] = 0.7  # read-only


# ---------------------------------------------------------------- superposition


def test_superpose_single_identity(pareto_cfg):
    p = pattern_for_direction(pareto_cfg, (1.2, 0.0))
    out, rescaled = superpose_patterns([p], [1.0])
    np.testing.assert_array_equal(out.amplitudes, p.amplitudes)
    assert not rescaled


def test_superpose_convex_combination_of_identical(pareto_cfg):
    p = pattern_for_direction(pareto_cfg, (1.2, 0.0))
    out, rescaled = superpose_patterns([p, p], [0.5, 0.5])
    np.testing.assert_allclose(out.amplitudes, p.amplitudes, atol=1e-15)
    assert not rescaled


def test_superpose_rescales_by_max_raw(pareto_cfg):
    a = pattern_for_direction(pareto_cfg, (1.0, 0.0))
    b = pattern_for_direction(pareto_cfg, (2.0, 0.0))
    raw = a.amplitudes + b.amplitudes
    out, rescaled = superpose_patterns([a, b], [1.0, 1.0])
    assert rescaled and raw.max() > 1.0
    np.testing.assert_allclose(out.amplitudes, raw / raw.max(), rtol=1e-14)


def test_superpose_errors():
    with pytest.raises(ValueError):
        superpose_patterns([], [])
    p = HolographicPattern(np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        superpose_patterns([p], [1.0, 2.0])
    with pytest.raises(ValueError):
        superpose_patterns([p], [math.inf])


@given(
    w=st.lists(st.floats(-2.0, 5.0), min_size=1, max_size=4),
    seed=st.integers(0, 1000),
)
def test_superpose_feasibility_closure(w, seed):
    rng = np.random.default_rng(seed)
    pats = [HolographicPattern(rng.uniform(0, 1, 12)) for _ in w]
    out, _ = superpose_patterns(pats, w)
    assert out.amplitudes.min() >= 0.0 and out.amplitudes.max() <= 1.0


# ---------------------------------------------------------------- quantization


def test_quantize_tie_rounds_down():
    assert quantize_pattern(HolographicPattern(np.array([0.5])), 2).amplitudes[0] == 0.0
    assert quantize_pattern(HolographicPattern(np.array([0.375])), 5).amplitudes[0] == 0.25


def test_quantize_nearest():
    assert quantize_pattern(HolographicPattern(np.array([0.74])), 5).amplitudes[0] == 0.75


def test_quantize_rejects_single_level():
    with pytest.raises(ValueError):
        quantize_pattern(HolographicPattern(np.array([0.3])), 1)


@given(levels=st.integers(2, 9), k=st.lists(st.integers(0, 8), min_size=1, max_size=10))
def test_quantize_fixed_point_on_grid(levels, k):
    vals = np.array([min(x, levels - 1) for x in k]) / (levels - 1)
    out = quantize_pattern(HolographicPattern(vals), levels)
    np.testing.assert_array_equal(out.amplitudes, vals)


@given(levels=st.integers(2, 9), vals=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=16))
def test_quantize_is_nearest_grid_point_in_box(levels, vals):
    a = np.array(vals)
    out = quantize_pattern(HolographicPattern(a), levels).amplitudes
    grid = np.arange(levels) / (levels - 1)
    dist = np.abs(a[:, None] - grid[None, :]).min(axis=1)
    np.testing.assert_allclose(np.abs(out - a), dist, atol=1e-12)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_quantize_can_break_leakage_feasibility():
    # nearest rounding (ties down included) may round up and overdraw a row
    cfg = RhsConfig(1, 2, LAM / 3, LAM, attenuation=1.0)
    win = ApertureWindow.full(cfg)
    p = HolographicPattern(np.array([0.7, 0.7]))
    assert is_feasible(cfg, p, win)
    q = quantize_pattern(p, 2)
    assert q.amplitudes.tolist() == [1.0, 1.0]
    assert not is_feasible(cfg, q, win)


# ---------------------------------------------------------------- leakage


def test_zero_pattern_full_slack():
    cfg = RhsConfig(3, 5, LAM / 3, LAM)
    s = leakage_margins(cfg, HolographicPattern(np.zeros(15)), ApertureWindow.full(cfg))
    np.testing.assert_array_equal(s, np.ones(3))


def test_masked_row_has_full_slack():
    cfg = RhsConfig(2, 5, LAM / 3, LAM)
    win = ApertureWindow((0, 2), (5, 2))  # second row switched off
    s = leakage_margins(cfg, HolographicPattern(np.ones(10)), win)
    assert s[1] == 1.0 and s[0] < 1.0


def test_fifty_element_full_pattern_slack_by_direct_summation(pareto_cfg):
    s = leakage_margins(pareto_cfg, HolographicPattern(np.ones(50)), ApertureWindow.full(pareto_cfg))
    d = pareto_cfg.element_spacing
    oracle = 1.0 - sum(math.exp(-2 * 3.0 * n * d) for n in range(50))
    assert s[0] == pytest.approx(oracle, rel=1e-13)


@given(seed=st.integers(0, 10_000), rows=st.integers(1, 3), cols=st.integers(1, 12))
def test_scale_to_leakage_is_feasible(seed, rows, cols):
    rng = np.random.default_rng(seed)
    cfg = RhsConfig(rows, cols, LAM / 3, LAM, attenuation=float(rng.uniform(1, 10)))
    p = HolographicPattern(rng.uniform(0, 1, cfg.size))
    win = ApertureWindow.full(cfg)
    q = scale_to_leakage(cfg, p, win)
    assert leakage_margins(cfg, q, win).min() >= -1e-9
    assert q.amplitudes.min() >= 0 and q.amplitudes.max() <= 1


def test_window_validation():
    cfg = RhsConfig(2, 4, LAM / 3, LAM)
    with pytest.raises(ValueError):
        ApertureWindow((0,), (1, 2))
    with pytest.raises(ValueError):
        ApertureWindow((2, 0), (1, 4))
    with pytest.raises(ValueError):
        ApertureWindow((0, 0), (5, 4)).mask(cfg)
    with pytest.raises(ValueError):
        ApertureWindow.sliding(cfg, 3, 2)
    w = ApertureWindow.sliding(cfg, 2, 1)
    assert w.mask(cfg).tolist() == [0, 0, 1, 1, 1, 1, 0, 0]
    assert w.active_count() == 4


# ---------------------------------------------------------------- beamformer


def test_identity_chain():
    cfg = RhsConfig(1, 1, LAM / 3, LAM)
    bf = Beamformer.from_pattern(cfg, HolographicPattern(np.ones(1)))
    assert apply_beamformer(bf, ApertureWindow.full(cfg), [1.0]).tolist() == [1 + 0j]


def test_dark_surface():
    cfg = RhsConfig(2, 3, LAM / 3, LAM)
    bf = Beamformer.from_pattern(cfg, HolographicPattern(np.zeros(6)))
    assert np.all(apply_beamformer(bf, ApertureWindow.full(cfg), [1.0, 2j]) == 0)


def test_apply_matches_loop_oracle():
    rng = np.random.default_rng(3)
    cfg = RhsConfig(2, 2, LAM / 3, LAM)  # 4 elements, 2 feeds
    psi = rng.uniform(0, 1, 4)
    x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    bf = Beamformer.from_pattern(cfg, HolographicPattern(psi))
    y = apply_beamformer(bf, ApertureWindow.full(cfg), x)
    k_s = 2 * math.pi * math.sqrt(3.0) / LAM
    for n in range(4):
        l = n % 2
        r = (n // 2) * cfg.element_spacing
        f = math.exp(-3.0 * r) * np.exp(-1j * k_s * r)
        assert y[n] == pytest.approx(psi[n] * f * x[l], rel=1e-13)


def test_apply_dimension_mismatch():
    cfg = RhsConfig(2, 2, LAM / 3, LAM)
    bf = Beamformer.from_pattern(cfg, HolographicPattern(np.ones(4)))
    with pytest.raises(ValueError):
        apply_beamformer(bf, ApertureWindow.full(cfg), [1.0])


@given(seed=st.integers(0, 10_000), n_active=st.integers(1, 6), offset=st.integers(0, 5))
def test_mask_linearity(seed, n_active, offset):
    cfg = RhsConfig(2, 6, LAM / 3, LAM)
    if offset + n_active > cfg.cols:
        offset = cfg.cols - n_active
    rng = np.random.default_rng(seed)
    psi = rng.uniform(0, 1, cfg.size)
    x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    win = ApertureWindow.sliding(cfg, n_active, offset)
    y1 = apply_beamformer(Beamformer.from_pattern(cfg, HolographicPattern(psi)), win, x)
    masked = HolographicPattern(psi * win.mask(cfg))
    y2 = apply_beamformer(Beamformer.from_pattern(cfg, masked), ApertureWindow.full(cfg), x)
    np.testing.assert_allclose(y1, y2, atol=1e-15)


def test_config_round_trips_through_dict():
    cfg = RhsConfig(2, 3, LAM / 3, LAM, power_split=(1.0, 0.5))
    assert RhsConfig(**{**cfg.to_dict(), "power_split": tuple(cfg.to_dict()["power_split"])}) == cfg


def test_point_pattern_tends_to_plane_pattern_at_huge_range():
    cfg = RhsConfig(2, 16, LAM / 3, LAM)
    th = 1.1
    r = 1e12
    far = pattern_for_direction(cfg, (th, 0.0)).amplitudes
    near = pattern_for_point(cfg, (r * math.sin(th), 0.0, r * math.cos(th))).amplitudes
    assert np.abs(near - far).max() < 1e-9
