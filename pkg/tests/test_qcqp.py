import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holobeam.beamopt import (
    AmplitudeDomain,
    QcqpConstraint,
    QcqpSpec,
    QuadForm,
    brute_force_oracle,
    max_directional_power,
    monotone,
    power_form,
    probe_vector,
    quantize_solution,
    solve_pattern_qcqp,
)
from holobeam.rhs import ApertureWindow, RhsConfig, leakage_margins, polar_from_broadside
from holobeam.wavefield import planar_steering

LAM = 0.01


def steer_spec(cols=4, angle=0.4, attenuation=2.0, rows=1, **kw):
    cfg = RhsConfig(rows, cols, LAM / 3, LAM, attenuation=attenuation)
    obj = power_form(cfg, planar_steering(cfg, polar_from_broadside(angle)))
    return QcqpSpec(cfg, obj, **kw)


def random_hermitian(n, rng):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A.conj().T @ A


# ---------------------------------------------------------------- forms


def test_quadform_rejects_non_hermitian():
    with pytest.raises(ValueError):
        QuadForm(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        QuadForm(np.ones((2, 3)))


def test_quadform_value_matches_direct_evaluation():
    rng = np.random.default_rng(1)
    H = random_hermitian(5, rng)
    q = rng.standard_normal(5)
    f = QuadForm(H, q, 0.7)
    x = rng.uniform(0, 1, 5)
    direct = float(np.real(x @ H @ x)) + q @ x + 0.7
    assert f.value(x) == pytest.approx(direct, rel=1e-12)
    # finite-difference gradient
    e = 1e-6
    fd = [(f.value(x + e * np.eye(5)[i]) - f.value(x - e * np.eye(5)[i])) / (2 * e) for i in range(5)]
    assert np.allclose(f.grad(x), fd, rtol=1e-6, atol=1e-6)


def test_power_form_equals_radiated_power():
    cfg = RhsConfig(2, 3, LAM / 3, LAM, attenuation=3.0)
    probe = planar_steering(cfg, (1.0, 0.3))
    B = np.array([[0.5 + 0.2j], [0.1 - 0.4j]])
    f = power_form(cfg, probe, B)
    x = np.random.default_rng(0).uniform(0, 1, cfg.size)
    C = probe_vector(cfg, probe, B)
    assert f.value(x) == pytest.approx(float(np.sum(np.abs(x @ C) ** 2)), rel=1e-12)


def test_spec_validates_box_and_dimensions():
    cfg = RhsConfig(1, 3, LAM / 3, LAM)
    with pytest.raises(ValueError):
        QcqpSpec(cfg, QuadForm(np.eye(3)), box=(0.1, 1.0))
    with pytest.raises(ValueError):
        QcqpSpec(cfg, QuadForm(np.eye(4)))
    with pytest.raises(ValueError):
        QcqpSpec(cfg, QuadForm(np.eye(3)), leakage_cap=0.0)
    with pytest.raises(ValueError):
        QcqpConstraint(QuadForm(np.eye(3)), "==", 1.0)


# ---------------------------------------------------------------- solver


def test_single_element_saturates_box():
    spec = steer_spec(cols=1, angle=0.2)
    rep = solve_pattern_qcqp(spec, restarts=4)
    assert rep.pattern.amplitudes[0] == 1.0
    assert rep.objective == pytest.approx(float(spec.objective.value(np.ones(1))))


def test_four_elements_quantized_within_two_percent_of_enumeration():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        spec = steer_spec(cols=4, angle=rng.uniform(-1.2, 1.2), attenuation=rng.uniform(1, 10))
        rep = solve_pattern_qcqp(spec, restarts=16, seed=seed)
        q = quantize_solution(spec, rep.restart_solutions, 5, seed=seed)
        oracle = brute_force_oracle(spec, 5)
        assert oracle.candidates == 625
        assert spec.objective.value(q.amplitudes) >= 0.98 * oracle.value


def test_redundant_infinite_constraint_leaves_solution_unchanged():
    spec = steer_spec(cols=6)
    loose = QcqpSpec(spec.cfg, spec.objective, (QcqpConstraint(QuadForm(np.eye(6)), "<=", math.inf),))
    a = solve_pattern_qcqp(spec, restarts=4, seed=3)
    b = solve_pattern_qcqp(loose, restarts=4, seed=3)
    assert np.array_equal(a.pattern.amplitudes, b.pattern.amplitudes)
    assert a.objective == b.objective


def test_seed_determinism_is_bit_identical():
    spec = steer_spec(cols=8, rows=2)
    a = solve_pattern_qcqp(spec, restarts=6, seed=11).to_dict()
    b = solve_pattern_qcqp(spec, restarts=6, seed=11).to_dict()
    assert a == b


def test_traces_monotone_and_best_restart_reported():
    rng = np.random.default_rng(5)
    cfg = RhsConfig(2, 5, LAM / 3, LAM, attenuation=4.0)
    spec = QcqpSpec(cfg, QuadForm(random_hermitian(10, rng)), leakage_cap=0.6)
    rep = solve_pattern_qcqp(spec, restarts=8, seed=0)
    assert len(rep.traces) == 8
    assert all(monotone(t) for t in rep.traces)
    finals = [t[-1] for t in rep.traces]
    assert rep.best_restart == int(np.argmax(finals))
    assert rep.min_leakage_slack >= -1e-9


def test_constrained_solution_meets_floor():
    spec = steer_spec(cols=6, angle=0.3)
    cfg = spec.cfg
    comm = power_form(cfg, planar_steering(cfg, polar_from_broadside(-0.5)))
    top, _ = max_directional_power(cfg, probe_vector(cfg, planar_steering(cfg, polar_from_broadside(-0.5)))[:, 0])
    cons = (QcqpConstraint(comm, ">=", 0.6 * top),)
    rep = solve_pattern_qcqp(QcqpSpec(cfg, spec.objective, cons), restarts=4, seed=0)
    assert rep.feasible
    assert comm.value(rep.pattern.amplitudes) >= 0.6 * top * (1 - 1e-6)
    assert rep.min_constraint_slack >= -1e-6
    assert monotone(rep.objective_trace)


def test_unreachable_floor_reports_infeasible():
    spec = steer_spec(cols=4)
    cons = (QcqpConstraint(spec.objective, ">=", 1e6),)
    rep = solve_pattern_qcqp(QcqpSpec(spec.cfg, spec.objective, cons), restarts=2, seed=0)
    assert rep.status == "infeasible"
    assert rep.pattern is None
    assert "no feasible starting point" in rep.extras["reason"]


def test_window_zeroes_inactive_elements():
    spec = steer_spec(cols=8)
    win = ApertureWindow.sliding(spec.cfg, 3, 2)
    rep = solve_pattern_qcqp(QcqpSpec(spec.cfg, spec.objective, window=win), restarts=4)
    x = rep.pattern.amplitudes
    assert np.all(x[win.mask(spec.cfg) == 0] == 0)


@given(
    rows=st.integers(1, 3),
    cols=st.integers(1, 6),
    att=st.floats(1.0, 10.0),
    cap=st.floats(0.05, 1.0),
    hi=st.floats(0.1, 1.0),
    seed=st.integers(0, 10_000),
)
def test_solver_output_always_feasible(rows, cols, att, cap, hi, seed):
    rng = np.random.default_rng(seed)
    cfg = RhsConfig(rows, cols, LAM / 3, LAM, attenuation=att)
    spec = QcqpSpec(cfg, QuadForm(random_hermitian(cfg.size, rng)), box=(0.0, hi), leakage_cap=cap)
    rep = solve_pattern_qcqp(spec, restarts=3, seed=seed)
    x = rep.pattern.amplitudes
    assert np.all(x >= 0) and np.all(x <= hi)
    margins = leakage_margins(cfg, rep.pattern, spec.window) - (1 - cap)
    assert margins.min() >= -1e-9
    assert all(monotone(t) for t in rep.traces)


# ---------------------------------------------------------------- oracles


def test_oracle_counts_candidates():
    assert brute_force_oracle(steer_spec(cols=1), 2).candidates == 2
    assert brute_force_oracle(steer_spec(cols=4), 5).candidates == 625


def test_oracle_single_variable_picks_full_amplitude():
    res = brute_force_oracle(steer_spec(cols=1), 2)
    assert res.pattern.amplitudes.tolist() == [1.0]


def test_oracle_reports_no_feasible_point():
    spec = steer_spec(cols=2)
    bad = QcqpSpec(spec.cfg, spec.objective, (QcqpConstraint(spec.objective, ">=", 1e6),))
    res = brute_force_oracle(bad, 3)
    assert res.status == "no feasible point"
    assert res.pattern is None
    assert res.candidates == 9


def test_oracle_refuses_large_instances():
    with pytest.raises(ValueError, match="refusing"):
        brute_force_oracle(steer_spec(cols=9), 3)
    with pytest.raises(ValueError):
        brute_force_oracle(steer_spec(cols=2), 1)


def test_oracle_matches_itertools_loop():
    rng = np.random.default_rng(2)
    cfg = RhsConfig(1, 3, LAM / 3, LAM, attenuation=8.0)
    spec = QcqpSpec(cfg, QuadForm(random_hermitian(3, rng)), leakage_cap=0.5)
    res = brute_force_oracle(spec, 4)
    grid = np.arange(4) / 3
    eta = AmplitudeDomain(cfg, cap=0.5).eta
    best = -np.inf
    for a in grid:
        for b in grid:
            for c in grid:
                x = np.array([a, b, c])
                if np.sum(eta * x**2) <= 0.5 + 1e-9:
                    best = max(best, float(spec.objective.value(x)))
    assert res.value == pytest.approx(best, rel=1e-12)


def test_quantized_output_lies_on_grid_and_is_feasible():
    rng = np.random.default_rng(9)
    cfg = RhsConfig(2, 4, LAM / 3, LAM, attenuation=1.0)
    spec = QcqpSpec(cfg, QuadForm(random_hermitian(8, rng)), leakage_cap=0.4)
    rep = solve_pattern_qcqp(spec, restarts=4)
    q = quantize_solution(spec, rep.pattern, 5)
    assert np.allclose(q.amplitudes * 4, np.round(q.amplitudes * 4))
    assert bool(spec.feasible(q.amplitudes))


def test_max_directional_power_dominates_samples_and_solver():
    rng = np.random.default_rng(4)
    cfg = RhsConfig(1, 6, LAM / 3, LAM, attenuation=6.0)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    value, pattern = max_directional_power(cfg, c, cap=0.7)
    assert abs(c @ pattern.amplitudes) ** 2 == pytest.approx(value, rel=1e-9)
    dom = AmplitudeDomain(cfg, cap=0.7)
    X = dom.project(rng.uniform(0, 1, (20000, 6)))
    assert value >= np.max(np.abs(X @ c) ** 2) * (1 - 1e-9)
    spec = QcqpSpec(cfg, QuadForm(np.outer(c.conj(), c)), leakage_cap=0.7)
    rep = solve_pattern_qcqp(spec, restarts=16)
    assert value >= rep.objective * (1 - 1e-9)
    assert value == pytest.approx(rep.objective, rel=1e-4)
