import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holobeam.chanest import (
    PilotSet,
    angular_grid,
    build_dictionary,
    guided_feed,
    nmse,
    nmse_rows,
    omp,
    pd_omp,
    polar_atom,
    random_hybrid_channel,
    ring_step,
    simulate_pilots,
)
from holobeam.wavefield import PathSpec, synth_channel

N, D, Q = 200, 0.25, 20
FEED = guided_feed(N, D)


@pytest.fixture(scope="module")
def joint():
    return build_dictionary(N, D, "joint", 100, 6)


@pytest.fixture(scope="module")
def angular():
    return build_dictionary(N, D, "angular", 100)


def on_grid_channel(d, indices, gains):
    h = sum(g * d.atoms[:, i] for i, g in zip(indices, gains))
    return np.asarray(h)


# ---------------------------------------------------------------- dictionaries


def test_angular_dft_grid_is_orthonormal():
    for n in (16, 64):
        d = build_dictionary(n, 0.5, "angular", n)
        G = d.atoms.conj().T @ d.atoms
        assert np.abs(G - np.eye(n)).max() <= 1e-10


def test_angular_grid_is_centred_and_uniform():
    g = angular_grid(4)
    assert np.allclose(g, [-0.75, -0.25, 0.25, 0.75])


def test_joint_counts_and_unit_norm(joint, angular):
    assert joint.size == 100 + 100 * 6
    assert np.allclose(np.linalg.norm(joint.atoms, axis=0), 1.0)
    assert np.array_equal(joint.atoms[:, :100], angular.atoms)
    assert all(mu is None for _, mu in joint.grid[:100])
    assert all(mu > 0 for _, mu in joint.grid[100:])


def test_dictionary_argument_errors():
    with pytest.raises(ValueError):
        build_dictionary(8, 0.5, "polar", 4)
    with pytest.raises(ValueError):
        build_dictionary(8, 0.5, "angular", 1)
    with pytest.raises(ValueError):
        build_dictionary(8, 0.5, "spherical", 4)


def test_small_mu_atom_matches_far_atom():
    for phi in (-0.6, 0.0, 0.35):
        far = polar_atom(N, D, phi, 0.0)
        near = polar_atom(N, D, phi, 1e-9)
        assert np.abs(near - far).max() <= 1e-3


def test_adjacent_rings_decorrelate():
    step = ring_step(N, D)
    far = polar_atom(N, D, 0.0, 0.0)
    assert abs(np.vdot(far, polar_atom(N, D, 0.0, step))) == pytest.approx(0.5, abs=1e-9)
    # uniform mu rings are decorrelated only up to terms beyond the Fresnel
    # expansion; at broadside those stay small out to the innermost ring
    atoms = [polar_atom(N, D, 0.0, s * step) for s in range(7)]
    coh = [abs(np.vdot(a, b)) for a, b in zip(atoms, atoms[1:])]
    assert max(coh) <= 0.5 * 1.015


# ---------------------------------------------------------------- pilots


def test_noiseless_pilots_are_exact():
    ch = random_hybrid_channel(N, D, seed=1)
    p = simulate_pilots(ch, Q, math.inf, seed=1, feed=FEED)
    assert p.noise_power == 0.0
    assert np.array_equal(p.observations, p.sensing_matrix @ ch.vector)
    assert np.allclose(np.linalg.norm(p.sensing_matrix, axis=1), 1.0)
    # amplitudes ride on the guided-wave phase
    ratio = p.sensing_matrix / FEED[None, :]
    assert np.allclose(ratio.imag, 0, atol=1e-12) and np.all(ratio.real >= 0)


def test_pilots_deterministic_per_seed():
    ch = random_hybrid_channel(N, D, seed=2)
    a = simulate_pilots(ch, Q, 10.0, seed=7)
    b = simulate_pilots(ch, Q, 10.0, seed=7)
    assert np.array_equal(a.sensing_matrix, b.sensing_matrix)
    assert np.array_equal(a.observations, b.observations)
    with pytest.raises(ValueError):
        simulate_pilots(ch, 0, 10.0)


def test_pilot_noise_level_matches_snr():
    ch = random_hybrid_channel(N, D, seed=3)
    ratios = []
    for s in range(1000):
        p = simulate_pilots(ch, Q, 10.0, seed=s)
        clean = p.sensing_matrix @ ch.vector
        ratios.append(np.sum(np.abs(p.observations - clean) ** 2) / np.sum(np.abs(clean) ** 2))
    assert np.mean(ratios) == pytest.approx(0.1, rel=0.05)


# ---------------------------------------------------------------- OMP


def test_omp_single_far_path_exact(angular):
    h = on_grid_channel(angular, [37], [0.8 - 0.3j])
    p = simulate_pilots(h, Q, math.inf, seed=0, feed=FEED)
    rep = omp(p, angular, 1)
    assert rep.support[0][0] == 37
    assert nmse(rep.channel_estimate, h) <= 1e-20


def test_omp_zero_observations(angular):
    p = PilotSet(np.ones((Q, N)) / math.sqrt(N), np.zeros(Q, complex), 0.0)
    rep = omp(p, angular, 3)
    assert rep.residual_norm == 0.0
    assert np.all(rep.channel_estimate == 0)


def test_omp_argument_errors(angular):
    p = simulate_pilots(random_hybrid_channel(N, D, seed=0), Q, 10.0)
    with pytest.raises(ValueError):
        omp(p, angular, 0)
    with pytest.raises(ValueError):
        omp(p, angular, Q + 1)


@given(seed=st.integers(0, 10_000), K=st.integers(1, 8))
def test_omp_residual_orthogonal_and_monotone(seed, K, angular):
    ch = random_hybrid_channel(N, D, seed=seed)
    p = simulate_pilots(ch, Q, 10.0, seed=seed, feed=FEED)
    rep = omp(p, angular, K)
    assert len(rep.support) == K
    P = p.sensing_matrix @ angular.atoms[:, [s[0] for s in rep.support]]
    resid = p.observations - P @ np.array([s[2] for s in rep.support])
    assert np.abs(P.conj().T @ resid).max() <= 1e-8 * max(1.0, np.linalg.norm(p.observations))
    t = rep.residual_trace
    assert all(b <= a + 1e-12 for a, b in zip(t, t[1:]))
    assert np.allclose(rep.channel_estimate, angular.atoms[:, [s[0] for s in rep.support]] @ [s[2] for s in rep.support])


def test_angular_omp_smears_a_near_path(angular, joint):
    near = PathSpec("near", math.asin(0.2), (1 - 0.04) / (4 * ring_step(N, D)), 1.0)
    far = PathSpec("far", math.asin(-0.5), None, 1.0)
    ch = synth_channel([far, near], N, D)
    p = simulate_pilots(ch, Q, math.inf, seed=0, feed=FEED)
    assert nmse(omp(p, angular, 2).channel_estimate, ch.vector) > 0.1


# ---------------------------------------------------------------- PD-OMP


def test_pd_omp_needs_joint_dictionary(angular):
    p = simulate_pilots(random_hybrid_channel(N, D, seed=0), Q, 10.0)
    with pytest.raises(ValueError):
        pd_omp(p, angular)


def test_pd_omp_far_only_matches_omp(joint):
    h = on_grid_channel(joint, [20, 71], [1.0, 0.5j])
    p = simulate_pilots(h, Q, math.inf, seed=4, feed=FEED)
    a = omp(p, joint, 2)
    b = pd_omp(p, joint)
    assert [s[0] for s in a.support] == [s[0] for s in b.support]
    assert np.allclose(a.channel_estimate, b.channel_estimate, atol=1e-12)


def test_noiseless_on_grid_recovery(joint):
    # one far atom and one near atom well apart in angle
    near_idx = 100 + 6 * 70 + 3
    h = on_grid_channel(joint, [15, near_idx], [1.0, -0.7 + 0.4j])
    p = simulate_pilots(h, Q, math.inf, seed=5, feed=FEED)
    assert nmse(pd_omp(p, joint).channel_estimate, h) <= 1e-10
    assert nmse(omp(p, joint, 2).channel_estimate, h) <= 1e-10


@given(seed=st.integers(0, 10_000), snr=st.sampled_from([0.0, 10.0, 20.0]))
def test_pd_omp_never_picks_two_atoms_in_one_diffusion_set(seed, snr, joint):
    ch = random_hybrid_channel(N, D, seed=seed, far=2, near=2)
    rep = pd_omp(simulate_pilots(ch, Q, snr, seed=seed, feed=FEED), joint)
    idx = [s[0] for s in rep.support]
    A = joint.atoms[:, idx]
    G = np.abs(A.conj().T @ A) - np.eye(len(idx))
    assert G.max(initial=0.0) < 0.5
    t = rep.residual_trace
    assert all(b <= a + 1e-12 for a, b in zip(t, t[1:]))


def test_pd_omp_max_paths_caps_support(joint):
    ch = random_hybrid_channel(N, D, seed=8)
    rep = pd_omp(simulate_pilots(ch, Q, 0.0, seed=8, feed=FEED), joint, max_paths=1)
    assert rep.iterations == 1


# ---------------------------------------------------------------- NMSE


def test_nmse_examples():
    h = np.array([1 + 1j, 2, -1j])
    assert nmse(h, h) == 0.0
    assert nmse(np.zeros(3), h) == 1.0
    assert nmse(2 * h, h) == 1.0
    with pytest.raises(ValueError):
        nmse(h, np.zeros(3))
    with pytest.raises(ValueError):
        nmse(h[:2], h)


def test_nmse_rows():
    assert nmse_rows([(10.0, 3, "omp", 0.5)]) == [{"snr_db": 10.0, "seed": 3, "estimator": "omp", "nmse": 0.5}]
