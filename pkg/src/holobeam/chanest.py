"""Hybrid near/far-field channel estimation from compressive pilot observations.

Grids use ``phi = sin(theta)`` (theta from broadside) and the curvature
coordinate ``mu = cos(theta)^2 / r``.  Under the Fresnel expansion a
steering vector depends on ``(phi, mu)`` through ``k d n phi - k (d n)^2 mu / 2``,
so rings uniform in ``mu`` have roughly constant mutual coherence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .wavefield import HybridChannel, PathSpec, steering, synth_channel

DIFFUSION_THRESHOLD = 0.5
RING_COHERENCE = 0.5


@dataclass(frozen=True)
class Dictionary:
    atoms: np.ndarray = field(repr=False)  # N x G, unit-norm columns
    grid: tuple  # (phi, mu) with mu=None for far-field atoms
    domain: str

    @property
    def size(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class PilotSet:
    sensing_matrix: np.ndarray = field(repr=False)  # Q x N
    observations: np.ndarray = field(repr=False)
    noise_power: float  # per-observation variance

    @property
    def Q(self) -> int:
        return self.sensing_matrix.shape[0]


@dataclass
class EstimateReport:
    channel_estimate: np.ndarray
    support: list  # (atom index, grid label, coefficient)
    residual_norm: float
    iterations: int
    residual_trace: list = field(default_factory=list)
    barred: list = field(default_factory=list)


def polar_atom(N: int, spacing: float, phi: float, mu: float, wavelength: float = 1.0) -> np.ndarray:
    """Near-field atom at ``(phi, mu)``; ``mu == 0`` gives the far-field atom."""
    theta = math.asin(float(np.clip(phi, -1.0, 1.0)))
    if mu <= 0:
        return steering(N, spacing, theta, None, wavelength)
    r = (1.0 - phi**2) / mu
    if not r > 0:
        raise ValueError("mu > 0 needs |phi| < 1")
    return steering(N, spacing, theta, r, wavelength)


def angular_grid(G_a: int) -> np.ndarray:
    """``G_a`` centred bins uniform in ``sin(theta)`` over (-1, 1)."""
    return -1.0 + (2.0 * np.arange(G_a) + 1.0) / G_a


def ring_step(N: int, spacing: float, wavelength: float = 1.0, eps: float = RING_COHERENCE) -> float:
    """Smallest ``mu`` step at which broadside atoms decorrelate to ``eps``."""
    far = polar_atom(N, spacing, 0.0, 0.0, wavelength)

    def coh(mu):
        return abs(np.vdot(far, polar_atom(N, spacing, 0.0, mu, wavelength)))

    hi = 1.0 / (N * spacing) ** 2 * wavelength
    while coh(hi) > eps:
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if coh(mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


def build_dictionary(
    N: int,
    spacing: float,
    domain: str,
    angular_bins: int,
    range_rings: int | None = None,
    wavelength: float = 1.0,
    mu_step: float | None = None,
) -> Dictionary:
    """Angular, polar (rings in ``mu``) or joint (angular then polar) dictionary."""
    if domain not in ("angular", "polar", "joint"):
        raise ValueError("domain must be angular, polar or joint")
    if angular_bins < 2:
        raise ValueError("need at least two angular bins")
    if domain != "angular" and not range_rings:
        raise ValueError(f"{domain} dictionary needs range_rings")
    phis = angular_grid(angular_bins)
    atoms, grid = [], []
    if domain in ("angular", "joint"):
        for p in phis:
            atoms.append(polar_atom(N, spacing, p, 0.0, wavelength))
            grid.append((float(p), None))
    if domain in ("polar", "joint"):
        step = mu_step or ring_step(N, spacing, wavelength)
        for p in phis:
            for s in range(1, range_rings + 1):
                atoms.append(polar_atom(N, spacing, p, s * step, wavelength))
                grid.append((float(p), float(s * step)))
    A = np.stack(atoms, axis=1)
    A = A / np.linalg.norm(A, axis=0, keepdims=True)
    A.flags.writeable = False
    return Dictionary(A, tuple(grid), domain)


def guided_feed(N: int, spacing: float, wavelength: float = 1.0, waveguide_index: float = math.sqrt(3.0)) -> np.ndarray:
    """Reference-wave phase ``exp(-j k_s n d)`` along a serially fed row."""
    return np.exp(-2j * math.pi * waveguide_index * spacing / wavelength * np.arange(N))


def random_hybrid_channel(
    N: int,
    spacing: float,
    seed: int = 0,
    far: int = 1,
    near: int = 1,
    phi_span: float = 0.8,
    mu_range: tuple[float, float] = (0.5, 6.0),
    mu_step: float | None = None,
    wavelength: float = 1.0,
) -> HybridChannel:
    """Random far + near paths with CN(0, 1) gains.

    Angles are uniform in ``phi`` over ``[-phi_span, phi_span]``; near paths
    sit at ``mu`` uniform over ``mu_range`` in units of the ring step, so they
    stay inside the span covered by the polar rings.
    """
    if far < 0 or near < 0 or far + near == 0:
        raise ValueError("need at least one path")
    rng = np.random.default_rng(seed)
    step = mu_step or ring_step(N, spacing, wavelength)
    paths = []
    for _ in range(far):
        paths.append(PathSpec("far", math.asin(rng.uniform(-phi_span, phi_span))))
    for _ in range(near):
        phi = rng.uniform(-phi_span, phi_span)
        mu = rng.uniform(*mu_range) * step
        paths.append(PathSpec("near", math.asin(phi), (1.0 - phi**2) / mu))
    return synth_channel(paths, N, spacing, seed=seed, wavelength=wavelength)


def simulate_pilots(
    channel: HybridChannel | np.ndarray,
    Q: int,
    snr_db: float,
    seed: int = 0,
    feed: np.ndarray | None = None,
) -> PilotSet:
    """Observe ``h`` through ``Q`` random amplitude patterns.

    Row ``q`` is ``psi_q * feed`` with ``psi_q ~ U[0, 1]``, normalized; ``feed``
    is the guided-wave phase at each element (ones by default; see
    :func:`guided_feed`).  With a slow guided wave the non-negative mean of
    the amplitudes radiates into the invisible region instead of broadside.
    """
    if Q < 1:
        raise ValueError("Q must be positive")
    h = np.asarray(channel.vector if isinstance(channel, HybridChannel) else channel, dtype=complex)
    N = h.size
    rng = np.random.default_rng(seed)
    f = np.ones(N, dtype=complex) if feed is None else np.asarray(feed, dtype=complex)
    Phi = rng.uniform(0.0, 1.0, (Q, N)) * f[None, :]
    Phi = Phi / np.linalg.norm(Phi, axis=1, keepdims=True)
    clean = Phi @ h
    if math.isinf(snr_db) and snr_db > 0:
        return PilotSet(Phi, clean, 0.0)
    var = float(np.sum(np.abs(clean) ** 2) / Q * 10 ** (-snr_db / 10))
    noise = math.sqrt(var / 2) * (rng.standard_normal(Q) + 1j * rng.standard_normal(Q))
    return PilotSet(Phi, clean + noise, var)


def _projected(pilots: PilotSet, d: Dictionary):
    P = pilots.sensing_matrix @ d.atoms
    norms = np.linalg.norm(P, axis=0)
    return P, np.where(norms > 0, norms, np.inf)


def _least_squares(P, support, y):
    coef, *_ = np.linalg.lstsq(P[:, support], y, rcond=None)
    return coef, y - P[:, support] @ coef


def _report(d, support, coef, resid, iters, trace, barred=()):
    est = d.atoms[:, support] @ coef if support else np.zeros(d.atoms.shape[0], dtype=complex)
    sup = [(int(i), d.grid[i], complex(c)) for i, c in zip(support, coef)]
    return EstimateReport(est, sup, float(np.linalg.norm(resid)), iters, trace, sorted(barred))


def omp(pilots: PilotSet, dictionary: Dictionary, sparsity: int) -> EstimateReport:
    """Greedy max-correlation selection with a least-squares refit each step.

    Stops early if the residual vanishes.
    """
    if sparsity < 1:
        raise ValueError("sparsity must be positive")
    if sparsity > pilots.Q:
        raise ValueError("sparsity cannot exceed the number of pilots")
    P, norms = _projected(pilots, dictionary)
    y = pilots.observations
    resid = y.copy()
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    trace = [float(np.linalg.norm(resid))]
    for _ in range(sparsity):
        if trace[-1] == 0.0:
            break
        score = np.abs(P.conj().T @ resid) / norms
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        coef, resid = _least_squares(P, support, y)
        trace.append(float(np.linalg.norm(resid)))
    return _report(dictionary, support, coef, resid, len(support), trace)


def pd_omp(
    pilots: PilotSet,
    dictionary: Dictionary,
    residual_tol: float | None = None,
    max_paths: int | None = None,
    threshold: float = DIFFUSION_THRESHOLD,
) -> EstimateReport:
    """OMP over a joint dictionary that bars each selected atom's diffusion set.

    The diffusion set of an atom is every atom whose coherence with it is at
    least ``threshold``; once a path is taken, the power it leaks into its
    neighbours can no longer be mistaken for further paths.  Stops when the
    squared residual drops to ``residual_tol`` (default ``1.1 Q`` times the
    noise power, never below a relative round-off floor) or after
    ``max_paths`` selections.
    """
    if dictionary.domain != "joint":
        raise ValueError("pd_omp needs a joint dictionary")
    Q = pilots.Q
    tol = 1.1 * pilots.noise_power * Q if residual_tol is None else float(residual_tol)
    y = pilots.observations
    tol = max(tol, (1e-10 * float(np.linalg.norm(y))) ** 2)  # round-off floor
    limit = Q if max_paths is None else min(int(max_paths), Q)
    P, norms = _projected(pilots, dictionary)
    A = dictionary.atoms
    resid = y.copy()
    allowed = np.isfinite(norms)
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    barred: set[int] = set()
    trace = [float(np.linalg.norm(resid))]
    while len(support) < limit and trace[-1] ** 2 > tol and np.any(allowed):
        score = np.where(allowed, np.abs(P.conj().T @ resid) / norms, -1.0)
        s = int(np.argmax(score))
        support.append(s)
        diffusion = np.flatnonzero(np.abs(A.conj().T @ A[:, s]) >= threshold)
        allowed[diffusion] = False
        allowed[s] = False
        barred.update(int(i) for i in diffusion)
        coef, resid = _least_squares(P, support, y)
        trace.append(float(np.linalg.norm(resid)))
    return _report(dictionary, support, coef, resid, len(support), trace, barred)


def nmse(estimate, truth) -> float:
    """``||estimate - truth||^2 / ||truth||^2``."""
    e = np.asarray(estimate, dtype=complex)
    h = np.asarray(truth, dtype=complex)
    if e.shape != h.shape:
        raise ValueError("estimate and truth must have equal length")
    denom = float(np.sum(np.abs(h) ** 2))
    if denom == 0:
        raise ValueError("truth must be non-zero")
    return float(np.sum(np.abs(e - h) ** 2) / denom)


def nmse_rows(results: Sequence[tuple[float, int, str, float]]) -> list[dict]:
    """Rows for the ``snr_db,seed,estimator,nmse`` table."""
    return [{"snr_db": s, "seed": k, "estimator": e, "nmse": v} for s, k, e, v in results]
