"""Distributed sensing with P transmit and Q receive surface subarrays.

Every transmit subarray ``p`` sends ``sqrt(P_t/L_t) M_p S_p`` with mutually
orthogonal waveforms, so after the matched-filter bank the pair ``(p, q)``
sees each scatterer ``l`` as ``beta M_q^T a_q a_p^T M_p S_p T`` where ``T`` is
a cyclic delay.  With unitary ``S_p``/``T`` the pair SINR reduces to norms of
``a_p^T M_p`` and ``M_q^T a_q``; :func:`distsense_sinrs` evaluates that.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import cvxpy as cp
import numpy as np

from ..rhs import (
    ApertureWindow,
    HolographicPattern,
    RhsConfig,
    build_propagation_matrix,
    leakage_margins,
    pattern_for_direction,
    superpose_patterns,
)
from ..wavefield import planar_steering
from .core import AmplitudeDomain, SolveReport, child_rngs

WAVEFORM_TOL = 1e-9


@dataclass(frozen=True)
class Scatterer:
    """A target or clutter patch.

    ``tx_directions``/``rx_directions`` give the polar direction seen from
    each subarray; ``beta`` is a scalar or a ``P x Q`` array; ``delays`` are
    integer sample shifts per pair (they do not change any SINR).
    """

    tx_directions: tuple
    rx_directions: tuple
    beta: complex | np.ndarray = 1.0
    delays: np.ndarray | None = None
    clutter: bool = False

    def beta_matrix(self, P: int, Q: int) -> np.ndarray:
        b = np.asarray(self.beta, dtype=complex)
        return np.broadcast_to(b, (P, Q)).copy()


def dft_waveforms(P: int, L_t: int, length: int | None = None) -> list[np.ndarray]:
    """Disjoint row blocks of a unitary DFT matrix (``L_t x length`` each)."""
    n = length or P * L_t
    if n < P * L_t:
        raise ValueError("waveform length must be at least P * L_t")
    F = np.fft.fft(np.eye(n)) / math.sqrt(n)
    return [F[p * L_t : (p + 1) * L_t] for p in range(P)]


def check_waveforms(waveforms: Sequence[np.ndarray]) -> None:
    """Raise ``ValueError`` unless ``S_p S_p'^H`` is ``I`` (p = p') or ``0``."""
    for p, Sp in enumerate(waveforms):
        for q, Sq in enumerate(waveforms):
            G = Sp @ Sq.conj().T
            ref = np.eye(Sp.shape[0]) if p == q else np.zeros_like(G)
            if G.shape != ref.shape or np.linalg.norm(G - ref) > WAVEFORM_TOL:
                raise ValueError(f"waveforms {p} and {q} are not orthonormal (cross-Gram error {np.linalg.norm(G - ref):.2e})")


class _Scene:
    def __init__(self, tx_cfgs, rx_cfgs, scatterers, p_t, noise):
        self.tx, self.rx = list(tx_cfgs), list(rx_cfgs)
        self.P, self.Q = len(self.tx), len(self.rx)
        self.items = list(scatterers)
        self.targets = [i for i, s in enumerate(self.items) if not s.clutter]
        self.Ft = [build_propagation_matrix(c) for c in self.tx]
        self.Fr = [build_propagation_matrix(c) for c in self.rx]
        self.beta2 = np.array([np.abs(s.beta_matrix(self.P, self.Q)) ** 2 for s in self.items])  # l x P x Q
        # C[p][l]: rows map psi_p to a_{p,l}^T M_p (L_t entries)
        self.Ct = [[(planar_steering(c, s.tx_directions[p])[:, None] * self.Ft[p]).T for s in self.items] for p, c in enumerate(self.tx)]
        self.Cr = [[(planar_steering(c, s.rx_directions[q])[:, None] * self.Fr[q]).T for s in self.items] for q, c in enumerate(self.rx)]
        self.gain = [p_t / c.feed_count for c in self.tx]
        self.noise = noise
        self.fn = [np.sum(np.abs(F) ** 2, axis=1) for F in self.Fr]  # ||M_q||_F^2 = sum psi^2 fn

    def tx_energy(self, psi_t):
        return np.array([[self.gain[p] * np.sum(np.abs(C @ psi_t[p]) ** 2) for C in self.Ct[p]] for p in range(self.P)])  # P x l

    def rx_energy(self, psi_r):
        return np.array([[np.sum(np.abs(C @ psi_r[q]) ** 2) for C in self.Cr[q]] for q in range(self.Q)])  # Q x l

    def pair_sinrs(self, psi_t, psi_r) -> np.ndarray:
        """``J_t x P x Q`` SINRs for the targets."""
        T, R = self.tx_energy(psi_t), self.rx_energy(psi_r)
        E = self.beta2 * T.T[:, :, None] * R.T[:, None, :]  # l x P x Q
        noise = self.noise * np.array([np.sum(psi_r[q] ** 2 * self.fn[q]) for q in range(self.Q)])
        total = E.sum(axis=0) + noise[None, :]
        out = []
        for j in self.targets:
            out.append(E[j] / np.maximum(total - E[j], 1e-300))
        return np.array(out)

    def average(self, psi_t, psi_r) -> np.ndarray:
        return self.pair_sinrs(psi_t, psi_r).mean(axis=(1, 2))


def _solve(prob: cp.Problem) -> bool:
    for solver in ("CLARABEL", "SCS"):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver)
        except cp.error.SolverError:
            continue
        if prob.status in ("optimal", "optimal_inaccurate"):
            return True
    return False


def _real_rows(M):
    return np.vstack([M.real, M.imag])


def _tx_step(sc: _Scene, psi_t, psi_r, doms):
    """Quadratic-transform step over all transmit patterns at fixed receive patterns."""
    R = sc.rx_energy(psi_r)
    noise = sc.noise * np.array([np.sum(psi_r[q] ** 2 * sc.fn[q]) for q in range(sc.Q)])
    xs = [cp.Variable(c.size) for c in sc.tx]
    tau = cp.Variable()
    cons = [c for p, x in enumerate(xs) for c in doms[p].cvx_constraints(x)]
    L = len(sc.items)
    for j in sc.targets:
        terms = []
        for p in range(sc.P):
            g = sc.gain[p]
            for q in range(sc.Q):
                # A = sqrt(g b2_j R_j) C_j psi ; G = sum_{l!=j} g b2_l R_l ||C_l psi||^2 + noise
                a_scale = math.sqrt(g * sc.beta2[j, p, q] * R[q, j])
                A0 = a_scale * (sc.Ct[p][j] @ psi_t[p])
                G0 = sum(g * sc.beta2[l, p, q] * R[q, l] * np.sum(np.abs(sc.Ct[p][l] @ psi_t[p]) ** 2) for l in range(L) if l != j) + noise[q]
                lam = A0 / G0
                lin = 2 * a_scale * np.real(lam.conj() @ sc.Ct[p][j])
                quad = [
                    g * sc.beta2[l, p, q] * R[q, l] * cp.sum_squares(_real_rows(sc.Ct[p][l]) @ xs[p])
                    for l in range(L)
                    if l != j and sc.beta2[l, p, q] * R[q, l] > 0
                ]
                terms.append(lin @ xs[p] - np.sum(np.abs(lam) ** 2) * (sum(quad) + noise[q]))
        cons.append(sum(terms) / (sc.P * sc.Q) >= tau)
    prob = cp.Problem(cp.Maximize(tau), cons)
    if not _solve(prob) or any(x.value is None for x in xs):
        return None
    return [doms[p].repair(np.asarray(x.value, dtype=float)) for p, x in enumerate(xs)]


def _rx_step(sc: _Scene, psi_t, psi_r, doms):
    T = sc.tx_energy(psi_t)
    xs = [cp.Variable(c.size) for c in sc.rx]
    tau = cp.Variable()
    cons = [c for q, x in enumerate(xs) for c in doms[q].cvx_constraints(x)]
    L = len(sc.items)
    for j in sc.targets:
        terms = []
        for p in range(sc.P):
            for q in range(sc.Q):
                a_scale = math.sqrt(sc.beta2[j, p, q] * T[p, j])
                A0 = a_scale * (sc.Cr[q][j] @ psi_r[q])
                G0 = sum(sc.beta2[l, p, q] * T[p, l] * np.sum(np.abs(sc.Cr[q][l] @ psi_r[q]) ** 2) for l in range(L) if l != j)
                G0 += sc.noise * np.sum(psi_r[q] ** 2 * sc.fn[q])
                lam = A0 / max(G0, 1e-300)
                lin = 2 * a_scale * np.real(lam.conj() @ sc.Cr[q][j])
                quad = [
                    sc.beta2[l, p, q] * T[p, l] * cp.sum_squares(_real_rows(sc.Cr[q][l]) @ xs[q])
                    for l in range(L)
                    if l != j and sc.beta2[l, p, q] * T[p, l] > 0
                ]
                quad.append(sc.noise * cp.sum_squares(cp.multiply(np.sqrt(sc.fn[q]), xs[q])))
                terms.append(lin @ xs[q] - np.sum(np.abs(lam) ** 2) * sum(quad))
        cons.append(sum(terms) / (sc.P * sc.Q) >= tau)
    prob = cp.Problem(cp.Maximize(tau), cons)
    if not _solve(prob) or any(x.value is None for x in xs):
        return None
    return [doms[q].repair(np.asarray(x.value, dtype=float)) for q, x in enumerate(xs)]


def _validate(tx_cfgs, rx_cfgs, scatterers, waveforms):
    if not tx_cfgs or not rx_cfgs:
        raise ValueError("need at least one transmit and one receive subarray")
    if not any(not s.clutter for s in scatterers):
        raise ValueError("need at least one target")
    for s in scatterers:
        if len(s.tx_directions) != len(tx_cfgs) or len(s.rx_directions) != len(rx_cfgs):
            raise ValueError("one direction per subarray is required")
    if len(waveforms) != len(tx_cfgs):
        raise ValueError("one waveform per transmit subarray is required")
    for S, c in zip(waveforms, tx_cfgs):
        if S.shape[0] != c.feed_count:
            raise ValueError("waveform rows must match the feed count")
    check_waveforms(waveforms)


def distsense_maxmin(
    tx_cfgs: Sequence[RhsConfig],
    rx_cfgs: Sequence[RhsConfig],
    scatterers: Sequence[Scatterer],
    waveforms: Sequence[np.ndarray] | None = None,
    seed: int = 0,
    p_t: float = 1.0,
    noise: float = 1e-3,
    restarts: int = 2,
    max_rounds: int = 100,
    tol: float = 1e-6,
) -> SolveReport:
    """Maximize the worst target's average SINR over all transmit and receive patterns."""
    if waveforms is None:
        waveforms = dft_waveforms(len(tx_cfgs), max(c.feed_count for c in tx_cfgs)) if len({c.feed_count for c in tx_cfgs}) == 1 else None
        if waveforms is None:
            raise ValueError("waveforms are required when subarrays have different feed counts")
    _validate(tx_cfgs, rx_cfgs, scatterers, waveforms)
    sc = _Scene(tx_cfgs, rx_cfgs, scatterers, p_t, noise)
    dom_t = [AmplitudeDomain(c) for c in sc.tx]
    dom_r = [AmplitudeDomain(c) for c in sc.rx]

    def holo(cfgs, attr, doms):
        out = []
        for i, c in enumerate(cfgs):
            pats = [pattern_for_direction(c, getattr(sc.items[j], attr)[i]) for j in sc.targets]
            out.append(doms[i].repair(superpose_patterns(pats, np.ones(len(pats)))[0].amplitudes))
        return out

    best, traces = None, []
    for r, rng in enumerate(child_rngs(seed, restarts)):
        if r == 0:
            psi_t, psi_r = holo(sc.tx, "tx_directions", dom_t), holo(sc.rx, "rx_directions", dom_r)
        else:
            psi_t = [d.random(rng) for d in dom_t]
            psi_r = [d.random(rng) for d in dom_r]
        val = sc.average(psi_t, psi_r).min()
        trace, calm = [float(val)], 0
        for _ in range(max_rounds):
            prev = val
            cand = _tx_step(sc, psi_t, psi_r, dom_t)
            if cand is not None and (v := sc.average(cand, psi_r).min()) >= val:
                psi_t, val = cand, v
            cand = _rx_step(sc, psi_t, psi_r, dom_r)
            if cand is not None and (v := sc.average(psi_t, cand).min()) >= val:
                psi_r, val = cand, v
            trace.append(float(val))
            calm = calm + 1 if val - prev <= tol * max(abs(prev), 1e-300) else 0
            if calm >= 3:
                break
        traces.append(trace)
        if best is None or val > best[0]:
            best = (val, psi_t, psi_r, r)
    val, psi_t, psi_r, r = best
    slacks = [leakage_margins(c, HolographicPattern.clipped(x), ApertureWindow.full(c)).min() for c, x in zip(sc.tx + sc.rx, psi_t + psi_r)]
    avg = sc.average(psi_t, psi_r)
    return SolveReport(
        status="optimal",
        objective=float(avg.min()),
        pattern=HolographicPattern.clipped(psi_t[0]),
        digital=None,
        window=ApertureWindow.full(sc.tx[0]),
        objective_trace=traces[r],
        min_leakage_slack=float(min(slacks)),
        min_constraint_slack=math.inf,
        seed=seed,
        restarts_used=restarts,
        traces=traces,
        best_restart=r,
        extras={
            "tx_patterns": [x.tolist() for x in psi_t],
            "rx_patterns": [x.tolist() for x in psi_r],
            "average_sinr": avg.tolist(),
        },
    )


def distsense_sinrs(
    tx_cfgs, rx_cfgs, scatterers, tx_patterns, rx_patterns, p_t: float = 1.0, noise: float = 1e-3
) -> np.ndarray:
    """Per-target average SINR of fixed patterns."""
    sc = _Scene(tx_cfgs, rx_cfgs, scatterers, p_t, noise)
    return sc.average([np.asarray(x, float) for x in tx_patterns], [np.asarray(x, float) for x in rx_patterns])
