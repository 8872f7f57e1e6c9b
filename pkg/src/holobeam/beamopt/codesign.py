"""Transmit/receive surface co-design for max-min sensing SINR.

Echo model: target ``j`` with reflection ``beta_j`` sees the transmit row
``t_j = a_t(j)^T M_t B`` and the receive combiner output
``r_ij = w_j^H M_r^T a_r(i)``, so the filtered echo of target ``i`` at
filter ``j`` is ``beta_i r_ij t_i``.  External noise at the receive
elements passes through ``M_r``; internal noise enters after the feeds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import cvxpy as cp
import numpy as np
import scipy.linalg

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
from .core import AmplitudeDomain, BallDomain, SolveReport, child_rngs, monotone
from .jcas import JcasUser, stack_complex, unstack_complex
from .qcqp import max_directional_power, probe_vector


@dataclass(frozen=True)
class SensingTarget:
    direction: tuple[float, float]
    beta: complex


# ---------------------------------------------------------------- quadratic transform


def qt_auxiliary(A, G):
    """Optimal auxiliary ``lambda = A / G``."""
    if np.any(np.asarray(G) <= 0):
        raise ValueError("G must be positive")
    return np.asarray(A) / G


def qt_surrogate(lam, A, G) -> np.ndarray:
    """``2 Re(lambda^H A) - |lambda|^2 G`` (vectors reduce over the last axis)."""
    lam = np.asarray(lam)
    A = np.asarray(A)
    if lam.ndim == 0:
        return 2.0 * np.real(np.conj(lam) * A) - np.abs(lam) ** 2 * G
    return 2.0 * np.real(np.sum(np.conj(lam) * A, axis=-1)) - np.sum(np.abs(lam) ** 2, axis=-1) * G


def _real_rows(M: np.ndarray) -> np.ndarray:
    """Real matrix with ``||R x||^2 = ||M x||^2`` for real ``x``."""
    M = np.atleast_2d(M)
    return np.vstack([M.real, M.imag])


def _stream_map(g: np.ndarray, K: int) -> np.ndarray:
    """Complex ``K x 2LK`` map with ``B^T g = map @ stack_complex(B)``."""
    L = g.size
    m = L * K
    out = np.zeros((K, 2 * m), dtype=complex)
    for k in range(K):
        out[k, k * L : (k + 1) * L] = g
        out[k, m + k * L : m + (k + 1) * L] = 1j * g
    return out


# ---------------------------------------------------------------- model


class _Model:
    def __init__(self, cfg_tx, cfg_rx, targets, users, p_t, noise_ext, noise_int, comm_noise):
        self.cfg_tx, self.cfg_rx = cfg_tx, cfg_rx
        self.targets = list(targets)
        self.users = list(users)
        self.beta = np.array([complex(t.beta) for t in self.targets])
        self.Ft = build_propagation_matrix(cfg_tx)
        self.Fr = build_propagation_matrix(cfg_rx)
        self.At = [planar_steering(cfg_tx, t.direction) for t in self.targets]
        self.Ar = [planar_steering(cfg_rx, t.direction) for t in self.targets]
        self.J = len(self.targets)
        self.U = len(self.users)
        self.Lt, self.Lr = cfg_tx.feed_count, cfg_rx.feed_count
        self.K = self.U + self.Lt
        self.p_t = p_t
        self.s_ext, self.s_int, self.s_c = noise_ext, noise_int, comm_noise

    # quantities at a point
    def tx_rows(self, psi_t, B):
        return [(a * psi_t) @ self.Ft @ B for a in self.At]  # each K

    def rx_gain(self, psi_r, W):
        """``r[i, j] = w_j^H M_r^T a_r(i)``."""
        Mr = psi_r[:, None] * self.Fr
        return np.array([[W[:, j].conj() @ (Mr.T @ self.Ar[i]) for j in range(self.J)] for i in range(self.J)])

    def parts(self, psi_t, psi_r, B, W):
        t = self.tx_rows(psi_t, B)
        r = self.rx_gain(psi_r, W)
        Mr = psi_r[:, None] * self.Fr
        A, G = [], []
        for j in range(self.J):
            A.append(self.beta[j] * r[j, j] * t[j])
            g = sum(abs(self.beta[i] * r[i, j]) ** 2 * np.sum(np.abs(t[i]) ** 2) for i in range(self.J) if i != j)
            g += self.s_ext * np.sum(np.abs(Mr.conj() @ W[:, j]) ** 2) + self.s_int * np.sum(np.abs(W[:, j]) ** 2)
            G.append(float(g))
        return A, np.array(G)

    def sinrs(self, psi_t, psi_r, B, W):
        A, G = self.parts(psi_t, psi_r, B, W)
        return np.array([np.sum(np.abs(a) ** 2) for a in A]) / np.maximum(G, 1e-300)

    def user_sinrs(self, psi_t, B):
        out = []
        for u, user in enumerate(self.users):
            g = np.abs((np.asarray(user.channel) * psi_t) @ self.Ft @ B) ** 2
            out.append(g[u] / (g.sum() - g[u] + self.s_c))
        return np.array(out)

    # ---------------------------------------------------------- filters
    def best_filters(self, psi_t, psi_r, B):
        """Max generalized eigenvector of (signal, interference+noise) per target."""
        t = self.tx_rows(psi_t, B)
        Mr = psi_r[:, None] * self.Fr
        v = [Mr.T @ a for a in self.Ar]  # L_r each
        W = np.zeros((self.Lr, self.J), dtype=complex)
        for j in range(self.J):
            S = abs(self.beta[j]) ** 2 * np.sum(np.abs(t[j]) ** 2) * np.outer(v[j], v[j].conj())
            Q = self.s_ext * (Mr.T @ Mr.conj()) + self.s_int * np.eye(self.Lr)
            for i in range(self.J):
                if i != j:
                    Q = Q + abs(self.beta[i]) ** 2 * np.sum(np.abs(t[i]) ** 2) * np.outer(v[i], v[i].conj())
            Q = 0.5 * (Q + Q.conj().T) + 1e-15 * np.trace(Q).real * np.eye(self.Lr)
            S = 0.5 * (S + S.conj().T)
            _, vec = scipy.linalg.eigh(S, Q, subset_by_index=[self.Lr - 1, self.Lr - 1])
            w = vec[:, 0]
            W[:, j] = w / max(np.linalg.norm(w), 1e-300)
        return W

    # ---------------------------------------------------------- affine maps per block
    def maps_tx(self, psi_r, B, W):
        r = self.rx_gain(psi_r, W)
        E = self.Ft @ B
        C = [(a[:, None] * E).T for a in self.At]  # K x N: t_i = C_i psi
        P, Q, c = [], [], []
        Mr = psi_r[:, None] * self.Fr
        for j in range(self.J):
            P.append(self.beta[j] * r[j, j] * C[j])
            Q.append([self.beta[i] * r[i, j] * C[i] for i in range(self.J) if i != j])
            c.append(self.s_ext * np.sum(np.abs(Mr.conj() @ W[:, j]) ** 2) + self.s_int * np.sum(np.abs(W[:, j]) ** 2))
        users = []
        for u, user in enumerate(self.users):
            Cu = ((np.asarray(user.channel))[:, None] * E).T  # K x N
            users.append((Cu[u], np.delete(Cu, u, axis=0), user.sinr_floor))
        return P, Q, c, users

    def maps_rx(self, psi_t, B, W):
        t = self.tx_rows(psi_t, B)
        P, Q, c = [], [], []
        for j in range(self.J):
            wj = self.Fr @ W[:, j].conj()
            d = [a * wj for a in self.Ar]  # r_ij = d_i . psi_r
            P.append(np.outer(self.beta[j] * t[j], d[j]))
            q = [self.beta[i] * np.linalg.norm(t[i]) * d[i][None, :] for i in range(self.J) if i != j]
            q.append(math.sqrt(self.s_ext) * np.diag(self.Fr.conj() @ W[:, j]))
            Q.append(q)
            c.append(self.s_int * np.sum(np.abs(W[:, j]) ** 2))
        return P, Q, c, []

    def maps_b(self, psi_t, psi_r, W):
        r = self.rx_gain(psi_r, W)
        Mt = psi_t[:, None] * self.Ft
        g = [_stream_map(Mt.T @ a, self.K) for a in self.At]
        Mr = psi_r[:, None] * self.Fr
        P, Q, c = [], [], []
        for j in range(self.J):
            P.append(self.beta[j] * r[j, j] * g[j])
            Q.append([self.beta[i] * r[i, j] * g[i] for i in range(self.J) if i != j])
            c.append(self.s_ext * np.sum(np.abs(Mr.conj() @ W[:, j]) ** 2) + self.s_int * np.sum(np.abs(W[:, j]) ** 2))
        users = []
        for u, user in enumerate(self.users):
            Gu = _stream_map(Mt.T @ np.asarray(user.channel), self.K)
            users.append((Gu[u], np.delete(Gu, u, axis=0), user.sinr_floor))
        return P, Q, c, users


def _qt_step(x0, P, Q, c, users, domain, comm_noise):
    """One quadratic-transform step: maximize the worst surrogate at fixed lambda."""
    A = [Pj @ x0 for Pj in P]
    G = np.array([sum(np.sum(np.abs(q @ x0) ** 2) for q in Qj) + cj for Qj, cj in zip(Q, c)])
    lam = [a / g for a, g in zip(A, G)]
    n = x0.size
    x = cp.Variable(n)
    tau = cp.Variable()
    cons = list(domain.cvx_constraints(x))
    for j in range(len(P)):
        lin = np.real(lam[j].conj() @ P[j])
        quad = sum(cp.sum_squares(_real_rows(q) @ x) for q in Q[j]) if Q[j] else 0.0
        cons.append(2 * lin @ x - np.sum(np.abs(lam[j]) ** 2) * (quad + c[j]) >= tau)
    for p, qs, gam in users:
        if gam <= 0:
            continue
        s0 = p @ x0
        lin = 2 * np.real(np.conj(s0) * p)
        interf = cp.sum_squares(_real_rows(qs) @ x) if qs.shape[0] else 0.0
        cons.append(lin @ x - abs(s0) ** 2 - gam * interf >= gam * comm_noise)
    prob = cp.Problem(cp.Maximize(tau), cons)
    for solver in ("CLARABEL", "SCS"):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver)
        except cp.error.SolverError:
            continue
        if prob.status in ("optimal", "optimal_inaccurate") and x.value is not None:
            return domain.repair(np.asarray(x.value, dtype=float))
    return None


def _scaled_to_cap(cfg: RhsConfig, psi: np.ndarray, cap: float) -> np.ndarray:
    """Uniform row scaling so every row radiates exactly ``cap`` (box permitting)."""
    dom = AmplitudeDomain(cfg, cap=cap)
    used = dom.leakage(psi)
    s = np.where(used > 0, np.sqrt(cap / np.maximum(used, 1e-300)), 0.0)
    return dom.repair(psi * s[cfg.row_index()])


def codesign_maxmin(
    cfg_tx: RhsConfig,
    cfg_rx: RhsConfig,
    targets: Sequence[SensingTarget],
    users: Sequence[JcasUser] = (),
    efficiencies: tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
    p_t: float = 1.0,
    noise_ext: float = 1e-3,
    noise_int: float = 1e-3,
    comm_noise: float = 1e-3,
    restarts: int = 2,
    max_rounds: int = 100,
    tol: float = 1e-6,
) -> SolveReport:
    """Maximize the minimum target SINR over both patterns, B and the filters.

    Each round updates the filters (generalized eigenvectors), then the
    transmit pattern, the receive pattern and the digital beamformer, each
    through one quadratic-transform convex step.  A step is kept only if the
    minimum SINR does not drop, so the ``tau`` trace is monotone.  The
    efficiencies cap the radiated (transmit) and collected (receive) power
    fraction of every row.
    """
    ut, ur = map(float, efficiencies)
    if not (0 < ut <= 1 and 0 < ur <= 1):
        raise ValueError("efficiencies must lie in (0, 1]")
    targets = list(targets)
    if not targets:
        raise ValueError("need at least one target")
    model = _Model(cfg_tx, cfg_rx, targets, users, p_t, noise_ext, noise_int, comm_noise)
    dom_t = AmplitudeDomain(cfg_tx, cap=ut)
    dom_r = AmplitudeDomain(cfg_rx, cap=ur)
    ball = BallDomain(2 * model.Lt * model.K, p_t)
    if np.all(model.beta == 0):
        return SolveReport(
            status="zero-sinr",
            objective=0.0,
            pattern=None,
            digital=None,
            window=ApertureWindow.full(cfg_tx),
            objective_trace=[0.0],
            min_leakage_slack=math.nan,
            min_constraint_slack=math.inf,
            seed=seed,
            restarts_used=0,
            extras={"reason": "all reflection coefficients are zero"},
        )

    dirs = [t.direction for t in targets]
    holo_t = superpose_patterns([pattern_for_direction(cfg_tx, d) for d in dirs], np.ones(len(dirs)))[0]
    holo_r = superpose_patterns([pattern_for_direction(cfg_rx, d) for d in dirs], np.ones(len(dirs)))[0]
    cache: list = []

    def user_patterns():
        # per-user SNR-optimal patterns and their mean (computed once)
        if not cache and model.U:
            x = np.full(model.Lt, math.sqrt(p_t / model.Lt))
            pats = [max_directional_power(cfg_tx, probe_vector(cfg_tx, u.channel, x)[:, 0], cap=ut)[1].amplitudes for u in model.users]
            cache.extend(pats + ([dom_t.repair(np.mean(pats, axis=0))] if len(pats) > 1 else []))
        return cache

    best = None
    traces = []
    for r, rng in enumerate(child_rngs(seed, restarts)):
        if r == 0:
            psi_t = _scaled_to_cap(cfg_tx, holo_t.amplitudes, ut)
            psi_r = _scaled_to_cap(cfg_rx, holo_r.amplitudes, ur)
        else:
            psi_t = _scaled_to_cap(cfg_tx, rng.uniform(0, 1, cfg_tx.size), ut)
            psi_r = _scaled_to_cap(cfg_rx, rng.uniform(0, 1, cfg_rx.size), ur)
        B = rng.standard_normal((model.Lt, model.K)) + 1j * rng.standard_normal((model.Lt, model.K))
        B *= math.sqrt(p_t) / np.linalg.norm(B)
        W = model.best_filters(psi_t, psi_r, B)
        users_ok = np.all(model.user_sinrs(psi_t, B) >= [u.sinr_floor for u in model.users]) if model.U else True
        if not users_ok:
            # serve each user with a matched stream, first on the current
            # pattern, then on patterns steered at the users
            for cand in [psi_t] + user_patterns():
                B = _user_init(model, cand, p_t)
                if np.all(model.user_sinrs(cand, B) >= [u.sinr_floor * (1 - 1e-9) for u in model.users]):
                    psi_t, users_ok = cand, True
                    break
            if not users_ok:
                traces.append([])
                continue
            W = model.best_filters(psi_t, psi_r, B)
        tau = model.sinrs(psi_t, psi_r, B, W).min()
        trace = [float(tau)]
        calm = 0
        for _ in range(max_rounds):
            prev = tau

            def accept(cand_t, cand_r, cand_B, cur):
                Wc = model.best_filters(cand_t, cand_r, cand_B)
                val = model.sinrs(cand_t, cand_r, cand_B, Wc).min()
                if model.U and np.any(model.user_sinrs(cand_t, cand_B) < [u.sinr_floor * (1 - 1e-9) for u in model.users]):
                    return None
                return (val, Wc) if val >= cur else None

            W = model.best_filters(psi_t, psi_r, B)
            tau = max(tau, model.sinrs(psi_t, psi_r, B, W).min())
            x = _qt_step(psi_t, *model.maps_tx(psi_r, B, W), dom_t, comm_noise)
            if x is not None and (res := accept(x, psi_r, B, tau)):
                psi_t, (tau, W) = x, res
            x = _qt_step(psi_r, *model.maps_rx(psi_t, B, W), dom_r, comm_noise)
            if x is not None and (res := accept(psi_t, x, B, tau)):
                psi_r, (tau, W) = x, res
            y = _qt_step(stack_complex(B), *model.maps_b(psi_t, psi_r, W), ball, comm_noise)
            if y is not None:
                Bn = unstack_complex(y, model.Lt, model.K)
                if res := accept(psi_t, psi_r, Bn, tau):
                    B, (tau, W) = Bn, res
            trace.append(float(tau))
            calm = calm + 1 if tau - prev <= tol * max(abs(prev), 1e-300) else 0
            if calm >= 3:
                break
        traces.append(trace)
        if best is None or tau > best[0]:
            best = (tau, psi_t, psi_r, B, W, r)
    if best is None:
        return SolveReport(
            status="infeasible",
            objective=-math.inf,
            pattern=None,
            digital=None,
            window=ApertureWindow.full(cfg_tx),
            objective_trace=[],
            min_leakage_slack=math.nan,
            min_constraint_slack=-math.inf,
            seed=seed,
            restarts_used=restarts,
            extras={"reason": "user SINR floors could not be met"},
        )
    tau, psi_t, psi_r, B, W, r = best
    pt = HolographicPattern.clipped(psi_t)
    pr = HolographicPattern.clipped(psi_r)
    slack_t = leakage_margins(cfg_tx, pt, ApertureWindow.full(cfg_tx)) - (1 - ut)
    slack_r = leakage_margins(cfg_rx, pr, ApertureWindow.full(cfg_rx)) - (1 - ur)
    sinrs = model.sinrs(psi_t, psi_r, B, W)
    us = model.user_sinrs(psi_t, B)
    cs = us - np.array([u.sinr_floor for u in model.users]) if model.U else np.array([])
    return SolveReport(
        status="optimal",
        objective=float(sinrs.min()),
        pattern=pt,
        digital=B,
        window=ApertureWindow.full(cfg_tx),
        objective_trace=traces[r],
        min_leakage_slack=float(min(slack_t.min(), slack_r.min())),
        min_constraint_slack=float(cs.min()) if cs.size else math.inf,
        seed=seed,
        restarts_used=restarts,
        traces=traces,
        best_restart=r,
        extras={
            "receive_pattern": pr.amplitudes.tolist(),
            "target_sinr": sinrs.tolist(),
            "user_sinr": us.tolist(),
            "filters": [[{"re": float(v.real), "im": float(v.imag)} for v in col] for col in W.T],
        },
    )


def _user_init(model: _Model, psi_t, p_t) -> np.ndarray:
    """Matched-filter streams for the users, radar streams silent."""
    Mt = psi_t[:, None] * model.Ft
    B = np.zeros((model.Lt, model.K), dtype=complex)
    for u, user in enumerate(model.users):
        g = Mt.T @ np.asarray(user.channel)
        B[:, u] = g.conj() / max(np.linalg.norm(g), 1e-300)
    return B * math.sqrt(p_t) / max(np.linalg.norm(B), 1e-300)


def max_user_snr(cfg: RhsConfig, channel, efficiency: float, p_t: float = 1.0, noise: float = 1e-3) -> float:
    """Largest single-user SNR with the transmit radiated fraction capped at ``efficiency``."""
    x = np.full(cfg.feed_count, math.sqrt(p_t / cfg.feed_count))
    c = probe_vector(cfg, channel, x)[:, 0]
    power, _ = max_directional_power(cfg, c, cap=efficiency)
    return power / noise
