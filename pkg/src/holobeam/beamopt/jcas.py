"""Transmit ISAC beamforming: alternating holographic/digital design and HDMA."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import cvxpy as cp
import numpy as np

from ..metrics import RadarUtilityConfig, rmsc_from_cross
from ..rhs import (
    ApertureWindow,
    HolographicPattern,
    RhsConfig,
    build_propagation_matrix,
    leakage_margins,
    leakage_weights,
    pattern_for_direction,
    superpose_patterns,
)
from ..wavefield import planar_steering
from .core import (
    CONSTRAINT_TOL,
    AmplitudeDomain,
    BallDomain,
    DCQuad,
    SolveReport,
    ccp_maximize,
    child_rngs,
    constraint_slack,
)


@dataclass(frozen=True)
class JcasUser:
    """Single-antenna user: channel ``h`` (length N) and a linear SINR floor."""

    channel: np.ndarray
    sinr_floor: float = 0.0


def realify(H: np.ndarray) -> np.ndarray:
    """Real symmetric matrix with ``v^H H v`` = ``y^T R y`` for ``y = [Re v; Im v]``."""
    Hr, Hi = np.real(H), np.imag(H)
    R = np.block([[Hr, -Hi], [Hi, Hr]])
    return 0.5 * (R + R.T)


def stack_complex(B: np.ndarray) -> np.ndarray:
    v = np.asarray(B, dtype=complex).reshape(-1, order="F")
    return np.concatenate([v.real, v.imag])


def unstack_complex(y: np.ndarray, L: int, K: int) -> np.ndarray:
    m = L * K
    return (y[:m] + 1j * y[m:]).reshape(L, K, order="F")


def _outer(c: np.ndarray) -> np.ndarray:
    """Hermitian ``H`` with ``psi^T H psi = ||psi^T C||^2`` (C: N x K)."""
    C = np.atleast_2d(c.T).T if c.ndim == 1 else c
    return C.conj() @ C.T


class _Rmsc:
    """``-alpha0 * RMSC`` as a smooth term of a real variable.

    The radiated amplitudes are ``Z[j, k] = T[j, k, :] @ y``.
    """

    def __init__(self, T: np.ndarray, alpha0: float):
        self.T = T
        self.alpha0 = alpha0
        J = T.shape[0]
        self.c = 2.0 / (J * (J - 1))
        self.upper = np.triu(np.ones((J, J)), 1)

    def __call__(self, y):
        Z = self.T @ y
        cross = Z @ Z.conj().T
        r = rmsc_from_cross(cross)
        if r <= 0:
            return 0.0, np.zeros_like(y)
        W = self.upper * cross.conj()
        G = np.einsum("ab,akn,bk->n", W, self.T, Z.conj()) + np.einsum("ab,ak,bkn->n", W, Z, self.T.conj())
        grad = self.c * np.real(G) / r
        return -self.alpha0 * r, -self.alpha0 * grad


@dataclass
class _Problem:
    cfg: RhsConfig
    users: list
    radar: RadarUtilityConfig | None
    p_t: float
    noise: float
    window: ApertureWindow
    band_tol: float

    def __post_init__(self):
        self.F = build_propagation_matrix(self.cfg)
        self.d = self.window.mask(self.cfg)
        self.L = self.cfg.feed_count
        self.U = len(self.users)
        self.K = self.U + self.L  # communication streams then radar streams
        dirs = self.radar.directions if self.radar else ()
        self.A = [planar_steering(self.cfg, t) for t in dirs]
        self.J = len(self.A)
        self.H = [np.asarray(u.channel, dtype=complex) for u in self.users]

    # value of every quantity at (psi, B)
    def amplitudes(self, psi, B, probe):
        return (probe * self.d * psi) @ self.F @ B

    def powers(self, psi, B):
        return np.array([np.sum(np.abs(self.amplitudes(psi, B, a)) ** 2) for a in self.A])

    def utility(self, psi, B):
        if self.J == 0:
            return 0.0, 0.0, 0.0
        Z = np.stack([self.amplitudes(psi, B, a) for a in self.A])
        cross = Z @ Z.conj().T
        pa = float(np.real(np.trace(cross))) / self.J
        r = rmsc_from_cross(cross)
        return pa - self.radar.alpha0 * r, pa, r

    def sinrs(self, psi, B):
        out = []
        for u, h in enumerate(self.H):
            g = np.abs(self.amplitudes(psi, B, h)) ** 2
            out.append(g[u] / (g.sum() - g[u] + self.noise))
        return np.array(out)

    def band_bounds(self):
        out = []
        if self.radar is None or self.radar.band is None:
            return out
        for j in range(1, self.J):
            lo, hi = self.radar.band[j]
            out.append((j, lo * (1 - self.band_tol), hi * (1 + self.band_tol)))
        return out

    # -------------------------------------------------- psi block
    def psi_forms(self, B):
        E = self.F @ B
        Pj = [np.real(_outer((a * self.d)[:, None] * E)) for a in self.A]
        obj = DCQuad.from_matrix(sum(Pj) / self.J) if self.J else DCQuad.from_matrix(np.zeros((self.cfg.size,) * 2))
        cons = self._constraints(Pj, [(h * self.d)[:, None] * E for h in self.H], real=True)
        extra = None
        if self.J >= 2 and self.radar.alpha0 > 0:
            T = np.stack([((a * self.d)[:, None] * E).T for a in self.A])  # J x K x N
            extra = _Rmsc(T, self.radar.alpha0)
        return obj, cons, extra

    # -------------------------------------------------- B block
    def b_forms(self, psi):
        G = (self.d * psi)[:, None] * self.F  # N x L
        K = self.K

        def blockdiag(g, blocks):
            H = np.zeros((self.L * K, self.L * K), dtype=complex)
            blk = np.outer(g.conj(), g)
            for k in blocks:
                s = slice(k * self.L, (k + 1) * self.L)
                H[s, s] = blk
            return realify(H)

        Pj = [blockdiag(G.T @ a, range(K)) for a in self.A]
        n = 2 * self.L * K
        obj = DCQuad.from_matrix(sum(Pj) / self.J) if self.J else DCQuad.from_matrix(np.zeros((n, n)))
        sig, intf = [], []
        for u, h in enumerate(self.H):
            g = G.T @ h
            sig.append(blockdiag(g, [u]))
            intf.append(blockdiag(g, [k for k in range(K) if k != u]))
        cons = self._constraints(Pj, None, real=True, sig=sig, intf=intf)
        extra = None
        if self.J >= 2 and self.radar.alpha0 > 0:
            m = self.L * K
            T = np.zeros((self.J, K, n), dtype=complex)
            for j, a in enumerate(self.A):
                g = G.T @ a
                for k in range(K):
                    T[j, k, k * self.L : (k + 1) * self.L] = g
                    T[j, k, m + k * self.L : m + (k + 1) * self.L] = 1j * g
            extra = _Rmsc(T, self.radar.alpha0)
        return obj, cons, extra

    def _constraints(self, Pj, user_cols, real, sig=None, intf=None):
        cons = []
        for u, user in enumerate(self.users):
            gam = float(user.sinr_floor)
            if gam <= 0:
                continue  # |.|^2 >= 0 always holds
            if sig is None:
                C = user_cols[u]
                S = np.real(_outer(C[:, [u]]))
                I = np.real(_outer(C)) - S
            else:
                S, I = sig[u], intf[u]
            cons.append((DCQuad.from_matrix(S - gam * I), ">=", gam * self.noise))
        for j, lo, hi in self.band_bounds():
            if lo > 0:
                cons.append((DCQuad.from_matrix(Pj[j] - lo * Pj[0]), ">=", 0.0))
            if math.isfinite(hi):
                cons.append((DCQuad.from_matrix(hi * Pj[0] - Pj[j]), ">=", 0.0))
        return cons


def _feasible(cons, x) -> bool:
    s = constraint_slack(_norm(cons), x)
    return bool(s.size == 0 or s.min() >= -CONSTRAINT_TOL)


def _norm(cons):
    return [(f, s, b, 1.0 / (abs(b) if b != 0 else 1.0)) for f, s, b in cons]


def _reach_feasible(prob, dom, ball, psi, B, order, inner_iter, tol):
    steps = ("psi", "b") if order == "psi" else ("b", "psi")
    for _ in range(4):
        for step in steps:
            if step == "psi":
                obj, cons, extra = prob.psi_forms(B)
                if _feasible(cons, psi):
                    return psi, B, True
                res = ccp_maximize(obj, cons, dom, psi, extra=extra, max_iter=inner_iter, rtol=tol)
                psi = res.x
            else:
                obj, cons, extra = prob.b_forms(psi)
                if _feasible(cons, stack_complex(B)):
                    return psi, B, True
                res = ccp_maximize(obj, cons, ball, stack_complex(B), extra=extra, max_iter=inner_iter, rtol=tol)
                B = unstack_complex(res.x, prob.L, prob.K)
            if res.feasible:
                return psi, B, True
    return psi, B, False


def jcas_transmit(
    cfg: RhsConfig,
    users: Sequence[JcasUser],
    radar: RadarUtilityConfig | None,
    seed: int = 0,
    p_t: float = 1.0,
    noise: float = 1e-3,
    window: ApertureWindow | None = None,
    restarts: int = 4,
    max_rounds: int = 50,
    inner_iter: int = 50,
    tol: float = 1e-6,
    band_tol: float = 0.02,
    init_pattern: HolographicPattern | None = None,
) -> SolveReport:
    """Maximize ``P_a - alpha0*RMSC`` under SINR floors and direction bands.

    Alternates a holographic step (pattern, digital fixed) and a digital
    step (pattern fixed, total feed power ``<= p_t``); each step is a
    convex-concave procedure started at the current point, so every round
    keeps feasibility and never lowers the utility.  Band ratios are met
    up to a relative ``band_tol``.
    """
    users = list(users)
    if not users and (radar is None or not radar.directions):
        raise ValueError("need at least one user or one target")
    window = window or ApertureWindow.full(cfg)
    prob = _Problem(cfg, users, radar, p_t, noise, window, band_tol)
    dom = AmplitudeDomain(cfg, window)
    ball = BallDomain(2 * prob.L * prob.K, p_t)
    best = None
    failures = 0
    for r, rng in enumerate(child_rngs(seed, restarts)):
        if r == 0 and init_pattern is not None:
            psi = dom.repair(init_pattern.amplitudes)
        else:
            psi = dom.random(rng)
        B = rng.standard_normal((prob.L, prob.K)) + 1j * rng.standard_normal((prob.L, prob.K))
        B *= math.sqrt(p_t) / np.linalg.norm(B)
        # alternating penalty phases; holographic-first fails when a random B
        # makes the SINR form negative definite in psi, digital-first fails
        # when only the (B-homogeneous) band constraints are violated
        for order in ("psi", "b"):
            psi_try, B_try, ok = _reach_feasible(prob, dom, ball, psi, B, order, inner_iter, tol)
            if ok:
                psi, B = psi_try, B_try
                break
        if not ok:
            failures += 1
            continue
        trace = [prob.utility(psi, B)[0]]
        calm = 0
        for _ in range(max_rounds):
            prev = trace[-1]
            obj, cons, extra = prob.psi_forms(B)
            res = ccp_maximize(obj, cons, dom, psi, extra=extra, max_iter=inner_iter, rtol=tol)
            if res.feasible and prob.utility(res.x, B)[0] >= prev:
                psi = res.x
            obj, cons, extra = prob.b_forms(psi)
            res = ccp_maximize(obj, cons, ball, stack_complex(B), extra=extra, max_iter=inner_iter, rtol=tol)
            if res.feasible:
                Bn = unstack_complex(res.x, prob.L, prob.K)
                if prob.utility(psi, Bn)[0] >= prob.utility(psi, B)[0]:
                    B = Bn
            cur = prob.utility(psi, B)[0]
            trace.append(cur)  # both steps only accept non-decreasing utility
            calm = calm + 1 if abs(cur - prev) <= tol * max(abs(prev), 1e-300) else 0
            if calm >= 3:
                break
        util = prob.utility(psi, B)[0]
        if best is None or util > best[0]:
            best = (util, psi, B, trace, r)
    if best is None:
        return SolveReport(
            status="infeasible",
            objective=-math.inf,
            pattern=None,
            digital=None,
            window=window,
            objective_trace=[],
            min_leakage_slack=math.nan,
            min_constraint_slack=-math.inf,
            seed=seed,
            restarts_used=restarts,
            extras={"reason": "SINR floors or direction bands could not be met from any restart"},
        )
    util, psi, B, trace, r = best
    pattern = HolographicPattern.clipped(dom.repair(psi))
    _, pa, rm = prob.utility(pattern.amplitudes, B)
    obj, cons, _ = prob.psi_forms(B)
    cs = constraint_slack(_norm(cons), pattern.amplitudes)
    return SolveReport(
        status="optimal",
        objective=float(util),
        pattern=pattern,
        digital=B,
        window=window,
        objective_trace=[float(t) for t in trace],
        min_leakage_slack=float(leakage_margins(cfg, pattern, window).min()),
        min_constraint_slack=float(cs.min()) if cs.size else math.inf,
        seed=seed,
        restarts_used=restarts,
        best_restart=r,
        extras={
            "p_a": pa,
            "rmsc": rm,
            "direction_power": prob.powers(pattern.amplitudes, B).tolist(),
            "user_sinr": prob.sinrs(pattern.amplitudes, B).tolist(),
            "restarts_failed": failures,
        },
    )


# ---------------------------------------------------------------- HDMA


class _WeightDomain:
    """Weights ``z >= 0`` with ``P z`` inside the amplitude box and leakage caps.

    An optional trailing free coordinate carries the max-min level.
    """

    def __init__(self, cfg: RhsConfig, basis: np.ndarray, aux: bool):
        self.cfg = cfg
        self.P = basis  # N x S
        self.S = basis.shape[1]
        self.eta = leakage_weights(cfg)
        self.rows = cfg.row_index()
        self.aux = aux
        self.n = self.S + (1 if aux else 0)

    def weights(self, x):
        return x[..., : self.S]

    def repair(self, x):
        x = np.array(x, dtype=float)
        z = np.maximum(self.weights(x), 0.0)
        psi = self.P @ z
        s = 1.0
        if psi.max(initial=0.0) > 1.0:
            s = 1.0 / psi.max()
        leak = np.bincount(self.rows, self.eta * (s * psi) ** 2, minlength=self.cfg.rows)
        if leak.max(initial=0.0) > 1.0:
            s *= math.sqrt(1.0 / leak.max()) * (1.0 - 1e-13)
        x[..., : self.S] = z * s
        return x

    def cvx_constraints(self, var):
        z = var[: self.S]
        psi = self.P @ z
        cons = [z >= 0, psi <= 1]
        for r in range(self.cfg.rows):
            idx = np.flatnonzero(self.rows == r)
            cons.append(cp.sum_squares(cp.multiply(np.sqrt(self.eta[idx]), psi[idx])) <= 1.0)
        return cons


def hdma_basis(cfg: RhsConfig, directions: Sequence[tuple[float, float]]) -> list[HolographicPattern]:
    """One direction pattern per (direction, feed row): ``S = len(directions) * L``."""
    rows = cfg.row_index()
    out = []
    for d in directions:
        base = pattern_for_direction(cfg, d).amplitudes
        for l in range(cfg.feed_count):
            out.append(HolographicPattern(np.where(rows == l, base, 0.0)))
    return out


def hdma_weights(
    cfg: RhsConfig,
    directions: Sequence[tuple[float, float]],
    objective: str = "sum",
    seed: int = 0,
    p_t: float = 1.0,
    restarts: int = 4,
    tol: float = 1e-6,
) -> tuple[np.ndarray, SolveReport]:
    """Weights of the superposed direction patterns.

    ``objective`` is ``"sum"`` (total power towards all directions) or
    ``"maxmin"`` (weakest direction).  The optimization has one variable per
    basis pattern, independent of the element count.
    """
    if objective not in ("sum", "maxmin"):
        raise ValueError("objective must be 'sum' or 'maxmin'")
    directions = [tuple(map(float, d)) for d in directions]
    basis = hdma_basis(cfg, directions)
    if not basis:
        raise ValueError("need at least one direction")
    P = np.stack([b.amplitudes for b in basis], axis=1)
    S = P.shape[1]
    F = build_propagation_matrix(cfg)
    x = np.full(cfg.feed_count, math.sqrt(p_t / cfg.feed_count))
    E = F @ x
    forms = []
    for d in directions:
        c = planar_steering(cfg, d) * E  # psi -> amplitude
        v = P.T @ c  # zeta -> amplitude
        forms.append(np.real(np.outer(v.conj(), v)))
    maxmin = objective == "maxmin"
    dom = _WeightDomain(cfg, P, aux=maxmin)
    n = dom.n
    pad = (lambda M: np.pad(M, ((0, 1), (0, 1)))) if maxmin else (lambda M: M)
    if maxmin:
        e = np.zeros(n)
        e[-1] = 1.0
        obj = DCQuad.from_matrix(np.zeros((n, n)), e)
        cons = [(DCQuad.from_matrix(pad(Q), -e), ">=", 0.0) for Q in forms]
    else:
        obj = DCQuad.from_matrix(sum(forms))
        cons = []

    def powers(z):
        return np.array([z @ Q @ z for Q in forms])

    models: dict = {}
    best = None
    traces = []
    for r, rng in enumerate(child_rngs(seed, restarts)):
        z0 = np.ones(S) if r == 0 else rng.uniform(0.0, 1.0, S)
        x0 = np.zeros(n)
        x0[:S] = z0
        x0 = dom.repair(x0)
        if maxmin:
            x0[-1] = powers(x0[:S]).min()
        res = ccp_maximize(obj, cons, dom, x0, rtol=tol, models=models)
        traces.append(res.trace)
        val = float(obj.value(res.x))
        if best is None or val > best[0]:
            best = (val, res.x, r)
    val, xb, r = best
    zeta = dom.repair(xb)[:S]
    pattern, rescaled = superpose_patterns(basis, zeta)
    margins = leakage_margins(cfg, pattern, ApertureWindow.full(cfg))
    pw = powers(zeta)
    report = SolveReport(
        status="optimal",
        objective=float(pw.min() if maxmin else pw.sum()),
        pattern=pattern,
        digital=x,
        window=ApertureWindow.full(cfg),
        objective_trace=list(traces[r]),
        min_leakage_slack=float(margins.min()),
        min_constraint_slack=math.inf,
        seed=seed,
        restarts_used=restarts,
        traces=traces,
        best_restart=r,
        extras={"direction_power": pw.tolist(), "rescaled": bool(rescaled), "dimension": S},
    )
    return zeta, report
