"""Shared optimizer machinery.

Two ascent routes live here:

* :func:`pg_ascent` - batched projected-gradient ascent with backtracking,
  used when the only constraints are the amplitude box and row leakage.
  Every batch row is an independent restart (or instance).
* :func:`ccp_maximize` - convex-concave procedure for difference-of-convex
  quadratic programs with extra constraints.  A penalty phase with a x10
  schedule finds a feasible point; afterwards every accepted iterate is
  feasible and improves the true objective.

Both record one trace value per accepted iterate, so traces are monotone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import cvxpy as cp
import numpy as np

from ..errors import InfeasibleError
from ..rhs import LEAKAGE_TOL, ApertureWindow, HolographicPattern, RhsConfig, leakage_weights

CONSTRAINT_TOL = 1e-7


def child_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """One generator per restart, derived from ``(seed, restart index)``."""
    return [np.random.default_rng([int(seed), int(r)]) for r in range(count)]


# ---------------------------------------------------------------- reports


@dataclass
class SolveReport:
    """Optimizer output.

    ``objective_trace`` is the trace of the winning restart; ``traces`` keeps
    every restart.  Feasibility margins are the minimum row-leakage slack and
    the minimum (normalized) constraint slack of the returned solution.
    """

    status: str
    objective: float
    pattern: HolographicPattern | None
    digital: np.ndarray | None
    window: ApertureWindow | None
    objective_trace: list[float]
    min_leakage_slack: float
    min_constraint_slack: float
    seed: int
    restarts_used: int
    traces: list[list[float]] = field(default_factory=list)
    best_restart: int = 0
    extras: dict = field(default_factory=dict)
    restart_solutions: list = field(default_factory=list, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "objective": self.objective,
            "objective_trace": list(self.objective_trace),
            "feasibility": {
                "min_leakage_slack": self.min_leakage_slack,
                "min_constraint_slack": self.min_constraint_slack,
            },
            "seed": self.seed,
            "restarts_used": self.restarts_used,
            "best_restart": self.best_restart,
            "solution": {
                "pattern": None if self.pattern is None else self.pattern.amplitudes.tolist(),
                "digital": None if self.digital is None else _complex_rows(self.digital),
                "window": None
                if self.window is None
                else {"start": list(self.window.start), "stop": list(self.window.stop)},
            },
        }
        if self.extras:
            out["extras"] = self.extras
        return out


def _complex_rows(B: np.ndarray) -> list:
    B = np.atleast_2d(B)
    return [[{"re": float(v.real), "im": float(v.imag)} for v in row] for row in B]


@dataclass(frozen=True)
class ParetoPoint:
    comm_level: float
    sensing_power: float
    feasible: bool = True
    comm_snr: float = float("nan")


def monotone(trace: Sequence[float], tol: float = 1e-9) -> bool:
    t = np.asarray(trace, dtype=float)
    if t.size < 2:
        return True
    scale = np.maximum(np.abs(t[:-1]), 1.0)
    return bool(np.all(np.diff(t) >= -tol * scale))


# ---------------------------------------------------------------- domains


class AmplitudeDomain:
    """``lo <= x <= hi`` (zero outside the window) and ``sum_row eta x^2 <= cap``."""

    def __init__(self, cfg: RhsConfig, window: ApertureWindow | None = None, cap: float = 1.0, hi: float = 1.0):
        self.cfg = cfg
        self.window = window or ApertureWindow.full(cfg)
        self.mask = self.window.mask(cfg)
        self.eta = leakage_weights(cfg) * self.mask
        self.hi = hi * self.mask
        self.cap = float(cap)
        self.rows = cfg.row_index()
        self.n = cfg.size

    # batched helpers -------------------------------------------------
    def row_sums(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(v.shape[:-1] + (self.cfg.rows,))
        for r in range(self.cfg.rows):
            out[..., r] = v[..., r :: self.cfg.rows].sum(axis=-1)
        return out

    def leakage(self, x: np.ndarray) -> np.ndarray:
        return self.row_sums(self.eta * x**2)

    def project(self, v: np.ndarray) -> np.ndarray:
        """Exact Euclidean projection (per row: box-clipped shrinkage)."""
        v = np.asarray(v, dtype=float)
        x = np.clip(v, 0.0, self.hi)
        used = self.leakage(x)
        over = used > self.cap
        if not np.any(over):
            return x
        # bisection on the multiplier of each violated row
        nu_lo = np.zeros(used.shape)
        nu_hi = np.ones(used.shape)
        rows = self.rows

        def shrink(nu):
            return np.clip(v / (1.0 + 2.0 * nu[..., rows] * self.eta), 0.0, self.hi)

        for _ in range(200):
            bad = over & (self.leakage(shrink(nu_hi)) > self.cap)
            if not np.any(bad):
                break
            nu_hi = np.where(bad, nu_hi * 4.0, nu_hi)
        for _ in range(64):
            mid = 0.5 * (nu_lo + nu_hi)
            big = self.leakage(shrink(mid)) > self.cap
            nu_lo = np.where(big, mid, nu_lo)
            nu_hi = np.where(big, nu_hi, mid)
        nu = np.where(over, nu_hi, 0.0)
        return self.repair(shrink(nu))

    def repair(self, x: np.ndarray) -> np.ndarray:
        """Clip to the box and scale rows down so leakage slack is >= 0."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.hi)
        used = self.leakage(x)
        scale = np.ones_like(used)
        over = used > self.cap
        scale[over] = np.sqrt(self.cap / used[over]) * (1.0 - 1e-13)
        return x * scale[..., self.rows]

    def random(self, rng: np.random.Generator) -> np.ndarray:
        return self.project(rng.uniform(0.0, 1.0, self.n) * self.mask)

    def slack(self, x: np.ndarray) -> np.ndarray:
        return self.cap - self.leakage(x)

    def contains(self, x: np.ndarray) -> bool:
        return bool(
            np.all(x >= 0.0) and np.all(x <= self.hi) and np.all(self.slack(x) >= -LEAKAGE_TOL)
        )

    def cvx_constraints(self, var) -> list:
        cons = [var >= 0, var <= self.hi]
        for r in range(self.cfg.rows):
            idx = np.flatnonzero((self.rows == r) & (self.eta > 0))
            if idx.size:
                cons.append(cp.sum_squares(cp.multiply(np.sqrt(self.eta[idx]), var[idx])) <= self.cap)
        return cons


class BallDomain:
    """Real vector with ``||x||^2 <= radius2`` (feed power budget)."""

    def __init__(self, n: int, radius2: float):
        self.n = n
        self.radius2 = float(radius2)

    def project(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        nrm = np.sum(v**2, axis=-1, keepdims=True)
        scale = np.where(nrm > self.radius2, np.sqrt(self.radius2 / np.maximum(nrm, 1e-300)), 1.0)
        return v * scale * np.where(nrm > self.radius2, 1.0 - 1e-13, 1.0)

    repair = project

    def random(self, rng):
        v = rng.standard_normal(self.n)
        return v * math.sqrt(self.radius2) / np.linalg.norm(v)

    def contains(self, x) -> bool:
        return bool(np.sum(x**2) <= self.radius2 * (1 + 1e-9))

    def cvx_constraints(self, var) -> list:
        return [cp.sum_squares(var) <= self.radius2]


# ---------------------------------------------------------------- projected gradient


def pg_ascent(
    fun: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    x0: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray],
    max_iter: int = 500,
    rtol: float = 1e-6,
    patience: int = 3,
    step0: float | None = None,
) -> tuple[np.ndarray, np.ndarray, list[list[float]]]:
    """Maximize ``fun`` over a projectable set for a batch of starting points.

    ``fun(x, idx)`` evaluates batch rows ``idx`` and returns values and
    gradients.  A step is accepted only if it satisfies an Armijo-type
    sufficient increase, so each row's trace is non-decreasing.
    """
    x = project(np.array(x0, dtype=float))
    R = x.shape[0]
    idx_all = np.arange(R)
    f, g = fun(x, idx_all)
    gn = np.linalg.norm(g, axis=1)
    if step0 is None:
        t = np.where(gn > 0, 0.1 * np.maximum(np.linalg.norm(x, axis=1), 1.0) / np.maximum(gn, 1e-300), 1.0)
    else:
        t = np.full(R, float(step0))
    traces = [[float(v)] for v in f]
    calm = np.zeros(R, dtype=int)
    active = np.ones(R, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        tt = t[idx].copy()
        pending = np.ones(idx.size, dtype=bool)
        new_x = x[idx].copy()
        new_f = f[idx].copy()
        new_g = g[idx].copy()
        for _ in range(60):
            sub = np.flatnonzero(pending)
            if sub.size == 0:
                break
            rows = idx[sub]
            cand = project(x[rows] + tt[sub, None] * g[rows])
            step = cand - x[rows]
            fc, gc = fun(cand, rows)
            gain = np.einsum("ij,ij->i", g[rows], step)
            ok = (fc >= f[rows] + 1e-4 * gain) & np.isfinite(fc)
            moved = np.any(step != 0.0, axis=1)
            take = ok & moved
            new_x[sub[take]] = cand[take]
            new_f[sub[take]] = fc[take]
            new_g[sub[take]] = gc[take]
            pending[sub[take]] = False
            # a projected step of zero length means the point is stationary
            pending[sub[~moved]] = False
            fail = ~ok & moved
            tt[sub[fail]] *= 0.5
            tiny = tt[sub] < 1e-14 * t[rows]
            pending[sub[tiny & fail]] = False
        accepted = np.any(new_x != x[idx], axis=1)
        for k, r in enumerate(idx):
            if accepted[k]:
                prev = f[r]
                x[r], f[r], g[r] = new_x[k], new_f[k], new_g[k]
                traces[r].append(float(f[r]))
                rel = abs(f[r] - prev) / max(abs(prev), 1e-300)
                calm[r] = calm[r] + 1 if rel < rtol else 0
                t[r] = tt[k] * 2.0
                if calm[r] >= patience:
                    active[r] = False
            else:
                active[r] = False
    return x, f, traces


# ---------------------------------------------------------------- DC quadratics


@dataclass
class DCQuad:
    """``f(x) = ||Lp x||^2 - ||Lm x||^2 + q.x + c`` on a real vector."""

    Lp: np.ndarray
    Lm: np.ndarray
    q: np.ndarray
    c: float = 0.0

    @classmethod
    def from_matrix(cls, P: np.ndarray, q=None, c: float = 0.0, tol: float = 1e-12) -> "DCQuad":
        """Split a real symmetric ``P`` into PSD parts via its eigenvalues."""
        P = np.asarray(P, dtype=float)
        P = 0.5 * (P + P.T)
        n = P.shape[0]
        w, U = np.linalg.eigh(P)
        top = max(np.abs(w).max(initial=0.0), 1e-300)
        pos = w > tol * top
        neg = w < -tol * top
        Lp = (np.sqrt(w[pos])[:, None] * U[:, pos].T) if np.any(pos) else np.zeros((0, n))
        Lm = (np.sqrt(-w[neg])[:, None] * U[:, neg].T) if np.any(neg) else np.zeros((0, n))
        q = np.zeros(n) if q is None else np.asarray(q, dtype=float)
        return cls(Lp, Lm, q, float(c))

    @classmethod
    def from_hermitian(cls, H: np.ndarray, q=None, c: float = 0.0) -> "DCQuad":
        return cls.from_matrix(np.real(np.asarray(H)), q, c)

    @classmethod
    def sum_of_squares(cls, rows: np.ndarray, sign: float = 1.0, c: float = 0.0) -> "DCQuad":
        """``sign * ||rows x||^2 + c`` without an eigen-decomposition."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        n = rows.shape[1]
        empty = np.zeros((0, n))
        if sign >= 0:
            return cls(math.sqrt(sign) * rows, empty, np.zeros(n), c)
        return cls(empty, math.sqrt(-sign) * rows, np.zeros(n), c)

    @property
    def n(self) -> int:
        return self.q.size

    def scaled(self, s: float) -> "DCQuad":
        if s >= 0:
            r = math.sqrt(s)
            return DCQuad(self.Lp * r, self.Lm * r, self.q * s, self.c * s)
        r = math.sqrt(-s)
        return DCQuad(self.Lm * r, self.Lp * r, self.q * s, self.c * s)

    def __add__(self, other: "DCQuad") -> "DCQuad":
        return DCQuad(
            np.vstack([self.Lp, other.Lp]),
            np.vstack([self.Lm, other.Lm]),
            self.q + other.q,
            self.c + other.c,
        )

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vp = np.sum((x @ self.Lp.T) ** 2, axis=-1)
        vm = np.sum((x @ self.Lm.T) ** 2, axis=-1)
        return vp - vm + x @ self.q + self.c

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 2.0 * (x @ self.Lp.T) @ self.Lp - 2.0 * (x @ self.Lm.T) @ self.Lm + self.q


# ---------------------------------------------------------------- convex-concave procedure


SmoothTerm = Callable[[np.ndarray], tuple[float, np.ndarray]]


class _CcpModel:
    """cvxpy surrogate built once per problem structure and re-solved.

    Bounds and normalization weights are parameters, so one compiled model
    serves every threshold of a sweep.
    """

    def __init__(self, obj: DCQuad, forms, senses, domain, penalty: bool, prox: bool):
        n = obj.n
        self.x = cp.Variable(n)
        self.lin_obj = cp.Parameter(n)
        self.prox_w = cp.Parameter(nonneg=True)
        self.center = np.zeros(n)
        self.prox_lin = cp.Parameter(n)
        self.rho = cp.Parameter(nonneg=True)
        expr = self.lin_obj @ self.x
        if obj.Lm.shape[0]:
            expr = expr - cp.sum_squares(obj.Lm @ self.x)
        if prox:
            # w ||x - c||^2 expanded so the model stays DPP
            expr = expr - self.prox_w * cp.sum_squares(self.x) + self.prox_lin @ self.x
        constraints = list(domain.cvx_constraints(self.x))
        self.a, self.b, self.w, self.bound = [], [], [], []
        slacks = cp.Variable(len(forms), nonneg=True) if (penalty and forms) else None
        for i, (form, sense) in enumerate(zip(forms, senses)):
            a, b = cp.Parameter(n), cp.Parameter()
            w, bound = cp.Parameter(nonneg=True), cp.Parameter()
            self.a.append(a)
            self.b.append(b)
            self.w.append(w)
            self.bound.append(bound)
            lhs = a @ self.x + b
            if sense == ">=":
                if form.Lm.shape[0]:
                    lhs = lhs - w * cp.sum_squares(form.Lm @ self.x)
                if slacks is not None:
                    lhs = lhs + slacks[i]
                constraints.append(lhs >= bound)
            else:
                if form.Lp.shape[0]:
                    lhs = lhs + w * cp.sum_squares(form.Lp @ self.x)
                if slacks is not None:
                    lhs = lhs - slacks[i]
                constraints.append(lhs <= bound)
        if slacks is not None:
            expr = expr - self.rho * cp.sum(slacks)
        self.problem = cp.Problem(cp.Maximize(expr), constraints)

    def update(self, obj: DCQuad, cons, xk: np.ndarray, extra_grad=None):
        gp = 2.0 * (obj.Lp.T @ (obj.Lp @ xk)) if obj.Lp.shape[0] else np.zeros_like(xk)
        lin = gp + obj.q
        if extra_grad is not None:
            lin = lin + extra_grad
        self.lin_obj.value = lin
        self.center = np.array(xk, dtype=float)
        for i, (form, sense, bound, weight) in enumerate(cons):
            if sense == ">=":
                # ||Lp x||^2 >= 2 (Lp xk).(Lp x) - ||Lp xk||^2
                u = form.Lp @ xk
                a = 2.0 * form.Lp.T @ u + form.q
                b = form.c - u @ u
            else:
                # -||Lm x||^2 <= -2 (Lm xk).(Lm x) + ||Lm xk||^2
                u = form.Lm @ xk
                a = -2.0 * form.Lm.T @ u + form.q
                b = form.c + u @ u
            self.a[i].value = weight * a
            self.b[i].value = float(weight * b)
            self.w[i].value = weight
            self.bound[i].value = weight * bound

    def set_prox(self, w: float):
        self.prox_w.value = w
        self.prox_lin.value = 2.0 * w * self.center

    def solve(self) -> np.ndarray | None:
        for solver in ("CLARABEL", "SCS"):
            try:
                with warnings.catch_warnings():
                    # inexact steps are still screened by the line search
                    warnings.simplefilter("ignore", UserWarning)
                    self.problem.solve(solver=solver)
            except cp.error.SolverError:
                continue
            if self.problem.status in ("optimal", "optimal_inaccurate") and self.x.value is not None:
                return np.asarray(self.x.value, dtype=float)
        return None


def _normalize(cons):
    """Attach a weight that scales every finite bound to +-1; drop infinite ones."""
    out = []
    for form, sense, bound in cons:
        if sense not in (">=", "<="):
            raise ValueError(f"unknown constraint sense {sense!r}")
        if not math.isfinite(bound):
            continue  # vacuous
        s = abs(bound) if bound != 0 else 1.0
        out.append((form, sense, float(bound), 1.0 / s))
    return out


def constraint_slack(cons, x: np.ndarray) -> np.ndarray:
    """Normalized slack of every constraint (>= 0 when satisfied)."""
    vals = []
    for item in cons:
        form, sense, bound = item[:3]
        weight = item[3] if len(item) > 3 else 1.0
        v = form.value(x)
        vals.append(weight * (v - bound if sense == ">=" else bound - v))
    return np.array(vals, dtype=float) if vals else np.zeros(0)


@dataclass
class CcpResult:
    x: np.ndarray | None
    value: float
    trace: list[float]
    feasible: bool
    min_slack: float


def ccp_maximize(
    objective: DCQuad,
    constraints: Sequence[tuple[DCQuad, str, float]],
    domain,
    x0: np.ndarray,
    extra: SmoothTerm | None = None,
    max_iter: int = 500,
    rtol: float = 1e-6,
    patience: int = 3,
    penalty_rounds: int = 5,
    models: dict | None = None,
) -> CcpResult:
    """Maximize ``objective(x) + extra(x)`` subject to DC quadratic constraints.

    ``extra`` is a smooth term handled by first-order expansion plus a
    proximal weight and a backtracking line search on the true objective.
    ``models`` caches compiled cvxpy surrogates between calls that share the
    same objective and constraint forms (only bounds may differ).
    """
    cons = _normalize(constraints)
    models = {} if models is None else models

    def total(x):
        v = float(objective.value(x))
        if extra is not None:
            v += extra(x)[0]
        return v

    def slack(x):
        s = constraint_slack(cons, x)
        return float(s.min()) if s.size else math.inf

    def get_model(penalty):
        key = ("pen" if penalty else "plain", extra is not None, tuple(c[1] for c in cons))
        if key not in models:
            forms = [c[0] for c in cons]
            senses = [c[1] for c in cons]
            models[key] = _CcpModel(objective, forms, senses, domain, penalty, prox=extra is not None)
        return models[key]

    x = domain.repair(np.asarray(x0, dtype=float))
    scale = max(abs(total(x)), 1e-12)

    # feasibility phase
    if cons and slack(x) < -CONSTRAINT_TOL:
        model = get_model(True)
        rho = 10.0 * max(scale, 1.0)
        for _ in range(penalty_rounds):
            model.rho.value = rho
            for _ in range(30):
                model.update(objective, cons, x, extra(x)[1] if extra else None)
                model.set_prox(scale)
                xn = model.solve()
                if xn is None:
                    break
                xn = domain.repair(xn)
                done = np.allclose(xn, x, rtol=1e-9, atol=1e-12)
                x = xn
                if slack(x) >= -CONSTRAINT_TOL or done:
                    break
            if slack(x) >= -CONSTRAINT_TOL:
                break
            rho *= 10.0
        if slack(x) < -CONSTRAINT_TOL:
            # least-violating point, useful to alternating callers
            return CcpResult(x, -math.inf, [], False, slack(x))

    model = get_model(False)
    f = total(x)
    trace = [f]
    calm = 0
    prox = scale
    for _ in range(max_iter):
        eg = extra(x)[1] if extra is not None else None
        model.update(objective, cons, x, eg)
        model.set_prox(prox)
        xs = model.solve()
        if xs is None:
            break
        xs = domain.repair(xs)
        # line search along the (convex, hence feasible) segment
        t = 1.0
        accepted = None
        for _ in range(30):
            cand = domain.repair(x + t * (xs - x))
            fc = total(cand)
            if fc >= f and slack(cand) >= -CONSTRAINT_TOL:
                accepted = (cand, fc)
                break
            t *= 0.5
        if accepted is None:
            if extra is not None and prox < 1e6 * scale:
                prox *= 10.0
                continue
            break
        cand, fc = accepted
        rel = (fc - f) / max(abs(f), 1e-300)
        x, f = cand, fc
        trace.append(f)
        calm = calm + 1 if rel < rtol else 0
        if calm >= patience:
            break
    return CcpResult(x, f, trace, True, slack(x))
