"""Amplitude-pattern quadratic programs and their oracles."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..rhs import (
    LEAKAGE_TOL,
    ApertureWindow,
    HolographicPattern,
    RhsConfig,
    build_propagation_matrix,
    leakage_margins,
)
from .core import (
    CONSTRAINT_TOL,
    AmplitudeDomain,
    DCQuad,
    SolveReport,
    ccp_maximize,
    child_rngs,
    pg_ascent,
)


@dataclass(frozen=True)
class QuadForm:
    """``psi^T H psi + q.psi + c`` for a real amplitude vector ``psi``.

    ``matrix`` is Hermitian; only its real part acts on a real vector.
    """

    matrix: np.ndarray
    linear: np.ndarray | None = None
    constant: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.matrix)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("quadratic form needs a square matrix")
        if not np.allclose(H, H.conj().T, atol=1e-10 * max(1.0, np.abs(H).max())):
            raise ValueError("quadratic form matrix must be Hermitian")
        object.__setattr__(self, "matrix", H)

    @property
    def real(self) -> np.ndarray:
        P = np.real(self.matrix)
        return 0.5 * (P + P.T)

    def value(self, psi) -> np.ndarray:
        x = np.asarray(psi, dtype=float)
        v = np.einsum("...i,ij,...j->...", x, self.real, x) + self.constant
        if self.linear is not None:
            v = v + x @ np.asarray(self.linear, dtype=float)
        return v

    def grad(self, psi) -> np.ndarray:
        x = np.asarray(psi, dtype=float)
        g = 2.0 * x @ self.real
        if self.linear is not None:
            g = g + np.asarray(self.linear, dtype=float)
        return g

    def as_dc(self) -> DCQuad:
        q = None if self.linear is None else np.asarray(self.linear, dtype=float)
        return DCQuad.from_matrix(self.real, q, self.constant)

    def __add__(self, other: "QuadForm") -> "QuadForm":
        lin = None
        if self.linear is not None or other.linear is not None:
            n = self.matrix.shape[0]
            lin = (np.zeros(n) if self.linear is None else self.linear) + (
                np.zeros(n) if other.linear is None else other.linear
            )
        return QuadForm(self.matrix + other.matrix, lin, self.constant + other.constant)

    def scaled(self, s: float) -> "QuadForm":
        lin = None if self.linear is None else s * np.asarray(self.linear)
        return QuadForm(s * self.matrix, lin, s * self.constant)


@dataclass(frozen=True)
class QcqpConstraint:
    form: QuadForm
    sense: str  # ">=" or "<="
    bound: float

    def __post_init__(self):
        if self.sense not in (">=", "<="):
            raise ValueError("sense must be '>=' or '<='")


@dataclass(frozen=True)
class QcqpSpec:
    """Maximize a quadratic form of the pattern over box and leakage caps.

    The digital beamformer is fixed and already folded into the forms; it is
    kept here only so reports can carry it.
    """

    cfg: RhsConfig
    objective: QuadForm
    constraints: tuple[QcqpConstraint, ...] = ()
    window: ApertureWindow | None = None
    box: tuple[float, float] = (0.0, 1.0)
    leakage_cap: float = 1.0
    digital: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.window is None:
            object.__setattr__(self, "window", ApertureWindow.full(self.cfg))
        lo, hi = self.box
        if lo != 0.0 or not 0.0 < hi <= 1.0:
            raise ValueError("amplitude box must be [0, hi] with 0 < hi <= 1")
        if not self.leakage_cap > 0:
            raise ValueError("leakage cap must be positive")
        n = self.cfg.size
        for f in [self.objective] + [c.form for c in self.constraints]:
            if f.matrix.shape != (n, n):
                raise ValueError("form dimension does not match the surface")

    def domain(self) -> AmplitudeDomain:
        return AmplitudeDomain(self.cfg, self.window, self.leakage_cap, self.box[1])

    def finite_constraints(self) -> list[QcqpConstraint]:
        return [c for c in self.constraints if math.isfinite(c.bound)]

    def constraint_slack(self, psi) -> np.ndarray:
        """Slack of each finite constraint, normalized by ``max(|bound|, 1)``."""
        out = []
        for c in self.finite_constraints():
            v = c.form.value(psi)
            s = max(abs(c.bound), 1.0)
            out.append((v - c.bound) / s if c.sense == ">=" else (c.bound - v) / s)
        return np.array(out, dtype=float).reshape(len(out), *np.shape(psi)[:-1])

    def feasible(self, psi) -> np.ndarray:
        """Batched feasibility test (box, leakage, constraints)."""
        x = np.asarray(psi, dtype=float)
        dom = self.domain()
        ok = np.all(x >= 0.0, axis=-1) & np.all(x <= dom.hi, axis=-1)
        ok &= np.all(dom.slack(x) >= -LEAKAGE_TOL, axis=-1)
        if self.finite_constraints():
            ok &= np.all(self.constraint_slack(x) >= -CONSTRAINT_TOL, axis=0)
        return ok


def probe_vector(cfg: RhsConfig, probe, digital=None, window: ApertureWindow | None = None) -> np.ndarray:
    """Columns ``C`` with ``probe^T D diag(psi) F B = psi^T C``."""
    F = build_propagation_matrix(cfg)
    if digital is None:
        digital = np.ones(cfg.feed_count) / math.sqrt(cfg.feed_count)
    B = np.asarray(digital, dtype=complex)
    if B.ndim == 1:
        B = B[:, None]
    mask = (window or ApertureWindow.full(cfg)).mask(cfg)
    return (np.asarray(probe, dtype=complex) * mask)[:, None] * (F @ B)


def power_form(cfg: RhsConfig, probe, digital=None, window=None, scale: float = 1.0) -> QuadForm:
    """``scale * ||probe^T D diag(psi) F B||^2`` as a quadratic form."""
    C = probe_vector(cfg, probe, digital, window)
    return QuadForm(scale * (C.conj() @ C.T))


# ---------------------------------------------------------------- solver


def _finish(spec: QcqpSpec, xs, values, traces, seed, restarts, extras=None) -> SolveReport:
    values = np.asarray(values, dtype=float)
    best = int(np.argmax(values))  # first maximum = lowest restart index
    x = spec.domain().repair(xs[best])
    pattern = HolographicPattern.clipped(x)
    slack = leakage_margins(spec.cfg, pattern, spec.window) - (1.0 - spec.leakage_cap)
    cs = spec.constraint_slack(x)
    return SolveReport(
        status="optimal",
        objective=float(spec.objective.value(x)),
        pattern=pattern,
        digital=spec.digital,
        window=spec.window,
        objective_trace=list(traces[best]),
        min_leakage_slack=float(slack.min()),
        min_constraint_slack=float(cs.min()) if cs.size else math.inf,
        seed=seed,
        restarts_used=restarts,
        traces=[list(t) for t in traces],
        best_restart=best,
        extras=extras or {},
        restart_solutions=[spec.domain().repair(x) for x in xs],
    )


def solve_pattern_qcqp(
    spec: QcqpSpec,
    restarts: int = 16,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 500,
    starts: list[np.ndarray] | None = None,
    models: dict | None = None,
) -> SolveReport:
    """Best-of-restarts local maximization of ``spec``.

    Box and leakage alone are handled by projected-gradient ascent with an
    exact projection; further constraints switch to the convex-concave
    procedure.  ``starts`` adds caller-supplied initial points ahead of the
    random ones (they count as the lowest restart indices).
    """
    if restarts < 1:
        raise ValueError("need at least one restart")
    dom = spec.domain()
    rngs = child_rngs(seed, restarts)
    x0 = [dom.project(np.asarray(s, dtype=float)) for s in (starts or [])]
    if rngs:  # same draws as dom.random, projected in one batch
        x0 += list(dom.project(np.stack([r.uniform(0.0, 1.0, dom.n) * dom.mask for r in rngs])))
    total = len(x0)
    cons = spec.finite_constraints()
    if not cons:
        P = spec.objective.real
        lin = None if spec.objective.linear is None else np.asarray(spec.objective.linear, dtype=float)

        def fun(x, idx):
            f = spec.objective.value(x)
            g = 2.0 * x @ P
            if lin is not None:
                g = g + lin
            return f, g

        xs, fs, traces = pg_ascent(fun, np.stack(x0), dom.project, max_iter=max_iter, rtol=tol)
        return _finish(spec, xs, fs, traces, seed, total)

    obj = spec.objective.as_dc()
    dc_cons = [(c.form.as_dc(), c.sense, c.bound) for c in cons]
    models = {} if models is None else models
    xs, fs, traces = [], [], []
    attempts = 0
    budget = 10 * total
    queue = list(x0)
    extra_rng = np.random.default_rng([int(seed), total, 7])
    while queue and attempts < budget:
        start = queue.pop(0)
        attempts += 1
        res = ccp_maximize(obj, dc_cons, dom, start, max_iter=max_iter, rtol=tol, models=models)
        if res.feasible:
            xs.append(res.x)
            fs.append(res.value)
            traces.append(res.trace)
        elif len(xs) == 0 and attempts < budget:
            queue.append(dom.random(extra_rng))
    if not xs:
        return SolveReport(
            status="infeasible",
            objective=-math.inf,
            pattern=None,
            digital=spec.digital,
            window=spec.window,
            objective_trace=[],
            min_leakage_slack=math.nan,
            min_constraint_slack=-math.inf,
            seed=seed,
            restarts_used=attempts,
            extras={"reason": f"no feasible starting point in {attempts} attempts"},
        )
    return _finish(spec, xs, fs, traces, seed, attempts)


# ---------------------------------------------------------------- oracles


@dataclass
class OracleResult:
    pattern: HolographicPattern | None
    value: float
    candidates: int
    status: str = "optimal"


def brute_force_oracle(spec: QcqpSpec, levels: int, max_vars: int = 8, chunk: int = 65536) -> OracleResult:
    """Exhaustive search over the quantized amplitude grid."""
    if levels < 2:
        raise ValueError("need at least two levels")
    active = np.flatnonzero(spec.window.mask(spec.cfg) > 0)
    if active.size > max_vars:
        raise ValueError(f"refusing to enumerate {levels}^{active.size} candidates (limit {max_vars} variables)")
    grid = np.arange(levels) / (levels - 1)
    grid = grid[grid <= spec.box[1] + 1e-15]
    best_val, best_x, count = -math.inf, None, 0
    combos = itertools.product(range(grid.size), repeat=active.size)
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            break
        idx = np.asarray(block, dtype=int).reshape(len(block), active.size)
        X = np.zeros((idx.shape[0], spec.cfg.size))
        X[:, active] = grid[idx]
        count += X.shape[0]
        ok = spec.feasible(X)
        if not np.any(ok):
            continue
        vals = np.where(ok, spec.objective.value(X), -np.inf)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_x = float(vals[k]), X[k]
    if best_x is None:
        return OracleResult(None, -math.inf, count, status="no feasible point")
    return OracleResult(HolographicPattern.clipped(best_x), best_val, count)


def quantize_solution(
    spec: QcqpSpec,
    pattern: HolographicPattern | np.ndarray | list,
    levels: int,
    polish: bool = True,
    draws: int = 64,
    seed: int = 0,
    keep: int = 8,
) -> HolographicPattern:
    """Map continuous solutions onto the amplitude grid.

    Candidates are the nearest-level rounding plus ``draws`` randomized
    roundings (each element rounds up with probability equal to its
    fractional level).  Rounding can push a row over its leakage cap, so
    offending rows are lowered one level at a time, largest radiated power
    first.  With ``polish`` the ``keep`` best candidates are refined by a
    best-improvement grid search (single elements to any level, then pairs).
    ``pattern`` may also be a list of solutions (e.g. one per restart).
    """
    if levels < 2:
        raise ValueError("need at least two levels")
    if isinstance(pattern, HolographicPattern):
        sols = [pattern.amplitudes]
    else:
        arr = np.asarray([p.amplitudes if isinstance(p, HolographicPattern) else p for p in pattern], dtype=float)
        sols = list(np.atleast_2d(arr))
    step = levels - 1
    hi_level = int(math.floor(spec.box[1] * step + 1e-12))
    dom = spec.domain()
    mask = dom.mask > 0
    rng = np.random.default_rng([int(seed), levels])

    def amp(kk):
        return kk / step

    def repair(k):
        k = np.clip(k, 0, hi_level)
        k[..., ~mask] = 0
        for _ in range(levels * spec.cfg.size):
            slack = dom.slack(amp(k))
            bad = np.flatnonzero(slack < -LEAKAGE_TOL)
            if bad.size == 0:
                break
            r = bad[0]
            row_elems = np.flatnonzero((dom.rows == r) & (k > 0))
            contrib = dom.eta[row_elems] * amp(k[row_elems]) ** 2
            k[row_elems[int(np.argmax(contrib))]] -= 1
        return k

    cands = []
    for x in sols:
        lv = x * step
        cands.append(np.ceil(lv - 0.5))
        frac = lv - np.floor(lv)
        up = rng.random((draws, lv.size)) < frac
        cands.extend(np.floor(lv) + up)
    cands = np.unique(np.asarray(cands, dtype=int), axis=0)
    cands = np.unique(np.stack([repair(k.copy()) for k in cands]), axis=0)
    vals = spec.objective.value(amp(cands))
    vals = np.where(spec.feasible(amp(cands)), vals, -np.inf)
    order = np.argsort(-vals, kind="stable")
    if not polish:
        return HolographicPattern.clipped(amp(cands[order[0]]))

    active = np.flatnonzero(mask)
    lv = np.arange(hi_level + 1)

    def best_move(k):
        moves = []
        for n in active:
            c = np.repeat(k[None, :], lv.size, axis=0)
            c[:, n] = lv
            moves.append(c)
        for i, j in itertools.combinations(active, 2):
            c = np.repeat(k[None, :], lv.size**2, axis=0)
            c[:, i] = np.repeat(lv, lv.size)
            c[:, j] = np.tile(lv, lv.size)
            moves.append(c)
        C = np.concatenate(moves)
        X = amp(C)
        v = np.where(spec.feasible(X), spec.objective.value(X), -np.inf)
        b = int(np.argmax(v))
        return C[b], float(v[b])

    best_k, best_v = cands[order[0]], float(vals[order[0]])
    for idx in order[:keep]:
        k, cur = cands[idx], float(vals[idx])
        for _ in range(100 * max(active.size, 1)):
            kn, v = best_move(k)
            if not v > cur + 1e-12 * max(abs(cur), 1e-300):
                break
            k, cur = kn, v
        if cur > best_v:
            best_k, best_v = k, cur
    return HolographicPattern.clipped(amp(best_k))


def _max_linear(u: np.ndarray, dom: AmplitudeDomain) -> np.ndarray:
    """argmax of ``u.x`` over the amplitude domain, batched over rows of ``u``."""
    u = np.atleast_2d(u)
    pos = np.where(u > 0, u, 0.0)
    x = np.where(pos > 0, dom.hi, 0.0)
    used = dom.leakage(x)
    over = used > dom.cap
    if not np.any(over):
        return x
    eta = np.where(dom.eta > 0, dom.eta, 1.0)

    def sol(nu):
        return np.clip(pos / (2.0 * nu[..., dom.rows] * eta), 0.0, dom.hi)

    lo = np.full(used.shape, 1e-300)
    hi = np.ones(used.shape)
    for _ in range(400):
        bad = over & (dom.leakage(sol(hi)) > dom.cap)
        if not np.any(bad):
            break
        hi = np.where(bad, hi * 4.0, hi)
    lo = np.where(over, hi / 4.0 ** 60, lo)
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        big = dom.leakage(sol(mid)) > dom.cap
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
    x_over = sol(hi)
    return np.where(over[..., dom.rows], x_over, x)


def max_directional_power(
    cfg: RhsConfig,
    c: np.ndarray,
    window: ApertureWindow | None = None,
    cap: float = 1.0,
    hi: float = 1.0,
    grid: int = 720,
) -> tuple[float, HolographicPattern]:
    """Global maximum of ``|c^T psi|^2`` over box and leakage caps.

    Uses ``|z| = max_w Re(exp(-1j w) z)``: for each phase ``w`` the inner
    problem is linear over a convex set and solved exactly; the phase is
    scanned on a grid and refined by golden-section search.
    """
    dom = AmplitudeDomain(cfg, window, cap, hi)
    c = np.asarray(c, dtype=complex)

    def g(ws):
        u = np.real(np.exp(-1j * np.asarray(ws))[:, None] * c[None, :])
        x = _max_linear(u, dom)
        return np.einsum("ij,ij->i", u, x), x

    ws = np.linspace(0.0, 2 * math.pi, grid, endpoint=False)
    vals, _ = g(ws)
    k = int(np.argmax(vals))
    a, b = ws[k] - 2 * math.pi / grid, ws[k] + 2 * math.pi / grid
    phi = (math.sqrt(5) - 1) / 2
    for _ in range(80):
        m1 = b - phi * (b - a)
        m2 = a + phi * (b - a)
        v, _ = g([m1, m2])
        if v[0] >= v[1]:
            b = m2
        else:
            a = m1
    v, x = g([0.5 * (a + b)])
    x = dom.repair(x[0])
    return float(abs(c @ x) ** 2), HolographicPattern.clipped(x)
