"""Communication/sensing trade-off fronts for a single-feed linear surface."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..rhs import RhsConfig, polar_from_broadside
from ..wavefield import planar_steering, steering
from .core import ParetoPoint
from .qcqp import QcqpConstraint, QcqpSpec, QuadForm, max_directional_power, power_form, probe_vector, solve_pattern_qcqp


@dataclass(frozen=True)
class ParetoScenario:
    """Targets and communication paths, all as broadside angles in radians.

    ``comm_paths`` holds ``(angle, G)`` pairs; one pair is the LoS case, two
    pairs the LoS-plus-scatterer case.
    """

    targets: tuple[float, ...]
    comm_paths: tuple[tuple[float, float], ...]
    p_t: float = 1.0
    noise: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(float(t) for t in self.targets))
        object.__setattr__(self, "comm_paths", tuple((float(a), float(g)) for a, g in self.comm_paths))
        if not self.targets:
            raise ValueError("need at least one target")
        if not self.comm_paths:
            raise ValueError("need at least one communication path")
        if any(g < 0 for _, g in self.comm_paths):
            raise ValueError("path gains must be non-negative")
        if not self.p_t > 0 or not self.noise > 0:
            raise ValueError("power budget and noise must be positive")


def _steer(cfg: RhsConfig, angle: float) -> np.ndarray:
    return planar_steering(cfg, polar_from_broadside(angle))


def _comm_probe(cfg: RhsConfig, sc: ParetoScenario) -> np.ndarray:
    return sum(math.sqrt(g) * _steer(cfg, a) for a, g in sc.comm_paths)


def sensing_form(cfg: RhsConfig, sc: ParetoScenario) -> QuadForm:
    x = np.full(cfg.feed_count, math.sqrt(sc.p_t / cfg.feed_count))
    forms = [power_form(cfg, _steer(cfg, t), x) for t in sc.targets]
    out = forms[0]
    for f in forms[1:]:
        out = out + f
    return out


def snr_form(cfg: RhsConfig, sc: ParetoScenario) -> QuadForm:
    x = np.full(cfg.feed_count, math.sqrt(sc.p_t / cfg.feed_count))
    return power_form(cfg, _comm_probe(cfg, sc), x, scale=1.0 / sc.noise)


def max_snr(cfg: RhsConfig, sc: ParetoScenario):
    """Exact largest achievable user SNR and a pattern attaining it."""
    x = np.full(cfg.feed_count, math.sqrt(sc.p_t / cfg.feed_count))
    c = probe_vector(cfg, _comm_probe(cfg, sc), x)[:, 0]
    power, pattern = max_directional_power(cfg, c)
    return power / sc.noise, pattern


def pareto_front(
    scenario: ParetoScenario,
    thresholds: Sequence[float],
    cfg: RhsConfig,
    seed: int = 0,
    restarts: int = 8,
) -> list[ParetoPoint]:
    """Maximum sensing power for each SNR threshold (linear, ascending).

    Thresholds are solved from the highest down, each warm-started from the
    previous solution, so the front is non-increasing by construction.
    Thresholds above the exact maximum SNR are flagged infeasible.
    """
    th = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(th, th[1:])):
        raise ValueError("thresholds must be sorted ascending")
    obj = sensing_form(cfg, scenario)
    snr = snr_form(cfg, scenario)
    top, top_pattern = max_snr(cfg, scenario)
    models: dict = {}
    points: dict[int, ParetoPoint] = {}
    prev = None
    for i in range(len(th) - 1, -1, -1):
        gamma = th[i]
        if gamma > top:
            points[i] = ParetoPoint(gamma, math.nan, feasible=False)
            continue
        cons = (QcqpConstraint(snr, ">=", gamma),) if gamma > 0 else ()
        spec = QcqpSpec(cfg, obj, cons)
        starts = [top_pattern.amplitudes] + ([] if prev is None else [prev])
        rep = solve_pattern_qcqp(spec, restarts=restarts, seed=seed, starts=starts, models=models)
        if not rep.feasible:
            points[i] = ParetoPoint(gamma, math.nan, feasible=False)
            continue
        prev = rep.pattern.amplitudes
        points[i] = ParetoPoint(gamma, rep.objective, True, float(snr.value(prev)))
    return [points[i] for i in range(len(th))]


def feasible_points(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    return [p for p in points if p.feasible]


def pareto_rows(points: Sequence[ParetoPoint]) -> list[dict]:
    """Rows for the ``gamma_c_db,p_s_w`` table (feasible points only)."""
    rows = []
    for p in feasible_points(points):
        db = 10 * math.log10(p.comm_level) if p.comm_level > 0 else -math.inf
        rows.append({"gamma_c_db": db, "p_s_w": p.sensing_power})
    return rows


# ---------------------------------------------------------------- phased-array reference


def pa_reference_front(
    scenario: ParetoScenario,
    elements: int,
    thresholds: Sequence[float],
    grid: int = 41,
) -> list[ParetoPoint]:
    """Unit-modulus phased array at half-wavelength spacing.

    Weights are ``sqrt(P_t/N) exp(1j arg v)`` with ``v`` a non-negative
    combination of the conjugate target and user steering vectors; the
    front is the upper envelope of that family.
    """
    N = int(elements)
    A = [steering(N, 0.5, t) for t in scenario.targets]
    h = sum(math.sqrt(g) * steering(N, 0.5, a) for a, g in scenario.comm_paths)
    hn = h / max(np.linalg.norm(h), 1e-300)
    basis = [a.conj() for a in A] + [hn.conj()]
    ticks = np.linspace(0.0, 1.0, grid)
    combos = []
    for w in np.ndindex(*(grid,) * (len(basis) - 1)):
        head = ticks[list(w)]
        if head.sum() <= 1.0 + 1e-12:
            combos.append(np.append(head, 1.0 - head.sum()))
    ps, snr = [], []
    for c in combos:
        v = sum(ci * b for ci, b in zip(c, basis))
        w = math.sqrt(scenario.p_t / N) * np.exp(1j * np.angle(v))
        ps.append(sum(abs(a @ w) ** 2 for a in A))
        snr.append(abs(h @ w) ** 2 / scenario.noise)
    ps, snr = np.asarray(ps), np.asarray(snr)
    out = []
    for g in thresholds:
        ok = snr >= g
        if np.any(ok):
            out.append(ParetoPoint(float(g), float(ps[ok].max()), True, float(snr[ok][np.argmax(ps[ok])])))
        else:
            out.append(ParetoPoint(float(g), math.nan, False))
    return out
