"""Multi-user beam training with hierarchical multi-lobe holographic codewords.

Locations live in the ``(phi, mu)`` domain with ``phi = cos(theta)`` (theta
measured from the surface axis) and ``mu = sin(theta)^2 / r``.  Training runs
``layers`` binary angle comparisons followed by ``J`` distance codewords; every
user decodes its own cell from the received powers, so the slot count does not
depend on the number of users.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .beamopt.core import AmplitudeDomain
from .rhs import (
    ApertureWindow,
    HolographicPattern,
    RhsConfig,
    build_propagation_matrix,
    pattern_for_direction,
    pattern_for_point,
    scale_to_leakage,
)
from .wavefield import HybridChannel, planar_steering

SPAN = math.sin(math.radians(60.0))


# ---------------------------------------------------------------- (phi, mu) domain


@dataclass(frozen=True)
class PhiMuPoint:
    phi: float
    mu: float

    def __post_init__(self):
        if not -1.0 <= self.phi <= 1.0:
            raise ValueError("phi must lie in [-1, 1]")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")


def phi_mu_transform(theta: float, range_: float) -> PhiMuPoint:
    """``(theta, r) -> (cos theta, sin^2 theta / r)``; ``r = inf`` gives ``mu = 0``."""
    if not range_ > 0:
        raise ValueError("range must be positive")
    mu = 0.0 if math.isinf(range_) else math.sin(theta) ** 2 / range_
    return PhiMuPoint(float(np.clip(math.cos(theta), -1.0, 1.0)), mu)


def phi_mu_inverse(point: PhiMuPoint) -> tuple[float, float]:
    """Back to ``(theta, r)`` with ``theta`` in ``[0, pi]``."""
    theta = math.acos(point.phi)
    if point.mu == 0:
        return theta, math.inf
    return theta, (1.0 - point.phi**2) / point.mu


def _location(point: PhiMuPoint, azimuth: float = 0.0) -> tuple[float, float, float]:
    theta, r = phi_mu_inverse(point)
    rho = r * math.sin(theta)
    return (rho * math.cos(azimuth), rho * math.sin(azimuth), r * math.cos(theta))


def location_steering(cfg: RhsConfig, point: PhiMuPoint, azimuth: float = 0.0) -> np.ndarray:
    """Unit-norm channel from the surface to a user at ``point``.

    ``azimuth`` rotates the user about the surface axis away from the x-z plane.
    """
    theta, r = phi_mu_inverse(point)
    if math.isinf(r):
        return planar_steering(cfg, (theta, azimuth))
    x, yu, z0 = _location(point, azimuth)
    y, z = cfg.positions()
    dist = np.sqrt(x**2 + (y - yu) ** 2 + (z - z0) ** 2)
    # dist - r without cancellation at large r
    delta = (y**2 + z**2 - 2.0 * (y * yu + z * z0)) / (dist + r)
    return np.exp(-1j * cfg.wavenumber * delta) / math.sqrt(cfg.size)


def focus_pattern(cfg: RhsConfig, point: PhiMuPoint) -> HolographicPattern:
    """Holographic pattern focusing on ``point`` (plane-wave pattern when ``mu = 0``)."""
    theta, r = phi_mu_inverse(point)
    if math.isinf(r):
        return pattern_for_direction(cfg, (theta, 0.0))
    return pattern_for_point(cfg, _location(point))


# ---------------------------------------------------------------- codebook


@dataclass(frozen=True)
class Codeword:
    pattern: HolographicPattern
    cells: tuple[tuple[float, float], ...]  # covered phi intervals
    gain_target: float


@dataclass(frozen=True)
class Codebook:
    cfg: RhsConfig  # single-row aperture the codewords are designed for
    layers: tuple[tuple[Codeword, ...], ...]
    span: tuple[float, float]
    mu_max: float
    epsilon: float = 0.5

    @property
    def depth(self) -> int:
        return len(self.layers)

    def cell_edges(self, layer: int) -> np.ndarray:
        lo, hi = self.span
        return np.linspace(lo, hi, 2 ** (layer + 1) + 1)


def cell_bounds(span: tuple[float, float], layer: int, index: int) -> tuple[float, float]:
    lo, hi = span
    w = (hi - lo) / 2 ** (layer + 1)
    return lo + index * w, lo + (index + 1) * w


def _codeword_rows(cfg: RhsConfig, phis: np.ndarray, mus: np.ndarray) -> np.ndarray:
    """Rows ``c`` with received amplitude ``c . psi`` (single feed, unit input)."""
    f = build_propagation_matrix(cfg)[:, 0]
    rows = []
    for m in mus:
        for p in phis:
            rows.append(location_steering(cfg, PhiMuPoint(float(p), float(m))) * f)
    return np.array(rows)


def _ls_design(C: np.ndarray, G: np.ndarray, dom: AmplitudeDomain, x0: np.ndarray, iters: int) -> np.ndarray:
    """Projected gradient on ``sum (|C psi| - G)^2`` with backtracking."""

    def f(x):
        return float(np.sum((np.abs(C @ x) - G) ** 2))

    def grad(x):
        s = C @ x
        mag = np.maximum(np.abs(s), 1e-300)
        return 2.0 * np.real(((mag - G) * np.conj(s) / mag) @ C)

    x = dom.project(x0)
    fx = f(x)
    step = 1.0 / max(np.linalg.norm(C, 2) ** 2, 1e-300)
    for _ in range(iters):
        g = grad(x)
        while True:
            y = dom.project(x - step * g)
            fy = f(y)
            if fy <= fx - 1e-4 / step * np.sum((y - x) ** 2) or step < 1e-12:
                break
            step *= 0.5
        if fx - fy <= 1e-10 * max(fx, 1e-300):
            x, fx = y, fy
            break
        x, fx = y, fy
        step *= 1.5
    return x


def design_angle_codebook(
    cfg: RhsConfig,
    layers: int = 5,
    samples: tuple[int, int] | None = None,
    gain: float | None = None,
    seed: int = 0,
    span: tuple[float, float] = (-SPAN, SPAN),
    mu_max: float = 0.0,
    iters: int = 400,
) -> Codebook:
    """Two multi-lobe codewords per layer splitting ``span`` bit by bit.

    Codeword ``p`` of layer ``s`` covers the layer-``s`` cells whose last bit
    is ``p``.  ``gain`` is the in-cell amplitude target; by default it is set
    by energy conservation from the initial pattern.  ``samples = (I, J)``
    gives the phi and mu sample counts (default ``4 * 2^layers`` and ``2``).
    """
    if layers < 1:
        raise ValueError("need at least one layer")
    if cfg.rows != 1:
        raise ValueError("codewords are designed on a single-row aperture")
    I, J = samples or (4 * 2**layers, 2)
    if I < 2 or J < 2:
        raise ValueError("need at least two samples per axis")
    lo, hi = span
    phis = lo + (np.arange(I) + 0.5) * (hi - lo) / I
    mus = np.linspace(0.0, mu_max, J)
    C = _codeword_rows(cfg, phis, mus)
    phi_all = np.tile(phis, J)
    dom = AmplitudeDomain(cfg)
    out = []
    for s in range(layers):
        cells = 2 ** (s + 1)
        idx = np.minimum(((phi_all - lo) / (hi - lo) * cells).astype(int), cells - 1)
        row = []
        for p in (0, 1):
            covered = [cell_bounds(span, s, c) for c in range(cells) if c % 2 == p]
            inside = idx % 2 == p
            centers = [0.5 * (a + b) for a, b in covered]
            init = np.mean([pattern_for_direction(cfg, (math.acos(c), 0.0)).amplitudes for c in centers], axis=0)
            init = dom.project(init * _fit_scale(dom, init))
            if gain is None:
                # radiated in-span energy of the initial pattern, packed into the covered cells
                D = math.sqrt(0.8 * np.mean(np.abs(C @ init) ** 2) * phi_all.size / inside.sum())
            else:
                D = float(gain)
            G = np.where(inside, D, 0.0)
            x = _ls_design(C, G, dom, init, iters)
            row.append(Codeword(HolographicPattern.clipped(x), tuple(covered), D))
        out.append(tuple(row))
    return Codebook(cfg, tuple(out), (float(lo), float(hi)), float(mu_max))


def gain_contrast(codebook: Codebook, samples: int = 1000, mu_samples: int = 4) -> list[float]:
    """Per-layer worst ratio of mean in-cell to mean out-of-cell gain.

    Gains are received amplitudes ``|a(phi, mu) M b|`` on a dense phi grid
    over the span; the minimum runs over both codewords of a layer and over
    ``mu_samples`` values spanning ``[0, mu_max]``.
    """
    lo, hi = codebook.span
    phis = np.linspace(lo, hi, samples + 2)[1:-1]
    mus = np.linspace(0.0, codebook.mu_max, mu_samples) if codebook.mu_max > 0 else np.zeros(1)
    amp = np.abs(_codeword_rows(codebook.cfg, phis, mus) @ np.stack(
        [cw.pattern.amplitudes for layer in codebook.layers for cw in layer], axis=1
    )).reshape(mus.size, phis.size, -1)
    out = []
    for s in range(codebook.depth):
        cells = 2 ** (s + 1)
        idx = np.minimum(((phis - lo) / (hi - lo) * cells).astype(int), cells - 1)
        worst = math.inf
        for p in (0, 1):
            inside = idx % 2 == p
            a = amp[:, :, 2 * s + p]
            worst = min(worst, float(np.min(a[:, inside].mean(axis=1) / a[:, ~inside].mean(axis=1))))
        out.append(worst)
    return out


def _fit_scale(dom: AmplitudeDomain, x: np.ndarray) -> float:
    used = dom.leakage(x).max()
    return min(math.sqrt(dom.cap / used), 1.0 / max(x.max(), 1e-300)) if used > 0 else 1.0


def range_bins(mu_max: float, J: int) -> np.ndarray:
    """Bin edges uniform in ``mu``."""
    if J < 1:
        raise ValueError("need at least one range bin")
    return np.linspace(0.0, mu_max, J + 1)


def bin_centers(mu_max: float, J: int) -> np.ndarray:
    e = range_bins(mu_max, J)
    return 0.5 * (e[:-1] + e[1:]) if mu_max > 0 else np.zeros(J)


def design_distance_codewords(
    cfg: RhsConfig, user_angles: Sequence[float], range_bins_count: int, mu_max: float = 0.0
) -> list[HolographicPattern]:
    """Average of per-user focusing patterns at each ``mu`` bin centre.

    ``user_angles`` are ``phi`` values.  The average is scaled down onto the
    leakage budget when needed.
    """
    if len(user_angles) < 1:
        raise ValueError("need at least one user")
    centers = bin_centers(mu_max, range_bins_count)
    out = []
    for m in centers:
        pats = [focus_pattern(cfg, PhiMuPoint(float(p), float(m))).amplitudes for p in user_angles]
        avg = HolographicPattern.clipped(np.mean(pats, axis=0))
        out.append(scale_to_leakage(cfg, avg, ApertureWindow.full(cfg)))
    return out


# ---------------------------------------------------------------- windows


def window_count(N: int, N_a: int) -> int:
    if not 1 <= N_a <= N:
        raise ValueError("need 1 <= N_a <= N")
    return N - N_a + 1


def place(cfg: RhsConfig, codeword: HolographicPattern, offset: int) -> np.ndarray:
    """Full-aperture amplitudes with the codeword at ``offset`` on every row."""
    n_a = len(codeword)
    if offset < 0 or offset + n_a > cfg.cols:
        raise ValueError("window does not fit inside the surface")
    grid = np.zeros((cfg.cols, cfg.rows))
    grid[offset : offset + n_a, :] = codeword.amplitudes[:, None]
    return grid.ravel()  # element index n = n_z * rows + n_y


def _received(cfg: RhsConfig, F: np.ndarray, h: np.ndarray, amplitudes: np.ndarray, offset: int) -> float:
    """Received power for equal feed drive, compensated for guided-wave loss up to the window."""
    b = np.ones(cfg.rows) / math.sqrt(cfg.rows)
    s = h @ (amplitudes * (F @ b))
    comp = math.exp(2.0 * cfg.attenuation * offset * cfg.element_spacing)
    return float(abs(s) ** 2 * comp)


def sliding_window_select(
    cfg: RhsConfig, N_a: int, channel: HybridChannel | np.ndarray, codeword: HolographicPattern
) -> tuple[int, float]:
    """Window offset with the strongest received power (ties go to the lowest offset).

    Powers are compensated for the guided-wave attenuation in front of each
    window so that positions compete on channel quality alone.
    """
    if len(codeword) != N_a:
        raise ValueError("codeword length must equal N_a")
    h = np.asarray(channel.vector if isinstance(channel, HybridChannel) else channel, dtype=complex)
    F = build_propagation_matrix(cfg)
    powers = [_received(cfg, F, h, place(cfg, codeword, o), o) for o in range(window_count(cfg.cols, N_a))]
    best = int(np.argmax(np.asarray(powers) > max(powers) * (1 - 1e-12)))
    return best, powers[best]


# ---------------------------------------------------------------- training


@dataclass
class SlotRecord:
    slot: int
    phase: str
    codeword: str
    window: list[int]  # chosen offset per user
    power: list[float]  # measured power per user


@dataclass
class TrainingTrace:
    slots: list[SlotRecord]
    estimates: list[tuple[float, float] | None]  # per-user (phi_hat, mu_hat)
    cells: list[tuple[int, int] | None]  # per-user (terminal angle cell, range bin)
    correct: list[bool]
    failed: list[bool]
    slots_used: int
    pattern: HolographicPattern | None = None
    digital: np.ndarray | None = field(default=None, repr=False)
    interference: float = math.nan  # max |h_u^T M b_u'| / max |h_u^T M b_u|

    def to_dict(self) -> dict:
        return {
            "slots": [s.__dict__ for s in self.slots],
            "estimates": [None if e is None else {"phi": e[0], "mu": e[1]} for e in self.estimates],
            "cells": self.cells,
            "correct": self.correct,
            "failed": self.failed,
            "slots_used": self.slots_used,
            "interference": self.interference,
        }


@dataclass(frozen=True)
class TrainingUser:
    """Location as ``(theta, r)`` with theta from the surface axis; ``r = inf`` for far field.

    ``azimuth`` is the rotation about the axis; it only matters on surfaces
    with several rows, where it separates the users for zero forcing.
    """

    theta: float
    range: float = math.inf
    azimuth: float = 0.0

    @property
    def point(self) -> PhiMuPoint:
        return phi_mu_transform(self.theta, self.range)


def user_channel(cfg: RhsConfig, user: TrainingUser, kappa: float | None, rng: np.random.Generator, scatterers: int = 12):
    """LoS channel, or Rician with ``scatterers`` random far-field paths."""
    los = location_steering(cfg, user.point, user.azimuth)
    if kappa is None:
        return los
    g = (rng.standard_normal(scatterers) + 1j * rng.standard_normal(scatterers)) / math.sqrt(2 * scatterers)
    th = np.arccos(rng.uniform(-1, 1, scatterers))
    nlos = sum(gi * planar_steering(cfg, (t, 0.0)) for gi, t in zip(g, th))
    return math.sqrt(kappa / (kappa + 1)) * los + math.sqrt(1 / (kappa + 1)) * nlos


def run_training(
    cfg: RhsConfig,
    users: Sequence[TrainingUser],
    codebook: Codebook,
    range_bins_count: int,
    snr_db: float = math.inf,
    windows: bool = False,
    seed: int = 0,
    kappa: float | None = None,
) -> TrainingTrace:
    """Angle search, distance search, then a zero-forcing final stage.

    ``snr_db`` is the ratio of the user's received power under its own
    leakage-feasible focusing pattern (first window) to the per-measurement
    noise power.
    With ``windows`` every codeword is tried at each window offset and the
    strongest (loss-compensated) measurement counts; otherwise only the
    first window is used.  Window sweeps happen inside a slot.
    """
    N_a = codebook.cfg.cols
    if codebook.cfg.element_spacing != cfg.element_spacing or N_a > cfg.cols:
        raise ValueError("codebook does not fit this surface")
    rng = np.random.default_rng(seed)
    F = build_propagation_matrix(cfg)
    U = len(users)
    lo, hi = codebook.span
    failed = [not lo <= u.point.phi <= hi for u in users]
    H = np.array([user_channel(cfg, u, kappa, rng) for u in users])
    offsets = list(range(window_count(cfg.cols, N_a))) if windows else [0]
    noise = []
    for u, user in enumerate(users):
        own = scale_to_leakage(codebook.cfg, focus_pattern(codebook.cfg, user.point), ApertureWindow.full(codebook.cfg))
        ref = place(cfg, own, 0)
        p = _received(cfg, F, H[u], ref, 0)
        noise.append(0.0 if math.isinf(snr_db) else p * 10 ** (-snr_db / 10))

    def measure(cw: HolographicPattern):
        best_p, best_o = [], []
        for u in range(U):
            vals = []
            for o in offsets:
                amp = place(cfg, cw, o)
                b = np.ones(cfg.rows) / math.sqrt(cfg.rows)
                s = H[u] @ (amp * (F @ b))
                if noise[u] > 0:
                    s = s + math.sqrt(noise[u] / 2) * (rng.standard_normal() + 1j * rng.standard_normal())
                vals.append(abs(s) ** 2 * math.exp(2.0 * cfg.attenuation * o * cfg.element_spacing))
            k = int(np.argmax(vals))
            best_p.append(float(vals[k]))
            best_o.append(offsets[k])
        return best_p, best_o

    slots: list[SlotRecord] = []
    cell = [0] * U
    for s, layer in enumerate(codebook.layers):
        powers = []
        for p, cw in enumerate(layer):
            pw, wo = measure(cw.pattern)
            slots.append(SlotRecord(len(slots), "angle", f"L{s}C{p}", wo, pw))
            powers.append(pw)
        for u in range(U):
            bit = int(powers[1][u] > powers[0][u])
            cell[u] = 2 * cell[u] + bit
    phi_hat = [0.5 * sum(cell_bounds(codebook.span, codebook.depth - 1, c)) for c in cell]
    mu_max = codebook.mu_max
    centers = bin_centers(mu_max, range_bins_count)
    dist_cw = design_distance_codewords(codebook.cfg, [phi_hat[u] for u in range(U) if not failed[u]] or phi_hat, range_bins_count, mu_max)
    dpow = []
    for j, cw in enumerate(dist_cw):
        pw, wo = measure(cw)
        slots.append(SlotRecord(len(slots), "distance", f"D{j}", wo, pw))
        dpow.append(pw)
    dpow = np.array(dpow)  # J x U
    jbin = [int(np.argmax(dpow[:, u])) for u in range(U)]
    edges = range_bins(mu_max, range_bins_count) if mu_max > 0 else None
    estimates, cells, correct = [], [], []
    for u, user in enumerate(users):
        if failed[u]:
            estimates.append(None)
            cells.append(None)
            correct.append(False)
            continue
        estimates.append((phi_hat[u], float(centers[jbin[u]])))
        cells.append((cell[u], jbin[u]))
        a, b = cell_bounds(codebook.span, codebook.depth - 1, cell[u])
        ok_phi = a - 1e-12 <= user.point.phi <= b + 1e-12
        if edges is None:
            ok_mu = True
        else:
            mu = user.point.mu
            ok_mu = edges[jbin[u]] - 1e-12 <= mu <= edges[jbin[u] + 1] + 1e-12 or (jbin[u] == len(centers) - 1 and mu > edges[-1])
        correct.append(bool(ok_phi and ok_mu))

    # final stage: averaged focusing pattern over the whole surface, ZF across feeds
    served = [u for u in range(U) if not failed[u]]
    pattern, B, leak = None, None, math.nan
    if served:
        pats = [focus_pattern(cfg, PhiMuPoint(*estimates[u])).amplitudes for u in served]
        pattern = scale_to_leakage(cfg, HolographicPattern.clipped(np.mean(pats, axis=0)), ApertureWindow.full(cfg))
        M = pattern.amplitudes[:, None] * F
        Heff = H[served] @ M  # U x L
        if len(served) <= cfg.rows:
            B = np.linalg.pinv(Heff)
            B = B / np.linalg.norm(B)
            E = np.abs(Heff @ B)
            off = E - np.diag(np.diag(E))
            leak = float(off.max() / max(np.diag(E).max(), 1e-300))
    return TrainingTrace(slots, estimates, cells, correct, failed, len(slots), pattern, B, leak)
