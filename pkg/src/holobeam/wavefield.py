"""Steering vectors, channels and radiated beampatterns.

Linear-array helpers (:func:`steering`, :class:`PathSpec`) take the
broadside angle ``theta`` (measured from the surface normal), so the
far-field entry of element ``n`` is ``exp(1j*2*pi*n*d*sin(theta)/lam)``.
Planar helpers take polar ``(theta, phi)`` as documented in
:mod:`holobeam.rhs`; for one row the two agree when
``sin(broadside) == cos(theta_polar)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .rhs import ApertureWindow, Beamformer, RhsConfig


def _element_offsets(N: int, spacing: float, centered: bool) -> np.ndarray:
    n = np.arange(N, dtype=float)
    if centered:
        n -= (N - 1) / 2
    return n * spacing


def steering(
    N: int,
    spacing: float,
    angle: float,
    range_: float | None = None,
    wavelength: float = 1.0,
    centered: bool = False,
) -> np.ndarray:
    """Unit-norm far-field (``range_=None``) or near-field steering vector.

    Near-field entries use the exact element-to-source distance
    ``r_n = sqrt(r^2 + delta_n^2 - 2 r delta_n sin(theta))`` and are
    referenced to ``r``, so they tend to the far-field vector as ``r`` grows.
    ``spacing`` and ``range_`` share the unit of ``wavelength``.
    """
    if N < 1:
        raise ValueError("N must be positive")
    delta = _element_offsets(N, spacing, centered)
    k = 2 * math.pi / wavelength
    if range_ is None:
        phase = k * delta * math.sin(angle)
    else:
        if not range_ > 0:
            raise ValueError("range must be positive")
        r_n = np.sqrt(range_**2 + delta**2 - 2 * range_ * delta * math.sin(angle))
        # r_n - r computed without cancellation
        diff = (delta**2 - 2 * range_ * delta * math.sin(angle)) / (r_n + range_)
        phase = -k * diff
    return np.exp(1j * phase) / math.sqrt(N)


def planar_steering(cfg: RhsConfig, direction: tuple[float, float]) -> np.ndarray:
    """Unit-norm far-field steering vector of a planar RHS (polar direction)."""
    theta, phi = direction
    y, z = cfg.positions()
    phase = cfg.wavenumber * (y * math.sin(theta) * math.sin(phi) + z * math.cos(theta))
    return np.exp(1j * phase) / math.sqrt(cfg.size)


def rayleigh_distance(aperture: float, wavelength: float) -> float:
    """Conventional near/far boundary ``2 D^2 / lambda``."""
    if not aperture > 0 or not wavelength > 0:
        raise ValueError("aperture and wavelength must be positive")
    return 2.0 * aperture**2 / wavelength


@dataclass(frozen=True)
class PathSpec:
    """One propagation path; ``gain=None`` means draw CN(0, 1)."""

    regime: str
    angle: float
    range: float | None = None
    gain: complex | None = None

    def __post_init__(self):
        if self.regime not in ("far", "near"):
            raise ValueError("regime must be 'far' or 'near'")
        if self.regime == "near" and not (self.range is not None and self.range > 0):
            raise ValueError("near-field paths need a positive range")


@dataclass(frozen=True)
class HybridChannel:
    paths: tuple[PathSpec, ...]
    element_count: int
    vector: np.ndarray = field(repr=False)

    @property
    def h(self) -> np.ndarray:
        return self.vector


def synth_channel(
    spec: Sequence[PathSpec],
    N: int,
    spacing: float,
    seed: int = 0,
    wavelength: float = 1.0,
    centered: bool = False,
) -> HybridChannel:
    """Sum of far/near paths; missing gains come from the seeded generator."""
    if len(spec) == 0:
        raise ValueError("channel needs at least one path")
    if N < 1:
        raise ValueError("N must be positive")
    rng = np.random.default_rng(seed)
    resolved = []
    h = np.zeros(N, dtype=complex)
    for p in spec:
        g = p.gain
        if g is None:
            g = complex((rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2))
        rng_ = p.range if p.regime == "near" else None
        h = h + g * steering(N, spacing, p.angle, rng_, wavelength, centered)
        resolved.append(PathSpec(p.regime, p.angle, p.range, complex(g)))
    if not np.all(np.isfinite(h)):
        raise FloatingPointError("channel has non-finite entries")
    h.flags.writeable = False
    return HybridChannel(tuple(resolved), N, h)


@dataclass(frozen=True)
class BeampatternSample:
    direction: tuple[float, float]
    power: float


def radiation_rows(bf: Beamformer, window: ApertureWindow, digital: np.ndarray) -> np.ndarray:
    """``D M B`` (N x K)."""
    B = np.asarray(digital, dtype=complex)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != bf.matrix.shape[1]:
        raise ValueError(f"digital beamformer needs {bf.matrix.shape[1]} rows")
    return bf.masked(window) @ B


def beampattern(
    bf: Beamformer,
    window: ApertureWindow,
    digital,
    grid: Iterable[tuple[float, float]],
) -> list[BeampatternSample]:
    """Radiated power ``||a(dir)^T D M B||^2`` over polar directions."""
    grid = [tuple(map(float, g)) for g in grid]
    if not grid:
        raise ValueError("grid must not be empty")
    R = radiation_rows(bf, window, digital)
    A = np.stack([planar_steering(bf.cfg, g) for g in grid])
    power = np.sum(np.abs(A @ R) ** 2, axis=1)
    return [BeampatternSample(g, float(p)) for g, p in zip(grid, power)]


def beampattern_rows(samples: Sequence[BeampatternSample]) -> list[dict]:
    """Rows for the ``theta_deg,phi_deg,power_w`` table."""
    return [
        {
            "theta_deg": math.degrees(s.direction[0]),
            "phi_deg": math.degrees(s.direction[1]),
            "power_w": s.power,
        }
        for s in samples
    ]
