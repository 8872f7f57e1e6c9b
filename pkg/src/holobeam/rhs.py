"""Reconfigurable holographic surface (RHS) model.

Geometry convention, used everywhere in the package:

* the surface lies in the y-z plane with its normal along +x;
* every row (fixed ``n_y``) is a serially fed leaky waveguide whose feed sits
  on the left edge (z = 0) and whose reference wave travels towards +z;
* element ``(n_y, n_z)`` sits at ``y = n_y*d``, ``z = n_z*d`` and has flat
  index ``n = n_z*rows + n_y`` (rows vary fastest);
* a direction ``(theta, phi)`` is given in polar form with ``theta`` measured
  from the +z axis (the feed axis) and ``phi`` the azimuth around z measured
  from the surface normal.  The unit vector is
  ``(sin t cos p, sin t sin p, cos t)`` in (x, y, z).

For a single-row surface only ``cos(theta)`` matters; it equals ``sin`` of
the usual broadside angle (see :func:`polar_from_broadside`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

LEAKAGE_TOL = 1e-9


def polar_from_broadside(angle: float) -> tuple[float, float]:
    """Map a broadside angle (from the surface normal) to ``(theta, phi)``."""
    return (math.pi / 2 - angle, 0.0)


def broadside_from_polar(theta: float, phi: float = 0.0) -> float:
    return math.asin(max(-1.0, min(1.0, math.cos(theta))))


@dataclass(frozen=True)
class RhsConfig:
    """Geometry and waveguide constants of a rectangular RHS."""

    rows: int
    cols: int
    element_spacing: float
    wavelength: float
    waveguide_index: float = math.sqrt(3.0)
    attenuation: float = 3.0
    power_split: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("rows and cols must be positive")
        if not self.element_spacing > 0 or not self.wavelength > 0:
            raise ConfigurationError("element_spacing and wavelength must be positive")
        if not self.waveguide_index > 0:
            raise ConfigurationError("waveguide_index must be positive")
        if not 1.0 <= self.attenuation <= 10.0:
            raise ConfigurationError(
                f"attenuation {self.attenuation} Np/m outside the validated range [1, 10]"
            )
        if self.element_spacing > self.wavelength / 2 + 1e-15:
            warnings.warn(
                "element spacing exceeds half a wavelength; grating lobes may appear",
                stacklevel=3,
            )
        if self.power_split is None:
            object.__setattr__(self, "power_split", (1.0,) * self.rows)
        else:
            split = tuple(float(c) for c in self.power_split)
            if len(split) != self.rows:
                raise ConfigurationError("power_split needs one entry per row")
            if any(not 0.0 < c <= 1.0 for c in split):
                raise ConfigurationError("power_split entries must lie in (0, 1]")
            object.__setattr__(self, "power_split", split)

    @property
    def feed_count(self) -> int:
        return self.rows

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def guided_wavenumber(self) -> float:
        return 2 * math.pi * self.waveguide_index / self.wavelength

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength

    def row_index(self) -> np.ndarray:
        """Row ``n_y`` of every flat element index."""
        return np.arange(self.size) % self.rows

    def col_index(self) -> np.ndarray:
        """Column ``n_z`` of every flat element index."""
        return np.arange(self.size) // self.rows

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        """(y, z) coordinates in meters of every element."""
        d = self.element_spacing
        return self.row_index() * d, self.col_index() * d

    def feed_distance(self) -> np.ndarray:
        """Distance from each element to the feed of its own row."""
        return self.col_index() * self.element_spacing

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "element_spacing": self.element_spacing,
            "wavelength": self.wavelength,
            "waveguide_index": self.waveguide_index,
            "attenuation": self.attenuation,
            "power_split": list(self.power_split),
        }


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HolographicPattern:
    """Per-element radiation amplitudes, each in [0, 1]."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=float).ravel()
        if a.size == 0:
            raise ValueError("pattern must have at least one element")
        if not np.all(np.isfinite(a)):
            raise ValueError("pattern amplitudes must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("pattern amplitudes must lie in [0, 1]")
        object.__setattr__(self, "amplitudes", _readonly(a))

    def __len__(self):
        return self.amplitudes.size

    @classmethod
    def clipped(cls, values) -> "HolographicPattern":
        return cls(np.clip(np.asarray(values, dtype=float), 0.0, 1.0))


@dataclass(frozen=True)
class ApertureWindow:
    """Active element range of every row.

    ``start[r]`` and ``stop[r]`` are zero-based column indices with ``stop``
    exclusive, so ``start == stop`` switches a row off entirely.
    """

    start: tuple[int, ...]
    stop: tuple[int, ...]

    def __post_init__(self):
        start = tuple(int(s) for s in self.start)
        stop = tuple(int(s) for s in self.stop)
        if len(start) != len(stop):
            raise ValueError("start and stop need the same number of rows")
        for a, b in zip(start, stop):
            if a < 0 or b < a:
                raise ValueError("window rows need 0 <= start <= stop")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "stop", stop)

    @classmethod
    def full(cls, cfg: RhsConfig) -> "ApertureWindow":
        return cls((0,) * cfg.rows, (cfg.cols,) * cfg.rows)

    @classmethod
    def sliding(cls, cfg: RhsConfig, n_active: int, offset: int) -> "ApertureWindow":
        """Same contiguous block of ``n_active`` columns in every row."""
        if not 1 <= n_active <= cfg.cols or not 0 <= offset <= cfg.cols - n_active:
            raise ValueError("window does not fit inside the surface")
        return cls((offset,) * cfg.rows, (offset + n_active,) * cfg.rows)

    def mask(self, cfg: RhsConfig) -> np.ndarray:
        if len(self.start) != cfg.rows:
            raise ValueError("window row count does not match the configuration")
        if max(self.stop) > cfg.cols:
            raise ValueError("window extends past the last column")
        rows, cols = cfg.row_index(), cfg.col_index()
        start = np.asarray(self.start)[rows]
        stop = np.asarray(self.stop)[rows]
        return ((cols >= start) & (cols < stop)).astype(float)

    def active_count(self) -> int:
        return int(sum(b - a for a, b in zip(self.start, self.stop)))


def build_propagation_matrix(cfg: RhsConfig) -> np.ndarray:
    """Feed-to-element propagation ``F`` (N x L).

    ``F[n, l] = sqrt(chi) * exp(-alpha*r) * exp(-1j*k_s*r)`` where ``r`` is
    the distance from feed ``l`` to element ``n`` along its row; entries for
    elements outside row ``l`` are zero.
    """
    r = cfg.feed_distance()
    rows = cfg.row_index()
    chi = np.asarray(cfg.power_split)[rows]
    F = np.zeros((cfg.size, cfg.feed_count), dtype=complex)
    F[np.arange(cfg.size), rows] = (
        np.sqrt(chi) * np.exp(-cfg.attenuation * r) * np.exp(-1j * cfg.guided_wavenumber * r)
    )
    return F


def leakage_weights(cfg: RhsConfig) -> np.ndarray:
    """Per-element radiated-power weights ``eta = w**2``."""
    rows = cfg.row_index()
    chi = np.asarray(cfg.power_split)[rows]
    return chi * np.exp(-2.0 * cfg.attenuation * cfg.feed_distance())


def object_phase(cfg: RhsConfig, direction: tuple[float, float]) -> np.ndarray:
    """Phase of a unit plane object wave leaving towards ``direction``.

    The sign is chosen so that radiating ``exp(1j*object_phase)`` adds up
    coherently in ``direction`` under the steering convention of
    :mod:`holobeam.wavefield`.
    """
    theta, phi = direction
    y, z = cfg.positions()
    k0 = cfg.wavenumber
    return -k0 * (y * math.sin(theta) * math.sin(phi) + z * math.cos(theta))


def reference_phase(cfg: RhsConfig) -> np.ndarray:
    """Phase of the guided reference wave (zero at each feed)."""
    return -cfg.guided_wavenumber * cfg.feed_distance()


def pattern_from_phase(cfg: RhsConfig, obj_phase: np.ndarray) -> HolographicPattern:
    """Holographic interference pattern for an arbitrary object-wave phase."""
    delta = np.asarray(obj_phase) - reference_phase(cfg)
    return HolographicPattern.clipped((np.cos(delta) + 1.0) / 2.0)


def pattern_for_direction(cfg: RhsConfig, direction: tuple[float, float]) -> HolographicPattern:
    """Single-beam holographic pattern towards polar ``direction``."""
    return pattern_from_phase(cfg, object_phase(cfg, direction))


def pattern_for_point(cfg: RhsConfig, point: tuple[float, float, float]) -> HolographicPattern:
    """Focusing pattern for a spherical object wave converging on ``point``.

    ``point`` is an (x, y, z) location in meters in front of the surface.
    The phase is referenced to the distance from the origin, so it reduces
    to the plane-wave pattern as the point recedes.
    """
    px, py, pz = point
    y, z = cfg.positions()
    dist = np.sqrt(px**2 + (py - y) ** 2 + (pz - z) ** 2)
    r0 = math.sqrt(px**2 + py**2 + pz**2)
    # dist - r0 without cancellation for distant points
    delta = (y**2 + z**2 - 2.0 * (py * y + pz * z)) / (dist + r0)
    return pattern_from_phase(cfg, cfg.wavenumber * delta)


def superpose_patterns(
    patterns: Sequence[HolographicPattern], weights
) -> tuple[HolographicPattern, bool]:
    """Weighted sum of patterns, rescaled into the amplitude box.

    Returns the pattern and a flag telling whether a uniform rescale by the
    largest raw amplitude was needed.  Negative raw amplitudes (possible
    only with negative weights) are clipped to zero.
    """
    if len(patterns) == 0:
        raise ValueError("need at least one pattern")
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != len(patterns):
        raise ValueError("one weight per pattern is required")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    stack = np.stack([p.amplitudes for p in patterns])
    raw = np.maximum(w @ stack, 0.0)
    peak = raw.max()
    if peak > 1.0:
        return HolographicPattern.clipped(raw / peak), True
    return HolographicPattern.clipped(raw), False


def quantize_pattern(pattern: HolographicPattern, levels: int) -> HolographicPattern:
    """Round every amplitude to the grid {0, 1/(C-1), ..., 1}; ties go down."""
    if levels < 2:
        raise ValueError("need at least two amplitude levels")
    step = levels - 1
    k = np.ceil(pattern.amplitudes * step - 0.5)
    return HolographicPattern.clipped(np.clip(k, 0, step) / step)


def row_leakage(cfg: RhsConfig, amplitudes: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Radiated power per row ``sum psi^2 d eta`` (works on batches)."""
    a = np.asarray(amplitudes, dtype=float)
    eta = leakage_weights(cfg)
    if mask is not None:
        eta = eta * mask
    contrib = a**2 * eta
    out = np.zeros(a.shape[:-1] + (cfg.rows,))
    for r in range(cfg.rows):
        out[..., r] = contrib[..., r :: cfg.rows].sum(axis=-1)
    return out


def leakage_margins(cfg: RhsConfig, pattern: HolographicPattern, window: ApertureWindow) -> np.ndarray:
    """Per-row slack ``1 - sum psi^2 d eta``; feasible when >= -1e-9."""
    if len(pattern) != cfg.size:
        raise ValueError("pattern length does not match the configuration")
    return 1.0 - row_leakage(cfg, pattern.amplitudes, window.mask(cfg))


def is_feasible(cfg: RhsConfig, pattern: HolographicPattern, window: ApertureWindow, cap: float = 1.0) -> bool:
    slack = cap - row_leakage(cfg, pattern.amplitudes, window.mask(cfg))
    return bool(np.all(slack >= -LEAKAGE_TOL))


def scale_to_leakage(
    cfg: RhsConfig, pattern: HolographicPattern, window: ApertureWindow, cap: float = 1.0
) -> HolographicPattern:
    """Shrink each over-budget row uniformly until it meets the leakage cap."""
    a = pattern.amplitudes * window.mask(cfg)
    used = row_leakage(cfg, a)
    scale = np.ones(cfg.rows)
    over = used > cap
    scale[over] = np.sqrt(cap / used[over]) * (1 - 1e-12)
    return HolographicPattern.clipped(a * scale[cfg.row_index()])


@dataclass(frozen=True)
class Beamformer:
    """Holographic beamformer ``M = diag(psi) F`` of one configuration."""

    matrix: np.ndarray
    pattern: HolographicPattern
    propagation: np.ndarray
    cfg: RhsConfig = field(repr=False)

    @classmethod
    def from_pattern(cls, cfg: RhsConfig, pattern: HolographicPattern) -> "Beamformer":
        if len(pattern) != cfg.size:
            raise ValueError("pattern length does not match the configuration")
        F = build_propagation_matrix(cfg)
        return cls(_readonly(pattern.amplitudes[:, None] * F), pattern, _readonly(F), cfg)

    def masked(self, window: ApertureWindow) -> np.ndarray:
        """``D M`` for the given window."""
        return self.window_mask(window)[:, None] * self.matrix

    def window_mask(self, window: ApertureWindow) -> np.ndarray:
        return window.mask(self.cfg)


def apply_beamformer(bf: Beamformer, window: ApertureWindow, feed_signals) -> np.ndarray:
    """Radiated element signals ``y = D M x``."""
    x = np.asarray(feed_signals, dtype=complex)
    if x.shape[0] != bf.matrix.shape[1]:
        raise ValueError(f"expected {bf.matrix.shape[1]} feed signals, got {x.shape[0]}")
    return bf.masked(window) @ x
