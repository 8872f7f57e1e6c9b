"""Communication, sensing and cost metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rhs import ApertureWindow, Beamformer
from .wavefield import planar_steering


@dataclass(frozen=True)
class SinrBreakdown:
    signal: float
    interference: float
    noise: float

    @property
    def sinr(self) -> float:
        return self.signal / (self.interference + self.noise)

    @property
    def sinr_db(self) -> float:
        s = self.sinr
        return 10 * math.log10(s) if s > 0 else -math.inf


def _as_matrix(B, rows: int) -> np.ndarray:
    B = np.asarray(B, dtype=complex)
    if B.ndim == 1:
        B = B[:, None]
    if B.size == 0:
        return np.zeros((rows, 0), dtype=complex)
    if B.shape[0] != rows:
        raise ValueError(f"digital beamformer needs {rows} rows, got {B.shape[0]}")
    return B


def sinr(h, bf: Beamformer, window: ApertureWindow, B_c, B_s, user_index: int, noise: float) -> SinrBreakdown:
    """SINR of one user.

    Streams carry independent unit-power symbols, so every other stream
    (other users' and radar) contributes its own ``|h^T D M b|^2``.
    """
    if not noise > 0:
        raise ValueError("noise power must be positive")
    L = bf.matrix.shape[1]
    Bc = _as_matrix(B_c, L)
    Bs = _as_matrix(B_s, L)
    h = np.asarray(h, dtype=complex)
    if h.shape[0] != bf.matrix.shape[0]:
        raise ValueError("channel length does not match the surface")
    g = h @ bf.masked(window)  # effective 1 x L channel
    comm = np.abs(g @ Bc) ** 2
    radar = np.abs(g @ Bs) ** 2
    signal = float(comm[user_index])
    interference = float(comm.sum() - comm[user_index] + radar.sum())
    return SinrBreakdown(signal, max(interference, 0.0), float(noise))


def mimo_rate(H, R, N0: float) -> float:
    """``log2 det(I + H R H^H / N0)`` in bit/s/Hz."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    R = np.atleast_2d(np.asarray(R, dtype=complex))
    if not N0 > 0:
        raise ValueError("noise power must be positive")
    if R.shape[0] != R.shape[1] or R.shape[0] != H.shape[1]:
        raise ValueError("covariance dimension does not match H")
    if not np.allclose(R, R.conj().T, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise ValueError("covariance must be Hermitian")
    if np.linalg.eigvalsh(R).min() < -1e-9:
        raise ValueError("covariance must be positive semidefinite")
    K = np.eye(H.shape[0]) + H @ R @ H.conj().T / N0
    sign, logdet = np.linalg.slogdet(K)
    return max(float(logdet.real / math.log(2)), 0.0)


def outage_probability(rate_samples: Sequence[float], threshold: float) -> float:
    """Fraction of samples strictly below ``threshold``."""
    s = np.asarray(rate_samples, dtype=float)
    if s.size == 0:
        raise ValueError("need at least one rate sample")
    return float(np.mean(s < threshold))


@dataclass(frozen=True)
class RadarUtilityConfig:
    """Target directions, cross-correlation weight and per-direction gain band.

    ``band[j] = (lo, hi)`` bounds ``P_j / P_1``; ``None`` disables the band.
    """

    directions: tuple[tuple[float, float], ...]
    alpha0: float = 0.0
    band: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        dirs = tuple((float(t), float(p)) for t, p in self.directions)
        object.__setattr__(self, "directions", dirs)
        if len(dirs) < 1:
            raise ValueError("need at least one target direction")
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be non-negative")
        if self.band is not None:
            band = tuple((float(lo), float(hi)) for lo, hi in self.band)
            if len(band) != len(dirs):
                raise ValueError("one band entry per direction is required")
            if any(lo > hi for lo, hi in band):
                raise ValueError("band lower bound exceeds upper bound")
            object.__setattr__(self, "band", band)


def rmsc_from_cross(cross: np.ndarray) -> float:
    """RMS of the strictly-upper-triangular cross-correlation entries."""
    J = cross.shape[0]
    if J < 2:
        return 0.0
    iu = np.triu_indices(J, 1)
    return float(math.sqrt(2.0 / (J * (J - 1)) * np.sum(np.abs(cross[iu]) ** 2)))


def radar_utility(bf: Beamformer, window: ApertureWindow, B, cfg: RadarUtilityConfig) -> tuple[float, float, float]:
    """``(P_a - alpha0*RMSC, P_a, RMSC)`` for the given beamformers."""
    L = bf.matrix.shape[1]
    R = bf.masked(window) @ _as_matrix(B, L)
    A = np.stack([planar_steering(bf.cfg, d) for d in cfg.directions])
    Z = A @ R  # J x K radiated amplitudes
    cross = Z @ Z.conj().T  # a_j^T R R^H a_j'^*
    powers = np.real(np.diag(cross))
    p_a = float(powers.mean())
    rm = rmsc_from_cross(cross)
    return p_a - cfg.alpha0 * rm, p_a, rm


def throughput(training_slots: float, frame_slots: float, rates: Sequence[float]) -> float:
    """Effective sum rate ``(1 - t/T) * sum(R_u)``."""
    if not frame_slots > 0:
        raise ValueError("frame length must be positive")
    if training_slots < 0 or training_slots > frame_slots:
        raise ValueError("training slots must lie in [0, frame_slots]")
    return (1.0 - training_slots / frame_slots) * float(np.sum(rates))


def cost_effectiveness(cost_rhs: float, cost_pa: float) -> float:
    """``1 - cost_rhs / cost_pa``; positive when the RHS is cheaper."""
    if not cost_pa > 0:
        raise ValueError("phased-array cost must be positive")
    return 1.0 - cost_rhs / cost_pa
