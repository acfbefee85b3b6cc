"""Weighted least squares state estimation and residual-based bad data detection.

State x is the nodal injection vector; measurements are z = [P_I; P_F].
The WLS estimate is x_hat = (H^T D^-1 H)^-1 H^T D^-1 z = K z and the
detector alarms when ||z - H x_hat||_2 exceeds a calibrated threshold.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InsufficientSamples
from .grid import MeasurementMatrix, NetworkModel
from .util import nearest_rank


@dataclass(frozen=True)
class NoiseModel:
    """Per-measurement standard deviations; covariance D = diag(std^2)."""

    std_devs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.std_devs, dtype=float)
        if s.ndim != 1 or not np.all(s > 0):
            raise ValueError("std_devs must be a 1-D vector of positive values")
        object.__setattr__(self, "std_devs", s)

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.std_devs ** 2)

    @classmethod
    def uniform(cls, m: int, std: float = 1.0) -> "NoiseModel":
        return cls(std_devs=np.full(m, float(std)))

    @classmethod
    def from_samples(cls, measurements, rel_std: float, floor: float = 1e-3) -> "NoiseModel":
        """Scale per-channel noise with typical magnitude of the data."""
        z = np.atleast_2d(np.asarray(measurements, dtype=float))
        return cls(std_devs=np.maximum(rel_std * np.mean(np.abs(z), axis=0), floor))


class WlsEstimator:
    """Caches the gain K and residual projector for a fixed (H, D) pair."""

    def __init__(self, h: MeasurementMatrix, noise: NoiseModel):
        hm = h.values
        m, n = hm.shape
        if noise.std_devs.shape != (m,):
            raise DimensionMismatch(
                f"noise model has {noise.std_devs.shape[0]} entries, H has {m} rows")
        self.measurement_matrix = h
        self.noise = noise
        w = 1.0 / noise.std_devs ** 2
        hw = hm * w[:, None]                      # D^-1 H
        self.gain = np.linalg.solve(hm.T @ hw, hw.T)   # K, n x m
        # residual projector: r = (I - H K) z
        self._residual_proj = np.eye(m) - hm @ self.gain

    @property
    def n_measurements(self) -> int:
        return self.measurement_matrix.values.shape[0]

    def _check(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.n_measurements:
            raise DimensionMismatch(
                f"expected {self.n_measurements} measurements, got {z.shape}")
        return z

    def estimate(self, z) -> np.ndarray:
        """x_hat = K z. Accepts a vector or a (batch, m) matrix."""
        return self._check(z) @ self.gain.T

    def residual(self, z) -> np.ndarray:
        """r = z - H x_hat; invariant under any column-space shift of H."""
        return self._check(z) @ self._residual_proj.T

    def residual_norm(self, z) -> np.ndarray:
        return np.linalg.norm(self.residual(z), axis=-1)


@dataclass
class BddDetector:
    """Alarms when the residual 2-norm exceeds the threshold (MW units)."""

    estimator: WlsEstimator
    threshold: float

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    def detect(self, z):
        """True where ||r||_2 > threshold. Vectorized over a batch."""
        flags = self.estimator.residual_norm(z) > self.threshold
        return bool(flags) if np.ndim(flags) == 0 else flags


def calibrate_bdd_threshold(est: WlsEstimator, normal_measurements, quantile: float) -> float:
    """Nearest-rank quantile of residual norms over >= 100 normal samples."""
    z = np.atleast_2d(np.asarray(normal_measurements, dtype=float))
    if z.shape[0] < 100:
        raise InsufficientSamples(
            f"need >= 100 normal samples for calibration, got {z.shape[0]}")
    return nearest_rank(est.residual_norm(z), quantile)


def features_to_measurements(net: NetworkModel, features) -> np.ndarray:
    """Map 339-dim feature vectors (loads, gens, flows) to nodal z.

    Injection at a bus is the sum of its generation features minus the
    sum of its load features; flow features pass through unchanged.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    n_l = len(net.load_buses)
    n_g = len(net.generator_buses)
    if x.shape[1] != net.feature_dim:
        raise DimensionMismatch(
            f"expected {net.feature_dim} features, got {x.shape[1]}")
    inj = np.zeros((x.shape[0], net.n_buses))
    for i, b in enumerate(net.load_buses):
        inj[:, b] -= x[:, i]
    for i, b in enumerate(net.generator_buses):
        inj[:, b] += x[:, n_l + i]
    z = np.hstack([inj, x[:, n_l + n_g:]])
    return z[0] if np.ndim(features) == 1 else z
