from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GaussianEstimate:
    """Mean vector and covariance matrix of a Gaussian state estimate."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def copy(self) -> "GaussianEstimate":
        return GaussianEstimate(self.mean.copy(), self.cov.copy())

    def is_psd(self, rtol: float = 1e-9) -> bool:
        P = self.cov
        scale = max(float(np.trace(P)), 1e-300)
        if not np.allclose(P, P.T, rtol=rtol, atol=rtol * scale):
            return False
        return bool(np.linalg.eigvalsh(P).min() >= -1e-12 * scale)
