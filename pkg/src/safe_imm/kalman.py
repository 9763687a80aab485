"""Linear Kalman predict/update plus Gaussian and Student-t innovation likelihoods.

Every model measures the leading position block, so ``H @ x`` is ``x[:3]`` and
``P @ H.T`` is ``P[:, :3]``; the code uses the slices directly. The 3x3
innovation covariance is factored with a closed-form Cholesky, which is far
cheaper than a LAPACK call at this size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels as _k
from .estimate import GaussianEstimate
from .models import MEAS_DIM, MotionModel, process_noise, transition_matrix

__all__ = [
    "GaussianEstimate",
    "Innovation",
    "SingularInnovationError",
    "predict",
    "update",
    "gaussian_loglik",
    "student_t_loglik",
]

MAX_CONDITION = _k.MAX_CONDITION
LOG_2PI = _k.LOG_2PI


class SingularInnovationError(np.linalg.LinAlgError):
    """Raised when the innovation covariance is not numerically positive definite."""


def _factor(S: np.ndarray) -> np.ndarray:
    L, status = _k.chol3(np.ascontiguousarray(S, dtype=float))
    if status == _k.NOT_PD:
        raise SingularInnovationError("innovation covariance is not positive definite")
    if status == _k.ILL_CONDITIONED:
        raise SingularInnovationError(f"innovation covariance condition exceeds {MAX_CONDITION:g}")
    return L


@dataclass
class Innovation:
    """Measurement residual ``v`` with covariance ``S``.

    The Mahalanobis term and log-determinant are cached from the Cholesky
    factor so the likelihoods never refactor ``S``.
    """

    v: np.ndarray
    S: np.ndarray
    mahalanobis2: float = float("nan")
    logdet: float = float("nan")

    def __post_init__(self):
        if math.isnan(self.mahalanobis2) or math.isnan(self.logdet):
            L = _factor(self.S)
            self.mahalanobis2, self.logdet = _k.maha_logdet3(L, np.asarray(self.v, dtype=float))

    @property
    def dim(self) -> int:
        return self.v.shape[0]


def predict(est: GaussianEstimate, model: MotionModel, dt: float) -> GaussianEstimate:
    F = transition_matrix(model, dt)
    Q = process_noise(model, dt)
    n = F.shape[0]
    if est.mean.shape[0] != n:
        raise ValueError(f"estimate dim {est.mean.shape[0]} does not match model dim {n}")
    x = est.mean.copy()
    P = np.array(est.cov, dtype=float)
    _k.kf_predict(x, P, n, F, Q)
    return GaussianEstimate(x, P)


def innovation(est: GaussianEstimate, z: np.ndarray, R: np.ndarray) -> Innovation:
    """Residual of ``z`` against the predicted position of ``est`` (no state change)."""
    v = np.asarray(z, dtype=float) - est.mean[:MEAS_DIM]
    S = est.cov[:MEAS_DIM, :MEAS_DIM] + R
    return Innovation(v, S)


def update(
    est: GaussianEstimate, model: MotionModel, z: np.ndarray, R: np.ndarray
) -> tuple[GaussianEstimate, Innovation]:
    """Joseph-form measurement update with a position-only measurement.

    Raises :class:`SingularInnovationError` when ``S`` is not safely
    positive definite.
    """
    n = model.state_dim
    if est.mean.shape[0] != n:
        raise ValueError(f"estimate dim {est.mean.shape[0]} does not match model dim {n}")
    x = est.mean.copy()
    P = np.array(est.cov, dtype=float)
    status, v, S, maha, logdet = _k.kf_update(
        x, P, n, np.asarray(z, dtype=float), np.ascontiguousarray(R, dtype=float)
    )
    if status != _k.OK:
        _factor(S)  # raises with the matching message
    return GaussianEstimate(x, P), Innovation(v, S, maha, logdet)


def gaussian_loglik(inn: Innovation) -> float:
    """Log of the normalised Gaussian density of the innovation."""
    return -0.5 * (inn.dim * LOG_2PI + inn.logdet + inn.mahalanobis2)


def student_t_loglik(inn: Innovation, nu: float) -> float:
    """Multivariate Student-t log density, dof ``nu``, scale matrix ``S``.

    ``S`` is used as the scale directly (no nu/(nu-2) moment correction), so
    ``nu <= 2`` is allowed and only changes the tail shape.
    """
    if not nu > 0:
        raise ValueError(f"degrees of freedom must be positive, got {nu}")
    d = inn.dim
    return (
        _t_const(float(nu), d)
        - 0.5 * inn.logdet
        - 0.5 * (nu + d) * math.log1p(inn.mahalanobis2 / nu)
    )


_T_CONST_CACHE: dict[tuple[float, int], float] = {}


def _t_const(nu: float, d: int) -> float:
    key = (nu, d)
    c = _T_CONST_CACHE.get(key)
    if c is None:
        c = float(gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu) - 0.5 * d * math.log(nu * math.pi))
        _T_CONST_CACHE[key] = c
    return c
