"""CV / CA motion models on a 3D grouped state layout.

State layout (shared prefix across models)::

    CV: [px, py, pz, vx, vy, vz]
    CA: [px, py, pz, vx, vy, vz, ax, ay, az]

Measurements are positions only, so ``H`` is a leading-block selector and the
cross-model mapping is a slice or a zero-pad.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .estimate import GaussianEstimate

MEAS_DIM = 3
DEFAULT_PAD_VARIANCE = 25.0


class ModelKind(enum.Enum):
    CV = "cv"
    CA = "ca"

    @property
    def order(self) -> int:
        """Number of kinematic derivatives per axis (2 for CV, 3 for CA)."""
        return 2 if self is ModelKind.CV else 3


@dataclass(frozen=True)
class MotionModel:
    kind: ModelKind
    q: float
    id: int = 0

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"process intensity must be positive, got {self.q}")

    @property
    def state_dim(self) -> int:
        return MEAS_DIM * self.kind.order

    @property
    def meas_dim(self) -> int:
        return MEAS_DIM


def cv_model(q: float = 0.5, id: int = 0) -> MotionModel:
    return MotionModel(ModelKind.CV, q, id)


def ca_model(q: float = 0.2, id: int = 1) -> MotionModel:
    return MotionModel(ModelKind.CA, q, id)


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")


def _axis_blocks_to_grouped(block: np.ndarray) -> np.ndarray:
    # kron(block, I3) puts derivative order on the outer index, which is
    # exactly the grouped [positions, velocities, accelerations] ordering.
    return np.kron(block, np.eye(MEAS_DIM))


@lru_cache(maxsize=256)
def _transition(kind: ModelKind, dt: float) -> np.ndarray:
    if kind is ModelKind.CV:
        block = np.array([[1.0, dt], [0.0, 1.0]])
    else:
        block = np.array([[1.0, dt, dt * dt / 2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    F = _axis_blocks_to_grouped(block)
    F.flags.writeable = False
    return F


@lru_cache(maxsize=256)
def _process_noise(kind: ModelKind, q: float, dt: float) -> np.ndarray:
    if kind is ModelKind.CV:
        block = np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
    else:
        block = np.array(
            [
                [dt**5 / 20, dt**4 / 8, dt**3 / 6],
                [dt**4 / 8, dt**3 / 3, dt**2 / 2],
                [dt**3 / 6, dt**2 / 2, dt],
            ]
        )
    Q = _axis_blocks_to_grouped(q * block)
    Q.flags.writeable = False
    return Q


def transition_matrix(model: MotionModel, dt: float) -> np.ndarray:
    """Discrete-time kinematic transition ``F`` for step ``dt`` (read-only)."""
    _check_dt(dt)
    return _transition(model.kind, float(dt))


def process_noise(model: MotionModel, dt: float) -> np.ndarray:
    """Discrete white-acceleration (CV) or white-jerk (CA) noise ``Q`` (read-only)."""
    _check_dt(dt)
    return _process_noise(model.kind, float(model.q), float(dt))


def measurement_matrix(model: MotionModel) -> np.ndarray:
    H = np.zeros((MEAS_DIM, model.state_dim))
    H[:, :MEAS_DIM] = np.eye(MEAS_DIM)
    return H


def mapping_matrix(from_dim: int, to_dim: int) -> np.ndarray:
    """``T`` taking a state of ``from_dim`` into ``to_dim`` (truncate or zero-pad)."""
    T = np.zeros((to_dim, from_dim))
    k = min(from_dim, to_dim)
    T[:k, :k] = np.eye(k)
    return T


def map_state(
    src: MotionModel,
    dst: MotionModel,
    est: GaussianEstimate,
    pad_variance: float = DEFAULT_PAD_VARIANCE,
) -> GaussianEstimate:
    """Map ``est`` from ``src``'s state space into ``dst``'s.

    Shared leading components are copied. Components that exist only in
    ``dst`` get zero mean and ``pad_variance`` on the diagonal; components
    that exist only in ``src`` are dropped.
    """
    n_src, n_dst = src.state_dim, dst.state_dim
    if est.mean.shape[0] != n_src:
        raise ValueError(f"estimate has dim {est.mean.shape[0]}, model expects {n_src}")
    if n_src == n_dst:
        return est
    return pad_or_truncate(est, n_dst, pad_variance)


def pad_or_truncate(est: GaussianEstimate, n_dst: int, pad_variance: float) -> GaussianEstimate:
    n_src = est.mean.shape[0]
    if n_dst == n_src:
        return est
    if n_dst < n_src:
        return GaussianEstimate(est.mean[:n_dst].copy(), est.cov[:n_dst, :n_dst].copy())
    mean = np.zeros(n_dst)
    mean[:n_src] = est.mean
    cov = np.zeros((n_dst, n_dst))
    cov[:n_src, :n_src] = est.cov
    idx = np.arange(n_src, n_dst)
    cov[idx, idx] = pad_variance
    return GaussianEstimate(mean, cov)
