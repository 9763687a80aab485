"""Global-nearest-neighbour multi-target tracker around the SAFE-IMM bank.

Per frame: predict every track, build a gated squared-Mahalanobis cost
matrix, solve the optimal one-to-one assignment, update assigned tracks,
coast the rest, spawn tentative tracks from leftover detections, and run the
M-of-N confirmation / consecutive-miss deletion logic.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .estimate import GaussianEstimate
from .imm import GateDecision, ImmConfig, ModelBank, PredictedBank, imm_correct, imm_predict
from .models import MotionModel, ca_model, cv_model, pad_or_truncate
from .tpm_adapt import AdaptState

FORBIDDEN = np.inf


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class Track:
    id: int
    bank: ModelBank
    status: TrackStatus = TrackStatus.TENTATIVE
    history: tuple = (True,)
    age: int = 0
    misses_in_row: int = 0
    output: Optional[GaussianEstimate] = None
    decision: Optional[GateDecision] = None

    @property
    def hits(self) -> int:
        return sum(self.history)


@dataclass
class Assignment:
    pairs: list
    unassigned_tracks: list
    unassigned_detections: list
    total_cost: float


@dataclass
class GnnConfig:
    assign_threshold: float = 30.0
    confirm_m: int = 2
    confirm_n: int = 5
    delete_misses: int = 5
    distance: str = "mahalanobis"
    init_vel_var: float = 100.0
    init_weights: tuple = (0.9, 0.1)
    # Two-point initialisation pairs a leftover detection with a previous
    # leftover at most this fast away.
    init_max_speed: float = 50.0

    def __post_init__(self):
        if self.distance not in ("mahalanobis", "euclidean"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if not 1 <= self.confirm_m <= self.confirm_n:
            raise ValueError("confirmation needs 1 <= M <= N")


@dataclass
class TrackerState:
    tracks: list = field(default_factory=list)
    next_id: int = 1
    # Detections left unassigned on the previous frame, with the track each spawned.
    leftovers: list = field(default_factory=list)


@dataclass
class TrackerParams:
    models: tuple = field(default_factory=lambda: (cv_model(), ca_model()))
    imm: ImmConfig = field(default_factory=ImmConfig)
    gnn: GnnConfig = field(default_factory=GnnConfig)
    nu: Optional[float] = None


def solve_assignment(cost: np.ndarray) -> Assignment:
    """Minimum-cost one-to-one assignment; ``inf`` entries may not be used.

    Rows are tracks, columns detections; rectangular input is fine.
    """
    cost = np.asarray(cost, dtype=float)
    n_rows, n_cols = cost.shape if cost.ndim == 2 else (0, 0)
    if n_rows == 0 or n_cols == 0:
        return Assignment([], list(range(n_rows)), list(range(n_cols)), 0.0)
    allowed = np.isfinite(cost)
    if not allowed.any():
        return Assignment([], list(range(n_rows)), list(range(n_cols)), 0.0)
    # Forbidden cells get a cost no optimal solution would choose over leaving both unassigned.
    finite = cost[allowed]
    big = (np.abs(finite).sum() + 1.0) * 2.0 + np.abs(finite).max()
    padded = np.where(allowed, cost, big)
    rows, cols = linear_sum_assignment(padded)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c]]
    used_r = {r for r, _ in pairs}
    used_c = {c for _, c in pairs}
    total = float(sum(cost[r, c] for r, c in pairs))
    return Assignment(
        pairs,
        [r for r in range(n_rows) if r not in used_r],
        [c for c in range(n_cols) if c not in used_c],
        total,
    )


def brute_force_assignment(cost: np.ndarray) -> float:
    """Exhaustive optimum used as a test oracle.

    Maximises the number of pairs first (ties broken by cost), matching how
    :func:`solve_assignment` treats forbidden cells.
    """
    cost = np.asarray(cost, dtype=float)
    n_rows, n_cols = cost.shape
    best = (0, 0.0)
    if n_rows <= n_cols:
        for perm in itertools.permutations(range(n_cols), n_rows):
            vals = [cost[r, c] for r, c in enumerate(perm) if np.isfinite(cost[r, c])]
            cand = (len(vals), sum(vals))
            if cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                best = cand
    else:
        return brute_force_assignment(cost.T)
    return best[1]


def cost_matrix(
    predictions: Sequence[PredictedBank],
    detections: np.ndarray,
    R: np.ndarray,
    threshold: float = 30.0,
    distance: str = "mahalanobis",
) -> np.ndarray:
    """Squared Mahalanobis cost of each detection against each predicted track.

    Uses the prediction of the track's currently most probable model. Costs
    at or above ``threshold`` are ``inf`` (forbidden).
    """
    Z = np.asarray(detections, dtype=float).reshape(-1, 3)
    C = np.full((len(predictions), Z.shape[0]), FORBIDDEN)
    if Z.shape[0] == 0:
        return C
    for t, pred in enumerate(predictions):
        if distance == "mahalanobis":
            d = pred.mahalanobis2(Z, R)
        else:
            j = pred.top_model()
            diff = Z - pred.means[j, :3]
            d = np.einsum("ij,ij->i", diff, diff)
        C[t] = np.where(d < threshold, d, FORBIDDEN)
    return C


def new_track_bank(
    z: np.ndarray,
    R: np.ndarray,
    params: TrackerParams,
    velocity: Optional[np.ndarray] = None,
    velocity_var: Optional[float] = None,
) -> ModelBank:
    models: tuple[MotionModel, ...] = params.models
    n_max = max(m.state_dim for m in models)
    mean = np.zeros(n_max)
    mean[:3] = z
    cov = np.zeros((n_max, n_max))
    cov[:3, :3] = R
    vv = params.gnn.init_vel_var if velocity_var is None else velocity_var
    cov[3:6, 3:6] = vv * np.eye(3)
    if velocity is not None:
        mean[3:6] = velocity
    pad = params.imm.pad_variance
    if n_max > 6:
        cov[6:, 6:] = pad * np.eye(n_max - 6)
    est = GaussianEstimate(mean, cov)
    estimates = [pad_or_truncate(est, m.state_dim, pad) for m in models]
    M = len(models)
    if M == len(params.gnn.init_weights):
        w = np.asarray(params.gnn.init_weights, dtype=float)
    else:
        w = np.full(M, 1.0 / M)
    tpm = params.imm.tpm.pi_base if params.imm.tpm.pi_base.shape == (M, M) else np.eye(M)
    return ModelBank(models, estimates, w / w.sum(), tpm, adapt=AdaptState(params.imm.tpm.window))


def _record(track: Track, hit: bool, n: int) -> tuple:
    return (track.history + (hit,))[-n:]


def tracker_step(
    state: TrackerState,
    detections: np.ndarray,
    dt: float,
    R: np.ndarray,
    params: Optional[TrackerParams] = None,
) -> tuple[TrackerState, list[Track]]:
    """Advance the tracker one frame.

    Returns the new state and the confirmed tracks alive after the frame,
    each carrying its gated output estimate and gate decision.
    """
    params = params or TrackerParams()
    gnn = params.gnn
    Z = np.asarray(detections, dtype=float).reshape(-1, 3)
    live = [t for t in state.tracks if t.status is not TrackStatus.DELETED]
    preds = [imm_predict(t.bank, dt, params.imm) for t in live]
    C = cost_matrix(preds, Z, R, gnn.assign_threshold, gnn.distance)
    asg = solve_assignment(C)

    det_of = {t: d for t, d in asg.pairs}
    new_tracks: list[Track] = []
    for i, (track, pred) in enumerate(zip(live, preds)):
        d = det_of.get(i)
        z = Z[d] if d is not None else None
        bank, out, decision, _ = imm_correct(pred, z, R if z is not None else None, params.imm, params.nu)
        hit = d is not None
        history = _record(track, hit, gnn.confirm_n)
        misses = 0 if hit else track.misses_in_row + 1
        status = track.status
        if status is TrackStatus.TENTATIVE and sum(history) >= gnn.confirm_m:
            status = TrackStatus.CONFIRMED
        if status is TrackStatus.CONFIRMED and misses >= gnn.delete_misses:
            status = TrackStatus.DELETED
        elif status is TrackStatus.TENTATIVE and (
            sum(history) + (gnn.confirm_n - len(history)) < gnn.confirm_m or misses >= gnn.delete_misses
        ):
            # M hits can no longer be collected within this track's N-window
            status = TrackStatus.DELETED
        new_tracks.append(Track(track.id, bank, status, history, track.age + 1, misses, out, decision))

    by_id = {t.id: t for t in new_tracks}
    next_id = state.next_id
    leftovers = []
    for d in asg.unassigned_detections:
        z = Z[d]
        velocity = None
        vel_var = None
        best = None
        for prev_z, prev_id in state.leftovers:
            prev_track = by_id.get(prev_id)
            # Only pair with a leftover whose own track failed to pick up anything this frame.
            if prev_track is None or prev_track.history[-1]:
                continue
            dist = float(np.linalg.norm(z - prev_z))
            if dist <= gnn.init_max_speed * dt and (best is None or dist < best[0]):
                best = (dist, prev_z, prev_id)
        if best is not None:
            _, prev_z, prev_id = best
            velocity = (z - prev_z) / dt
            vel_var = 2.0 * float(np.max(np.diag(R))) / dt**2
            by_id[prev_id].status = TrackStatus.DELETED  # superseded by the two-point track
        bank = new_track_bank(z, R, params, velocity, vel_var)
        n_max = bank.max_dim
        out = pad_or_truncate(GaussianEstimate(bank.means[0, : bank.dims[0]], bank.covs[0, : bank.dims[0], : bank.dims[0]]),
                              n_max, params.imm.pad_variance)
        track = Track(next_id, bank, TrackStatus.TENTATIVE, (True,), 0, 0, out, None)
        new_tracks.append(track)
        leftovers.append((z.copy(), next_id))
        next_id += 1

    alive = [t for t in new_tracks if t.status is not TrackStatus.DELETED]
    confirmed = [t for t in alive if t.status is TrackStatus.CONFIRMED]
    return TrackerState(alive, next_id, leftovers), confirmed
