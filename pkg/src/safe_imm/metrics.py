"""RMSE and OSPA evaluation of tracker output against ground truth."""
from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .association import solve_assignment


@dataclass
class OspaResult:
    total: float
    loc: float
    card: float


@dataclass
class RmseResult:
    value: float
    n_matched: int
    n_gaps: int


def rmse(truth: np.ndarray, est: np.ndarray, axis: Optional[int] = None) -> RmseResult:
    """RMSE over frames where ``est`` is finite.

    ``truth`` and ``est`` are ``(K, d)`` on the same time base; rows of
    ``est`` containing NaN are gaps (no matched track) and are excluded.
    With ``axis`` given only that column is scored; otherwise the error is
    the Euclidean norm over all columns.
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    est = np.atleast_2d(np.asarray(est, dtype=float))
    if truth.shape != est.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {est.shape}")
    ok = np.all(np.isfinite(est), axis=1)
    err = est[ok] - truth[ok]
    if axis is not None:
        err = err[:, [axis]]
    n = int(ok.sum())
    value = float(np.sqrt(np.mean(np.sum(err**2, axis=1)))) if n else float("nan")
    return RmseResult(value, n, int(len(ok) - n))


def _points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, X.shape[-1] if X.ndim > 1 else 1)
    return X.reshape(-1, X.shape[-1])


def ospa(X, Y, c: float = 2.0, p: float = 1.0) -> OspaResult:
    """OSPA distance between point sets ``X`` and ``Y`` (rows are points).

    Returns the total plus its localisation and cardinality components;
    for ``p = 1`` they add up to the total.
    """
    if not c > 0 or not p >= 1:
        raise ValueError("OSPA needs c > 0 and p >= 1")
    X, Y = _points(X), _points(Y)
    m, n = X.shape[0], Y.shape[0]
    if m == 0 and n == 0:
        return OspaResult(0.0, 0.0, 0.0)
    if m > n:
        X, Y, m, n = Y, X, n, m
    if m == 0:
        return OspaResult(c, 0.0, c)
    D = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    Dc = np.minimum(D, c) ** p
    asg = solve_assignment(Dc)
    # exact summation keeps the result independent of argument order
    loc_sum = math.fsum(Dc[i, j] for i, j in asg.pairs)
    card_sum = c**p * (n - m)
    total = ((loc_sum + card_sum) / n) ** (1.0 / p)
    return OspaResult(float(total), float((loc_sum / n) ** (1.0 / p)), float((card_sum / n) ** (1.0 / p)))


@dataclass
class TrackMatcher:
    """Binds each truth target to a track id on first approach and keeps it.

    A target is bound to the nearest confirmed track within ``radius`` the
    first time one exists; the binding persists while that track lives, so
    ID switches show up as rebinds.
    """

    radius: float = 2.0
    bound: dict = field(default_factory=dict)
    switches: dict = field(default_factory=dict)

    def match(self, truth_pos: dict, tracks: dict) -> dict:
        """``truth_pos``: target id -> position; ``tracks``: track id -> position.

        Returns target id -> matched track id (or None).
        """
        taken = {tid for tgt, tid in self.bound.items() if tid in tracks}
        out = {}
        for tgt, pos in truth_pos.items():
            tid = self.bound.get(tgt)
            if tid is not None and tid in tracks:
                out[tgt] = tid
                continue
            best, best_d = None, self.radius
            for k, tp in tracks.items():
                if k in taken:
                    continue
                d = float(np.linalg.norm(np.asarray(tp)[:3] - np.asarray(pos)[:3]))
                if d <= best_d:
                    best, best_d = k, d
            if best is not None:
                if tid is not None:
                    self.switches[tgt] = self.switches.get(tgt, 0) + 1
                self.bound[tgt] = best
                taken.add(best)
            out[tgt] = best
        return out


def mean_ospa(truth_frames: Sequence[np.ndarray], est_frames: Sequence[np.ndarray],
              c: float = 2.0, p: float = 1.0) -> OspaResult:
    res = [ospa(X, Y, c, p) for X, Y in zip(truth_frames, est_frames)]
    if not res:
        return OspaResult(0.0, 0.0, 0.0)
    return OspaResult(float(np.mean([r.total for r in res])), float(np.mean([r.loc for r in res])),
                      float(np.mean([r.card for r in res])))
