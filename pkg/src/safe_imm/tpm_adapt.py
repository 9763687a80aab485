"""Online transition-probability-matrix corrections.

The adapted matrix is recomputed from ``pi_base`` every step; nothing
accumulates in the base matrix, so turning adaptation off recovers the
fixed-TPM filter exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k

PI_BASE = ((0.992, 0.008), (0.015, 0.985))
MIN_ENTRY = _k.MIN_TPM_ENTRY


@dataclass
class TpmConfig:
    pi_base: np.ndarray = field(default_factory=lambda: np.array(PI_BASE))
    alpha_max: float = 0.7
    g_glr: float = 0.10
    g_ent: float = 0.50
    winner_bias: float = 0.10
    ca_boost: float = 0.15
    cv_boost: float = 0.05
    cap: float = 0.5
    window: int = 5
    enabled: bool = True
    # CA boost fires only when the windowed GLR exceeds this many nats.
    glr_threshold: float = 2.0
    cv_index: int = 0
    ca_index: int = 1

    def __post_init__(self):
        self.pi_base = np.asarray(self.pi_base, dtype=float)
        if not 0.0 <= self.alpha_max <= 1.0:
            raise ValueError("alpha_max must lie in [0, 1]")
        gains = (self.g_glr, self.g_ent, self.winner_bias, self.ca_boost, self.cv_boost)
        if min(gains) < 0:
            raise ValueError("TPM gains must be non-negative")
        if not 0.0 < self.cap < 1.0:
            raise ValueError("cap must lie in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        P = self.pi_base
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("pi_base must be square")
        if (P < 0).any() or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("pi_base must be row-stochastic")
        if self.glr_threshold < 0:
            raise ValueError("glr_threshold must be non-negative")

    def params(self) -> np.ndarray:
        return np.array([self.alpha_max, self.g_glr, self.g_ent, self.winner_bias,
                         self.ca_boost, self.cv_boost, self.cap, self.glr_threshold])


class AdaptState:
    """Sliding history of per-model log-likelihoods and winner indices.

    Immutable by convention: :meth:`push` returns a new state.
    """

    __slots__ = ("window", "loglik_history", "winner_history", "count")

    def __init__(self, window: int = 5, loglik_history=None, winner_history=None, count=None):
        self.window = int(window)
        if loglik_history is None:
            self.loglik_history = np.zeros((self.window, 0))
            self.winner_history = np.zeros(self.window, dtype=np.int64)
            self.count = 0
            return
        lh = np.asarray(loglik_history, dtype=float)
        wh = np.asarray(winner_history, dtype=np.int64)
        if count is None:
            # Plain sequences: keep the most recent `window` entries.
            lh, wh = lh[-self.window:], wh[-self.window:]
            count = lh.shape[0]
            pad = self.window - count
            if pad:
                lh = np.vstack([lh, np.zeros((pad, lh.shape[1]))])
                wh = np.concatenate([wh, np.zeros(pad, dtype=np.int64)])
        self.loglik_history = lh
        self.winner_history = wh
        self.count = int(count)

    def push(self, logliks, winner: int) -> "AdaptState":
        ll = np.asarray(logliks, dtype=float)
        lh = self.loglik_history
        if lh.shape[1] != ll.shape[0]:
            if self.count:
                raise ValueError("log-likelihood vector length changed")
            lh = np.zeros((self.window, ll.shape[0]))
        lh, wh, count = _k.push_history(lh, self.winner_history, self.count, ll, int(winner))
        return AdaptState(self.window, lh, wh, count)

    @property
    def full(self) -> bool:
        return self.count >= self.window

    def winner_streak(self) -> int:
        return int(_k.winner_streak(self.winner_history, self.count))

    def __repr__(self):
        return (f"AdaptState(window={self.window}, count={self.count}, "
                f"winners={self.winner_history[:self.count].tolist()})")


def glr_statistic(state: AdaptState) -> float:
    """Windowed evidence that some model beats the incumbent winner.

    Sum over the window of ``max_j loglik_j - loglik_incumbent`` where the
    incumbent is the most recent winner. Non-finite log-likelihoods are
    ignored per step.
    """
    if state.count == 0:
        raise ValueError("GLR needs at least one history entry")
    return float(_k.glr(state.loglik_history, state.winner_history, state.count))


def weight_entropy(w) -> float:
    """Shannon entropy of ``w`` normalised by ``log M`` into [0, 1]."""
    return float(_k.entropy(np.asarray(w, dtype=float)))


def blend_weight(cfg: TpmConfig, glr: float, entropy: float) -> float:
    return min(cfg.alpha_max, cfg.g_glr * glr + cfg.g_ent * entropy)


def adapt_tpm(cfg: TpmConfig, state: AdaptState, w) -> np.ndarray:
    """Adapted row-stochastic TPM for the next step.

    Blend toward a matrix polarised on the current winner by
    ``alpha = min(alpha_max, g_glr*GLR + g_ent*H(w))``, add the winner-streak
    self-transition bias, boost transitions into CA on GLR evidence (or into
    CV after a quiet full window), then cap off-diagonals and renormalise.
    """
    if not cfg.enabled:
        return cfg.pi_base.copy()
    w = np.asarray(w, dtype=float)
    lh = state.loglik_history
    if lh.shape[1] != w.shape[0]:
        lh = np.zeros((state.window, w.shape[0]))
    return _k.adapt_tpm(cfg.pi_base, cfg.params(), cfg.cv_index, cfg.ca_index,
                        lh, state.winner_history, state.count, state.window, w)
