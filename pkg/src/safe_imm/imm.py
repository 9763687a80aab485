"""IMM recursion with a covariance-aware winner-takes-all output gate.

One cycle: priors, mixing, per-model predict/update, likelihoods, posterior
weights, TPM adaptation, then the gated output. The gate only decides what is
*emitted*; the recursion itself always carries the full model bank.

Gate logic: with winner ``w`` (argmax posterior), tail mass ``t = 1 - c_w`` and
rival weights renormalised over the tail, every rival mean is mapped into the
winner's space and compared with a reference covariance
``Pbar = (P_w + sum_i wt_i P_i->w) / 2``. Then

    || mu_mix - mu_w || <= B = t * sqrt(tr(Pbar) * sum_i wt_i d_i^2)

with ``d_i^2`` the ``Pbar``-Mahalanobis distance of rival ``i``. WTA may fire
only when ``B <= epsilon``, so the emitted jump never exceeds ``epsilon``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels as _k
from .estimate import GaussianEstimate
from .kalman import Innovation, _t_const, innovation
from .models import (DEFAULT_PAD_VARIANCE, MotionModel, ca_model, cv_model, pad_or_truncate, process_noise,
                     transition_matrix)
from .tpm_adapt import AdaptState, TpmConfig

DEGENERATE_MASS = _k.DEGENERATE_MASS


@dataclass
class GateConfig:
    epsilon: float = 0.5
    margin: float = 0.05
    streak_len: int = 2
    enabled: bool = True
    # Optional per-component scaling of the state before measuring drift.
    scale: Optional[np.ndarray] = None


@dataclass
class ImmConfig:
    gate: GateConfig = field(default_factory=GateConfig)
    tpm: TpmConfig = field(default_factory=TpmConfig)
    likelihood: str = "gaussian"
    nu: float = 5.0
    pad_variance: float = DEFAULT_PAD_VARIANCE
    prob_floor: float = 1e-6
    output_dim: Optional[int] = None

    def __post_init__(self):
        if self.likelihood not in ("gaussian", "student_t"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if not self.nu > 0:
            raise ValueError("nu must be positive")


@dataclass(frozen=True)
class WtaStreak:
    consecutive_pass: int = 0
    last_winner: Optional[int] = None


class ModelBank:
    """Per-model estimates, model probabilities, TPM and gate/adaptation state.

    Estimates are stored padded to the largest model dimension; the
    ``estimates`` property returns them at each model's native size.
    """

    def __init__(
        self,
        models: Sequence[MotionModel],
        estimates: Sequence[GaussianEstimate],
        weights,
        tpm,
        streak: WtaStreak = WtaStreak(),
        adapt: Optional[AdaptState] = None,
    ):
        models = tuple(models)
        M = len(models)
        dims = np.array([m.state_dim for m in models], dtype=np.int64)
        N = int(dims.max())
        means = np.zeros((M, N))
        covs = np.zeros((M, N, N))
        if len(estimates) != M:
            raise ValueError("one estimate per model required")
        for i, (e, n) in enumerate(zip(estimates, dims)):
            if e.mean.shape[0] != n:
                raise ValueError(f"estimate {i} has dim {e.mean.shape[0]}, model expects {n}")
            means[i, :n] = e.mean
            covs[i, :n, :n] = e.cov
        self._set(models, dims, means, covs, np.asarray(weights, float), np.asarray(tpm, float),
                  streak, adapt if adapt is not None else AdaptState())
        if self.weights.shape != (M,) or self.tpm.shape != (M, M):
            raise ValueError("model bank components disagree on the number of models")

    def _set(self, models, dims, means, covs, weights, tpm, streak, adapt):
        self.models = models
        self.dims = dims
        self.means = means
        self.covs = covs
        self.weights = weights
        self.tpm = tpm
        self.streak = streak
        self.adapt = adapt

    @classmethod
    def _from_arrays(cls, models, dims, means, covs, weights, tpm, streak, adapt) -> "ModelBank":
        bank = cls.__new__(cls)
        bank._set(models, dims, means, covs, weights, tpm, streak, adapt)
        return bank

    def replace(self, **changes) -> "ModelBank":
        fields = dict(models=self.models, dims=self.dims, means=self.means, covs=self.covs,
                      weights=self.weights, tpm=self.tpm, streak=self.streak, adapt=self.adapt)
        fields.update(changes)
        return ModelBank._from_arrays(**fields)

    @property
    def estimates(self) -> list[GaussianEstimate]:
        return [GaussianEstimate(self.means[i, :n].copy(), self.covs[i, :n, :n].copy())
                for i, n in enumerate(self.dims)]

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def winner(self) -> int:
        return int(np.argmax(self.weights))

    @property
    def max_dim(self) -> int:
        return int(self.dims.max())

    def __repr__(self):
        kinds = ",".join(m.kind.name for m in self.models)
        return f"ModelBank([{kinds}], weights={np.round(self.weights, 4).tolist()})"


@dataclass
class DriftBound:
    bound: float
    pbar: Optional[np.ndarray]
    dbar2: float
    winner: int
    winner_prob: float
    tail: float


@dataclass
class GateDecision:
    bound: float
    epsilon: float
    fired: bool
    winner_idx: int
    winner_prob: float
    tail: float
    margin_ok: bool
    streak_len: int
    actual_drift: float
    margin: float = float("nan")
    loglik_margin: float = float("nan")
    dbar2: float = 0.0
    bound_ok: bool = True


@dataclass
class StepInfo:
    """Diagnostics of one IMM cycle beyond the gate decision."""

    logliks: np.ndarray
    priors: np.ndarray
    mixing_degenerate: bool = False
    posterior_fallback: bool = False


def default_bank(
    mean: np.ndarray,
    cov: np.ndarray,
    weights: Sequence[float] = (0.9, 0.1),
    models: Optional[Sequence[MotionModel]] = None,
    tpm: Optional[np.ndarray] = None,
    pad_variance: float = DEFAULT_PAD_VARIANCE,
    window: int = 5,
) -> ModelBank:
    """Bank (CV+CA by default) whose per-model estimates are ``(mean, cov)`` mapped into each space."""
    if models is None:
        models = (cv_model(), ca_model())
    if tpm is None:
        tpm = TpmConfig().pi_base if len(models) == 2 else np.eye(len(models))
    est = GaussianEstimate(mean, cov)
    estimates = [pad_or_truncate(est, m.state_dim, pad_variance) for m in models]
    return ModelBank(models, estimates, weights, tpm, adapt=AdaptState(window))


def _scale_vector(scale, n: int) -> np.ndarray:
    if scale is None:
        return np.ones(n)
    s = np.ones(n)
    scale = np.asarray(scale, dtype=float)
    s[: min(n, scale.shape[0])] = scale[:n]
    return s


def model_priors(bank: ModelBank) -> np.ndarray:
    """Predicted model probabilities ``tpm.T @ weights``."""
    return _k.priors(bank.weights, bank.tpm)


def mix_initial_conditions(
    bank: ModelBank, pad_variance: float = DEFAULT_PAD_VARIANCE
) -> tuple[list[GaussianEstimate], bool]:
    """Per-model mixed initial conditions and a degeneracy flag.

    Mixing weights are ``alpha[i, j] = tpm[i, j] * c_i / cbar_j``. A target
    model whose predicted mass ``cbar_j`` is below 1e-12 keeps its own
    estimate instead.
    """
    om, oc, degenerate = _k.mix(bank.means, bank.covs, bank.dims, bank.weights, bank.tpm, pad_variance)
    return [GaussianEstimate(om[i, :n], oc[i, :n, :n]) for i, n in enumerate(bank.dims)], bool(degenerate)


def posterior_weights(priors, logliks, floor: float = 1e-6) -> tuple[np.ndarray, bool]:
    """Normalised ``prior * exp(loglik)`` computed in log space, then floored.

    Returns the weights and a flag that is set when no model had usable
    likelihood mass and the priors were returned instead.
    """
    w, fallback = _k.posterior(np.asarray(priors, float), np.asarray(logliks, float), float(floor))
    return w, bool(fallback)


def mixture_moments(
    bank: ModelBank, target_space: int, pad_variance: float = DEFAULT_PAD_VARIANCE
) -> GaussianEstimate:
    """Single-Gaussian moment match of the bank, expressed in model ``target_space``'s state."""
    n = int(bank.dims[target_space])
    x = np.zeros(n)
    P = np.zeros((n, n))
    _k.mixture_into(bank.means, bank.covs, bank.dims, bank.weights, n, pad_variance, x, P)
    return GaussianEstimate(x, P)


def drift_bound(
    bank: ModelBank,
    pad_variance: float = DEFAULT_PAD_VARIANCE,
    scale: Optional[np.ndarray] = None,
) -> DriftBound:
    """Upper bound ``B`` on the distance between the mixture mean and the winner mean.

    Everything is evaluated in the winner's state space. With no tail mass
    the bound is exactly zero.
    """
    B, dbar2, tail, win, pbar = _k.drift_bound(
        bank.means, bank.covs, bank.dims, bank.weights, pad_variance,
        _scale_vector(scale, bank.max_dim))
    return DriftBound(float(B), pbar if tail > 0 and bank.n_models > 1 else None,
                      float(dbar2), int(win), float(bank.weights[win]), float(tail))


def _gate(bank: ModelBank, cfg: ImmConfig, logliks) -> tuple[GaussianEstimate, GateDecision]:
    gate = cfg.gate
    n_out = cfg.output_dim or bank.max_dim
    has_ll = logliks is not None
    ll = np.asarray(logliks, float) if has_ll else np.zeros(bank.n_models)
    prev = bank.streak
    x, P, stats, (win, streak), (fired, margin_ok, bound_ok) = _k.gate(
        bank.means, bank.covs, bank.dims, bank.weights, ll, has_ll, cfg.pad_variance,
        _scale_vector(gate.scale, bank.max_dim), n_out, gate.epsilon, gate.margin,
        gate.streak_len, gate.enabled, prev.consecutive_pass,
        -1 if prev.last_winner is None else prev.last_winner)
    B, dbar2, tail, wprob, actual, margin, ll_margin = stats.tolist()
    decision = GateDecision(B, gate.epsilon, bool(fired), int(win), wprob, tail, bool(margin_ok),
                            int(streak), actual, margin, ll_margin, dbar2, bool(bound_ok))
    return GaussianEstimate(x, P), decision


def safe_output(
    bank: ModelBank,
    cfg: Optional[ImmConfig] = None,
    logliks: Optional[np.ndarray] = None,
) -> tuple[GaussianEstimate, GateDecision]:
    """Gated output of a posterior bank.

    Emits the winner's estimate when the drift bound is within ``epsilon``,
    the probability margin is at least ``margin`` and the same winner has
    passed for ``streak_len`` consecutive steps (including this one).
    Otherwise emits the moment-matched mixture. The output lives in a fixed
    canonical space (the largest model state by default). The streak is
    read from ``bank.streak``; the updated count is in the decision.
    """
    return _gate(bank, cfg or ImmConfig(), logliks)


_FQ_CACHE: dict = {}


def _padded_dynamics(models: tuple, dt: float) -> tuple[np.ndarray, np.ndarray]:
    key = (models, float(dt))
    hit = _FQ_CACHE.get(key)
    if hit is None:
        N = max(m.state_dim for m in models)
        F = np.zeros((len(models), N, N))
        Q = np.zeros((len(models), N, N))
        for i, m in enumerate(models):
            n = m.state_dim
            F[i, :n, :n] = transition_matrix(m, dt)
            Q[i, :n, :n] = process_noise(m, dt)
        if len(_FQ_CACHE) > 512:
            _FQ_CACHE.clear()
        hit = _FQ_CACHE[key] = (F, Q)
    return hit


@dataclass
class PredictedBank:
    """Bank after mixing and prediction, before any measurement."""

    bank: ModelBank
    means: np.ndarray
    covs: np.ndarray
    priors: np.ndarray
    mixing_degenerate: bool

    @property
    def predicted(self) -> list[GaussianEstimate]:
        return [GaussianEstimate(self.means[i, :n], self.covs[i, :n, :n])
                for i, n in enumerate(self.bank.dims)]

    def top_model(self) -> int:
        return int(np.argmax(self.bank.weights))

    def innovation(self, z: np.ndarray, R: np.ndarray, model: Optional[int] = None) -> Innovation:
        j = self.top_model() if model is None else model
        n = self.bank.dims[j]
        return innovation(GaussianEstimate(self.means[j, :n], self.covs[j, :n, :n]), z, R)

    def mahalanobis2(self, Z: np.ndarray, R: np.ndarray, model: Optional[int] = None) -> np.ndarray:
        """Squared Mahalanobis distance of each row of ``Z`` under one model's prediction."""
        j = self.top_model() if model is None else model
        return _k.maha_batch(self.means[j], self.covs[j], R, Z)


def imm_predict(bank: ModelBank, dt: float, cfg: Optional[ImmConfig] = None) -> PredictedBank:
    """Priors, mixing and per-model prediction."""
    cfg = cfg or ImmConfig()
    F, Q = _padded_dynamics(bank.models, dt)
    means, covs, pr, degenerate = _k.predict_bank(
        bank.means, bank.covs, bank.dims, bank.weights, bank.tpm, F, Q, cfg.pad_variance)
    return PredictedBank(bank, means, covs, pr, bool(degenerate))


def imm_correct(
    pred: PredictedBank,
    z: Optional[np.ndarray],
    R: Optional[np.ndarray],
    cfg: Optional[ImmConfig] = None,
    nu: Optional[float] = None,
) -> tuple[ModelBank, GaussianEstimate, GateDecision, StepInfo]:
    """Measurement update, posterior weights, TPM adaptation and gated output.

    With ``z is None`` the step is predict-only: estimates stay predicted and
    the weights become the priors. ``nu`` overrides the configured Student-t
    degrees of freedom for this step (e.g. under jamming). A model whose
    update fails gets log-likelihood ``-inf`` and keeps its prediction.
    """
    cfg = cfg or ImmConfig()
    bank = pred.bank
    M = bank.n_models
    if z is None:
        means, covs = pred.means, pred.covs
        logliks = np.zeros(M)
        w, fallback = pred.priors, False
    else:
        nu_eff = float(cfg.nu if nu is None else nu)
        lik_kind = 0 if cfg.likelihood == "gaussian" else 1
        means, covs, logliks, w, fallback = _k.correct_bank(
            pred.means, pred.covs, bank.dims, pred.priors,
            np.asarray(z, dtype=float), np.ascontiguousarray(R, dtype=float),
            lik_kind, nu_eff, _t_const(nu_eff, 3) if lik_kind else 0.0, cfg.prob_floor)

    adapt = bank.adapt
    tpm = bank.tpm
    if cfg.tpm.enabled and M > 1:
        lh = adapt.loglik_history
        if lh.shape[1] != M:
            lh = np.zeros((adapt.window, M))
        wh, count = adapt.winner_history, adapt.count
        if z is not None:
            lh, wh, count = _k.push_history(lh, wh, count, logliks, _k.argmax_first(w))
            adapt = AdaptState(adapt.window, lh, wh, count)
        tpm = _k.adapt_tpm(cfg.tpm.pi_base, cfg.tpm.params(), cfg.tpm.cv_index, cfg.tpm.ca_index,
                           lh, wh, count, adapt.window, w)
    post = ModelBank._from_arrays(bank.models, bank.dims, means, covs, w, tpm, bank.streak, adapt)
    out, decision = _gate(post, cfg, logliks if z is not None else None)
    post.streak = WtaStreak(decision.streak_len, decision.winner_idx)
    info = StepInfo(logliks, pred.priors, pred.mixing_degenerate, bool(fallback))
    return post, out, decision, info


def imm_step(
    bank: ModelBank,
    z: Optional[np.ndarray],
    R: Optional[np.ndarray],
    dt: float,
    cfg: Optional[ImmConfig] = None,
    nu: Optional[float] = None,
) -> tuple[ModelBank, GaussianEstimate, GateDecision]:
    """One full IMM cycle; ``z=None`` runs a predict-only step."""
    new_bank, out, decision, _ = imm_correct(imm_predict(bank, dt, cfg), z, R, cfg, nu)
    return new_bank, out, decision


def fixed_tpm_config(**kwargs) -> ImmConfig:
    cfg = ImmConfig(**kwargs)
    return replace(cfg, tpm=replace(cfg.tpm, enabled=False))
