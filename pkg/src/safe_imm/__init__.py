"""Interacting-multiple-model tracking with a covariance-aware winner-takes-all output gate."""
from .estimate import GaussianEstimate
from .imm import GateConfig, GateDecision, ImmConfig, ModelBank, default_bank, imm_step
from .models import MotionModel, ModelKind, ca_model, cv_model
from .tpm_adapt import TpmConfig

__version__ = "0.1.0"

__all__ = [
    "GaussianEstimate",
    "GateConfig",
    "GateDecision",
    "ImmConfig",
    "ModelBank",
    "MotionModel",
    "ModelKind",
    "TpmConfig",
    "ca_model",
    "cv_model",
    "default_bank",
    "imm_step",
]
