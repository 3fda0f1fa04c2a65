"""
Training Configuration
Defines the run configuration for behavior cloning and DDCO training
"""

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

from ..errors import ConfigError


class HeadMode(Enum):
    """High-level output distribution"""
    CATEGORICAL = "categorical"
    HYBRID = "hybrid"
    FLAT = "flat"


class BatchMode(Enum):
    """Unit of data per gradient step"""
    TRAJECTORY = "trajectory"
    FULL = "full"


class InitMode(Enum):
    RANDOM = "random"
    VQ = "vq"


class Schedule(Enum):
    """Joint training or the two-phase layer-wise schedule"""
    JOINT = "joint"
    LAYERWISE = "layerwise"


class OptimizerKind(Enum):
    SGD = "sgd"
    MOMENTUM = "momentum"
    ADAM = "adam"


@dataclass(frozen=True)
class ArchitectureConfig:
    """Network architecture of one policy component"""
    kind: str = "mlp"
    hidden_width: int = 64

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ConfigError(f"Unknown architecture kind: {self.kind!r}")
        if self.kind == "mlp" and self.hidden_width < 1:
            raise ConfigError(f"hidden_width must be >= 1, got {self.hidden_width}")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "hidden_width": self.hidden_width}


@dataclass(frozen=True)
class OptimizerConfig:
    """First-order optimizer settings (gradient ascent on log-likelihood)"""
    kind: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 1e-5
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must be in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


def _check_common(sigma: float, dropout_rate: float) -> None:
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigError(f"dropout_rate must be in [0, 1), got {dropout_rate}")


@dataclass(frozen=True)
class BCConfig:
    """Configuration for flat behavior cloning"""
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    sigma: float = 0.1
    epochs: int = 50
    batch: BatchMode = BatchMode.TRAJECTORY
    seed: int = 0
    dropout_rate: float = 0.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        _check_common(self.sigma, self.dropout_rate)
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "arch": self.arch.to_dict(),
            "sigma": self.sigma,
            "epochs": self.epochs,
            "batch": self.batch.value,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "optimizer": self.optimizer.to_dict(),
        }


@dataclass(frozen=True)
class TrainConfig:
    """Configuration for DDCO Expectation-Gradient training"""
    k: int = 2
    head_mode: HeadMode = HeadMode.CATEGORICAL
    sigma: float = 0.1
    epochs: int = 50
    batch: BatchMode = BatchMode.TRAJECTORY
    seed: int = 0
    dropout_rate: float = 0.0
    init: InitMode = InitMode.RANDOM
    schedule: Schedule = Schedule.JOINT
    phase1_epochs: Optional[int] = None
    finetune_options: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    high_arch: ArchitectureConfig = field(default_factory=lambda: ArchitectureConfig(kind="linear"))
    option_arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    termination_arch: ArchitectureConfig = field(default_factory=lambda: ArchitectureConfig(kind="linear"))
    vq_epochs: Optional[int] = None
    jobs: int = 1

    def __post_init__(self):
        _check_common(self.sigma, self.dropout_rate)
        if self.head_mode is HeadMode.FLAT:
            raise ConfigError("DDCO training needs a categorical or hybrid head")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.head_mode is HeadMode.CATEGORICAL and self.k < 1:
            raise ConfigError("k >= 1 is required for a categorical-only head")
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.init is InitMode.VQ and self.k < 1:
            raise ConfigError("vq initialization needs k >= 1")
        if self.phase1_epochs is not None and not 0 <= self.phase1_epochs <= self.epochs:
            raise ConfigError(f"phase1_epochs must be within [0, {self.epochs}]")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    @property
    def layerwise_phase1_epochs(self) -> int:
        """Epochs spent training options under a uniform high-level policy"""
        if self.schedule is not Schedule.LAYERWISE or self.k == 0:
            return 0
        if self.phase1_epochs is not None:
            return self.phase1_epochs
        return self.epochs // 2

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def bc_config(self) -> BCConfig:
        """Behavior cloning settings with the same optimization parameters"""
        return BCConfig(
            arch=self.option_arch,
            sigma=self.sigma,
            epochs=self.vq_epochs if self.vq_epochs is not None else self.epochs,
            batch=BatchMode.FULL,
            seed=self.seed,
            dropout_rate=self.dropout_rate,
            optimizer=self.optimizer,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "head_mode": self.head_mode.value,
            "sigma": self.sigma,
            "epochs": self.epochs,
            "batch": self.batch.value,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "init": self.init.value,
            "schedule": self.schedule.value,
            "phase1_epochs": self.layerwise_phase1_epochs,
            "finetune_options": self.finetune_options,
            "optimizer": self.optimizer.to_dict(),
            "high_arch": self.high_arch.to_dict(),
            "option_arch": self.option_arch.to_dict(),
            "termination_arch": self.termination_arch.to_dict(),
            "jobs": self.jobs,
        }
