from .settings import Settings, get_settings, reset_settings, setup_logging
from .training_config import (
    ArchitectureConfig,
    BatchMode,
    BCConfig,
    HeadMode,
    InitMode,
    OptimizerConfig,
    OptimizerKind,
    Schedule,
    TrainConfig,
)

__all__ = [
    "Settings",
    "get_settings",
    "reset_settings",
    "setup_logging",
    "ArchitectureConfig",
    "BatchMode",
    "BCConfig",
    "HeadMode",
    "InitMode",
    "OptimizerConfig",
    "OptimizerKind",
    "Schedule",
    "TrainConfig",
]
