"""
First-Order Optimizers
Gradient-ascent updates (we maximize log-likelihood) for SGD, momentum and Adam
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..configs.training_config import OptimizerConfig, OptimizerKind
from ..errors import DimensionError, OptimizerError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Optimizer settings plus per-parameter buffers sized to theta"""
    config: OptimizerConfig
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def create(cls, config: OptimizerConfig, n_params: int) -> "OptimizerState":
        if config.kind is OptimizerKind.MOMENTUM:
            buffers = {"velocity": np.zeros(n_params)}
        elif config.kind is OptimizerKind.ADAM:
            buffers = {"m": np.zeros(n_params), "v": np.zeros(n_params)}
        else:
            buffers = {}
        return cls(config, buffers, 0)

    @property
    def kind(self) -> OptimizerKind:
        return self.config.kind

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate

    def copy(self) -> "OptimizerState":
        return OptimizerState(self.config, {name: b.copy() for name, b in self.buffers.items()}, self.step_count)


def optimizer_step(state: OptimizerState,
                   params: np.ndarray,
                   grad: np.ndarray,
                   mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, OptimizerState]:
    """
    One ascent step along grad.

    Args:
        state: Current optimizer state (not modified)
        params: Parameter vector
        grad: Ascent direction, same shape as params
        mask: Optional boolean vector; False entries (and their buffers) stay frozen

    Returns:
        Tuple of (new params, new state)
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.ndim != 1:
        raise DimensionError(f"Parameter shape {params.shape} does not match gradient shape {grad.shape}")
    for name, buffer in state.buffers.items():
        if buffer.shape != params.shape:
            raise DimensionError(f"Optimizer buffer '{name}' has shape {buffer.shape}, expected {params.shape}")

    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise OptimizerError(f"non-finite gradient entry at parameter index {int(bad[0])}", index=int(bad[0]))

    config = state.config
    new_state = state.copy()
    new_state.step_count += 1

    if config.kind is OptimizerKind.SGD:
        update = config.learning_rate * grad
    elif config.kind is OptimizerKind.MOMENTUM:
        velocity = config.momentum * state.buffers["velocity"] + grad
        new_state.buffers["velocity"] = velocity
        update = config.learning_rate * velocity
    else:
        m = config.beta1 * state.buffers["m"] + (1.0 - config.beta1) * grad
        v = config.beta2 * state.buffers["v"] + (1.0 - config.beta2) * grad * grad
        new_state.buffers["m"] = m
        new_state.buffers["v"] = v
        m_hat = m / (1.0 - config.beta1 ** new_state.step_count)
        v_hat = v / (1.0 - config.beta2 ** new_state.step_count)
        update = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)

    if mask is None:
        return params + update, new_state

    mask = np.asarray(mask, dtype=bool)
    if mask.shape != params.shape:
        raise DimensionError(f"Mask shape {mask.shape} does not match parameter shape {params.shape}")
    for name, buffer in new_state.buffers.items():
        buffer[~mask] = state.buffers[name][~mask]
    return np.where(mask, params + update, params), new_state
