"""
Switching Linear Dynamics Generator
Synthetic demonstrations with known option labels: the active mode is chosen
by which x-interval the state lies in, and each mode applies its own linear
feedback law a = G_m s + c_m + noise to a single-integrator system s' = s + a
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..core import Dataset, Trajectory
from ..errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SldsConfig:
    """Mode count, noise and geometry of the switching system"""
    k_true: int = 2
    noise: float = 0.05
    horizon: int = 20
    x_low: float = -2.0
    x_high: float = 2.0
    start_low: float = -2.5
    start_high: float = -2.0
    start_y: float = 1.0
    gain: float = 0.5
    base_speed: float = 0.2
    speed_step: float = 0.05

    def __post_init__(self):
        if self.k_true < 1:
            raise ConfigError(f"k_true must be >= 1, got {self.k_true}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not self.x_low < self.x_high:
            raise ConfigError("x_low must be below x_high")

    @property
    def d_s(self) -> int:
        return 2

    @property
    def d_a(self) -> int:
        return 2

    def boundaries(self) -> np.ndarray:
        """Interior interval edges partitioning x into k_true regions"""
        return np.linspace(self.x_low, self.x_high, self.k_true + 1)[1:-1]

    def mode_of(self, state: np.ndarray) -> int:
        return int(np.searchsorted(self.boundaries(), state[0], side="right"))

    def target_height(self, mode: int) -> float:
        return 2.0 * (-1.0) ** mode * (1 + mode // 2)

    def law(self, mode: int) -> Tuple[np.ndarray, np.ndarray]:
        """(G_m, c_m): constant x speed, y pulled toward the mode's target height"""
        gain = np.array([[0.0, 0.0], [0.0, -self.gain]])
        offset = np.array([self.base_speed + self.speed_step * (mode % 2), self.gain * self.target_height(mode)])
        return gain, offset


def slds_generate(cfg: SldsConfig, n: int, seed: int) -> Tuple[Dataset, List[np.ndarray]]:
    """
    Simulate n trajectories of cfg.horizon steps; trajectory i uses default_rng([seed, i]).

    Returns:
        Tuple of (dataset, per-step mode labels aligned with the dataset)
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    laws = [cfg.law(m) for m in range(cfg.k_true)]
    trajectories = []
    labels = []
    for index in range(n):
        rng = np.random.default_rng([seed, index])
        state = np.array([rng.uniform(cfg.start_low, cfg.start_high), rng.uniform(-cfg.start_y, cfg.start_y)])
        states, controls, modes = [state], [], []
        for _ in range(cfg.horizon):
            mode = cfg.mode_of(state)
            gain, offset = laws[mode]
            control = gain @ state + offset
            if cfg.noise > 0:
                control = control + rng.normal(0.0, cfg.noise, size=cfg.d_a)
            state = state + control
            states.append(state)
            controls.append(control)
            modes.append(mode)
        trajectories.append(Trajectory(tuple(states), tuple(controls)))
        labels.append(np.array(modes, dtype=int))
    logger.debug(f"Generated {n} switching-system trajectories with k_true={cfg.k_true}")
    return Dataset.from_trajectories(trajectories), labels
