"""
Policy Rollouts
===============

Closed-loop execution of flat and hierarchical policies in the pushing task.
A hierarchical policy samples an option from eta, applies its controls until
its termination fires at the next state, then selects again; the physical
control branch h^c applies one control from the high-level Gaussian and
always selects again.

Episode seed s uses default_rng([s, 0]) for the environment and
default_rng([s, 1]) for the policy.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit, softmax

from ..core import AnyPolicy, FlatPolicy, HierarchicalPolicy
from ..errors import ConfigError, DimensionError
from ..workflows.orchestrator import JobOrchestrator
from .push import DEFAULT_CONFIG, PushConfig, PushEnv, supervisor_episode

logger = logging.getLogger(__name__)

STOCHASTIC = "stochastic"
MEAN = "mean"


@dataclass
class TraceStep:
    t: int
    state: np.ndarray
    option: Optional[int]
    control: np.ndarray
    terminated: Optional[bool]


@dataclass
class RolloutResult:
    """Reward and execution trace of one episode"""
    reward: int
    toppled: bool
    trace: List[TraceStep] = field(default_factory=list)
    aborted: bool = False
    diagnostic: Optional[str] = None
    hc_label: Optional[int] = None

    @property
    def steps(self) -> int:
        return len(self.trace)

    @property
    def hc_fraction(self) -> float:
        """Share of steps driven by the physical-control branch"""
        if self.hc_label is None or not self.trace:
            return 0.0
        return sum(1 for step in self.trace if step.option == self.hc_label) / len(self.trace)

    def trace_frame(self) -> pd.DataFrame:
        rows = []
        for step in self.trace:
            row = {"t": step.t}
            row.update({f"s{i}": x for i, x in enumerate(step.state)})
            row["option"] = step.option
            row.update({f"a{i}": x for i, x in enumerate(step.control)})
            row["terminated"] = step.terminated
            rows.append(row)
        return pd.DataFrame(rows)

    def write_trace_csv(self, path: Union[str, Path]) -> None:
        self.trace_frame().to_csv(path, index=False, float_format="%.17g")


class _Selector:
    """High-level selection and option execution for one episode"""

    def __init__(self, policy: HierarchicalPolicy, rng: np.random.Generator, mode: str):
        self.policy = policy
        self.rng = rng
        self.mode = mode
        self.hc = policy.k if policy.is_hybrid else None

    def select(self, state: np.ndarray) -> int:
        outputs, _ = self.policy.high.forward_batch(state[None, :])
        if self.policy.is_hybrid:
            probs = softmax(outputs[1][0])
            probs = np.concatenate([probs[1:], probs[:1]])
        else:
            probs = softmax(outputs[0][0])
        if self.mode == MEAN:
            return int(np.argmax(probs))
        return int(self.rng.choice(probs.size, p=probs / probs.sum()))

    def mean_control(self, option: int, state: np.ndarray) -> np.ndarray:
        if option == self.hc:
            return self.policy.high.forward_batch(state[None, :])[0][0][0]
        return self.policy.options[option].policy.forward_batch(state[None, :])[0][0][0]

    def terminates(self, option: int, state: np.ndarray) -> bool:
        if option == self.hc:
            return True
        z = self.policy.options[option].termination.forward_batch(state[None, :])[0][0][0, 0]
        psi = expit(z)
        if self.mode == MEAN:
            return bool(psi >= 0.5)
        return bool(self.rng.random() < psi)


def rollout(policy: AnyPolicy,
            horizon: Optional[int] = None,
            seed: int = 0,
            mode: str = STOCHASTIC,
            config: PushConfig = DEFAULT_CONFIG) -> RolloutResult:
    """
    Run one pushing episode.

    Args:
        policy: HierarchicalPolicy or FlatPolicy over the pushing observation
        horizon: Step budget (default: the episode length)
        seed: Episode seed
        mode: "stochastic" samples controls and selections; "mean" uses the
            means, the most likely option and psi >= 0.5 terminations

    Returns:
        RolloutResult; a non-finite control aborts the episode with a diagnostic
    """
    if mode not in (STOCHASTIC, MEAN):
        raise ConfigError(f"mode must be '{STOCHASTIC}' or '{MEAN}', got {mode!r}")
    env = PushEnv(config, rng=np.random.default_rng([seed, 0]))
    policy_rng = np.random.default_rng([seed, 1])
    if policy.d_s != env.observation_dim or policy.d_a != env.control_dim:
        raise DimensionError(
            f"policy dimensions ({policy.d_s}, {policy.d_a}) do not match the pushing task "
            f"({env.observation_dim}, {env.control_dim})")
    horizon = horizon if horizon is not None else config.episode_length

    hierarchical = isinstance(policy, HierarchicalPolicy)
    selector = _Selector(policy, policy_rng, mode) if hierarchical else None
    result = RolloutResult(reward=0, toppled=False, hc_label=selector.hc if selector else None)

    state = env.observation()
    option, terminated = (selector.select(state), True) if hierarchical else (None, None)
    for t in range(horizon):
        if hierarchical:
            mean = selector.mean_control(option, state)
        else:
            mean = policy.network.forward_batch(state[None, :])[0][0][0]
        control = mean if mode == MEAN else mean + policy.sigma * policy_rng.standard_normal(mean.size)
        if not np.all(np.isfinite(control)):
            result.aborted = True
            result.diagnostic = f"non-finite control at t={t} (option {option}): {control.tolist()}"
            logger.warning(f"Rollout seed {seed} aborted: {result.diagnostic}")
            break

        result.trace.append(TraceStep(t, state, option, control, terminated))
        state = env.step(control)
        if env.failed:
            break
        if hierarchical:
            terminated = selector.terminates(option, state)
            if terminated:
                option = selector.select(state)

    result.reward = env.reward
    result.toppled = env.failed
    return result


def evaluate_policy(policy: AnyPolicy,
                    seeds: Sequence[int],
                    horizon: Optional[int] = None,
                    mode: str = STOCHASTIC,
                    config: PushConfig = DEFAULT_CONFIG,
                    jobs: Optional[int] = None) -> pd.DataFrame:
    """One episode per seed (in parallel); columns seed, reward, toppled, aborted, steps, hc_fraction"""
    results = JobOrchestrator(jobs).map(
        lambda seed: rollout(policy, horizon, seed, mode, config), seeds, prefix="rollout")
    return pd.DataFrame({
        "seed": list(seeds),
        "reward": [r.reward for r in results],
        "toppled": [r.toppled for r in results],
        "aborted": [r.aborted for r in results],
        "steps": [r.steps for r in results],
        "hc_fraction": [r.hc_fraction for r in results],
    })


def supervisor_reference(seeds: Sequence[int],
                         horizon: Optional[int] = None,
                         config: PushConfig = DEFAULT_CONFIG,
                         jobs: Optional[int] = None) -> pd.DataFrame:
    """Scripted supervisor episodes under the same seeds (the maximum-reward reference)"""
    finals = JobOrchestrator(jobs).map(lambda seed: supervisor_episode(seed, horizon, config), seeds,
                                       prefix="supervisor")
    return pd.DataFrame({
        "seed": list(seeds),
        "reward": [s.goals_reached for s in finals],
        "toppled": [s.box_toppled for s in finals],
    })
