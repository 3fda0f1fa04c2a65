"""
Planar Pushing Environment
==========================

A three-link arm (links 5, 5, 3, base at the origin) pushes a box along a
surface toward goal positions. Contact is quasi-static and one-dimensional:
while the end effector sits in the box's height band next to its side and
moves horizontally toward it, the box slides by a friction-attenuated share of
that motion. Entering the band with too much vertical speed topples the box,
which ends the episode as a failure.

Observations are (phi1, phi2, phi3, box_x, box_y, toppled, goal_x); controls
are joint angular velocities.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core import Dataset, Trajectory
from ..errors import ConfigError

logger = logging.getLogger(__name__)

OBSERVATION_DIM = 7
CONTROL_DIM = 3


@dataclass(frozen=True)
class PushConfig:
    """Geometry and contact constants of the pushing task"""
    link_lengths: Tuple[float, float, float] = (5.0, 5.0, 3.0)
    workspace: float = 10.0
    surface_y: float = -6.0
    box_half_width: float = 1.0
    box_height: float = 2.0
    push_height: float = -5.0
    safe_height: float = -3.6
    rate_limit: float = 0.2
    friction: float = 0.8
    topple_threshold: float = 0.15
    goal_tolerance: float = 0.5
    contact_margin: float = 0.3
    goal_band: float = 7.0
    goal_min_distance: float = 2.0
    goal_max_distance: float = 5.0
    initial_joints: Tuple[float, float, float] = (math.pi / 4, -math.pi / 2, -math.pi / 4)
    initial_box_range: float = 3.0
    episode_length: int = 2000

    def __post_init__(self):
        if self.rate_limit <= 0 or not 0 < self.friction <= 1:
            raise ConfigError("rate_limit must be > 0 and friction in (0, 1]")
        if not 0 < self.goal_min_distance <= self.goal_max_distance:
            raise ConfigError("goal distances must satisfy 0 < min <= max")
        if self.goal_band > self.workspace:
            raise ConfigError("goal band must lie inside the workspace")
        if not self.surface_y < self.push_height < self.surface_y + self.box_height < self.safe_height:
            raise ConfigError("push height must be inside the box band and safe height above it")

    @property
    def box_y(self) -> float:
        """Vertical center of the box"""
        return self.surface_y + self.box_height / 2.0


DEFAULT_CONFIG = PushConfig()


@dataclass(frozen=True)
class PushEnvState:
    """Full low-dimensional state of the pushing task"""
    joints: Tuple[float, float, float]
    box_x: float
    box_toppled: bool
    goal_x: float
    steps_elapsed: int = 0
    goals_reached: int = 0


def arm_fk(joints: Sequence[float], link_lengths: Sequence[float] = DEFAULT_CONFIG.link_lengths) -> np.ndarray:
    """Positions of the three link endpoints (3 x 2), base at the origin"""
    angles = np.cumsum(np.asarray(joints, dtype=np.float64))
    segments = np.asarray(link_lengths, dtype=np.float64)[:, None] * np.column_stack([np.cos(angles), np.sin(angles)])
    return np.cumsum(segments, axis=0)


def arm_ik(tip: Sequence[float],
           angle: float,
           link_lengths: Sequence[float] = DEFAULT_CONFIG.link_lengths) -> np.ndarray:
    """
    Joints putting the end effector at tip with absolute last-link angle.

    Uses the clockwise-elbow branch the initial pose sits on; targets out of
    reach are projected onto the reachable boundary.
    """
    l1, l2, l3 = (float(length) for length in link_lengths)
    wx = tip[0] - l3 * math.cos(angle)
    wy = tip[1] - l3 * math.sin(angle)
    cos_elbow = (wx * wx + wy * wy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    elbow = -math.acos(min(1.0, max(-1.0, cos_elbow)))
    shoulder = math.atan2(wy, wx) - math.atan2(l2 * math.sin(elbow), l1 + l2 * math.cos(elbow))
    return np.array([shoulder, elbow, angle - shoulder - elbow])


def sample_goal(box_x: float, rng: np.random.Generator, config: PushConfig = DEFAULT_CONFIG) -> float:
    """A goal 2..5 units from the box on a random side, kept inside the goal band"""
    distance = rng.uniform(config.goal_min_distance, config.goal_max_distance)
    side = 1.0 if rng.random() < 0.5 else -1.0
    goal = box_x + side * distance
    if abs(goal) > config.goal_band:
        goal = box_x - side * distance
    return float(np.clip(goal, -config.goal_band, config.goal_band))


def reset_state(rng: np.random.Generator, config: PushConfig = DEFAULT_CONFIG) -> PushEnvState:
    box_x = float(rng.uniform(-config.initial_box_range, config.initial_box_range))
    return PushEnvState(
        joints=tuple(float(q) for q in config.initial_joints),
        box_x=box_x,
        box_toppled=False,
        goal_x=sample_goal(box_x, rng, config),
    )


def in_contact_band(point: np.ndarray, box_x: float, config: PushConfig = DEFAULT_CONFIG) -> bool:
    """End effector inside the box's height band and within reach of its sides"""
    in_height = config.surface_y <= point[1] <= config.surface_y + config.box_height
    return bool(in_height and abs(point[0] - box_x) < config.box_half_width + config.contact_margin)


def push_step(state: PushEnvState,
              control: Sequence[float],
              rng: np.random.Generator,
              config: PushConfig = DEFAULT_CONFIG) -> PushEnvState:
    """
    Advance one step under joint velocities (clipped to the rate limit).

    Toppling is absorbing; the goal is only checked after the box moves, and a
    reached goal is replaced by a new one drawn from rng.
    """
    steps = state.steps_elapsed + 1
    if state.box_toppled:
        return replace(state, steps_elapsed=steps)

    velocity = np.clip(np.asarray(control, dtype=np.float64), -config.rate_limit, config.rate_limit)
    old_joints = np.asarray(state.joints, dtype=np.float64)
    new_joints = np.clip(old_joints + velocity, -math.pi, math.pi)
    old_tip = arm_fk(old_joints, config.link_lengths)[-1]
    new_tip = arm_fk(new_joints, config.link_lengths)[-1]

    box_x = state.box_x
    toppled = False
    moved = False
    if in_contact_band(new_tip, box_x, config):
        dx, dy = new_tip - old_tip
        if abs(dy) > config.topple_threshold:
            toppled = True
        elif dx * (box_x - old_tip[0]) > 0.0:
            box_x = float(np.clip(box_x + config.friction * dx, -config.workspace, config.workspace))
            moved = True

    goal_x, goals = state.goal_x, state.goals_reached
    if moved and abs(box_x - goal_x) < config.goal_tolerance:
        goals += 1
        goal_x = sample_goal(box_x, rng, config)

    return PushEnvState(
        joints=tuple(float(q) for q in new_joints),
        box_x=box_x,
        box_toppled=toppled,
        goal_x=goal_x,
        steps_elapsed=steps,
        goals_reached=goals,
    )


def observe(state: PushEnvState, config: PushConfig = DEFAULT_CONFIG) -> np.ndarray:
    return np.array([*state.joints, state.box_x, config.box_y, float(state.box_toppled), state.goal_x])


class PushEnv:
    """Pushing task with its own seeded generator for goal resampling"""

    observation_dim = OBSERVATION_DIM
    control_dim = CONTROL_DIM

    def __init__(self, config: PushConfig = DEFAULT_CONFIG, seed: int = 0,
                 rng: Optional[np.random.Generator] = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.state = reset_state(self.rng, config)

    def observation(self) -> np.ndarray:
        return observe(self.state, self.config)

    def step(self, control: Sequence[float]) -> np.ndarray:
        self.state = push_step(self.state, control, self.rng, self.config)
        return self.observation()

    @property
    def reward(self) -> int:
        return self.state.goals_reached

    @property
    def failed(self) -> bool:
        return self.state.box_toppled


# ---------------------------------------------------------------------------
# Scripted supervisor
# ---------------------------------------------------------------------------

APPROACH_GAP = 0.7
CARTESIAN_STEP = 0.12
PUSH_STEP = 0.1
MIN_PUSH_GAP = 0.35
CLEARANCE = 0.3
HEIGHT_TOLERANCE = 0.02
WRIST_ANGLE = -math.pi / 2
WRIST_STEP = 0.05
MAX_REFINEMENTS = 8


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def supervisor_waypoint(state: PushEnvState, config: PushConfig = DEFAULT_CONFIG) -> Tuple[np.ndarray, float]:
    """
    Next Cartesian target and push side (+1 pushes right, -1 pushes left).

    Behind the box at push height the arm pushes horizontally, stepping back
    whenever the end effector closes in on the box center. Anywhere else it
    clears the box at the safe height, travels to the pre-contact column
    beside the box and descends there, outside the contact band.
    """
    tip = arm_fk(state.joints, config.link_lengths)[-1]
    x, y = float(tip[0]), float(tip[1])
    side = 1.0 if state.goal_x >= state.box_x else -1.0
    pre_contact_x = state.box_x - side * (config.box_half_width + APPROACH_GAP)
    gap = side * (state.box_x - x)
    y_push, y_safe = config.push_height, config.safe_height

    if abs(y - y_push) < HEIGHT_TOLERANCE:
        if gap > MIN_PUSH_GAP:
            step = CARTESIAN_STEP if gap > config.box_half_width + APPROACH_GAP else PUSH_STEP
            return np.array([x + side * step, y_push]), side
        if gap > 0.0:
            return np.array([x - side * CARTESIAN_STEP, y_push]), side
        # past the box center or on its far side: back out before going over
        if abs(x - state.box_x) < config.box_half_width + config.contact_margin + CLEARANCE:
            return np.array([x + side * CARTESIAN_STEP, y_push]), side
        return np.array([x, y_safe]), side

    if abs(x - pre_contact_x) < HEIGHT_TOLERANCE:
        return np.array([pre_contact_x, y_push]), side
    if y < y_safe - HEIGHT_TOLERANCE:
        return np.array([x, y_safe]), side
    return np.array([pre_contact_x, y_safe]), side


def scripted_supervisor(state: PushEnvState, config: PushConfig = DEFAULT_CONFIG) -> np.ndarray:
    """
    Rate-limited joint velocities moving the end effector toward the waypoint.

    Each step lands exactly on a point at most CARTESIAN_STEP along the
    straight line to the target (inverse kinematics, wrist pointing down);
    steps needing more than the rate limit in any joint are halved.
    """
    target, _ = supervisor_waypoint(state, config)
    joints = np.asarray(state.joints, dtype=np.float64)
    tip = arm_fk(joints, config.link_lengths)[-1]

    step = target - tip
    norm = float(np.linalg.norm(step))
    if norm > CARTESIAN_STEP:
        step = step * (CARTESIAN_STEP / norm)
    wrist = float(joints.sum())
    turn = float(np.clip(_wrap(WRIST_ANGLE - wrist), -WRIST_STEP, WRIST_STEP))

    velocity = arm_ik(tip + step, wrist + turn, config.link_lengths) - joints
    for _ in range(MAX_REFINEMENTS):
        if np.max(np.abs(velocity)) <= config.rate_limit:
            return velocity
        step, turn = step / 2.0, turn / 2.0
        velocity = arm_ik(tip + step, wrist + turn, config.link_lengths) - joints
    peak = np.max(np.abs(velocity))
    if peak > config.rate_limit:
        velocity = velocity * (config.rate_limit / peak)
    return velocity


def supervisor_episode(seed: int,
                       horizon: Optional[int] = None,
                       config: PushConfig = DEFAULT_CONFIG) -> PushEnvState:
    """Final state of a supervisor rollout (reference reward)"""
    env = PushEnv(config, rng=np.random.default_rng([seed, 0]))
    for _ in range(horizon if horizon is not None else config.episode_length):
        if env.failed:
            break
        env.step(scripted_supervisor(env.state, config))
    return env.state


def generate_demos(n: int,
                   seed: int,
                   config: PushConfig = DEFAULT_CONFIG,
                   goals_per_demo: Optional[int] = 1,
                   horizon: Optional[int] = None) -> Dataset:
    """
    Supervisor demonstrations cut into one trajectory per goal attempt.

    Rollout i uses default_rng([seed, i]). It stops after goals_per_demo goals
    (None: run the whole episode). A trailing unfinished attempt is dropped
    unless the rollout reached no goal at all.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    horizon = horizon if horizon is not None else config.episode_length
    trajectories: List[Trajectory] = []
    for index in range(n):
        env = PushEnv(config, rng=np.random.default_rng([seed, index]))
        states = [env.observation()]
        controls: List[np.ndarray] = []
        segments: List[Trajectory] = []
        for _ in range(horizon):
            if env.failed:
                break
            control = scripted_supervisor(env.state, config)
            goals_before = env.reward
            controls.append(control)
            states.append(env.step(control))
            if env.reward > goals_before:
                segments.append(Trajectory(tuple(states), tuple(controls)))
                states, controls = [states[-1]], []
                if goals_per_demo is not None and len(segments) >= goals_per_demo:
                    break
        if not segments and controls:
            logger.warning(f"Demo rollout {index} reached no goal; keeping its {len(controls)} steps")
            segments.append(Trajectory(tuple(states), tuple(controls)))
        trajectories.extend(segments)
    return Dataset.from_trajectories(trajectories)
