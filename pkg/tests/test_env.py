"""
Environment Tests
=================

Arm kinematics, pushing contact rules, the scripted supervisor, the
switching-system generator and policy rollouts.
"""

import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddco.approx import Approximator, HeadSpec
from ddco.configs.training_config import ArchitectureConfig, HeadMode
from ddco.core import FlatPolicy, HierarchicalPolicy
from ddco.env import (
    DEFAULT_CONFIG,
    PushEnv,
    PushEnvState,
    SldsConfig,
    arm_fk,
    arm_ik,
    evaluate_policy,
    generate_demos,
    observe,
    push_step,
    reset_state,
    rollout,
    sample_goal,
    scripted_supervisor,
    slds_generate,
    supervisor_episode,
    supervisor_reference,
)
from ddco.env.push import CARTESIAN_STEP, PUSH_STEP, in_contact_band
from ddco.errors import ConfigError, DimensionError


def _push_policy(k=2, head_mode=HeadMode.CATEGORICAL, seed=0):
    return HierarchicalPolicy.initialize(7, 3, k, head_mode, 0.05, np.random.default_rng(seed),
                                         high_arch=ArchitectureConfig("linear"),
                                         option_arch=ArchitectureConfig("mlp", 8),
                                         termination_arch=ArchitectureConfig("linear"))


# ============================================================================
# ARM AND CONTACT
# ============================================================================

class TestKinematics:

    def test_straight_arm_reaches_full_length(self):
        np.testing.assert_allclose(arm_fk([0.0, 0.0, 0.0])[-1], [13.0, 0.0])

    def test_initial_pose_points_down(self):
        tip = arm_fk(DEFAULT_CONFIG.initial_joints)[-1]
        assert tip[1] < 0.0

    def test_ik_recovers_initial_pose(self):
        tip = arm_fk(DEFAULT_CONFIG.initial_joints)[-1]
        np.testing.assert_allclose(arm_ik(tip, -math.pi / 2), DEFAULT_CONFIG.initial_joints, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(x=st.floats(min_value=-9.0, max_value=9.0), y=st.floats(min_value=-5.5, max_value=-3.5))
    def test_ik_places_the_end_effector(self, x, y):
        joints = arm_ik([x, y], -math.pi / 2)
        np.testing.assert_allclose(arm_fk(joints)[-1], [x, y], atol=1e-9)
        assert np.all(np.abs(joints) < math.pi)


class TestPushDynamics:

    def _state(self, joints, box_x=0.0, toppled=False):
        return PushEnvState(joints=tuple(joints), box_x=box_x, box_toppled=toppled, goal_x=4.0)

    def test_controls_are_rate_limited(self):
        state = self._state(DEFAULT_CONFIG.initial_joints)
        after = push_step(state, [5.0, -5.0, 0.0], np.random.default_rng(0))
        np.testing.assert_allclose(np.subtract(after.joints, state.joints), [0.2, -0.2, 0.0], atol=1e-12)
        assert after.steps_elapsed == 1

    def test_toppling_is_absorbing(self):
        state = self._state(DEFAULT_CONFIG.initial_joints, toppled=True)
        after = push_step(state, [0.1, 0.1, 0.1], np.random.default_rng(0))
        assert after.box_toppled
        assert after.joints == state.joints

    def test_contact_band(self):
        assert in_contact_band(np.array([1.1, -5.0]), 0.0)
        assert not in_contact_band(np.array([1.5, -5.0]), 0.0)
        assert not in_contact_band(np.array([0.5, -3.0]), 0.0)

    def test_observation_layout(self):
        state = reset_state(np.random.default_rng(1))
        obs = observe(state)
        assert obs.shape == (7,)
        assert obs[4] == DEFAULT_CONFIG.box_y
        assert obs[5] == 0.0

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=100_000))
    def test_sampled_goals_stay_reachable(self, seed):
        rng = np.random.default_rng(seed)
        box_x = rng.uniform(-3.0, 3.0)
        goal = sample_goal(box_x, rng)
        assert abs(goal) <= DEFAULT_CONFIG.goal_band
        assert 2.0 <= abs(goal - box_x) <= 5.0

    def test_env_is_seeded(self):
        a = PushEnv(seed=3)
        b = PushEnv(seed=3)
        assert np.array_equal(a.observation(), b.observation())

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            type(DEFAULT_CONFIG)(friction=0.0)


class TestSupervisor:

    def _behind_box(self, tip_x, box_x=0.0, goal_x=4.0):
        joints = arm_ik([tip_x, DEFAULT_CONFIG.push_height], -math.pi / 2)
        return PushEnvState(joints=tuple(float(q) for q in joints), box_x=box_x, box_toppled=False, goal_x=goal_x)

    def test_goal_side_selects_the_branch(self):
        state = reset_state(np.random.default_rng(0))
        left = replace(state, goal_x=state.box_x - 3.0)
        right = replace(state, goal_x=state.box_x + 3.0)
        assert not np.allclose(scripted_supervisor(left), scripted_supervisor(right))

    def test_push_is_horizontal_and_moves_the_box(self):
        state = self._behind_box(-1.0)
        after = push_step(state, scripted_supervisor(state), np.random.default_rng(0))
        before_tip, after_tip = arm_fk(state.joints)[-1], arm_fk(after.joints)[-1]
        assert abs(after_tip[1] - before_tip[1]) < 1e-9
        assert after_tip[0] - before_tip[0] == pytest.approx(PUSH_STEP)
        assert after.box_x == pytest.approx(DEFAULT_CONFIG.friction * PUSH_STEP)
        assert not after.box_toppled

    def test_steps_back_near_the_box_center(self):
        state = self._behind_box(-0.3)
        after = push_step(state, scripted_supervisor(state), np.random.default_rng(0))
        assert arm_fk(after.joints)[-1][0] < -0.3
        assert after.box_x == 0.0

    def test_goes_around_when_the_goal_switches_sides(self):
        state = self._behind_box(-1.0, goal_x=-4.0)
        env_state = state
        lifted = False
        for _ in range(40):
            env_state = push_step(env_state, scripted_supervisor(env_state), np.random.default_rng(0))
            tip = arm_fk(env_state.joints)[-1]
            lifted = lifted or tip[1] > DEFAULT_CONFIG.push_height + 0.5
        assert lifted
        assert env_state.box_x == 0.0
        assert not env_state.box_toppled

    def test_end_effector_moves_in_short_exact_steps(self):
        env = PushEnv(rng=np.random.default_rng([0, 0]))
        for _ in range(400):
            before = arm_fk(env.state.joints)[-1]
            env.step(scripted_supervisor(env.state))
            assert np.linalg.norm(arm_fk(env.state.joints)[-1] - before) <= CARTESIAN_STEP + 1e-9
        assert not env.failed

    def test_demos_are_deterministic(self):
        a = generate_demos(2, seed=5, horizon=60)
        b = generate_demos(2, seed=5, horizon=60)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(x.control_matrix, y.control_matrix)

    def test_demo_dimensions_and_rate_limit(self):
        demos = generate_demos(1, seed=0, horizon=40)
        assert (demos.d_s, demos.d_a) == (7, 3)
        assert np.all(np.abs(demos.pairs()[1]) <= DEFAULT_CONFIG.rate_limit + 1e-12)

    def test_demo_count_must_be_positive(self):
        with pytest.raises(ConfigError):
            generate_demos(0, seed=0)

    @pytest.mark.slow
    def test_supervisor_reference_reward(self):
        goals = [supervisor_episode(seed, horizon=2000).goals_reached for seed in range(50)]
        assert np.mean(goals) >= 3.0

    @pytest.mark.slow
    def test_supervisor_never_topples(self):
        assert not any(supervisor_episode(seed, horizon=2000).box_toppled for seed in range(100))

    @pytest.mark.slow
    def test_one_goal_per_demo(self):
        demos = generate_demos(3, seed=1)
        assert len(demos) >= 3


# ============================================================================
# SWITCHING LINEAR DYNAMICS
# ============================================================================

class TestSlds:

    def test_shapes_and_labels(self):
        dataset, labels = slds_generate(SldsConfig(k_true=3, horizon=15), 4, seed=0)
        assert len(dataset) == 4
        assert (dataset.d_s, dataset.d_a) == (2, 2)
        assert [row.size for row in labels] == [15] * 4
        assert all(set(row.tolist()) <= {0, 1, 2} for row in labels)

    def test_noise_free_controls_follow_mode_law(self):
        cfg = SldsConfig(k_true=2, noise=0.0, horizon=20)
        dataset, labels = slds_generate(cfg, 2, seed=1)
        for traj, modes in zip(dataset, labels):
            for t in range(traj.T):
                gain, offset = cfg.law(modes[t])
                np.testing.assert_allclose(traj.controls[t], gain @ traj.states[t] + offset)
                assert modes[t] == cfg.mode_of(traj.states[t])

    def test_target_heights_alternate(self):
        cfg = SldsConfig(k_true=4)
        assert [cfg.target_height(m) for m in range(4)] == [2.0, -2.0, 4.0, -4.0]

    def test_boundaries_split_the_interval(self):
        np.testing.assert_allclose(SldsConfig(k_true=4).boundaries(), [-1.0, 0.0, 1.0])

    def test_seeded(self):
        a, _ = slds_generate(SldsConfig(), 2, seed=9)
        b, _ = slds_generate(SldsConfig(), 2, seed=9)
        assert np.array_equal(a[1].state_matrix, b[1].state_matrix)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            SldsConfig(k_true=0)


# ============================================================================
# ROLLOUTS
# ============================================================================

class TestRollout:

    def test_hierarchical_trace(self):
        result = rollout(_push_policy(), horizon=30, seed=2)
        assert 1 <= result.steps <= 30
        assert all(step.option in (0, 1) for step in result.trace)
        assert result.trace[0].terminated is True
        assert not result.aborted

    def test_option_only_changes_after_termination(self):
        result = rollout(_push_policy(k=3), horizon=40, seed=4)
        for previous, current in zip(result.trace, result.trace[1:]):
            if not current.terminated:
                assert current.option == previous.option

    def test_mean_mode_is_deterministic(self):
        policy = _push_policy()
        a = rollout(policy, horizon=25, seed=1, mode="mean")
        b = rollout(policy, horizon=25, seed=1, mode="mean")
        assert [s.option for s in a.trace] == [s.option for s in b.trace]
        assert np.array_equal(a.trace[-1].control, b.trace[-1].control)

    def test_hybrid_k0_uses_control_branch_every_step(self):
        result = rollout(_push_policy(k=0, head_mode=HeadMode.HYBRID), horizon=15, seed=0)
        assert result.hc_fraction == 1.0

    def test_flat_policy_rollout(self):
        network = Approximator.initialize(7, HeadSpec.gaussian(3), "mlp", 8, np.random.default_rng(0))
        result = rollout(FlatPolicy(network, 0.05), horizon=10, seed=0)
        assert all(step.option is None for step in result.trace)

    def test_non_finite_control_aborts(self):
        network = Approximator(7, HeadSpec.gaussian(3), "linear", 0, np.full(24, np.nan))
        result = rollout(FlatPolicy(network, 0.05), horizon=10, seed=0)
        assert result.aborted
        assert "non-finite control at t=0" in result.diagnostic
        assert result.steps == 0

    def test_dimension_mismatch(self):
        policy = HierarchicalPolicy.initialize(2, 1, 2, HeadMode.CATEGORICAL, 0.1, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            rollout(policy, horizon=5)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            rollout(_push_policy(), horizon=5, mode="greedy")

    def test_trace_csv(self, tmp_path):
        result = rollout(_push_policy(), horizon=5, seed=0)
        path = tmp_path / "trace.csv"
        result.write_trace_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["t", "s0", "s1", "s2", "s3", "s4", "s5", "s6",
                                       "option", "a0", "a1", "a2", "terminated"]

    def test_evaluate_policy_table(self):
        table = evaluate_policy(_push_policy(), seeds=[0, 1, 2], horizon=10, jobs=2)
        assert table["seed"].tolist() == [0, 1, 2]
        assert list(table.columns) == ["seed", "reward", "toppled", "aborted", "steps", "hc_fraction"]

    def test_supervisor_reference_table(self):
        table = supervisor_reference([0, 1], horizon=20)
        assert list(table.columns) == ["seed", "reward", "toppled"]
