"""
Training Tests
==============

Optimizer updates, likelihood gradients against finite differences,
vector-quantization initialization and the BC / DDCO training loops.
"""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddco.approx import Approximator, HeadSpec, finite_difference_grad
from ddco.configs.training_config import (
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
from ddco.core import Dataset, FlatPolicy, OptionSpec, Trajectory
from ddco.env.slds import SldsConfig, slds_generate
from ddco.errors import ClusteringError, DimensionError, OptimizerError
from ddco.inference import (
    forward_backward,
    heldout_loglik_per_step,
    message_pass,
    step_terms,
    trajectory_loglikelihood,
)
from ddco.training import (
    OptimizerState,
    TrainingLog,
    bc_gradient,
    bc_train,
    cluster_states,
    ddco_train,
    eg_gradient,
    initial_policy,
    optimizer_step,
    rebalance_clusters,
    vq_initialize,
)
from factories import random_trajectory, small_policy

LINEAR = ArchitectureConfig(kind="linear")


# ============================================================================
# TEST FIXTURES
# ============================================================================

@pytest.fixture
def slds_data():
    dataset, _ = slds_generate(SldsConfig(k_true=2, horizon=12), 6, seed=4)
    return dataset


def _adam(lr=0.01):
    return OptimizerConfig(kind=OptimizerKind.ADAM, learning_rate=lr)


def _train_cfg(**changes):
    base = TrainConfig(k=2, sigma=0.3, epochs=3, seed=5, optimizer=_adam(),
                       high_arch=LINEAR, option_arch=LINEAR, termination_arch=LINEAR)
    return base.replace(**changes)


# ============================================================================
# OPTIMIZERS
# ============================================================================

class TestOptimizerStep:

    def test_sgd_ascends(self):
        state = OptimizerState.create(OptimizerConfig(kind=OptimizerKind.SGD, learning_rate=0.1), 3)
        params, _ = optimizer_step(state, np.array([1.0, 2.0, 3.0]), np.array([1.0, -1.0, 0.5]))
        np.testing.assert_allclose(params, [1.1, 1.9, 3.05])

    def test_momentum_accumulates_velocity(self):
        config = OptimizerConfig(kind=OptimizerKind.MOMENTUM, learning_rate=0.1, momentum=0.5)
        state = OptimizerState.create(config, 1)
        params, state = optimizer_step(state, np.zeros(1), np.ones(1))
        params, state = optimizer_step(state, params, np.ones(1))
        # velocity 1 then 1.5
        np.testing.assert_allclose(params, [0.25])
        np.testing.assert_allclose(state.buffers["velocity"], [1.5])

    def test_adam_first_step_is_learning_rate_sized(self):
        state = OptimizerState.create(_adam(0.01), 2)
        params, state = optimizer_step(state, np.zeros(2), np.array([5.0, -0.2]))
        np.testing.assert_allclose(params, [0.01, -0.01], rtol=1e-6)
        assert state.step_count == 1

    def test_state_is_not_modified(self):
        state = OptimizerState.create(_adam(), 2)
        optimizer_step(state, np.zeros(2), np.ones(2))
        assert state.step_count == 0
        assert np.all(state.buffers["m"] == 0.0)

    def test_non_finite_gradient_names_index(self):
        state = OptimizerState.create(_adam(), 4)
        with pytest.raises(OptimizerError) as excinfo:
            optimizer_step(state, np.zeros(4), np.array([0.0, 1.0, np.inf, np.nan]))
        assert excinfo.value.index == 2

    def test_shape_mismatch_rejected(self):
        state = OptimizerState.create(_adam(), 3)
        with pytest.raises(DimensionError):
            optimizer_step(state, np.zeros(3), np.zeros(2))

    @settings(max_examples=100, deadline=None)
    @given(
        kind=st.sampled_from(list(OptimizerKind)),
        mask=st.lists(st.booleans(), min_size=1, max_size=8),
        seed=st.integers(min_value=0, max_value=1000),
    )
    def test_mask_freezes_params_and_buffers(self, kind, mask, seed):
        rng = np.random.default_rng(seed)
        mask = np.array(mask)
        state = OptimizerState.create(OptimizerConfig(kind=kind, learning_rate=0.05), mask.size)
        params = rng.normal(size=mask.size)
        original = params.copy()
        for _ in range(3):
            params, state = optimizer_step(state, params, rng.normal(size=mask.size), mask)
        assert np.array_equal(params[~mask], original[~mask])
        for buffer in state.buffers.values():
            assert np.all(buffer[~mask] == 0.0)


# ============================================================================
# GRADIENTS
# ============================================================================

class TestGradients:
    """Analytic gradients equal finite differences of the log-likelihood"""

    def test_bc_gradient(self, rng):
        network = Approximator.initialize(2, HeadSpec.gaussian(1), "mlp", 4, rng)
        network = network.with_params(network.params + 0.1 * rng.normal(size=network.n_params))
        traj = random_trajectory(rng, 6)
        grad, _ = bc_gradient(network, traj, 0.4)
        numeric = finite_difference_grad(
            lambda theta: trajectory_loglikelihood(FlatPolicy(network.with_params(theta), 0.4), traj), network.params)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=10_000),
        T=st.integers(min_value=2, max_value=5),
        k=st.integers(min_value=1, max_value=3),
        hybrid=st.booleans(),
        mlp_options=st.booleans(),
    )
    def test_eg_gradient_equals_loglik_gradient(self, seed, T, k, hybrid, mlp_options):
        head_mode = HeadMode.HYBRID if hybrid else HeadMode.CATEGORICAL
        option_arch = ArchitectureConfig("mlp", 3) if mlp_options else LINEAR
        policy = small_policy(seed=seed, k=k, head_mode=head_mode, option_arch=option_arch)
        traj = random_trajectory(np.random.default_rng(seed + 1), T)
        grad = eg_gradient(policy, traj, forward_backward(policy, traj))
        numeric = finite_difference_grad(
            lambda theta: trajectory_loglikelihood(policy.with_flat_params(theta), traj), policy.flat_params())
        np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-6)

    def test_uniform_high_gradient(self):
        policy = small_policy(seed=3, k=2, head_mode=HeadMode.HYBRID)
        traj = random_trajectory(np.random.default_rng(4), 5)
        grad = eg_gradient(policy, traj, forward_backward(policy, traj, uniform_high=True), uniform_high=True)
        numeric = finite_difference_grad(
            lambda theta: message_pass(step_terms(policy.with_flat_params(theta), traj, True)).loglik,
            policy.flat_params())
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-6)
        assert np.all(grad[policy.param_slices()[("high", -1)]] == 0.0)

    def test_hybrid_k0_logit_gradient_is_zero(self, rng):
        policy = small_policy(k=0, head_mode=HeadMode.HYBRID)
        traj = random_trajectory(rng, 4)
        grad = eg_gradient(policy, traj, forward_backward(policy, traj))
        # linear hybrid head: mean block (2 weights + 1 bias), then the single logit (2 weights + 1 bias)
        assert np.all(grad[3:] == 0.0)

    def test_posterior_shape_checked(self, rng):
        policy = small_policy(k=2)
        post = forward_backward(policy, random_trajectory(rng, 4))
        with pytest.raises(DimensionError):
            eg_gradient(policy, random_trajectory(rng, 5), post)


# ============================================================================
# VECTOR QUANTIZATION
# ============================================================================

class TestVectorQuantization:

    def test_separated_blobs_are_recovered(self, rng):
        states = np.vstack([rng.normal(-5.0, 0.1, size=(20, 2)), rng.normal(5.0, 0.1, size=(20, 2))])
        labels, centers = cluster_states(states, 2, seed=0)
        assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1
        assert labels[0] != labels[-1]
        assert centers.shape == (2, 2)

    def test_too_few_states(self):
        with pytest.raises(ClusteringError):
            cluster_states(np.zeros((2, 2)), 3, seed=0)

    def test_rebalance_takes_nearest_points(self):
        states = np.array([[0.0], [0.1], [0.2], [0.3], [0.4], [0.5], [0.6], [4.0], [10.0], [10.1]])
        labels = np.array([0, 0, 0, 0, 0, 0, 0, 0, 1, 1])
        centers = np.array([[0.6], [10.0]])
        balanced = rebalance_clusters(states, labels, centers, min_size=3)
        assert np.bincount(balanced).tolist() == [7, 3]
        assert balanced[7] == 1

    def test_rebalance_needs_enough_samples(self):
        with pytest.raises(ClusteringError):
            rebalance_clusters(np.zeros((5, 1)), np.zeros(5, dtype=int), np.zeros((2, 1)), min_size=3)

    def test_vq_initialize_seeds_k_options(self, slds_data):
        cfg = _train_cfg(init=InitMode.VQ, vq_epochs=5)
        options = vq_initialize(slds_data, 2, cfg)
        assert len(options) == 2
        for option in options:
            assert option.termination.forward(np.zeros(2)).prob == 0.5

    def test_vq_initialize_is_seeded(self, slds_data):
        cfg = _train_cfg(init=InitMode.VQ, vq_epochs=5)
        first = vq_initialize(slds_data, 2, cfg)
        second = vq_initialize(slds_data, 2, cfg)
        for a, b in zip(first, second):
            assert np.array_equal(a.policy.params, b.policy.params)

    def test_vq_needs_an_option(self, slds_data):
        with pytest.raises(ClusteringError):
            vq_initialize(slds_data, 0, _train_cfg())


# ============================================================================
# TRAINING LOOPS
# ============================================================================

class TestBehaviorCloning:

    def test_recovers_a_linear_controller(self):
        rng = np.random.default_rng(0)
        trajectories = []
        for _ in range(10):
            states = rng.normal(size=(9, 2))
            controls = states[:-1] @ np.array([[0.5], [-0.3]]) + 0.01 * rng.normal(size=(8, 1))
            trajectories.append(Trajectory.from_arrays(states, controls))
        cfg = BCConfig(arch=LINEAR, sigma=0.2, epochs=60, seed=1, optimizer=_adam(0.02))
        policy, log = bc_train(Dataset.from_trajectories(trajectories), cfg)
        assert log.total_loglik[-1] > log.total_loglik[0]
        weights = policy.network.params[:2]
        np.testing.assert_allclose(weights, [0.5, -0.3], atol=0.1)

    def test_log_has_one_record_per_epoch(self, toy_dataset):
        cfg = BCConfig(arch=LINEAR, epochs=3, optimizer=_adam())
        _, log = bc_train(toy_dataset, cfg, heldout=toy_dataset)
        frame = log.to_frame()
        assert list(frame.columns) == ["epoch", "phase", "total_loglik", "heldout_loglik"]
        assert frame["phase"].tolist() == ["bc"] * 3
        assert frame["epoch"].tolist() == [1, 2, 3]

    def test_initial_network_dimensions_checked(self, toy_dataset):
        network = Approximator.initialize(3, HeadSpec.gaussian(1), "linear", 0, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            bc_train(toy_dataset, BCConfig(arch=LINEAR, epochs=1), initial=network)


class TestHybridReducesToBehaviorCloning:
    """A hybrid policy with k = 0 follows the flat BC parameter sequence exactly"""

    @pytest.mark.parametrize("arch,dropout", [(LINEAR, 0.0), (ArchitectureConfig("mlp", 6), 0.3)])
    def test_parameter_sequences_are_identical(self, toy_dataset, arch, dropout):
        optimizer = _adam(0.01)
        bc_cfg = BCConfig(arch=arch, sigma=0.3, epochs=4, batch=BatchMode.TRAJECTORY, seed=11,
                          dropout_rate=dropout, optimizer=optimizer)
        ddco_cfg = TrainConfig(k=0, head_mode=HeadMode.HYBRID, sigma=0.3, epochs=4, batch=BatchMode.TRAJECTORY,
                               seed=11, dropout_rate=dropout, optimizer=optimizer, high_arch=arch)
        flat, bc_log = bc_train(toy_dataset, bc_cfg)
        hierarchical, ddco_log = ddco_train(toy_dataset, ddco_cfg)

        n = flat.network.n_params
        assert np.array_equal(hierarchical.high.params[:n], flat.network.params)
        if dropout == 0.0:
            assert ddco_log.total_loglik == pytest.approx(bc_log.total_loglik, rel=1e-12)
        assert all(record["hc_mass"] == toy_dataset.total_steps for record in ddco_log.records)

    def test_logit_block_never_moves(self, toy_dataset):
        cfg = TrainConfig(k=0, head_mode=HeadMode.HYBRID, sigma=0.3, epochs=3, high_arch=LINEAR, optimizer=_adam())
        start = initial_policy(toy_dataset, cfg, np.random.default_rng(cfg.seed))
        trained, _ = ddco_train(toy_dataset, cfg)
        assert np.array_equal(trained.high.params[3:], start.high.params[3:])


class TestDDCOTraining:

    def test_loglik_improves(self, slds_data):
        cfg = _train_cfg(epochs=15, batch=BatchMode.FULL)
        _, log = ddco_train(slds_data, cfg)
        assert log.total_loglik[-1] > log.total_loglik[0]

    def test_same_seed_same_result(self, slds_data):
        cfg = _train_cfg()
        first, _ = ddco_train(slds_data, cfg)
        second, _ = ddco_train(slds_data, cfg)
        assert np.array_equal(first.flat_params(), second.flat_params())

    def test_full_batch_is_independent_of_worker_count(self, slds_data):
        first, _ = ddco_train(slds_data, _train_cfg(batch=BatchMode.FULL, jobs=1))
        second, _ = ddco_train(slds_data, _train_cfg(batch=BatchMode.FULL, jobs=3))
        assert np.array_equal(first.flat_params(), second.flat_params())

    def test_full_batch_loglik_rarely_decreases(self, slds_data):
        sgd = OptimizerConfig(kind=OptimizerKind.SGD, learning_rate=1e-4)
        _, log = ddco_train(slds_data, _train_cfg(epochs=60, batch=BatchMode.FULL, optimizer=sgd))
        changes = np.diff(log.total_loglik)
        assert np.mean(changes >= -1e-9) >= 0.95
        assert log.total_loglik[-1] > log.total_loglik[0]

    def test_option_phase_freezes_high_level(self, slds_data):
        cfg = _train_cfg(schedule=Schedule.LAYERWISE, epochs=3, phase1_epochs=3)
        start = initial_policy(slds_data, cfg, np.random.default_rng(cfg.seed))
        trained, log = ddco_train(slds_data, cfg)
        assert [r["phase"] for r in log.records] == ["options"] * 3
        assert np.array_equal(trained.high.params, start.high.params)
        assert not np.array_equal(trained.options[0].policy.params, start.options[0].policy.params)

    def test_high_phase_freezes_options(self, slds_data):
        after_options, _ = ddco_train(slds_data, _train_cfg(schedule=Schedule.LAYERWISE, epochs=2, phase1_epochs=2))
        trained, log = ddco_train(slds_data, _train_cfg(schedule=Schedule.LAYERWISE, epochs=4, phase1_epochs=2))
        assert [r["phase"] for r in log.records] == ["options", "options", "high", "high"]
        assert [r["epoch"] for r in log.records] == [1, 2, 3, 4]
        for a, b in zip(after_options.options, trained.options):
            assert np.array_equal(a.policy.params, b.policy.params)
            assert np.array_equal(a.termination.params, b.termination.params)
        assert not np.array_equal(after_options.high.params, trained.high.params)

    def test_finetune_keeps_training_options(self, slds_data):
        after_options, _ = ddco_train(slds_data, _train_cfg(schedule=Schedule.LAYERWISE, epochs=2, phase1_epochs=2))
        trained, _ = ddco_train(slds_data, _train_cfg(schedule=Schedule.LAYERWISE, epochs=4, phase1_epochs=2,
                                                      finetune_options=True))
        assert not np.array_equal(after_options.options[0].policy.params, trained.options[0].policy.params)

    def test_vq_initialized_training_runs(self, slds_data):
        policy, log = ddco_train(slds_data, _train_cfg(init=InitMode.VQ, vq_epochs=3))
        assert policy.k == 2
        assert np.all(np.isfinite(log.total_loglik))

    def test_heldout_and_usage_in_log(self, slds_data):
        _, log = ddco_train(slds_data, _train_cfg(head_mode=HeadMode.HYBRID, epochs=2), heldout=slds_data)
        frame = log.to_frame()
        assert list(frame.columns) == ["epoch", "phase", "total_loglik", "heldout_loglik",
                                       "usage_0", "usage_1", "hc_mass"]
        # option usage plus h^c mass accounts for every step
        totals = frame["usage_0"] + frame["usage_1"] + frame["hc_mass"]
        np.testing.assert_allclose(totals, slds_data.total_steps)

    def test_log_csv(self, slds_data, tmp_path):
        _, log = ddco_train(slds_data, _train_cfg(epochs=2))
        path = tmp_path / "log.csv"
        log.write_csv(path)
        assert len(pd.read_csv(path)) == 2

    def test_initial_policy_dimensions_checked(self, slds_data):
        wrong = small_policy(d_s=3, d_a=2)
        with pytest.raises(DimensionError):
            ddco_train(slds_data, _train_cfg(), initial=wrong)


class TestSingleOptionReducesToBehaviorCloning:
    """With one categorical option the likelihood and its gradient are those of flat BC"""

    def test_converged_likelihoods_match(self):
        dataset, _ = slds_generate(SldsConfig(k_true=1, noise=0.0, horizon=15), 8, seed=0)
        network = Approximator.initialize(dataset.d_s, HeadSpec.gaussian(dataset.d_a), "linear", 0,
                                          np.random.default_rng(7))
        bc_cfg = BCConfig(arch=LINEAR, sigma=0.3, epochs=200, batch=BatchMode.FULL, optimizer=_adam(0.05))
        flat, bc_log = bc_train(dataset, bc_cfg, initial=network)

        cfg = _train_cfg(k=1, epochs=200, batch=BatchMode.FULL, optimizer=_adam(0.05))
        start = initial_policy(dataset, cfg, np.random.default_rng(cfg.seed))
        start = start.with_options([OptionSpec(network, start.options[0].termination)])
        hierarchical, ddco_log = ddco_train(dataset, cfg, initial=start)

        steps = dataset.total_steps
        assert bc_log.total_loglik[-1] > bc_log.total_loglik[0]
        np.testing.assert_allclose(np.array(ddco_log.total_loglik) / steps,
                                   np.array(bc_log.total_loglik) / steps, atol=1e-6)
        assert heldout_loglik_per_step(hierarchical, dataset) == pytest.approx(
            heldout_loglik_per_step(flat, dataset), abs=1e-6)


class TestTrainingLog:

    def test_empty_log(self):
        log = TrainingLog(k=2)
        assert len(log) == 0
        assert log.total_loglik == []
