"""
Core Type Tests
===============

Trajectory validation, dataset and label files, latent paths, policy
parameter bookkeeping and checkpoint persistence.
"""

import json

import numpy as np
import pytest

from ddco.approx import Approximator, HeadSpec
from ddco.configs.training_config import ArchitectureConfig, HeadMode
from ddco.core import (
    Dataset,
    FlatPolicy,
    HierarchicalPolicy,
    LatentPath,
    Trajectory,
    checkpoint_document,
    load_checkpoint,
    load_dataset,
    load_labels,
    parse_checkpoint,
    save_checkpoint,
    save_dataset,
    save_labels,
    validate_trajectory,
)
from ddco.errors import CheckpointError, DatasetError, DimensionError
from factories import random_trajectory, small_policy


def _write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


# ============================================================================
# TRAJECTORIES AND DATASETS
# ============================================================================

class TestTrajectoryValidation:

    def test_valid_trajectory_has_no_violations(self, rng):
        assert validate_trajectory(random_trajectory(rng, 4), 2, 1) == []

    def test_length_mismatch_reported(self):
        traj = Trajectory(tuple(np.zeros((3, 2))), tuple(np.zeros((3, 1))))
        assert any("length mismatch" in v for v in validate_trajectory(traj, 2, 1))

    def test_non_finite_control_reported_with_step(self):
        controls = np.zeros((3, 1))
        controls[1, 0] = np.nan
        traj = Trajectory(tuple(np.zeros((4, 2))), tuple(controls))
        assert "non-finite value at t=1" in validate_trajectory(traj, 2, 1)

    def test_dimension_mismatch_reported(self, rng):
        violations = validate_trajectory(random_trajectory(rng, 2, d_s=3), 2, 1)
        assert any("state dimension 3" in v for v in violations)

    def test_empty_trajectory_rejected(self):
        traj = Trajectory((np.zeros(2),), ())
        assert any("T >= 1" in v for v in validate_trajectory(traj, 2, 1))

    def test_matrices_are_read_only(self, rng):
        traj = random_trajectory(rng, 3)
        assert traj.state_matrix.shape == (4, 2)
        with pytest.raises(ValueError):
            traj.control_matrix[0, 0] = 1.0


class TestDataset:

    def test_empty_dataset_rejected(self):
        with pytest.raises(DatasetError, match="empty dataset"):
            Dataset.from_trajectories([])

    def test_mixed_dimensions_rejected(self, rng):
        with pytest.raises(DatasetError, match="record 2"):
            Dataset.from_trajectories([random_trajectory(rng, 3), random_trajectory(rng, 3, d_a=2)])

    def test_pairs_stack_every_step(self, toy_dataset):
        states, controls = toy_dataset.pairs()
        assert states.shape == (toy_dataset.total_steps, 2)
        assert controls.shape == (toy_dataset.total_steps, 1)

    def test_subset_keeps_order(self, toy_dataset):
        subset = toy_dataset.subset([3, 0])
        assert subset[0] is toy_dataset[3]
        assert len(subset) == 2


class TestDatasetFiles:

    def test_save_and_load_preserve_values(self, tmp_path, toy_dataset):
        path = tmp_path / "demos.jsonl"
        save_dataset(toy_dataset, path)
        loaded = load_dataset(path)
        assert len(loaded) == len(toy_dataset)
        for a, b in zip(loaded, toy_dataset):
            assert np.array_equal(a.state_matrix, b.state_matrix)
            assert np.array_equal(a.control_matrix, b.control_matrix)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DatasetError, match="empty dataset"):
            load_dataset(path)

    def test_parse_failure_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"states": [[0.0], [1.0]], "controls": [[1.0]]}) + "\n{not json\n")
        with pytest.raises(DatasetError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 2

    def test_missing_field_rejects_whole_file(self, tmp_path):
        path = _write_lines(tmp_path / "missing.jsonl", [
            {"states": [[0.0], [1.0]], "controls": [[1.0]]},
            {"states": [[0.0], [1.0]]},
        ])
        with pytest.raises(DatasetError, match="record 2"):
            load_dataset(path)

    def test_length_mismatch_names_record(self, tmp_path):
        path = _write_lines(tmp_path / "mismatch.jsonl", [
            {"states": [[0.0], [1.0], [2.0]], "controls": [[1.0]]},
        ])
        with pytest.raises(DatasetError, match="length mismatch"):
            load_dataset(path)

    def test_non_numeric_entries_rejected(self, tmp_path):
        path = _write_lines(tmp_path / "strings.jsonl", [
            {"states": [["a"], [1.0]], "controls": [[1.0]]},
        ])
        with pytest.raises(DatasetError, match="numbers"):
            load_dataset(path)

    def test_huge_integer_names_line(self, tmp_path):
        path = tmp_path / "huge.jsonl"
        path.write_text('{"states": [[0.0], [1' + "0" * 400 + ']], "controls": [[1.0]]}\n')
        with pytest.raises(DatasetError, match="too large") as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 1

    def test_labels_align_with_dataset(self, tmp_path, toy_dataset):
        labels = [np.zeros(traj.T, dtype=int) for traj in toy_dataset]
        path = tmp_path / "labels.jsonl"
        save_labels(labels, path)
        loaded = load_labels(path, toy_dataset)
        assert [row.tolist() for row in loaded] == [row.tolist() for row in labels]

    def test_misaligned_labels_rejected(self, tmp_path, toy_dataset):
        path = tmp_path / "labels.jsonl"
        save_labels([[0, 1]] * len(toy_dataset), path)
        with pytest.raises(DatasetError, match="labels for T="):
            load_labels(path, toy_dataset)


class TestLatentPath:

    def test_valid_path(self):
        assert LatentPath((1, 0, 1, 0), (0, 0, 1, 1)).violations() == []

    def test_first_step_must_terminate(self):
        assert "b[0] must be 1" in LatentPath((0, 0), (1, 1)).violations()

    def test_option_change_needs_termination(self):
        problems = LatentPath((1, 0, 0), (0, 1, 1)).violations()
        assert problems == ["option changes at t=1 without a termination"]


# ============================================================================
# POLICIES
# ============================================================================

class TestHierarchicalPolicy:

    def test_initial_terminations_are_one_half(self):
        policy = HierarchicalPolicy.initialize(2, 1, 3, HeadMode.CATEGORICAL, 0.5, np.random.default_rng(0))
        for option in policy.options:
            assert option.termination.forward(np.array([0.3, -1.2])).prob == 0.5

    def test_param_slices_tile_theta(self):
        policy = small_policy(k=3, option_arch=ArchitectureConfig("mlp", 4))
        slices = list(policy.param_slices().values())
        assert slices[0].start == 0
        for previous, current in zip(slices, slices[1:]):
            assert previous.stop == current.start
        assert slices[-1].stop == policy.n_params

    def test_flat_params_round_trip(self):
        policy = small_policy(k=2, head_mode=HeadMode.HYBRID)
        theta = policy.flat_params() * 2.0
        assert np.array_equal(policy.with_flat_params(theta).flat_params(), theta)

    def test_flat_params_length_checked(self):
        policy = small_policy()
        with pytest.raises(DimensionError):
            policy.with_flat_params(np.zeros(policy.n_params + 1))

    def test_categorical_needs_an_option(self):
        with pytest.raises(DimensionError):
            HierarchicalPolicy.initialize(2, 1, 0, HeadMode.CATEGORICAL, 0.5, np.random.default_rng(0))

    def test_hybrid_k0_has_only_the_control_branch(self):
        policy = HierarchicalPolicy.initialize(2, 1, 0, HeadMode.HYBRID, 0.5, np.random.default_rng(0))
        assert policy.k == 0
        assert policy.n_latent == 1
        assert policy.d_a == 1

    def test_flat_policy_needs_gaussian_head(self):
        network = Approximator.initialize(2, HeadSpec.softmax(2), "linear", 0, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            FlatPolicy(network, 0.5)


# ============================================================================
# CHECKPOINTS
# ============================================================================

class TestCheckpoints:

    @pytest.mark.parametrize("head_mode", [HeadMode.CATEGORICAL, HeadMode.HYBRID])
    def test_round_trip_is_bit_exact(self, tmp_path, head_mode):
        policy = small_policy(k=2, head_mode=head_mode, option_arch=ArchitectureConfig("mlp", 3))
        path = tmp_path / "model.json"
        save_checkpoint(policy, path)
        loaded = load_checkpoint(path)
        assert isinstance(loaded, HierarchicalPolicy)
        assert loaded.head_mode is head_mode
        assert loaded.sigma == policy.sigma
        assert np.array_equal(loaded.flat_params(), policy.flat_params())

    def test_flat_policy_round_trip(self, tmp_path):
        network = Approximator.initialize(2, HeadSpec.gaussian(1), "mlp", 4, np.random.default_rng(2))
        path = tmp_path / "bc.json"
        save_checkpoint(FlatPolicy(network, 0.25), path)
        loaded = load_checkpoint(path)
        assert isinstance(loaded, FlatPolicy)
        assert np.array_equal(loaded.flat_params(), network.params)

    @pytest.mark.parametrize("fraction", [0.1, 0.5, 0.9])
    def test_truncated_checkpoint_rejected(self, fraction):
        text = json.dumps(checkpoint_document(small_policy()), indent=1)
        with pytest.raises(CheckpointError, match="unexpected end of checkpoint"):
            parse_checkpoint(text[:int(len(text) * fraction)])

    def test_unknown_format_version_rejected(self):
        doc = checkpoint_document(small_policy())
        doc["format_version"] = 2
        with pytest.raises(CheckpointError, match="format_version"):
            parse_checkpoint(json.dumps(doc))

    def test_option_count_must_match_k(self):
        doc = checkpoint_document(small_policy(k=2))
        doc["k"] = 3
        with pytest.raises(CheckpointError, match="k=3"):
            parse_checkpoint(json.dumps(doc))

    def test_wrong_parameter_count_rejected(self):
        doc = checkpoint_document(small_policy(k=2))
        doc["options"][0]["policy"]["params"].pop()
        with pytest.raises(CheckpointError):
            parse_checkpoint(json.dumps(doc))

    def test_invalid_float_encoding_rejected(self):
        doc = checkpoint_document(small_policy(k=1))
        doc["sigma"] = "not-a-float"
        with pytest.raises(CheckpointError, match="invalid float encoding"):
            parse_checkpoint(json.dumps(doc))

    def test_schema_violation_rejected(self):
        doc = checkpoint_document(small_policy(k=1))
        doc["high"]["architecture"] = "transformer"
        with pytest.raises(CheckpointError, match="corrupted checkpoint"):
            parse_checkpoint(json.dumps(doc))
