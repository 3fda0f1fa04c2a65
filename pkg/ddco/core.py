"""
Core Domain Types
=================

Trajectories, datasets, latent paths, posterior tables and policies shared by
every other module, plus validation and the on-disk formats:

- dataset files: one JSON object per line with "states" and "controls"
- label sidecars: one JSON object per line with "labels"
- checkpoints: one JSON document; every real number is a float.hex() string
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from .approx import Approximator, HeadKind, HeadSpec
from .configs.training_config import ArchitectureConfig, HeadMode
from .errors import CheckpointError, DatasetError, DimensionError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

PathLike = Union[str, Path]


def _frozen_vector(values: Any) -> np.ndarray:
    vector = np.array(values, dtype=np.float64, ndmin=1)
    vector.setflags(write=False)
    return vector


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One demonstration: states s_0..s_T and controls a_0..a_{T-1}"""
    states: Tuple[np.ndarray, ...]
    controls: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(_frozen_vector(s) for s in self.states))
        object.__setattr__(self, "controls", tuple(_frozen_vector(a) for a in self.controls))

    @classmethod
    def from_arrays(cls, states: np.ndarray, controls: np.ndarray) -> "Trajectory":
        return cls(tuple(np.asarray(states)), tuple(np.asarray(controls)))

    @property
    def T(self) -> int:
        return len(self.controls)

    @cached_property
    def state_matrix(self) -> np.ndarray:
        """(T+1) x d_s array; only valid for a validated trajectory"""
        matrix = np.vstack(self.states)
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def control_matrix(self) -> np.ndarray:
        """T x d_a array; only valid for a validated trajectory"""
        matrix = np.vstack(self.controls)
        matrix.setflags(write=False)
        return matrix

    def to_record(self) -> Dict[str, List[List[float]]]:
        return {
            "states": [[float(x) for x in s] for s in self.states],
            "controls": [[float(x) for x in a] for a in self.controls],
        }


def validate_trajectory(traj: Trajectory, d_s: int, d_a: int) -> List[str]:
    """
    Check every Trajectory invariant for the given dimensions.

    Returns:
        List of violations; empty when the trajectory is valid
    """
    violations = []
    n_states = len(traj.states)
    n_controls = len(traj.controls)

    if n_states != n_controls + 1:
        violations.append(f"length mismatch: {n_states} states for {n_controls} controls")
    if n_controls < 1:
        violations.append("trajectory must contain at least one control (T >= 1)")

    for t, state in enumerate(traj.states):
        if state.ndim != 1 or state.size != d_s:
            violations.append(f"state dimension {state.size} at t={t}, expected {d_s}")
        if not np.all(np.isfinite(state)):
            violations.append(f"non-finite state value at t={t}")
    for t, control in enumerate(traj.controls):
        if control.ndim != 1 or control.size != d_a:
            violations.append(f"control dimension {control.size} at t={t}, expected {d_a}")
        if not np.all(np.isfinite(control)):
            violations.append(f"non-finite value at t={t}")
    return violations


@dataclass(frozen=True, eq=False)
class Dataset:
    """A nonempty set of trajectories sharing state and control dimensions"""
    trajectories: Tuple[Trajectory, ...]
    d_s: int
    d_a: int

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if not self.trajectories:
            raise DatasetError("empty dataset")
        if self.d_s < 1 or self.d_a < 1:
            raise DatasetError(f"dimensions must be positive, got d_s={self.d_s}, d_a={self.d_a}")
        for index, traj in enumerate(self.trajectories):
            violations = validate_trajectory(traj, self.d_s, self.d_a)
            if violations:
                raise DatasetError(f"record {index + 1}: " + "; ".join(violations))

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory]) -> "Dataset":
        """Build a dataset taking the dimensions from the first trajectory"""
        if not trajectories:
            raise DatasetError("empty dataset")
        first = trajectories[0]
        if not first.states or not first.controls:
            raise DatasetError("record 1: trajectory must contain at least one control (T >= 1)")
        return cls(tuple(trajectories), first.states[0].size, first.controls[0].size)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, index: int) -> Trajectory:
        return self.trajectories[index]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.trajectories[i] for i in indices), self.d_s, self.d_a)

    @property
    def total_steps(self) -> int:
        return sum(traj.T for traj in self.trajectories)

    def pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """All (s_t, a_t) pairs stacked over trajectories"""
        states = np.vstack([traj.state_matrix[:-1] for traj in self.trajectories])
        controls = np.vstack([traj.control_matrix for traj in self.trajectories])
        return states, controls


@dataclass(frozen=True)
class LatentPath:
    """Termination indicators b_t and active options h_t for t = 0..T-1"""
    terminations: Tuple[int, ...]
    options: Tuple[int, ...]

    def violations(self) -> List[str]:
        problems = []
        if len(self.terminations) != len(self.options):
            problems.append("terminations and options differ in length")
        if not self.terminations or self.terminations[0] != 1:
            problems.append("b[0] must be 1")
        for t in range(1, min(len(self.terminations), len(self.options))):
            if self.terminations[t] == 0 and self.options[t] != self.options[t - 1]:
                problems.append(f"option changes at t={t} without a termination")
        return problems


@dataclass(frozen=True, eq=False)
class PosteriorTables:
    """
    E-step marginals for one trajectory.

    u[t, h] = P(h_t = h | xi), v[t, h] = P(b_t = 1, h_t = h | xi),
    w[t, h] = P(h_t = h, b_{t+1} = 0 | xi) for t < T-1, and for the hybrid
    head vc[t] = P(b_t = 1, h_t = h^c | xi). loglik excludes dynamics terms
    unless they were supplied.
    """
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    vc: Optional[np.ndarray]
    loglik: float

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def k(self) -> int:
        return self.u.shape[1]

    def occupancy(self) -> np.ndarray:
        """T x K posterior over all latent values (h^c as the last column when hybrid)"""
        if self.vc is None:
            return self.u
        return np.column_stack([self.u, self.vc])

    def usage_mass(self) -> np.ndarray:
        return self.u.sum(axis=0)

    def hc_mass(self) -> float:
        return float(self.vc.sum()) if self.vc is not None else 0.0


@dataclass(frozen=True, eq=False)
class OptionSpec:
    """One option: Gaussian control policy and logistic termination"""
    policy: Approximator
    termination: Approximator

    def __post_init__(self):
        if self.policy.head.kind is not HeadKind.GAUSSIAN:
            raise DimensionError("option policy needs a Gaussian head")
        if self.termination.head.kind is not HeadKind.LOGISTIC:
            raise DimensionError("option termination needs a logistic head")
        if self.policy.input_dim != self.termination.input_dim:
            raise DimensionError("option policy and termination disagree on the state dimension")


@dataclass(frozen=True, eq=False)
class FlatPolicy:
    """A single Gaussian policy trained by behavior cloning"""
    network: Approximator
    sigma: float

    def __post_init__(self):
        if self.network.head.kind is not HeadKind.GAUSSIAN:
            raise DimensionError("flat policy needs a Gaussian head")
        if not self.sigma > 0:
            raise DimensionError(f"sigma must be > 0, got {self.sigma}")

    @property
    def d_s(self) -> int:
        return self.network.input_dim

    @property
    def d_a(self) -> int:
        return self.network.head.size

    def flat_params(self) -> np.ndarray:
        return self.network.params.copy()

    def with_flat_params(self, theta: np.ndarray) -> "FlatPolicy":
        return FlatPolicy(self.network.with_params(theta), self.sigma)


@dataclass(frozen=True, eq=False)
class HierarchicalPolicy:
    """High-level policy eta over k options (plus h^c when hybrid) and the options themselves"""
    options: Tuple[OptionSpec, ...]
    high: Approximator
    sigma: float
    head_mode: HeadMode

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        k = len(self.options)
        if not self.sigma > 0:
            raise DimensionError(f"sigma must be > 0, got {self.sigma}")
        if self.head_mode is HeadMode.CATEGORICAL:
            if k < 1:
                raise DimensionError("a categorical-only policy needs k >= 1")
            if self.high.head != HeadSpec.softmax(k):
                raise DimensionError(f"categorical high-level head must be softmax({k})")
        elif self.head_mode is HeadMode.HYBRID:
            if self.high.head.kind is not HeadKind.HYBRID or self.high.head.size != k:
                raise DimensionError(f"hybrid high-level head must be hybrid({k}, d_a)")
        else:
            raise DimensionError("flat policies are represented by FlatPolicy")
        d_a = self.d_a
        for h, option in enumerate(self.options):
            if option.policy.input_dim != self.high.input_dim:
                raise DimensionError(f"option {h} expects state dimension {option.policy.input_dim}")
            if option.policy.head.size != d_a:
                raise DimensionError(f"option {h} control dimension {option.policy.head.size} != {d_a}")

    @classmethod
    def initialize(cls,
                   d_s: int,
                   d_a: int,
                   k: int,
                   head_mode: HeadMode,
                   sigma: float,
                   rng: np.random.Generator,
                   high_arch: ArchitectureConfig = ArchitectureConfig(kind="linear"),
                   option_arch: ArchitectureConfig = ArchitectureConfig(),
                   termination_arch: ArchitectureConfig = ArchitectureConfig(kind="linear"),
                   dropout_rate: float = 0.0) -> "HierarchicalPolicy":
        """Random initialization; terminations start at psi = 0.5 (zero output layer)"""
        if head_mode is HeadMode.HYBRID:
            high_head = HeadSpec.hybrid(k, d_a)
        else:
            high_head = HeadSpec.softmax(k)
        high = Approximator.initialize(d_s, high_head, high_arch.kind, high_arch.hidden_width,
                                       rng, dropout_rate)
        options = []
        for _ in range(k):
            policy = Approximator.initialize(d_s, HeadSpec.gaussian(d_a), option_arch.kind,
                                             option_arch.hidden_width, rng, dropout_rate)
            termination = Approximator.initialize(d_s, HeadSpec.logistic(), termination_arch.kind,
                                                  termination_arch.hidden_width, rng, dropout_rate,
                                                  zero_output=True)
            options.append(OptionSpec(policy, termination))
        return cls(tuple(options), high, sigma, head_mode)

    @property
    def k(self) -> int:
        return len(self.options)

    @property
    def is_hybrid(self) -> bool:
        return self.head_mode is HeadMode.HYBRID

    @property
    def n_latent(self) -> int:
        """Number of latent values: k, plus one for h^c when hybrid"""
        return self.k + (1 if self.is_hybrid else 0)

    @property
    def d_s(self) -> int:
        return self.high.input_dim

    @property
    def d_a(self) -> int:
        if self.is_hybrid:
            return self.high.head.control_dim
        return self.options[0].policy.head.size

    def components(self) -> List[Tuple[Tuple[str, int], Approximator]]:
        """Approximators in parameter order: high, then policy/termination per option"""
        parts: List[Tuple[Tuple[str, int], Approximator]] = [(("high", -1), self.high)]
        for h, option in enumerate(self.options):
            parts.append((("policy", h), option.policy))
            parts.append((("termination", h), option.termination))
        return parts

    def param_slices(self) -> Dict[Tuple[str, int], slice]:
        slices = {}
        offset = 0
        for key, approx in self.components():
            slices[key] = slice(offset, offset + approx.n_params)
            offset += approx.n_params
        return slices

    @property
    def n_params(self) -> int:
        return sum(approx.n_params for _, approx in self.components())

    def flat_params(self) -> np.ndarray:
        """theta: concatenation of every parameter vector"""
        return np.concatenate([approx.params for _, approx in self.components()])

    def with_flat_params(self, theta: np.ndarray) -> "HierarchicalPolicy":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"Expected {self.n_params} parameters, got shape {theta.shape}")
        slices = self.param_slices()
        high = self.high.with_params(theta[slices[("high", -1)]])
        options = tuple(
            OptionSpec(option.policy.with_params(theta[slices[("policy", h)]]),
                       option.termination.with_params(theta[slices[("termination", h)]]))
            for h, option in enumerate(self.options)
        )
        return HierarchicalPolicy(options, high, self.sigma, self.head_mode)

    def with_options(self, options: Sequence[OptionSpec]) -> "HierarchicalPolicy":
        return HierarchicalPolicy(tuple(options), self.high, self.sigma, self.head_mode)


AnyPolicy = Union[HierarchicalPolicy, FlatPolicy]


# ---------------------------------------------------------------------------
# Dataset and label files
# ---------------------------------------------------------------------------

def _parse_vectors(values: Any, name: str, line: int) -> List[List[float]]:
    if not isinstance(values, list):
        raise DatasetError(f"'{name}' must be an array of arrays", line=line)
    vectors = []
    for row in values:
        if not isinstance(row, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
            raise DatasetError(f"'{name}' must contain arrays of numbers", line=line)
        try:
            vectors.append([float(x) for x in row])
        except OverflowError as e:
            raise DatasetError(f"'{name}' holds a number too large for a float", line=line) from e
    return vectors


def _read_jsonl(path: PathLike) -> List[Tuple[int, Dict[str, Any]]]:
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"parse failure: {e.msg}", line=line_number) from e
            except ValueError as e:
                # integer literals beyond the interpreter's digit limit
                raise DatasetError(f"parse failure: {e}", line=line_number) from e
            if not isinstance(record, dict):
                raise DatasetError("record must be a JSON object", line=line_number)
            records.append((line_number, record))
    return records


def load_dataset(path: PathLike) -> Dataset:
    """
    Load and validate a line-delimited trajectory file.

    The whole file is rejected if any record fails validation; the error names
    the record and its line number.
    """
    records = _read_jsonl(path)
    if not records:
        raise DatasetError("empty dataset")

    trajectories = []
    d_s = d_a = None
    for index, (line_number, record) in enumerate(records, start=1):
        if "states" not in record or "controls" not in record:
            raise DatasetError(f"record {index}: missing 'states' or 'controls'", line=line_number)
        states = _parse_vectors(record["states"], "states", line_number)
        controls = _parse_vectors(record["controls"], "controls", line_number)
        traj = Trajectory(tuple(states), tuple(controls))
        if d_s is None:
            if not states or not controls:
                raise DatasetError(f"record {index}: trajectory must contain at least one control",
                                   line=line_number)
            d_s, d_a = len(states[0]), len(controls[0])
        violations = validate_trajectory(traj, d_s, d_a)
        if violations:
            raise DatasetError(f"record {index}: " + "; ".join(violations), line=line_number)
        trajectories.append(traj)

    dataset = Dataset(tuple(trajectories), d_s, d_a)
    logger.debug(f"Loaded {len(dataset)} trajectories (d_s={d_s}, d_a={d_a}) from {path}")
    return dataset


def save_dataset(dataset: Dataset, path: PathLike) -> None:
    """Write one JSON object per line; float formatting is deterministic"""
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for traj in dataset:
            f.write(json.dumps(traj.to_record(), allow_nan=False) + "\n")


def save_labels(labels: Sequence[Sequence[int]], path: PathLike) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for row in labels:
            f.write(json.dumps({"labels": [int(x) for x in row]}) + "\n")


def load_labels(path: PathLike, dataset: Optional[Dataset] = None) -> List[np.ndarray]:
    """Load a label sidecar; with a dataset, check line alignment and lengths"""
    labels = []
    for line_number, record in _read_jsonl(path):
        values = record.get("labels")
        if not isinstance(values, list) or not all(isinstance(x, int) for x in values):
            raise DatasetError("'labels' must be an array of integers", line=line_number)
        labels.append(np.array(values, dtype=int))
    if dataset is not None:
        if len(labels) != len(dataset):
            raise DatasetError(f"label sidecar has {len(labels)} records for {len(dataset)} trajectories")
        for index, (row, traj) in enumerate(zip(labels, dataset), start=1):
            if row.size != traj.T:
                raise DatasetError(f"record {index}: {row.size} labels for T={traj.T}")
    return labels


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

class HeadBlock(BaseModel):
    kind: Literal["gaussian", "softmax", "logistic", "hybrid"]
    size: int
    control_dim: int = 0


class ApproximatorBlock(BaseModel):
    architecture: Literal["linear", "mlp"]
    hidden_width: int
    input_dim: int
    head: HeadBlock
    dropout_rate: str
    params: List[str]


class OptionBlock(BaseModel):
    policy: ApproximatorBlock
    termination: ApproximatorBlock


class CheckpointDocument(BaseModel):
    format_version: int
    head_mode: Literal["categorical", "hybrid", "flat"]
    k: int
    sigma: str
    d_s: int
    d_a: int
    high: ApproximatorBlock
    options: List[OptionBlock]


def _encode_approximator(approx: Approximator) -> Dict[str, Any]:
    return {
        "architecture": approx.arch,
        "hidden_width": approx.hidden_width,
        "input_dim": approx.input_dim,
        "head": approx.head.to_dict(),
        "dropout_rate": float(approx.dropout_rate).hex(),
        "params": [float(x).hex() for x in approx.params],
    }


def _from_hex(value: str, what: str) -> float:
    try:
        return float.fromhex(value)
    except (ValueError, TypeError) as e:
        raise CheckpointError(f"invalid float encoding for {what}: {value!r}") from e


def _decode_approximator(block: ApproximatorBlock, what: str) -> Approximator:
    params = np.array([_from_hex(x, what) for x in block.params], dtype=np.float64)
    try:
        return Approximator(
            input_dim=block.input_dim,
            head=HeadSpec.from_dict(block.head.model_dump()),
            arch=block.architecture,
            hidden_width=block.hidden_width,
            params=params,
            dropout_rate=_from_hex(block.dropout_rate, what),
        )
    except DimensionError as e:
        raise CheckpointError(f"{what}: {e}") from e


def checkpoint_document(policy: AnyPolicy) -> Dict[str, Any]:
    if isinstance(policy, FlatPolicy):
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "head_mode": HeadMode.FLAT.value,
            "k": 0,
            "sigma": float(policy.sigma).hex(),
            "d_s": policy.d_s,
            "d_a": policy.d_a,
            "high": _encode_approximator(policy.network),
            "options": [],
        }
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "head_mode": policy.head_mode.value,
        "k": policy.k,
        "sigma": float(policy.sigma).hex(),
        "d_s": policy.d_s,
        "d_a": policy.d_a,
        "high": _encode_approximator(policy.high),
        "options": [
            {"policy": _encode_approximator(o.policy), "termination": _encode_approximator(o.termination)}
            for o in policy.options
        ],
    }


def save_checkpoint(policy: AnyPolicy, path: PathLike) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(checkpoint_document(policy), f, indent=1)
        f.write("\n")
    logger.debug(f"Saved checkpoint to {path}")


def parse_checkpoint(text: str) -> AnyPolicy:
    """Reconstruct a policy from checkpoint text"""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        if e.pos >= len(text.rstrip()) or e.msg.startswith("Unterminated"):
            raise CheckpointError("unexpected end of checkpoint") from e
        raise CheckpointError(f"corrupted checkpoint: {e.msg} at position {e.pos}") from e

    if not isinstance(raw, dict):
        raise CheckpointError("corrupted checkpoint: top level must be an object")
    version = raw.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {version!r} (expected {CHECKPOINT_FORMAT_VERSION})")
    try:
        doc = CheckpointDocument.model_validate(raw)
    except ValidationError as e:
        raise CheckpointError(f"corrupted checkpoint: {e.error_count()} schema error(s): {e}") from e

    if len(doc.options) != doc.k:
        raise CheckpointError(f"descriptor says k={doc.k} but {len(doc.options)} option blocks are present")
    sigma = _from_hex(doc.sigma, "sigma")
    high = _decode_approximator(doc.high, "high")
    if high.input_dim != doc.d_s:
        raise CheckpointError(f"high-level input dimension {high.input_dim} != d_s={doc.d_s}")

    try:
        if doc.head_mode == HeadMode.FLAT.value:
            if doc.k != 0:
                raise CheckpointError("flat checkpoints must have k=0")
            if high.head != HeadSpec.gaussian(doc.d_a):
                raise CheckpointError(f"flat network head must be gaussian({doc.d_a})")
            return FlatPolicy(high, sigma)

        options = []
        for h, block in enumerate(doc.options):
            policy = _decode_approximator(block.policy, f"option {h} policy")
            termination = _decode_approximator(block.termination, f"option {h} termination")
            if policy.head != HeadSpec.gaussian(doc.d_a):
                raise CheckpointError(f"option {h} policy head must be gaussian({doc.d_a})")
            options.append(OptionSpec(policy, termination))
        result = HierarchicalPolicy(tuple(options), high, sigma, HeadMode(doc.head_mode))
    except DimensionError as e:
        raise CheckpointError(f"architecture descriptor inconsistent: {e}") from e
    if result.d_a != doc.d_a:
        raise CheckpointError(f"control dimension {result.d_a} != d_a={doc.d_a}")
    return result


def load_checkpoint(path: PathLike) -> AnyPolicy:
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    return parse_checkpoint(text)
