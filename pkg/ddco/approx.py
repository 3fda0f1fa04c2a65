"""
Function Approximators
======================

Linear maps and one-hidden-layer ReLU networks with typed output heads and
hand-written backpropagation. Every head is a list of output blocks that share
the input (or hidden) layer:

- gaussian(d_a):  [mean (d_a)]
- softmax(m):     [logits (m)]
- logistic:       [logit (1)]
- hybrid(k, d_a): [mean (d_a), logits (k + 1)]  -- logit 0 is the physical-control branch

Parameters are one flat float64 vector laid out layer by layer, each weight
matrix in row-major order followed by its bias.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit, log_softmax, softmax

from .errors import DimensionError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

Target = Union[int, np.integer, bool, np.ndarray, Sequence[float]]


class HeadKind(Enum):
    GAUSSIAN = "gaussian"
    SOFTMAX = "softmax"
    LOGISTIC = "logistic"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class HeadSpec:
    """Output head descriptor"""
    kind: HeadKind
    size: int
    control_dim: int = 0

    @classmethod
    def gaussian(cls, d_a: int) -> "HeadSpec":
        return cls(HeadKind.GAUSSIAN, d_a)

    @classmethod
    def softmax(cls, m: int) -> "HeadSpec":
        return cls(HeadKind.SOFTMAX, m)

    @classmethod
    def logistic(cls) -> "HeadSpec":
        return cls(HeadKind.LOGISTIC, 1)

    @classmethod
    def hybrid(cls, k: int, d_a: int) -> "HeadSpec":
        return cls(HeadKind.HYBRID, k, d_a)

    @property
    def blocks(self) -> Tuple[int, ...]:
        if self.kind is HeadKind.HYBRID:
            return (self.control_dim, self.size + 1)
        if self.kind is HeadKind.LOGISTIC:
            return (1,)
        return (self.size,)

    @property
    def output_dim(self) -> int:
        return sum(self.blocks)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "size": self.size, "control_dim": self.control_dim}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HeadSpec":
        return cls(HeadKind(data["kind"]), int(data["size"]), int(data.get("control_dim", 0)))


@dataclass(frozen=True)
class HeadOutput:
    """Evaluated head for a single input"""
    mean: Optional[np.ndarray] = None
    log_probs: Optional[np.ndarray] = None
    prob: Optional[float] = None


@dataclass
class ForwardCache:
    """Intermediate values kept for backpropagation"""
    inputs: np.ndarray
    pre_activation: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None


def layer_shapes(input_dim: int, head: HeadSpec, arch: str, hidden_width: int) -> List[Tuple[int, int]]:
    """Weight-matrix shapes in parameter order (each followed by a bias)"""
    if arch == "mlp":
        return [(hidden_width, input_dim)] + [(nb, hidden_width) for nb in head.blocks]
    if arch == "linear":
        return [(nb, input_dim) for nb in head.blocks]
    raise DimensionError(f"Unknown architecture: {arch!r}")


def param_count(input_dim: int, head: HeadSpec, arch: str, hidden_width: int) -> int:
    return sum(r * c + r for r, c in layer_shapes(input_dim, head, arch, hidden_width))


@dataclass(frozen=True, eq=False)
class Approximator:
    """A differentiable parametric map with a typed output head"""
    input_dim: int
    head: HeadSpec
    arch: str
    hidden_width: int
    params: np.ndarray
    dropout_rate: float = 0.0

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64).ravel()
        expected = param_count(self.input_dim, self.head, self.arch, self.hidden_width)
        if params.size != expected:
            raise DimensionError(
                f"{self.arch} approximator with {self.head.kind.value} head expects "
                f"{expected} parameters, got {params.size}"
            )
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @classmethod
    def initialize(cls,
                   input_dim: int,
                   head: HeadSpec,
                   arch: str,
                   hidden_width: int,
                   rng: np.random.Generator,
                   dropout_rate: float = 0.0,
                   zero_output: bool = False) -> "Approximator":
        """Glorot-uniform weights, zero biases; zero_output zeroes the output blocks"""
        shapes = layer_shapes(input_dim, head, arch, hidden_width)
        n_hidden_layers = 1 if arch == "mlp" else 0
        chunks = []
        for index, (rows, cols) in enumerate(shapes):
            if zero_output and index >= n_hidden_layers:
                weights = np.zeros((rows, cols))
            else:
                bound = np.sqrt(6.0 / (rows + cols))
                weights = rng.uniform(-bound, bound, size=(rows, cols))
            chunks.append(weights.ravel())
            chunks.append(np.zeros(rows))
        return cls(input_dim, head, arch, hidden_width if arch == "mlp" else 0,
                   np.concatenate(chunks), dropout_rate)

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_params(self, params: np.ndarray) -> "Approximator":
        return replace(self, params=params)

    def descriptor(self) -> Dict[str, Any]:
        """Architecture descriptor (everything except the parameter values)"""
        return {
            "architecture": self.arch,
            "hidden_width": self.hidden_width,
            "input_dim": self.input_dim,
            "head": self.head.to_dict(),
            "dropout_rate": self.dropout_rate,
        }

    def _layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        layers = []
        offset = 0
        for rows, cols in layer_shapes(self.input_dim, self.head, self.arch, self.hidden_width):
            weights = self.params[offset:offset + rows * cols].reshape(rows, cols)
            offset += rows * cols
            bias = self.params[offset:offset + rows]
            offset += rows
            layers.append((weights, bias))
        return layers

    def forward_batch(self,
                      inputs: np.ndarray,
                      mode: str = "eval",
                      rng: Optional[np.random.Generator] = None) -> Tuple[List[np.ndarray], ForwardCache]:
        """Evaluate all output blocks for a batch of inputs (one row per input)"""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if inputs.shape[1] != self.input_dim:
            raise DimensionError(f"Expected input dimension {self.input_dim}, got {inputs.shape[1]}")

        layers = self._layers()
        cache = ForwardCache(inputs=inputs)
        features = inputs
        if self.arch == "mlp":
            weights, bias = layers[0]
            pre = inputs @ weights.T + bias
            features = np.maximum(pre, 0.0)
            if mode == "train" and self.dropout_rate > 0.0:
                if rng is None:
                    raise ValueError("train-mode dropout needs an rng")
                keep = rng.random(features.shape) >= self.dropout_rate
                cache.mask = keep / (1.0 - self.dropout_rate)
                features = features * cache.mask
            cache.pre_activation = pre
            layers = layers[1:]
        cache.features = features

        outputs = [features @ weights.T + bias for weights, bias in layers]
        return outputs, cache

    def backward_batch(self, cache: ForwardCache, output_grads: Sequence[np.ndarray]) -> np.ndarray:
        """Gradient of sum(output * output_grad) with respect to the flat parameters"""
        layers = self._layers()
        out_layers = layers[1:] if self.arch == "mlp" else layers
        features = cache.features

        block_grads = []
        feature_grad = np.zeros_like(features) if self.arch == "mlp" else None
        for (weights, _), dout in zip(out_layers, output_grads):
            block_grads.append((dout.T @ features).ravel())
            block_grads.append(dout.sum(axis=0))
            if feature_grad is not None:
                feature_grad += dout @ weights

        if self.arch != "mlp":
            return np.concatenate(block_grads)

        pre_grad = feature_grad * (cache.pre_activation > 0.0)
        if cache.mask is not None:
            pre_grad = pre_grad * cache.mask
        hidden = [(pre_grad.T @ cache.inputs).ravel(), pre_grad.sum(axis=0)]
        return np.concatenate(hidden + block_grads)

    def forward(self,
                state: np.ndarray,
                mode: str = "eval",
                rng: Optional[np.random.Generator] = None) -> HeadOutput:
        """Evaluate the head on a single state"""
        state = np.asarray(state, dtype=np.float64)
        if state.ndim != 1 or state.size != self.input_dim:
            raise DimensionError(f"Expected a state of dimension {self.input_dim}, got shape {state.shape}")
        outputs, _ = self.forward_batch(state[None, :], mode, rng)
        kind = self.head.kind
        if kind is HeadKind.GAUSSIAN:
            return HeadOutput(mean=outputs[0][0])
        if kind is HeadKind.SOFTMAX:
            return HeadOutput(log_probs=log_softmax(outputs[0][0]))
        if kind is HeadKind.LOGISTIC:
            return HeadOutput(prob=float(expit(outputs[0][0, 0])))
        return HeadOutput(mean=outputs[0][0], log_probs=log_softmax(outputs[1][0]))


def gaussian_logdensity(mu: np.ndarray, a: np.ndarray, sigma: float) -> Union[float, np.ndarray]:
    """Normalized isotropic Gaussian log-density; trailing axis is the control dimension"""
    mu = np.asarray(mu, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if mu.shape != a.shape:
        raise DimensionError(f"Mean shape {mu.shape} does not match control shape {a.shape}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    d_a = a.shape[-1]
    variance = sigma * sigma
    quad = np.sum((a - mu) ** 2, axis=-1) / (2.0 * variance)
    return -quad - 0.5 * d_a * (LOG_2PI + np.log(variance))


def _is_index(target: Target) -> bool:
    return isinstance(target, (int, np.integer, bool, np.bool_))


def _target_terms(approx: Approximator,
                  outputs: List[np.ndarray],
                  target: Target,
                  sigma: Optional[float]) -> Tuple[List[np.ndarray], float]:
    """d log p(target) / d outputs for one input, and log p(target)"""
    head = approx.head
    kind = head.kind

    def control_terms(mu_row: np.ndarray) -> Tuple[np.ndarray, float]:
        if sigma is None:
            raise ValueError("sigma is required for a Gaussian control target")
        a = np.asarray(target, dtype=np.float64)
        if a.shape != mu_row.shape:
            raise DimensionError(f"Control target of shape {a.shape} does not match head dimension {mu_row.shape}")
        return (a - mu_row) / (sigma * sigma), float(gaussian_logdensity(mu_row, a, sigma))

    if kind is HeadKind.GAUSSIAN:
        if _is_index(target):
            raise DimensionError("Gaussian head needs a control vector target")
        dmu, logp = control_terms(outputs[0][0])
        return [dmu[None, :]], logp

    if kind is HeadKind.SOFTMAX:
        if not _is_index(target) or isinstance(target, (bool, np.bool_)):
            raise DimensionError("Softmax head needs a class index target")
        index = int(target)
        if not 0 <= index < head.size:
            raise DimensionError(f"Class index {index} out of range for {head.size} classes")
        logits = outputs[0][0]
        grad = -softmax(logits)
        grad[index] += 1.0
        return [grad[None, :]], float(log_softmax(logits)[index])

    if kind is HeadKind.LOGISTIC:
        if not _is_index(target) or int(target) not in (0, 1):
            raise DimensionError("Logistic head needs a binary outcome target")
        z = outputs[0][0, 0]
        if int(target) == 1:
            return [np.array([[expit(-z)]])], float(log_expit(z))
        return [np.array([[-expit(z)]])], float(log_expit(-z))

    # hybrid
    mu_row = outputs[0][0]
    logits = outputs[1][0]
    logits_grad = -softmax(logits)
    log_probs = log_softmax(logits)
    if _is_index(target):
        option = int(target)
        if not 0 <= option < head.size:
            raise DimensionError(f"Option index {option} out of range for k={head.size}")
        logits_grad[option + 1] += 1.0
        return [np.zeros((1, mu_row.size)), logits_grad[None, :]], float(log_probs[option + 1])
    dmu, gauss = control_terms(mu_row)
    logits_grad[0] += 1.0
    return [dmu[None, :], logits_grad[None, :]], float(log_probs[0]) + gauss


def weighted_logprob_grad(approx: Approximator,
                          state: np.ndarray,
                          target: Target,
                          weight: float,
                          accumulator: np.ndarray,
                          sigma: Optional[float] = None,
                          mode: str = "eval",
                          rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, float]:
    """
    Add weight * grad log p(target | state) into accumulator (in place).

    Args:
        approx: Approximator whose head matches the target kind
        state: Input vector
        target: Control vector (gaussian / hybrid control), class or option index
            (softmax / hybrid option), or binary outcome (logistic)
        weight: Scalar weight; zero leaves the accumulator untouched
        accumulator: Array of length approx.n_params
        sigma: Shared standard deviation for Gaussian control targets

    Returns:
        Tuple of (accumulator, log p(target | state))
    """
    if accumulator.shape != (approx.n_params,):
        raise DimensionError(f"Accumulator must have shape ({approx.n_params},), got {accumulator.shape}")
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1 or state.size != approx.input_dim:
        raise DimensionError(f"Expected a state of dimension {approx.input_dim}, got shape {state.shape}")
    outputs, cache = approx.forward_batch(state[None, :], mode, rng)
    output_grads, logp = _target_terms(approx, outputs, target, sigma)
    if weight != 0.0:
        accumulator += approx.backward_batch(cache, [weight * g for g in output_grads])
    return accumulator, logp


def logprob(approx: Approximator, state: np.ndarray, target: Target, sigma: Optional[float] = None) -> float:
    """log p(target | state) in eval mode"""
    _, logp = weighted_logprob_grad(approx, state, target, 0.0, np.zeros(approx.n_params), sigma=sigma)
    return logp


def hybrid_logdensity(approx: Approximator, state: np.ndarray, target: Target, sigma: float) -> float:
    """
    Log-density of the hybrid high-level distribution.

    An integer target h is an option (log eta(h | s)); a vector target is a
    physical control a, scored as log eta(h^c | s) + log N(a; mu_eta(s), sigma^2).
    """
    if approx.head.kind is not HeadKind.HYBRID:
        raise DimensionError("hybrid_logdensity needs a hybrid head")
    return logprob(approx, state, target, sigma)


def finite_difference_grad(f: Callable[[np.ndarray], float],
                           params: np.ndarray,
                           step: float = 1e-5) -> np.ndarray:
    """Central finite differences of f at params"""
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    params = np.array(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for i in range(params.size):
        plus = params.copy()
        minus = params.copy()
        plus[i] += step
        minus[i] -= step
        grad[i] = (f(plus) - f(minus)) / (2.0 * step)
    return grad
