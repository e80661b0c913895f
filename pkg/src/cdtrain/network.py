"""Fully-connected float64 networks with exact per-sample output Jacobians.

The flat parameter vector ``theta`` orders layers last to first, each layer
as its row-major flattened weight matrix followed by its bias vector:

    theta = [vec(W_L), b_L, ..., vec(W_1), b_1]

Outputs are stacked data-major: all ``output_dim`` outputs of sample 1,
then sample 2, and so on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "identity")
INIT_SCHEMES = ("standard", "ntk", "improved_standard")

# Width-scaling exponent shared by the init schemes; fixed to 1 so all three
# coincide distributionally while keeping their defining formulas distinct.
_WIDTH_SCALE_S = 1.0


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and initialization description.

    ``hidden_widths`` may be empty, which gives a single affine layer.
    ``activation`` applies between layers; the final layer is always linear.
    ``use_bias=False`` removes bias parameters entirely, which is the right
    setting when the tangent kernel should reduce to a pure input Gram
    matrix.
    """

    input_dim: int
    output_dim: int
    hidden_widths: tuple[int, ...] = ()
    activation: str = "relu"
    sigma_w: float = math.sqrt(2.0)
    sigma_b: float = 0.1
    init_scheme: str = "ntk"
    use_bias: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive integers")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.init_scheme not in INIT_SCHEMES:
            raise ValueError(f"unknown init_scheme {self.init_scheme!r}; expected one of {INIT_SCHEMES}")
        if self.sigma_w < 0.0 or self.sigma_b < 0.0:
            raise ValueError("sigma_w and sigma_b must be non-negative")

    @property
    def widths(self) -> tuple[int, ...]:
        """Layer widths (n_0, ..., n_L) including input and output."""
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_widths) + 1

    @property
    def n_params(self) -> int:
        w = self.widths
        total = 0
        for n_in, n_out in zip(w[:-1], w[1:]):
            total += n_in * n_out
            if self.use_bias:
                total += n_out
        return total


@dataclass(frozen=True)
class NetworkState:
    """A spec together with a concrete flat parameter vector."""

    spec: NetworkSpec
    theta: np.ndarray
    rng_seed: int | None = None

    def __post_init__(self) -> None:
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or theta.shape[0] != self.spec.n_params:
            raise ValueError(
                f"theta must be a flat vector of length {self.spec.n_params}, got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def with_theta(self, theta: np.ndarray) -> "NetworkState":
        return NetworkState(self.spec, theta, self.rng_seed)


@dataclass(frozen=True)
class Batch:
    """Inputs (r, input_dim) and data-major stacked targets (r * output_dim,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ValueError("inputs must be a (r, input_dim) array with r >= 1")
        if targets.ndim != 1:
            raise ValueError("targets must be a flat data-major vector")
        if targets.shape[0] % inputs.shape[0] != 0:
            raise ValueError("targets length must be a multiple of the sample count")
        if not np.all(np.isfinite(inputs)) or not np.all(np.isfinite(targets)):
            raise ValueError("batch contains non-finite values")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


def check_batch(spec: NetworkSpec, batch: Batch) -> None:
    """Raise if the batch shapes do not fit the network spec."""
    if batch.inputs.shape[1] != spec.input_dim:
        raise ValueError(
            f"batch has {batch.inputs.shape[1]} features, network expects {spec.input_dim}"
        )
    if batch.targets.shape[0] != batch.n_samples * spec.output_dim:
        raise ValueError(
            f"targets length {batch.targets.shape[0]} does not match "
            f"r*output_dim = {batch.n_samples * spec.output_dim}"
        )


def unpack_params(spec: NetworkSpec, theta: np.ndarray):
    """Views of theta as per-layer (W, b) pairs, first layer first.

    b is None when ``use_bias`` is off.
    """
    pairs = list(zip(spec.widths[:-1], spec.widths[1:]))
    layers = []
    offset = 0
    for n_in, n_out in reversed(pairs):
        w = theta[offset:offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        if spec.use_bias:
            b = theta[offset:offset + n_out]
            offset += n_out
        else:
            b = None
        layers.append((w, b))
    layers.reverse()
    return layers


def init_network(spec: NetworkSpec, seed: int) -> NetworkState:
    """Draw parameters for the configured scheme with a seeded generator.

    Draws follow the theta layout order (last layer first, weights before
    bias), so equal seeds give bit-identical parameter vectors.

    Schemes, with s fixed to 1:
      ntk:                W = sigma_w / sqrt(s * n_in) * N(0, 1)
      standard:           W ~ N(0, sigma_w^2 / n_in)
      improved_standard:  W ~ (1 / sqrt(s)) * N(0, sigma_w^2 / n_in)
    Biases are sigma_b * N(0, 1) in every scheme.
    """
    rng = np.random.default_rng(seed)
    pairs = list(zip(spec.widths[:-1], spec.widths[1:]))
    segments = []
    for n_in, n_out in reversed(pairs):
        raw = rng.standard_normal(n_in * n_out)
        if spec.init_scheme == "ntk":
            w = (spec.sigma_w / math.sqrt(_WIDTH_SCALE_S * n_in)) * raw
        elif spec.init_scheme == "standard":
            w = raw * (spec.sigma_w / math.sqrt(n_in))
        else:  # improved_standard
            w = raw * (spec.sigma_w / math.sqrt(n_in)) / math.sqrt(_WIDTH_SCALE_S)
        segments.append(w)
        if spec.use_bias:
            segments.append(spec.sigma_b * rng.standard_normal(n_out))
    theta = np.concatenate(segments) if segments else np.zeros(0)
    return NetworkState(spec, theta, int(seed))


def _forward_theta(spec: NetworkSpec, theta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Forward pass at an arbitrary theta; returns (r, output_dim)."""
    if inputs.shape[1] != spec.input_dim:
        raise ValueError(f"inputs have {inputs.shape[1]} features, expected {spec.input_dim}")
    layers = unpack_params(spec, theta)
    last = len(layers) - 1
    z = inputs
    for i, (w, b) in enumerate(layers):
        h = z @ w
        if b is not None:
            h = h + b
        if i == last:
            z = h
        elif spec.activation == "relu":
            z = np.maximum(h, 0.0)
        else:
            z = h
    return z


def forward(state: NetworkState, batch: Batch) -> np.ndarray:
    """Stacked outputs, shape (r * output_dim,), data-major."""
    return _forward_theta(state.spec, state.theta, batch.inputs).ravel()


def _forward_cached(spec: NetworkSpec, theta: np.ndarray, inputs: np.ndarray):
    """Forward pass keeping per-layer inputs and activation masks.

    Returns (zs, masks, out): zs[i] is the input to layer i, masks[i] the
    derivative mask of hidden layer i (None for identity activation).  The
    relu derivative at exactly 0 is 0.
    """
    layers = unpack_params(spec, theta)
    last = len(layers) - 1
    zs = [inputs]
    masks = []
    z = inputs
    for i, (w, b) in enumerate(layers):
        h = z @ w
        if b is not None:
            h = h + b
        if i == last:
            z = h
        else:
            if spec.activation == "relu":
                mask = h > 0.0
                masks.append(mask)
                z = np.where(mask, h, 0.0)
            else:
                masks.append(None)
                z = h
            zs.append(z)
    return zs, masks, z


def backprop(state: NetworkState, batch: Batch, upstream: np.ndarray) -> np.ndarray:
    """Parameter gradient J^T u for an output cotangent u (data-major).

    This is the chain-rule product used by descent updates; it never
    materializes the Jacobian.
    """
    spec = state.spec
    check_batch(spec, batch)
    layers = unpack_params(spec, state.theta)
    zs, masks, _ = _forward_cached(spec, state.theta, batch.inputs)
    r = batch.n_samples
    delta = np.ascontiguousarray(upstream, dtype=np.float64).reshape(r, spec.output_dim)
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, b = layers[i]
        grads.append((zs[i].T @ delta).ravel())
        if b is not None:
            grads.append(delta.sum(axis=0))
        if i > 0:
            delta = delta @ w.T
            if masks[i - 1] is not None:
                delta = delta * masks[i - 1]
    return np.concatenate(grads)


def jacobian(state: NetworkState, batch: Batch) -> np.ndarray:
    """Per-sample output Jacobian, shape (r * output_dim, n_params).

    Row i * output_dim + m holds the gradient of output m of sample i.
    Built by reverse accumulation, one pass per output coordinate, with
    per-sample gradients kept separate.
    """
    spec = state.spec
    check_batch(spec, batch)
    layers = unpack_params(spec, state.theta)
    zs, masks, _ = _forward_cached(spec, state.theta, batch.inputs)
    r = batch.n_samples
    jac = np.empty((r * spec.output_dim, spec.n_params))
    for m in range(spec.output_dim):
        delta = np.zeros((r, spec.output_dim))
        delta[:, m] = 1.0
        cols = []
        for i in range(len(layers) - 1, -1, -1):
            w, b = layers[i]
            gw = zs[i][:, :, None] * delta[:, None, :]
            cols.append(gw.reshape(r, -1))
            if b is not None:
                cols.append(delta)
            if i > 0:
                delta = delta @ w.T
                if masks[i - 1] is not None:
                    delta = delta * masks[i - 1]
        jac[m::spec.output_dim] = np.concatenate(cols, axis=1)
    return jac
