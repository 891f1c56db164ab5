"""Point and dendritic neuron layers with exact forward/backward passes.

A dendritic layer has ``n_neurons`` somata, each fed by ``K`` dendrites. Row
``j`` of the weight matrix belongs to neuron ``j // K``. Each dendrite computes
``w_j . x + b_j``, applies the activation, and the K results are summed in
ascending dendrite order to give the neuron output.

All functions accept a single input vector or a batch of shape
``(batch, n_inputs)``; outputs follow the same convention.
"""

from dataclasses import dataclass
import json

import numpy as np


class ShapeError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class CapabilityError(ValueError):
    pass


@dataclass(frozen=True)
class Activation:
    """Elementwise activation. ``kind`` is ``relu``, ``leaky_relu`` or ``identity``."""

    kind: str = "relu"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ("relu", "leaky_relu", "identity"):
            raise ValueError(f"unknown activation {self.kind!r}")

    def __call__(self, z):
        if self.kind == "relu":
            return np.where(z > 0, z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0, z, self.slope * z)
        return np.array(z, dtype=np.float64, copy=True)

    def derivative(self, z):
        # tie at z == 0 takes the left branch (0 for ReLU, slope for leaky)
        z = np.asarray(z)
        if self.kind == "relu":
            return np.where(z > 0, 1.0, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0, 1.0, self.slope)
        return np.ones_like(z, dtype=np.float64)

    @property
    def piecewise_linear(self):
        return self.kind in ("relu", "leaky_relu")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "leaky_relu":
            d["slope"] = self.slope
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("slope", 0.01))


RELU = Activation("relu")
IDENTITY = Activation("identity")


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ShapeError(f"expected a vector or a batch matrix, got ndim={x.ndim}")


@dataclass(frozen=True, eq=False)
class DendriticLayerSpec:
    n_neurons: int
    dendrites_per_neuron: int
    n_inputs: int
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation = RELU

    def __post_init__(self):
        K = self.dendrites_per_neuron
        if min(self.n_neurons, K, self.n_inputs) < 1:
            raise ShapeError("n_neurons, dendrites_per_neuron and n_inputs must be >= 1")
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.biases, dtype=np.float64)
        if w.shape != (self.n_neurons * K, self.n_inputs):
            raise ShapeError(
                f"weights must have shape {(self.n_neurons * K, self.n_inputs)}, got {w.shape}"
            )
        if b.shape != (self.n_neurons * K,):
            raise ShapeError(f"biases must have length {self.n_neurons * K}, got {b.shape}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def K(self):
        return self.dendrites_per_neuron

    @property
    def n_dendrites(self):
        return self.n_neurons * self.dendrites_per_neuron

    def neuron_of(self, j):
        return j // self.dendrites_per_neuron

    @classmethod
    def random(cls, n_inputs, n_neurons, K, rng, activation=RELU, scale=None):
        """He-style init, further divided by sqrt(K) so the summed output keeps unit scale."""
        if scale is None:
            scale = np.sqrt(2.0 / n_inputs) / np.sqrt(K)
        w = rng.normal(0.0, scale, size=(n_neurons * K, n_inputs))
        b = np.zeros(n_neurons * K)
        return cls(n_neurons, K, n_inputs, w, b, activation)

    def to_dict(self):
        return {
            "n_inputs": self.n_inputs,
            "n_neurons": self.n_neurons,
            "dendrites_per_neuron": self.dendrites_per_neuron,
            "activation": self.activation.to_dict(),
            "weights": self.weights.ravel().tolist(),
            "biases": self.biases.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        n, K, m = d["n_neurons"], d["dendrites_per_neuron"], d["n_inputs"]
        w = np.asarray(d["weights"], dtype=np.float64)
        if w.size != n * K * m:
            raise ShapeError(f"expected {n * K * m} weights, got {w.size}")
        return cls(n, K, m, w.reshape(n * K, m), d["biases"], Activation.from_dict(d["activation"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ForwardRecord:
    x: np.ndarray
    pre_activations: np.ndarray
    outputs: np.ndarray


@dataclass(frozen=True, eq=False)
class GradientMask:
    """Packed per-dendrite derivative bits.

    Encoding (one bit per dendrite, ``np.packbits`` big-endian order along the
    last axis): bit 1 means the dendrite is in its unit-slope branch
    (``pre_activation > 0``); bit 0 means the other branch, i.e. derivative 0
    for ReLU or ``slope`` for leaky ReLU.
    """

    bits: np.ndarray
    n_dendrites: int
    activation: Activation

    @property
    def bits_per_dendrite(self):
        return 1

    def unpack(self):
        return np.unpackbits(self.bits, axis=-1, count=self.n_dendrites).astype(bool)

    def derivative(self):
        on = self.unpack()
        off = 0.0 if self.activation.kind == "relu" else self.activation.slope
        return np.where(on, 1.0, off)


def forward_point(x, W, b, activation=RELU):
    """Point-neuron layer: ``activation(W x + b)``."""
    xb, single = _as_batch(x)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != xb.shape[1] or b.shape != (W.shape[0],):
        raise ShapeError(f"shape mismatch: W{W.shape}, b{b.shape}, x{xb.shape}")
    out = activation(xb @ W.T + b)
    return out[0] if single else out


def _sum_dendrites(d, K):
    # fixed ascending-index accumulation, independent of BLAS reduction order
    g = d.reshape(d.shape[0], -1, K)
    h = g[:, :, 0].copy()
    for k in range(1, K):
        h += g[:, :, k]
    return h


def forward_dendritic(x, layer):
    """Evaluate the layer and keep what the backward pass needs."""
    xb, single = _as_batch(x)
    if xb.shape[1] != layer.n_inputs:
        raise ShapeError(f"input length {xb.shape[1]} != n_inputs {layer.n_inputs}")
    pre = xb @ layer.weights.T + layer.biases
    h = _sum_dendrites(layer.activation(pre), layer.K)
    if single:
        return ForwardRecord(xb[0], pre[0], h[0])
    return ForwardRecord(xb, pre, h)


def _backward(deriv, layer, x, grad_h):
    xb, single = _as_batch(x)
    gh, _ = _as_batch(grad_h)
    if gh.shape != (xb.shape[0], layer.n_neurons):
        raise ShapeError(f"grad_h shape {gh.shape} does not match {(xb.shape[0], layer.n_neurons)}")
    # dL/d pre_j = grad_h[neuron(j)] * sigma'(pre_j)
    g_pre = np.repeat(gh, layer.K, axis=1) * deriv.reshape(gh.shape[0], -1)
    grad_W = g_pre.T @ xb
    grad_b = g_pre.sum(axis=0)
    grad_x = g_pre @ layer.weights
    return grad_W, grad_b, (grad_x[0] if single else grad_x)


def backward_dendritic(record, layer, grad_h):
    """Gradients of the loss w.r.t. weights, biases and input.

    ``grad_h`` is the upstream gradient w.r.t. the neuron outputs. For a batch
    the weight and bias gradients are summed over the batch.
    """
    pre, _ = _as_batch(record.pre_activations)
    if pre.shape[1] != layer.n_dendrites or np.shape(record.x)[-1] != layer.n_inputs:
        raise ConsistencyError("forward record was not produced by this layer")
    return _backward(layer.activation.derivative(pre), layer, record.x, grad_h)


def pack_gradient_mask(record, layer):
    if not layer.activation.piecewise_linear:
        raise CapabilityError(
            f"activation {layer.activation.kind!r} has no exact 1-bit derivative encoding"
        )
    pre = np.asarray(record.pre_activations)
    if pre.shape[-1] != layer.n_dendrites:
        raise ConsistencyError("forward record was not produced by this layer")
    return GradientMask(np.packbits(pre > 0, axis=-1), layer.n_dendrites, layer.activation)


def backward_from_mask(mask, layer, x, grad_h):
    """Same gradients as :func:`backward_dendritic`, using only the packed mask."""
    if mask.n_dendrites != layer.n_dendrites:
        raise ShapeError(f"mask covers {mask.n_dendrites} dendrites, layer has {layer.n_dendrites}")
    if mask.activation.kind != layer.activation.kind:
        raise ConsistencyError("mask was packed for a different activation")
    return _backward(mask.derivative(), layer, x, grad_h)


def activation_memory_bits(n_inputs, n_neurons, K, scheme="full", bits_per_value=16, mask_bits=1):
    """Bits of activation storage one layer keeps for the backward pass.

    ``scheme="full"`` stores every dendritic pre-activation plus the neuron
    outputs (only the outputs when ``K == 1``). ``scheme="bitmask"`` stores
    ``mask_bits`` per dendrite plus the neuron outputs. ``n_inputs`` does not
    enter the count; it is accepted so callers can pass a full layer shape.
    """
    if min(n_inputs, n_neurons, K, bits_per_value, mask_bits) < 1:
        raise ValueError("all shape arguments must be positive")
    if scheme == "full":
        values = n_neurons * K + n_neurons if K > 1 else n_neurons
        return values * bits_per_value
    if scheme == "bitmask":
        return n_neurons * K * mask_bits + n_neurons * bits_per_value
    raise ValueError(f"unknown scheme {scheme!r}")
