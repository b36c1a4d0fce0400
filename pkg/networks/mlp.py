"""
Multilayer-perceptron classifier over a flat parameter vector.

Theta layout, layer by layer in order: the weight matrix W_l of shape
(n_in, n_out) row-major, then the bias b_l of length n_out. Layer l computes
h^l = act(h^{l-1} W_l + b_l) for hidden layers and plain logits for the last
one; the trace records every h^l, logits included.
"""
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ContractViolation, require
from core.tensorcore import check_labels, cross_entropy, matmul, softmax_rows

ACTIVATIONS = ('relu', 'tanh')


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    activation: str = 'relu'

    def __post_init__(self):
        object.__setattr__(self, 'layer_sizes', tuple(int(n) for n in self.layer_sizes))
        require(len(self.layer_sizes) >= 2, 'an MLP needs input and output sizes')
        require(min(self.layer_sizes) >= 1, f"layer sizes must be >= 1: {self.layer_sizes}")
        require(self.activation in ACTIVATIONS, f"unknown activation {self.activation!r}")

    @property
    def num_layers(self):
        """Number of affine layers (L)."""
        return len(self.layer_sizes) - 1

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def num_classes(self):
        return self.layer_sizes[-1]

    @property
    def param_count(self):
        return sum(n_in * n_out + n_out for n_in, n_out in self.shapes())

    def shapes(self):
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def slices(self):
        """Per layer (weight slice, bias slice) into theta."""
        out, offset = [], 0
        for n_in, n_out in self.shapes():
            w = slice(offset, offset + n_in * n_out)
            offset += n_in * n_out
            b = slice(offset, offset + n_out)
            offset += n_out
            out.append((w, b))
        return out


@dataclass(frozen=True)
class ModelParams:
    spec: MlpSpec
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != self.spec.param_count:
            raise ContractViolation(
                f"theta has {theta.size} entries, spec {self.spec.layer_sizes} needs "
                f"{self.spec.param_count}"
            )
        theta.flags.writeable = False
        object.__setattr__(self, 'theta', theta)

    def with_theta(self, theta):
        return ModelParams(self.spec, theta)

    def layers(self):
        """[(W_l, b_l)] views into theta."""
        return unflatten(self.spec, self.theta)


def unflatten(spec, theta):
    """Views of theta as [(weight, bias), ...] per affine layer."""
    return [
        (theta[w].reshape(n_in, n_out), theta[b])
        for (w, b), (n_in, n_out) in zip(spec.slices(), spec.shapes())
    ]


def flatten(layers):
    """Inverse of unflatten: concatenate weights and biases layer by layer."""
    parts = []
    for weight, bias in layers:
        parts.append(np.asarray(weight, dtype=np.float64).reshape(-1))
        parts.append(np.asarray(bias, dtype=np.float64).reshape(-1))
    return np.concatenate(parts)


def require_same_spec(*models):
    specs = {m.spec for m in models}
    if len(specs) > 1:
        raise ContractViolation(f"models do not share a spec: {sorted(s.layer_sizes for s in specs)}")


def init_params(spec, rng):
    """Weights ~ N(0, 1/n_in), biases 0."""
    layers = []
    for index, (n_in, n_out) in enumerate(spec.shapes()):
        draws, _ = rng.spawn('layer', index).normal(n_in * n_out)
        layers.append((draws.reshape(n_in, n_out) / np.sqrt(n_in), np.zeros(n_out)))
    return ModelParams(spec, flatten(layers))


def _activate(spec, z):
    if spec.activation == 'relu':
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(spec, h, upstream):
    """Backprop through the activation given its output h."""
    if spec.activation == 'relu':
        return upstream * (h > 0.0)
    return upstream * (1.0 - h * h)


def forward_with_trace(model, x):
    """Post-activation output of every affine layer; the last entry is the logits."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_size:
        raise ContractViolation(
            f"input has shape {x.shape}, model expects {model.spec.input_size} columns"
        )
    trace, h = [], x
    layers = model.layers()
    for index, (weight, bias) in enumerate(layers):
        z = matmul(h, weight) + bias
        h = z if index == len(layers) - 1 else _activate(model.spec, z)
        trace.append(h)
    return trace


def logits(model, x):
    """Output of the last affine layer."""
    return forward_with_trace(model, x)[-1]


def forward_backward(model, x, labels):
    """Mean cross-entropy, its exact gradient in theta layout, and the hidden trace."""
    trace = forward_with_trace(model, x)
    out = trace[-1]
    labels = check_labels(labels, out.shape[0], out.shape[1])
    batch = len(labels)
    rows = np.arange(batch)

    loss = cross_entropy(out, labels)

    delta = softmax_rows(out)
    delta[rows, labels] -= 1.0
    delta /= batch

    grads = []
    layers = model.layers()
    inputs = [np.asarray(x, dtype=np.float64)] + trace[:-1]
    for index in range(len(layers) - 1, -1, -1):
        weight, _ = layers[index]
        grads.append((matmul(inputs[index].T, delta), delta.sum(axis=0)))
        if index > 0:
            delta = _activation_grad(model.spec, inputs[index], matmul(delta, weight.T))
    grads.reverse()
    return loss, flatten(grads), trace


def loss_and_grad(model, x, labels):
    """Mean cross-entropy and its exact gradient in theta layout."""
    loss, grad, _ = forward_backward(model, x, labels)
    return loss, grad


def predict(model, x):
    """Argmax class per row; np.argmax keeps the lowest index on ties."""
    return np.argmax(logits(model, x), axis=1)


def loss(model, x, labels):
    return cross_entropy(logits(model, x), labels)


class BatchObjective:
    """
    Cross-entropy of one architecture on one fixed batch, as a function of theta.

    This is the oracle the merge search and the diagnostics evaluate: loss(theta),
    loss_and_grad(theta) and trace(theta) all evaluate the same batch.
    """

    def __init__(self, spec, x, labels):
        self.spec = spec
        self.x = np.asarray(x, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)

    def model(self, theta):
        return ModelParams(self.spec, theta)

    def loss(self, theta):
        return loss(self.model(theta), self.x, self.labels)

    def loss_and_grad(self, theta):
        return loss_and_grad(self.model(theta), self.x, self.labels)

    def grad(self, theta):
        return self.loss_and_grad(theta)[1]

    def trace(self, theta):
        return forward_with_trace(self.model(theta), self.x)

    def forward_backward(self, theta):
        return forward_backward(self.model(theta), self.x, self.labels)
