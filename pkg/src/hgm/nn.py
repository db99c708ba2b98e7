"""Small dense networks with hand-written reverse-mode gradients.

Only multilayer perceptrons are supported. Each net caches the activations of
its most recent forward pass so that :meth:`MlpNet.backward` can return exact
parameter gradients together with the gradient at the input, which the
actor-critic losses need to differentiate through a critic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NoForwardCache

ACTIVATIONS = ("tanh", "relu")
HEADS = ("linear", "gaussian")


class MlpNet:
    """Fully connected network, weights stored as ``(fan_in, fan_out)``.

    With ``head="gaussian"`` the final layer emits ``2 * k`` numbers, read as
    a mean and a raw log-std; the log-std is squashed smoothly into
    ``log_std_range`` so it stays differentiable everywhere.
    """

    def __init__(self, weights, biases, activation="tanh", head="linear", log_std_range=(-5.0, 2.0)):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if len(weights) != len(biases) or not weights:
            raise DimensionMismatch("weights and biases must be non-empty and paired")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionMismatch(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionMismatch(f"layer {i} input {w.shape[0]} != previous output {weights[i - 1].shape[1]}")
        if head == "gaussian" and weights[-1].shape[1] % 2:
            raise DimensionMismatch("gaussian head needs an even output width")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = activation
        self.head = head
        self.log_std_range = (float(log_std_range[0]), float(log_std_range[1]))
        self._cache = None

    @classmethod
    def create(cls, sizes, rng, activation="tanh", head="linear", log_std_range=(-5.0, 2.0), out_scale=1.0):
        """Glorot-uniform initialisation; the output layer is scaled by ``out_scale``."""
        weights, biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            if i == len(sizes) - 2:
                w *= out_scale
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls(weights, biases, activation=activation, head=head, log_std_range=log_std_range)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        n = self.weights[-1].shape[1]
        return n // 2 if self.head == "gaussian" else n

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def num_params(self):
        return int(sum(p.size for p in self.params()))

    def copy(self):
        return MlpNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            activation=self.activation,
            head=self.head,
            log_std_range=self.log_std_range,
        )

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise DimensionMismatch(f"expected input width {self.in_dim}, got shape {x.shape}")
        inputs, pre = [], []
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            h = z if i == n_layers - 1 else self._act(z)
        out = h
        if self.head == "gaussian":
            k = out.shape[1] // 2
            lo, hi = self.log_std_range
            squash = np.tanh(out[:, k:])
            out = np.concatenate([out[:, :k], lo + 0.5 * (hi - lo) * (squash + 1.0)], axis=1)
            self._cache = (single, inputs, pre, squash)
        else:
            self._cache = (single, inputs, pre, None)
        return out[0] if single else out

    __call__ = forward

    def backward(self, grad_out):
        """Return ``(param_grads, input_grad)`` for the cached forward pass.

        ``param_grads`` follows the order of :meth:`params`. The cache is kept,
        so several output gradients may be pushed through one forward pass.
        """
        if self._cache is None:
            raise NoForwardCache("backward called before forward")
        single, inputs, pre, squash = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        g = g[None, :] if single else g
        expected = (inputs[0].shape[0], self.weights[-1].shape[1])
        if g.shape != expected:
            raise DimensionMismatch(f"output gradient shape {g.shape} != {expected}")
        if squash is not None:
            k = g.shape[1] // 2
            lo, hi = self.log_std_range
            g = np.concatenate([g[:, :k], g[:, k:] * 0.5 * (hi - lo) * (1.0 - squash**2)], axis=1)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i:
                if self.activation == "tanh":
                    g = g * (1.0 - inputs[i] ** 2)
                else:
                    g = g * (pre[i - 1] > 0.0)
        return grads, (g[0] if single else g)

    def to_tensors(self, prefix=""):
        tensors = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            tensors[f"{prefix}w{i}"] = w
            tensors[f"{prefix}b{i}"] = b
        return tensors

    def meta(self):
        return {"activation": self.activation, "head": self.head, "log_std_range": list(self.log_std_range)}

    @classmethod
    def from_tensors(cls, tensors, meta, prefix=""):
        weights, biases = [], []
        i = 0
        while f"{prefix}w{i}" in tensors:
            weights.append(np.array(tensors[f"{prefix}w{i}"], dtype=np.float64))
            biases.append(np.array(tensors[f"{prefix}b{i}"], dtype=np.float64))
            i += 1
        return cls(weights, biases, activation=meta["activation"], head=meta["head"],
                   log_std_range=tuple(meta["log_std_range"]))


def forward(net, x):
    return net.forward(x)


def backward(net, grad_out):
    return net.backward(grad_out)


def add_grads(a, b):
    return [x + y for x, y in zip(a, b)]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatch("params, grads and optimiser state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionMismatch(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def soft_update(target, source, tau):
    """Polyak averaging ``target <- (1 - tau) * target + tau * source`` in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    tp, sp = target.params(), source.params()
    if [p.shape for p in tp] != [p.shape for p in sp]:
        raise DimensionMismatch("target and source architectures differ")
    for t, s in zip(tp, sp):
        t *= 1.0 - tau
        t += tau * s
    return target


def param_digest(net):
    """Stable hash of a network's parameters, used to prove which net was updated."""
    import hashlib

    h = hashlib.sha256()
    for p in net.params():
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()
