"""Small float64 feed-forward network core with exact backpropagation.

Every layer exposes ``forward(x, train, rng) -> (y, cache)`` and
``backward(cache, dy) -> (dx, grads)``, with ``grads`` keyed like ``params``.
Layers never keep per-call state other than batch-norm running statistics,
so a cache can be replayed for gradient checks.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalError

DEFAULT_TOWER = (256, 1024, 512, 64)


class Dense:
    def __init__(self, n_in, n_out, rng=None, name="dense"):
        self.name = name
        if rng is None:
            self.W = np.zeros((n_out, n_in))
        else:
            # He-style uniform fan-in init: Var(W) = 2 / n_in
            limit = np.sqrt(6.0 / n_in)
            self.W = rng.uniform(-limit, limit, size=(n_out, n_in))
        self.b = np.zeros(n_out)

    @property
    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.W.shape[1]:
            raise DimensionError(f"{self.name}: expected width {self.W.shape[1]}, got {x.shape[1]}")
        return x @ self.W.T + self.b, x

    def backward(self, x, dy):
        return dy @ self.W, {"W": dy.T @ x, "b": dy.sum(axis=0)}


class BatchNorm:
    def __init__(self, width, momentum=0.9, epsilon=1e-5, name="bn"):
        self.name = name
        self.gain = np.ones(width)
        self.bias = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.epsilon = epsilon

    @property
    def params(self):
        return {"gain": self.gain, "bias": self.bias}

    @property
    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train=False, rng=None):
        if not train:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
            return self.gain * xhat + self.bias, None
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mu) * inv
        n = x.shape[0]
        unbiased = var * n / (n - 1) if n > 1 else var
        self.running_mean *= self.momentum
        self.running_mean += (1.0 - self.momentum) * mu
        self.running_var *= self.momentum
        self.running_var += (1.0 - self.momentum) * unbiased
        return self.gain * xhat + self.bias, (xhat, inv)

    def backward(self, cache, dy):
        if cache is None:
            raise DimensionError(f"{self.name}: backward needs a train-mode cache")
        xhat, inv = cache
        dgain = np.sum(dy * xhat, axis=0)
        dbias = dy.sum(axis=0)
        dxhat = dy * self.gain
        dx = inv * (dxhat - dxhat.mean(axis=0) - xhat * np.mean(dxhat * xhat, axis=0))
        return dx, {"gain": dgain, "bias": dbias}


class ReLU:
    params = {}

    def __init__(self, name="relu"):
        self.name = name

    def forward(self, x, train=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, dy):
        return dy * mask, {}


@dataclass(frozen=True)
class DropoutSpec:
    keep_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must lie in (0, 1], got {self.keep_prob}")


class Dropout:
    """Inverted dropout: kept units are scaled by ``1 / keep_prob`` in training."""

    params = {}

    def __init__(self, keep_prob=0.5, name="dropout"):
        self.keep_prob = DropoutSpec(keep_prob).keep_prob
        self.name = name

    def forward(self, x, train=False, rng=None):
        if not train or self.keep_prob == 1.0:
            return x, None
        scale = (rng.random(x.shape) < self.keep_prob) / self.keep_prob
        return x * scale, scale

    def backward(self, scale, dy):
        return (dy if scale is None else dy * scale), {}


@dataclass(frozen=True)
class TowerConfig:
    sizes: tuple = DEFAULT_TOWER
    keep_prob: float = 0.5
    activation: str = "relu"
    batch_norm: bool = True

    def __post_init__(self):
        if not self.sizes or any(int(s) < 1 for s in self.sizes):
            raise ValueError(f"tower sizes must be positive, got {self.sizes}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        DropoutSpec(self.keep_prob)


class Sequential:
    def __init__(self, layers, name="net"):
        self.layers = list(layers)
        self.name = name

    def forward(self, x, train=False, rng=None):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train, rng)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite activation in {self.name}/{layer.name}")
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy):
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dy, grads[i] = self.layers[i].backward(caches[i], dy)
        return dy, grads

    def parameters(self):
        """``(layer_index, name, array)`` triples in a fixed order."""
        return [(i, k, v) for i, layer in enumerate(self.layers) for k, v in layer.params.items()]

    def state(self, prefix):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in {**layer.params, **getattr(layer, "buffers", {})}.items():
                out[f"{prefix}.{i}.{k}"] = v
        return out

    def load_state(self, prefix, state):
        for i, layer in enumerate(self.layers):
            for k, v in {**layer.params, **getattr(layer, "buffers", {})}.items():
                v[...] = state[f"{prefix}.{i}.{k}"]


def build_tower(n_in, config: TowerConfig, rng, name="tower"):
    """Dense -> BatchNorm -> ReLU -> Dropout for every hidden width."""
    layers = []
    width = n_in
    for j, size in enumerate(config.sizes):
        layers.append(Dense(width, size, rng, name=f"dense{j}"))
        if config.batch_norm:
            layers.append(BatchNorm(size, name=f"bn{j}"))
        layers.append(ReLU(name=f"relu{j}"))
        if config.keep_prob < 1.0:
            layers.append(Dropout(config.keep_prob, name=f"dropout{j}"))
        width = size
    return Sequential(layers, name=name)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient ``(softmax - onehot) / batch``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    logp = z - log_norm[:, None]
    loss = -float(np.mean(logp[np.arange(n), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


@dataclass
class Adam:
    """Adam with bias correction: ``theta -= lr * m_hat / (sqrt(v_hat) + eps)``."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        """Update ``params`` (list of arrays) in place from matching ``grads``."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params):
            raise DimensionError("optimizer state does not match the parameter list")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
