"""
Layers with explicit forward/backward passes.

Each layer caches what it needs during ``forward`` and consumes the cache in
``backward``, so a layer instance may appear only once per forward pass.
Parameter gradients accumulate into ``Parameter.grad``.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DimensionError, StateError
from . import functional as F


class Parameter:
    """A named array plus its gradient.

    Non-trainable parameters (batch-norm running statistics) are saved and
    restored with the model but ignored by optimizers and parameter counts.
    """

    def __init__(self, value, trainable=True):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter(shape={self.value.shape}, trainable={self.trainable})"


class Module:
    """Base class: parameter discovery, train/eval switching, state dicts."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def backward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=""):
        for name, attr in vars(self).items():
            if isinstance(attr, Parameter):
                yield prefix + name, attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(f"{prefix}{name}.")
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self, trainable_only=True):
        return [p for _, p in self.named_parameters() if p.trainable or not trainable_only]

    def modules(self):
        yield self
        for attr in vars(self).values():
            if isinstance(attr, Module):
                yield from attr.modules()
            elif isinstance(attr, (list, tuple)):
                for item in attr:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters(trainable_only=False):
            p.zero_grad()

    def state_dict(self):
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise StateError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.value.shape:
                raise DimensionError(f"{name}: expected shape {p.value.shape}, got {value.shape}")
            p.value[...] = value


def count_parameters(model):
    """Number of trainable scalar parameters."""
    return int(sum(p.size for p in model.parameters()))


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Dense(Module):
    """Fully connected layer y = act(x W + b) acting on the last axis."""

    def __init__(self, in_dim, out_dim, rng, bias=True, activation="none"):
        super().__init__()
        F._check_activation(activation)
        self.in_dim, self.out_dim = in_dim, out_dim
        self.activation = activation
        self.W = Parameter(glorot_uniform(rng, in_dim, out_dim))
        self.b = Parameter(np.zeros(out_dim)) if bias else None
        self._cache = None

    def forward(self, x):
        y = F.dense_forward(x, self.W.value, None if self.b is None else self.b.value, self.activation)
        self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._cache
        dx, dW, db = F.dense_backward(dy, x, self.W.value, y, self.activation, has_bias=self.b is not None)
        self.W.grad += dW
        if self.b is not None:
            self.b.grad += db
        return dx

    def __repr__(self):
        return f"Dense({self.in_dim}, {self.out_dim}, bias={self.b is not None}, activation={self.activation!r})"


class ReLU(Module):
    def forward(self, x):
        self._x = x
        return F.relu_forward(x)

    def backward(self, dy):
        return F.relu_backward(dy, self._x)


class LayerNorm(Module):
    """Layer normalization; ``center=False`` drops the learned shift."""

    def __init__(self, dim, eps=1e-5, center=True):
        super().__init__()
        self.dim, self.eps = dim, eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim)) if center else None

    def forward(self, x):
        beta = self.beta.value if self.beta is not None else np.zeros(self.dim)
        y, self._cache = F.layer_norm_forward(x, self.gamma.value, beta, self.eps)
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = F.layer_norm_backward(dy, self._cache, self.gamma.value)
        self.gamma.grad += dgamma
        if self.beta is not None:
            self.beta.grad += dbeta
        return dx


class BatchNorm(Module):
    """Batch normalization for (B, D) inputs with momentum-0.9 running statistics."""

    def __init__(self, dim, momentum=0.9, eps=1e-5):
        super().__init__()
        self.dim, self.momentum, self.eps = dim, momentum, eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.running_mean = Parameter(np.zeros(dim), trainable=False)
        self.running_var = Parameter(np.ones(dim), trainable=False)

    def forward(self, x):
        y, self._cache = F.batch_norm_forward(
            x, self.gamma.value, self.beta.value,
            self.running_mean.value, self.running_var.value,
            self.training, self.momentum, self.eps,
        )
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = F.batch_norm_backward(dy, self._cache, self.gamma.value)
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        return dx


class Dropout(Module):
    def __init__(self, rate, rng):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x):
        y, self._mask = F.dropout_forward(x, self.rate, self.training, self.rng)
        return y

    def backward(self, dy):
        return F.dropout_backward(dy, self._mask)


class FeedForward(Module):
    """Two dense layers with a ReLU in between."""

    def __init__(self, in_dim, hidden_dim, out_dim, rng):
        super().__init__()
        self.fc1 = Dense(in_dim, hidden_dim, rng, activation="relu")
        self.fc2 = Dense(hidden_dim, out_dim, rng)

    def forward(self, x):
        return self.fc2(self.fc1(x))

    def backward(self, dy):
        return self.fc1.backward(self.fc2.backward(dy))


@dataclass(frozen=True)
class AttentionConfig:
    model_dim: int = 128
    num_heads: int = 2
    head_dim: int = 64

    def __post_init__(self):
        if min(self.model_dim, self.num_heads, self.head_dim) < 1:
            raise ConfigurationError(f"attention dims must be positive: {self}")
        if self.num_heads * self.head_dim != self.model_dim:
            raise ConfigurationError(
                f"num_heads * head_dim = {self.num_heads} * {self.head_dim} != model_dim = {self.model_dim}"
            )


class MultiHeadAttention(Module):
    """Multi-head attention of ``q_in`` over ``kv_in``.

    Self-attention is the ``q_in is kv_in`` case; backward then returns two
    gradients that the caller sums.  The key projection carries no bias: a
    key bias only shifts every score of a query by the same constant, which
    softmax ignores.
    """

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        D = cfg.model_dim
        self.Wq = Parameter(glorot_uniform(rng, D, D))
        self.bq = Parameter(np.zeros(D))
        self.Wk = Parameter(glorot_uniform(rng, D, D))
        self.Wv = Parameter(glorot_uniform(rng, D, D))
        self.bv = Parameter(np.zeros(D))
        self.Wo = Parameter(glorot_uniform(rng, D, D))
        self.bo = Parameter(np.zeros(D))
        self.last_weights = None

    def _split(self, x):
        B, L, _ = x.shape
        return x.reshape(B, L, self.cfg.num_heads, self.cfg.head_dim).transpose(0, 2, 1, 3)

    @staticmethod
    def _merge(x):
        B, H, L, hd = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, L, H * hd)

    def forward(self, q_in, kv_in):
        D = self.cfg.model_dim
        if q_in.ndim != 3 or kv_in.ndim != 3 or q_in.shape[-1] != D or kv_in.shape[-1] != D:
            raise DimensionError(f"attention expects (B, L, {D}) inputs, got {q_in.shape} and {kv_in.shape}")
        if q_in.shape[0] != kv_in.shape[0]:
            raise DimensionError(f"attention batch sizes differ: {q_in.shape} vs {kv_in.shape}")
        Q = self._split(q_in @ self.Wq.value + self.bq.value)
        K = self._split(kv_in @ self.Wk.value)
        V = self._split(kv_in @ self.Wv.value + self.bv.value)
        heads, weights = F.scaled_dot_product_attention(Q, K, V)
        concat = self._merge(heads)
        self._cache = (q_in, kv_in, Q, K, V, weights, concat)
        self.last_weights = weights
        return concat @ self.Wo.value + self.bo.value

    def backward(self, dout):
        q_in, kv_in, Q, K, V, weights, concat = self._cache
        D = self.cfg.model_dim
        self.Wo.grad += concat.reshape(-1, D).T @ dout.reshape(-1, D)
        self.bo.grad += dout.reshape(-1, D).sum(axis=0)
        dheads = self._split(dout @ self.Wo.value.T)
        dQ, dK, dV = F.scaled_dot_product_attention_backward(dheads, Q, K, V, weights)
        dQ, dK, dV = self._merge(dQ), self._merge(dK), self._merge(dV)
        q2, kv2 = q_in.reshape(-1, D), kv_in.reshape(-1, D)
        self.Wq.grad += q2.T @ dQ.reshape(-1, D)
        self.bq.grad += dQ.reshape(-1, D).sum(axis=0)
        self.Wk.grad += kv2.T @ dK.reshape(-1, D)
        self.Wv.grad += kv2.T @ dV.reshape(-1, D)
        self.bv.grad += dV.reshape(-1, D).sum(axis=0)
        dq_in = dQ @ self.Wq.value.T
        dkv_in = dK @ self.Wk.value.T + dV @ self.Wv.value.T
        return dq_in, dkv_in
