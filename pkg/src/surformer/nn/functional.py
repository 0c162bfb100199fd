"""
Stateless forward/backward kernels.

Every forward function returns whatever its matching backward needs; the
layer classes in :mod:`surformer.nn.layers` hold the caches.  All kernels
work on arrays with arbitrary leading axes unless stated otherwise.
"""

import numpy as np

from ..errors import (
    BatchTooSmallError,
    DimensionError,
    EmptyInputError,
    LabelError,
    ParameterError,
)

ACTIVATIONS = ("none", "relu")


def _check_activation(activation):
    if activation not in ACTIVATIONS:
        raise ParameterError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


def dense_forward(x, W, b=None, activation="none"):
    """y = act(x @ W + b) for x of shape (..., in) and W of shape (in, out)."""
    _check_activation(activation)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"dense: input shape {x.shape} does not conform to weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError(f"dense: bias shape {b.shape} does not conform to weight shape {W.shape}")
    y = x @ W
    if b is not None:
        y = y + b
    if activation == "relu":
        y = np.maximum(y, 0.0)
    return y


def dense_backward(dy, x, W, y, activation="none", has_bias=True):
    """Returns (dx, dW, db); db is None when ``has_bias`` is false."""
    if activation == "relu":
        dy = dy * (y > 0)
    x2 = x.reshape(-1, W.shape[0])
    dy2 = dy.reshape(-1, W.shape[1])
    dW = x2.T @ dy2
    db = dy2.sum(axis=0) if has_bias else None
    dx = dy @ W.T
    return dx, dW, db


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    return dy * (x > 0)


def layer_norm_forward(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis (population variance), then scale and shift."""
    if x.shape[-1] == 0:
        raise EmptyInputError("layer_norm: normalized dimension is empty")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(f"layer_norm: input shape {x.shape} vs gamma {gamma.shape} / beta {beta.shape}")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * gamma + beta, (xhat, inv_std)


def layer_norm_backward(dy, cache, gamma):
    xhat, inv_std = cache
    D = xhat.shape[-1]
    dgamma = (dy * xhat).reshape(-1, D).sum(axis=0)
    dbeta = dy.reshape(-1, D).sum(axis=0)
    dxhat = dy * gamma
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def batch_norm_forward(x, gamma, beta, running_mean, running_var, training,
                       momentum=0.9, eps=1e-5):
    """Batch normalization over axis 0 of a (B, D) array.

    In training mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch_stat``.
    """
    if x.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise DimensionError(f"batch_norm: input shape {x.shape} vs gamma {gamma.shape}")
    if training:
        if x.shape[0] < 2:
            raise BatchTooSmallError(f"batch_norm needs at least 2 samples in training mode, got {x.shape[0]}")
        mu = x.mean(axis=0)
        var = ((x - mu) ** 2).mean(axis=0)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * gamma + beta, (xhat, inv_std, training)


def batch_norm_backward(dy, cache, gamma):
    xhat, inv_std, training = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if not training:
        return dxhat * inv_std, dgamma, dbeta
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=0)
        - xhat * (dxhat * xhat).mean(axis=0)
    )
    return dx, dgamma, dbeta


def dropout_forward(x, rate, training, rng):
    """Inverted dropout. Returns (y, mask); mask is None when nothing is dropped."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def scaled_dot_product_attention(Q, K, V):
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes.

    Returns ``(out, weights)`` with weights of shape (..., Lq, Lk).
    """
    if Q.shape[-1] != K.shape[-1]:
        raise DimensionError(f"attention: query shape {Q.shape} and key shape {K.shape} differ in last dim")
    if K.shape[-2] != V.shape[-2]:
        raise DimensionError(f"attention: key shape {K.shape} and value shape {V.shape} differ in length")
    scale = 1.0 / np.sqrt(Q.shape[-1])
    scores = (Q @ np.swapaxes(K, -1, -2)) * scale
    weights = softmax(scores, axis=-1)
    return weights @ V, weights


def scaled_dot_product_attention_backward(dout, Q, K, V, weights):
    scale = 1.0 / np.sqrt(Q.shape[-1])
    dV = np.swapaxes(weights, -1, -2) @ dout
    dW = dout @ np.swapaxes(V, -1, -2)
    dscores = weights * (dW - (dW * weights).sum(axis=-1, keepdims=True))
    dQ = (dscores @ K) * scale
    dK = (np.swapaxes(dscores, -1, -2) @ Q) * scale
    return dQ, dK, dV


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row-softmax(logits).

    Returns ``(loss, probs)``.  The max-shift keeps logits of magnitude
    1e4 finite.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross-entropy: logits shape {logits.shape} vs labels shape {labels.shape}")
    C = logits.shape[1]
    bad = np.flatnonzero((labels < 0) | (labels >= C))
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"label {int(labels[i])} at index {i} outside [0, {C})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(len(labels)), labels].mean()
    return float(loss), np.exp(log_probs)


def softmax_cross_entropy_backward(probs, labels):
    """d(mean NLL)/d(logits) = (probs - onehot) / B."""
    B = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(B), labels] -= 1.0
    return grad / B
