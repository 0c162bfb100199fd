"""Central finite-difference gradient verification."""

import numpy as np

from ..errors import GradientCheckError, ParameterError
from .functional import softmax_cross_entropy, softmax_cross_entropy_backward


def numerical_gradient(loss_fn, array, h=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn()
        flat[i] = orig - h
        f_minus = loss_fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric):
    """max |a - n| / max(|a|, |n|, 1e-8) over all elements."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom))


def finite_difference_check(loss_fn, arrays, analytic_grads, h=1e-5):
    """Compare analytic gradients with central differences.

    Parameters
    ----------
    loss_fn : callable
        Zero-argument function returning the scalar loss; it must read the
        current contents of ``arrays``.
    arrays : list of ndarray
        Arrays to perturb (modified in place, restored afterwards).
    analytic_grads : list of ndarray
        Analytic gradients, same shapes as ``arrays``.
    h : float
        Step size in [1e-6, 1e-4].

    Returns the maximum relative error over every element of every array.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ParameterError(f"step size h must lie in [1e-6, 1e-4], got {h}")
    worst = 0.0
    for k, (arr, ga) in enumerate(zip(arrays, analytic_grads)):
        if arr.shape != ga.shape:
            raise ParameterError(f"array #{k} shape {arr.shape} != gradient shape {ga.shape}")
        gn = numerical_gradient(loss_fn, arr, h)
        if not np.all(np.isfinite(gn)):
            raise GradientCheckError(f"non-finite numerical gradient for array #{k}")
        worst = max(worst, max_relative_error(ga, gn))
    return worst


def check_model_gradients(model, inputs, labels, h=1e-5, include_inputs=True):
    """Finite-difference check of a model's cross-entropy loss.

    ``model`` must expose ``forward(*inputs)`` returning logits and
    ``backward(dlogits)`` returning a tuple of input gradients.  The model
    should be in training mode with dropout disabled (batch statistics are
    differentiable, random masks are not).

    Returns ``(max_rel_error, per_array_errors)`` keyed by parameter name.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    labels = np.asarray(labels)

    def loss_fn():
        loss, _ = softmax_cross_entropy(model.forward(*inputs), labels)
        return loss

    model.zero_grad()
    _, probs = softmax_cross_entropy(model.forward(*inputs), labels)
    input_grads = model.backward(softmax_cross_entropy_backward(probs, labels))
    named = [(name, p.value, p.grad.copy()) for name, p in model.named_parameters() if p.trainable]
    if include_inputs:
        named += [(f"input{i}", x, g) for i, (x, g) in enumerate(zip(inputs, input_grads))]
    errors = {name: finite_difference_check(loss_fn, [arr], [grad], h) for name, arr, grad in named}
    return max(errors.values()), errors
