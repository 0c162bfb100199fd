"""Adam/AdamW, reduce-on-plateau scheduling and early stopping."""

import numpy as np

from ..errors import ConfigurationError, NonFiniteGradientError


class Adam:
    """Bias-corrected Adam.

    With ``decoupled=True`` this is AdamW: each step first shrinks the value
    by ``lr * weight_decay * value`` and then applies the Adam delta.  With
    ``decoupled=False`` a nonzero weight decay is added to the gradient as
    an L2 term.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0, decoupled=False):
        if lr < 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigurationError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.value) for p in self.params]
        self.second_moment = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        # Validate everything before touching any state so a bad step is a no-op.
        for i, p in enumerate(self.params):
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradientError(f"non-finite gradient in parameter #{i} of shape {p.shape}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            g = p.grad
            if self.weight_decay and not self.decoupled:
                g = g + self.weight_decay * p.value
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay and self.decoupled:
                p.value -= self.lr * self.weight_decay * p.value
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def AdamW(params, lr=1e-3, weight_decay=0.01, **kwargs):
    return Adam(params, lr=lr, weight_decay=weight_decay, decoupled=True, **kwargs)


def _improved(mode, value, best):
    return value < best if mode == "min" else value > best


class PlateauScheduler:
    """Halve (by ``factor``) the learning rate after ``patience`` epochs without
    strict improvement of the monitored metric.

    ``mode`` is ``"min"`` for losses and ``"max"`` for accuracies.  If an
    optimizer is attached its ``lr`` is kept in sync.
    """

    def __init__(self, lr, patience=8, factor=0.5, min_lr=0.0, mode="min", optimizer=None):
        if not 0.0 < factor < 1.0:
            raise ConfigurationError(f"factor must lie in (0, 1), got {factor}")
        if mode not in ("min", "max"):
            raise ConfigurationError(f"mode must be 'min' or 'max', got {mode!r}")
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.mode = mode
        self.best = np.inf if mode == "min" else -np.inf
        self.wait = 0
        self.optimizer = optimizer
        if optimizer is not None:
            optimizer.lr = self.lr

    def step(self, metric):
        if _improved(self.mode, metric, self.best):
            self.best = metric
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                # The floor limits reductions; it never raises the rate.
                self.lr = min(self.lr, max(self.lr * self.factor, self.min_lr))
                self.wait = 0
        if self.optimizer is not None:
            self.optimizer.lr = self.lr
        return self.lr


class EarlyStopping:
    """Stop after ``patience`` epochs without strict improvement.

    On every improvement the full model state (including non-trainable
    statistics) is snapshotted; ``restore`` writes it back.
    """

    def __init__(self, patience=15, mode="max"):
        if mode not in ("min", "max"):
            raise ConfigurationError(f"mode must be 'min' or 'max', got {mode!r}")
        self.patience = patience
        self.mode = mode
        self.best_metric = np.inf if mode == "min" else -np.inf
        self.best_epoch = None
        self.best_weights = None
        self.wait = 0
        self.epoch = 0
        self.stopped = False

    def update(self, metric, model):
        """Record one epoch; returns True when training should stop."""
        self.epoch += 1
        if _improved(self.mode, metric, self.best_metric):
            self.best_metric = metric
            self.best_epoch = self.epoch
            self.best_weights = model.state_dict()
            self.wait = 0
        else:
            self.wait += 1
        self.stopped = self.wait >= self.patience
        return self.stopped

    def restore(self, model):
        if self.best_weights is not None:
            model.load_state_dict(self.best_weights)
