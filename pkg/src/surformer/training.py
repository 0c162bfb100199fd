"""Mini-batch training loop with plateau scheduling and early stopping."""

import csv
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .nn.functional import softmax_cross_entropy, softmax_cross_entropy_backward
from .nn.optim import Adam, EarlyStopping, PlateauScheduler

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr")


@dataclass
class TrainSpec:
    optimizer: str = "adam"
    lr: float = 5e-6
    epochs: int = 100
    batch_size: int = 32
    weight_decay: float = 0.0
    plateau_patience: int = 8
    plateau_factor: float = 0.5
    plateau_min_lr: float = 1e-7
    plateau_monitor: str = "val_loss"
    early_stop_patience: int = 15  # 0 disables early stopping
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "adamw"):
            raise ConfigurationError(f"optimizer must be 'adam' or 'adamw', got {self.optimizer!r}")
        if self.plateau_monitor not in ("val_loss", "val_acc"):
            raise ConfigurationError(f"unknown plateau monitor {self.plateau_monitor!r}")
        if self.epochs < 0 or self.batch_size < 2:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 2")

    def to_dict(self):
        return asdict(self)


def surformer_train_spec(**overrides):
    return TrainSpec(**overrides)


def tactile_transformer_train_spec(**overrides):
    base = dict(optimizer="adamw", lr=1e-3, epochs=150, batch_size=64, weight_decay=0.01,
                plateau_patience=10, plateau_factor=0.5, plateau_min_lr=0.0, early_stop_patience=0)
    base.update(overrides)
    return TrainSpec(**base)


def evaluate_loss_acc(model, inputs, labels, batch_size=512):
    probs = model.predict_proba(*inputs, batch_size=batch_size)
    eps = np.finfo(np.float64).tiny
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(len(labels)), labels], eps))))
    acc = float(np.mean(probs.argmax(axis=1) == labels))
    return loss, acc


@dataclass
class TrainResult:
    model: object
    history: list
    best_epoch: int = None
    stopped_early: bool = False


def train_model(model, train, val, spec):
    """Train ``model`` in place.

    ``train`` and ``val`` are ``(inputs, labels)`` pairs where ``inputs`` is a
    tuple of arrays matching ``model.forward``.  Returns a :class:`TrainResult`
    whose history has one dict per epoch with the keys in ``HISTORY_FIELDS``.
    When early stopping is enabled the best validation-accuracy weights are
    restored before returning.
    """
    x_train, y_train = train
    x_val, y_val = val
    y_train = np.asarray(y_train)
    y_val = np.asarray(y_val)
    n = len(y_train)
    opt = Adam(model.parameters(), lr=spec.lr, weight_decay=spec.weight_decay,
               decoupled=spec.optimizer == "adamw")
    mode = "min" if spec.plateau_monitor == "val_loss" else "max"
    sched = PlateauScheduler(spec.lr, spec.plateau_patience, spec.plateau_factor,
                             spec.plateau_min_lr, mode, optimizer=opt)
    stopper = EarlyStopping(spec.early_stop_patience, "max") if spec.early_stop_patience > 0 else None
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7]))
    history = []
    for epoch in range(1, spec.epochs + 1):
        model.train()
        order = shuffle_rng.permutation(n)
        lr_used = opt.lr
        loss_sum, correct, seen = 0.0, 0, 0
        for b, start in enumerate(range(0, n, spec.batch_size)):
            idx = order[start:start + spec.batch_size]
            if len(idx) < 2:
                # Batch norm cannot normalize a single sample.
                continue
            xb = tuple(x[idx] for x in x_train)
            yb = y_train[idx]
            opt.zero_grad()
            logits = model.forward(*xb)
            loss, probs = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            model.backward(softmax_cross_entropy_backward(probs, yb))
            opt.step()
            loss_sum += loss * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == yb))
            seen += len(idx)
        val_loss, val_acc = evaluate_loss_acc(model, x_val, y_val)
        record = {
            "epoch": epoch,
            "train_loss": loss_sum / max(seen, 1),
            "train_acc": correct / max(seen, 1),
            "val_loss": val_loss,
            "val_acc": val_acc,
            "lr": lr_used,
        }
        history.append(record)
        log.info("epoch %d train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f lr %.2e",
                 epoch, record["train_loss"], record["train_acc"], val_loss, val_acc, lr_used)
        sched.step(val_loss if mode == "min" else val_acc)
        if stopper is not None and stopper.update(val_acc, model):
            log.info("early stop at epoch %d (best epoch %d)", epoch, stopper.best_epoch)
            break
    model.eval()
    if stopper is not None:
        stopper.restore(model)
        return TrainResult(model, history, stopper.best_epoch, stopper.stopped)
    return TrainResult(model, history)


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for row in history:
            w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in HISTORY_FIELDS})


def read_history_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(r[k]) if k == "epoch" else float(r[k])) for k in HISTORY_FIELDS} for r in rows]
