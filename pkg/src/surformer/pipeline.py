"""
Glue between the dataset, feature extraction, PCA and the three classifiers.

A :class:`TrainedPipeline` owns every fitted preprocessing step, so it can
map raw inputs (the 10-column feature table and raw embeddings) straight to
class probabilities and can be saved to and restored from a model directory::

    MODELDIR/
        config.json    kind, seed, model/training config, split recipe, scalers
        weights.bin    network weights (neural models)
        forest.json    forest snapshot (random forest)
        pca.bin        PCA model (Surformer)
        history.csv    per-epoch training history (neural models)
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetSplit, stratified_split
from .errors import ConfigurationError, DimensionError, LoadError
from .features import DEFAULT_CONFIG, FEATURE_NAMES, TOP7_ORDER, extract_feature_matrix
from .forest import ForestConfig, fit_forest, load_forest, save_forest
from .metrics import compute_metrics
from .models import build_model
from .nn.io import load_model_weights, save_model_weights
from .pca import fit_pca, load_pca, pca_transform, save_pca
from .training import (read_history_csv, surformer_train_spec, tactile_transformer_train_spec,
                       train_model, write_history_csv)

log = logging.getLogger(__name__)

MODEL_KINDS = ("surformer", "tactile-transformer", "rf")
DISPLAY_NAMES = {
    "surformer": "Surformer v1",
    "tactile-transformer": "Tactile Transformer",
    "rf": "Random Forest",
}
# Multimodal runs use a three-way split; tactile-only baselines a two-way one.
SPLIT_FRACTIONS = {
    "surformer": (0.8, 0.1, 0.1),
    "tactile-transformer": (0.8, 0.2),
    "rf": (0.8, 0.2),
}
TACTILE_COLUMNS = [FEATURE_NAMES.index(n) for n in TOP7_ORDER]


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass
class ExperimentConfig:
    """Everything a ``train`` run needs besides data and seed.

    ``model`` overrides architecture fields, ``train`` overrides the
    model's default :class:`TrainSpec`, ``forest`` overrides
    :class:`ForestConfig`.  ``pca_fit`` is ``"train"`` (default, no
    leakage) or ``"all"``.  ``val_fraction`` is carved out of the training
    part of a two-way split for the tactile transformer's scheduler.
    """
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    forest: dict = field(default_factory=dict)
    pca_k: int = 64
    pca_fit: str = "train"
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.pca_fit not in ("train", "all"):
            raise ConfigurationError(f"pca_fit must be 'train' or 'all', got {self.pca_fit!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON config ({exc})") from exc

    def to_dict(self):
        return asdict(self)


def dataset_features(dataset, config=DEFAULT_CONFIG):
    """(N, 10) feature table in ``FEATURE_NAMES`` column order."""
    return extract_feature_matrix(dataset.tactile_images(), config)


def make_split(kind, labels, seed, val_fraction=0.1):
    """Index split for ``kind``.

    The tactile transformer needs a validation set for its scheduler; it is
    a stratified ``val_fraction`` slice of the training part.  The forest
    keeps the whole training part and has no validation set.
    """
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    labels = np.asarray(labels)
    fractions = SPLIT_FRACTIONS[kind]
    split = stratified_split(labels, fractions, seed)
    if len(fractions) == 3 or kind == "rf":
        return split
    inner = stratified_split(labels[split.train], (1.0 - val_fraction, val_fraction), seed + 1)
    return DatasetSplit(train=split.train[inner.train], val=split.train[inner.test], test=split.test)


@dataclass
class TrainedPipeline:
    kind: str
    model: object
    seed: int
    experiment: ExperimentConfig
    tactile_scaler: Standardizer = None
    pca: object = None
    vision_scaler: Standardizer = None
    history: list = field(default_factory=list)
    train_spec: dict = None

    @property
    def name(self):
        return DISPLAY_NAMES[self.kind]

    def split(self, labels):
        return make_split(self.kind, labels, self.seed, self.experiment.val_fraction)

    def prepare(self, features, embeddings=None):
        """Model-ready input tuple from the raw 10-column table (and embeddings)."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != len(FEATURE_NAMES):
            raise DimensionError(f"expected an (N, {len(FEATURE_NAMES)}) feature table, got {features.shape}")
        tactile = features[:, TACTILE_COLUMNS]
        if self.kind == "rf":
            return (tactile,)
        tactile = self.tactile_scaler.transform(tactile)
        if self.kind == "tactile-transformer":
            return (tactile,)
        if embeddings is None:
            raise DimensionError("the multimodal model needs visual embeddings")
        vision = self.vision_scaler.transform(pca_transform(self.pca, embeddings))
        return (tactile, vision)

    def predict_prepared(self, *inputs):
        if self.kind == "rf":
            return self.model.predict_proba(inputs[0])
        return self.model.predict_proba(*inputs)

    def predict_proba(self, features, embeddings=None):
        return self.predict_prepared(*self.prepare(features, embeddings))

    def predict(self, features, embeddings=None):
        return np.argmax(self.predict_proba(features, embeddings), axis=1)

    def parameter_count(self):
        """Trainable parameters, or total tree nodes for the forest."""
        if self.kind == "rf":
            return self.model.count_nodes()
        return self.model.count_parameters()

    def save(self, directory):
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        cfg = {
            "format": "SFV1-MODEL1",
            "kind": self.kind,
            "seed": self.seed,
            "experiment": self.experiment.to_dict(),
            "train_spec": self.train_spec,
            "tactile_scaler": self.tactile_scaler.to_dict() if self.tactile_scaler else None,
            "vision_scaler": self.vision_scaler.to_dict() if self.vision_scaler else None,
        }
        (root / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        if self.kind == "rf":
            save_forest(root / "forest.json", self.model)
        else:
            save_model_weights(root / "weights.bin", self.model, meta={"kind": self.kind})
            write_history_csv(root / "history.csv", self.history)
        if self.pca is not None:
            save_pca(root / "pca.bin", self.pca)
        return root

    @classmethod
    def load(cls, directory):
        root = Path(directory)
        try:
            cfg = json.loads((root / "config.json").read_text())
        except (OSError, ValueError) as exc:
            raise LoadError(f"{root}: cannot read config.json: {exc}") from exc
        if cfg.get("format") != "SFV1-MODEL1":
            raise LoadError(f"{root}: unsupported model directory format {cfg.get('format')!r}")
        kind = cfg["kind"]
        experiment = ExperimentConfig.from_dict(cfg["experiment"])
        if kind == "rf":
            model = load_forest(root / "forest.json")
            history = []
        else:
            model = build_model(kind, experiment.model, seed=cfg["seed"])
            load_model_weights(root / "weights.bin", model)
            model.eval()
            history = read_history_csv(root / "history.csv")
        scaler = lambda key: Standardizer.from_dict(cfg[key]) if cfg.get(key) else None
        pca = load_pca(root / "pca.bin") if (root / "pca.bin").exists() else None
        return cls(kind, model, cfg["seed"], experiment, scaler("tactile_scaler"), pca,
                   scaler("vision_scaler"), history, cfg.get("train_spec"))


def train_pipeline(kind, features, labels, embeddings=None, experiment=None, seed=0):
    """Fit preprocessing and one classifier on the training part of the split.

    Returns ``(pipeline, split, train_result)``; ``train_result`` is None
    for the forest.
    """
    # Private copy: the resolved model config is written back into it.
    experiment = ExperimentConfig.from_dict(copy.deepcopy((experiment or ExperimentConfig()).to_dict()))
    labels = np.asarray(labels, dtype=np.int64)
    split = make_split(kind, labels, seed, experiment.val_fraction)
    tactile = np.asarray(features, dtype=np.float64)[:, TACTILE_COLUMNS]

    if kind == "rf":
        cfg = ForestConfig(**{"seed": seed, **experiment.forest})
        forest = fit_forest(tactile[split.train], labels[split.train], cfg, n_classes=5,
                            feature_names=TOP7_ORDER)
        return TrainedPipeline(kind, forest, seed, experiment), split, None

    t_scaler = Standardizer.fit(tactile[split.train])
    pipe = TrainedPipeline(kind, None, seed, experiment, tactile_scaler=t_scaler)
    if kind == "surformer":
        if embeddings is None:
            raise DimensionError("the multimodal model needs visual embeddings")
        embeddings = np.asarray(embeddings, dtype=np.float64)
        fit_rows = split.train if experiment.pca_fit == "train" else np.arange(len(labels))
        pipe.pca = fit_pca(embeddings[fit_rows], experiment.pca_k)
        pipe.vision_scaler = Standardizer.fit(pca_transform(pipe.pca, embeddings[split.train]))
        model_cfg = {"vision": {"input_dim": experiment.pca_k, "hidden_dims": [96]}, **experiment.model}
        experiment.model = model_cfg
        spec = surformer_train_spec(**{"seed": seed, **experiment.train})
    else:
        spec = tactile_transformer_train_spec(**{"seed": seed, **experiment.train})
    pipe.model = build_model(kind, experiment.model, seed=seed)
    pipe.train_spec = spec.to_dict()

    inputs = pipe.prepare(features, embeddings)
    take = lambda rows: (tuple(x[rows] for x in inputs), labels[rows])
    log.info("training %s on %d samples (val %d, test %d)", kind, len(split.train), len(split.val),
             len(split.test))
    result = train_model(pipe.model, take(split.train), take(split.val), spec)
    pipe.history = result.history
    return pipe, split, result


def evaluate_pipeline(pipe, features, labels, embeddings=None, split="test"):
    """Metrics on one part (``train``/``val``/``test``) of the pipeline's own split."""
    labels = np.asarray(labels, dtype=np.int64)
    rows = getattr(pipe.split(labels), split)
    if len(rows) == 0:
        raise ConfigurationError(f"split {split!r} is empty for model kind {pipe.kind!r}")
    emb = None if embeddings is None else np.asarray(embeddings)[rows]
    preds = pipe.predict(np.asarray(features)[rows], emb)
    return compute_metrics(preds, labels[rows], n_classes=5, model=pipe.name)
