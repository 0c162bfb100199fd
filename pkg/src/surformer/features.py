"""
Engineered tactile features from a grayscale contact image.

Ten scalar features in two groups (texture and pressure).  Intensity is
treated as a pressure proxy.  Seven of them, in the fixed order of
``TOP7_ORDER``, form the tactile input vector of every model.
"""

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import InputTooSmallError, InsufficientDataError

TEXTURE_FEATURES = ("roughness", "gradient_magnitude", "contrast", "uniformity", "edge_density")
PRESSURE_FEATURES = ("avg_pressure", "max_pressure", "contact_area", "pressure_std", "center_deviation")

TOP7_ORDER = (
    "roughness",
    "gradient_magnitude",
    "contrast",
    "pressure_std",
    "max_pressure",
    "center_deviation",
    "uniformity",
)
# Column order of the feature table: the top-7 first, then the three dropped ones.
FEATURE_NAMES = TOP7_ORDER + ("edge_density", "avg_pressure", "contact_area")

# Largest Sobel magnitude a [0, 1] image can produce: gx = 4, gy = 2 at a
# corner-shaped 3x3 patch, i.e. sqrt(20).
SOBEL_MAX = float(np.sqrt(20.0))
MIN_SIDE = 8


@dataclass(frozen=True)
class FeatureConfig:
    hist_bins: int = 32
    tile: int = 7
    edge_threshold: float = 0.1
    contact_k: float = 0.5
    max_percentile: float = 99.0


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True)
class TextureFeatures:
    roughness: float
    gradient_magnitude: float
    contrast: float
    uniformity: float
    edge_density: float


@dataclass(frozen=True)
class PressureFeatures:
    avg_pressure: float
    max_pressure: float
    contact_area: float
    pressure_std: float
    center_deviation: float


def _validate(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.shape[0] < MIN_SIDE or img.shape[1] < MIN_SIDE:
        raise InputTooSmallError(f"image {img.shape} smaller than {MIN_SIDE}x{MIN_SIDE}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("pixel intensities must lie in [0, 1]")
    return img


def _order_free_stats(img):
    """Mean and population std from sorted pixels, so any spatial
    permutation of the image gives bit-identical results."""
    flat = np.sort(img, axis=None)
    if flat[0] == flat[-1]:
        # Summation rounding would otherwise leave a ~1e-17 std on flat images.
        return float(flat[0]), 0.0
    mean = float(flat.mean())
    return mean, float(np.sqrt(np.mean((flat - mean) ** 2)))


def sobel_magnitude(img):
    """Normalized 3x3 Sobel magnitude over interior pixels, shape (H-2, W-2), values in [0, 1]."""
    p = img
    gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    return np.hypot(gx, gy) / SOBEL_MAX


def tile_contrast(img, tile=7):
    """Mean of the population std over non-overlapping tile x tile blocks.

    Partial blocks at the right and bottom edges are ignored; an image
    smaller than one tile counts as a single block.
    """
    H, W = img.shape
    nr, nc = H // tile, W // tile
    if nr == 0 or nc == 0:
        return _order_free_stats(img)[1]
    blocks = img[:nr * tile, :nc * tile].reshape(nr, tile, nc, tile)
    flat = blocks.max(axis=(1, 3)) == blocks.min(axis=(1, 3))
    return float(np.where(flat, 0.0, blocks.std(axis=(1, 3))).mean())


def histogram_uniformity(img, bins=32):
    counts, _ = np.histogram(img, bins=bins, range=(0.0, 1.0))
    p = counts / img.size
    return float(np.sum(p * p))


def extract_texture_features(img, config=DEFAULT_CONFIG):
    img = _validate(img)
    mag = sobel_magnitude(img)
    return TextureFeatures(
        roughness=_order_free_stats(img)[1],
        gradient_magnitude=float(mag.mean()),
        contrast=tile_contrast(img, config.tile),
        uniformity=histogram_uniformity(img, config.hist_bins),
        edge_density=float(np.mean(mag > config.edge_threshold)),
    )


def extract_pressure_features(img, config=DEFAULT_CONFIG):
    """Pressure/contact statistics.

    The contact threshold is mean + k*std; a constant image has no contact.
    The centroid offset is normalized by the center-to-corner pixel distance.
    max_pressure is the upper percentile, raised to the mean if a sparse
    bright spot leaves the percentile below it.
    """
    img = _validate(img)
    H, W = img.shape
    mean, std = _order_free_stats(img)
    peak = max(float(np.percentile(img, config.max_percentile)), mean)

    if std > 0.0:
        contact = img > mean + config.contact_k * std
        contact_area = float(contact.mean())
        pressure_std = float(img[contact].std()) if contact.any() else 0.0
    else:
        contact_area = 0.0
        pressure_std = 0.0

    total = float(img.sum())
    if total > 0.0:
        rows = np.arange(H, dtype=np.float64)
        cols = np.arange(W, dtype=np.float64)
        r_c = float(img.sum(axis=1) @ rows) / total
        c_c = float(img.sum(axis=0) @ cols) / total
        half_diag = 0.5 * np.hypot(H - 1, W - 1)
        center_deviation = float(np.hypot(r_c - (H - 1) / 2, c_c - (W - 1) / 2) / half_diag)
    else:
        center_deviation = 0.0

    return PressureFeatures(
        avg_pressure=mean,
        max_pressure=peak,
        contact_area=contact_area,
        pressure_std=pressure_std,
        center_deviation=center_deviation,
    )


def assemble_top7(tex, pres):
    """Tactile model input in ``TOP7_ORDER``."""
    return np.array([
        tex.roughness,
        tex.gradient_magnitude,
        tex.contrast,
        pres.pressure_std,
        pres.max_pressure,
        pres.center_deviation,
        tex.uniformity,
    ])


def extract_all(img, config=DEFAULT_CONFIG):
    """All ten features in ``FEATURE_NAMES`` order."""
    tex = extract_texture_features(img, config)
    pres = extract_pressure_features(img, config)
    values = {**dict(zip([f.name for f in fields(tex)], astuple(tex))),
              **dict(zip([f.name for f in fields(pres)], astuple(pres)))}
    return np.array([values[name] for name in FEATURE_NAMES])


def extract_feature_matrix(images, config=DEFAULT_CONFIG):
    return np.stack([extract_all(img, config) for img in images]) if len(images) else np.zeros((0, 10))


@dataclass
class FeatureStats:
    classes: np.ndarray
    class_means: np.ndarray
    class_stds: np.ndarray
    correlation: np.ndarray


def compute_feature_stats(X, y):
    """Per-class mean/std profiles and the Pearson correlation matrix.

    Zero-variance columns get zero correlation with everything else and a
    unit diagonal.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    for c in classes:
        if np.sum(y == c) < 2:
            raise InsufficientDataError(f"class {c} has fewer than 2 samples")
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    stds = np.stack([X[y == c].std(axis=0) for c in classes])
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[norms == 0, :] = 0.0
    corr[:, norms == 0] = 0.0
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return FeatureStats(classes, means, stds, corr)


CSV_HEADER = ("sample_id", "label") + FEATURE_NAMES


def write_feature_csv(path, X, labels, sample_ids=None):
    X = np.asarray(X)
    ids = range(len(X)) if sample_ids is None else sample_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for sid, label, row in zip(ids, labels, X):
            w.writerow([sid, int(label)] + [repr(float(v)) for v in row])


def read_feature_csv(path):
    """Returns ``(sample_ids, labels, X)`` with X columns in ``FEATURE_NAMES`` order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
    ids = [r[0] for r in rows]
    labels = np.array([int(r[1]) for r in rows], dtype=np.int64)
    X = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), len(FEATURE_NAMES))
    return ids, labels, X
