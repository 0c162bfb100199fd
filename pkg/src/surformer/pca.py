"""
PCA of visual embeddings plus the embedding file readers/writers.

Text embedding file::

    EMB v1 N D
    <D space-separated decimals>   x N rows

The binary alternative is the weight container from :mod:`surformer.nn.io`
holding a single ``embeddings`` tensor.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, LoadError, ParameterError
from .nn.io import is_container, load_tensors, save_tensors


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray                # (D,)
    components: np.ndarray          # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,)
    total_variance: float           # total variance of the centered fit data

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def explained_variance_ratio(self):
        return explained_variance_ratio(self, self.total_variance)

    def transform(self, X):
        return pca_transform(self, X)

    def inverse_transform(self, Y):
        return np.asarray(Y) @ self.components + self.mean


def fit_pca(X, k=64):
    """PCA by thin SVD of the centered data.

    Components are the top-k right singular vectors with the sign chosen so
    each component's largest-magnitude entry is positive; explained variance
    is sigma^2 / (N - 1).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected an (N, D) matrix, got shape {X.shape}")
    N, D = X.shape
    if N < 2:
        raise ParameterError(f"need at least 2 rows to fit PCA, got {N}")
    if not 1 <= k <= min(N - 1, D):
        raise ParameterError(f"k={k} outside [1, min(N-1, D)] = [1, {min(N - 1, D)}]")
    if not np.all(np.isfinite(X)):
        raise ParameterError("embedding matrix contains non-finite values")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = vt[:k].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), pivot])
    comps *= signs[:, None]
    var = s ** 2 / (N - 1)
    return PcaModel(mean, comps, var[:k].copy(), float(var.sum()))


def pca_transform(model, X):
    X = np.asarray(X, dtype=np.float64)
    D = model.mean.shape[0]
    if X.shape[-1] != D:
        raise DimensionError(f"input has {X.shape[-1]} dims, model expects {D}")
    return (X - model.mean) @ model.components.T


def explained_variance_ratio(model, total_variance):
    if not total_variance > 0:
        raise ParameterError(f"total variance must be positive, got {total_variance}")
    return model.explained_variance / total_variance


def save_pca(path, model):
    save_tensors(path, {
        "mean": model.mean,
        "components": model.components,
        "explained_variance": model.explained_variance,
    }, meta={"kind": "pca", "total_variance": model.total_variance})


def load_pca(path):
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "pca":
        raise LoadError(f"{path}: not a PCA container")
    return PcaModel(tensors["mean"], tensors["components"], tensors["explained_variance"],
                    float(meta["total_variance"]))


def save_embeddings(path, X, binary=False):
    X = np.asarray(X, dtype=np.float64)
    if binary:
        save_tensors(path, {"embeddings": X}, meta={"kind": "embeddings"})
        return
    N, D = X.shape
    with open(path, "w") as fh:
        fh.write(f"EMB v1 {N} {D}\n")
        np.savetxt(fh, X, fmt="%.17g", delimiter=" ")


def load_embeddings(path):
    """Read an embedding matrix from either supported format.

    Raises :class:`LoadError` on malformed headers, short rows, truncated
    files and non-finite values; nothing partial is returned.
    """
    path = Path(path)
    if is_container(path):
        tensors, _ = load_tensors(path)
        if "embeddings" not in tensors:
            raise LoadError(f"{path}: container has no 'embeddings' tensor")
        X = tensors["embeddings"].astype(np.float64)
        if X.ndim != 2:
            raise LoadError(f"{path}: embeddings tensor must be 2-D, got shape {X.shape}")
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
        if bad.size:
            raise LoadError(f"{path}: non-finite value in row {int(bad[0])}")
        return X
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[:2] != ["EMB", "v1"]:
            raise LoadError(f"{path}: malformed header {' '.join(header)!r}")
        try:
            N, D = int(header[2]), int(header[3])
        except ValueError as exc:
            raise LoadError(f"{path}: malformed header dimensions") from exc
        if N < 0 or D < 1:
            raise LoadError(f"{path}: invalid dimensions N={N} D={D}")
        X = np.empty((N, D))
        for i in range(N):
            line = fh.readline()
            if not line:
                raise LoadError(f"{path}: truncated file, expected {N} rows, found {i}")
            parts = line.split()
            if len(parts) != D:
                raise LoadError(f"{path}: row {i} has {len(parts)} values, expected {D}")
            try:
                row = np.array(parts, dtype=np.float64)
            except ValueError as exc:
                raise LoadError(f"{path}: unparsable value in row {i}") from exc
            if not np.all(np.isfinite(row)):
                raise LoadError(f"{path}: non-finite value in row {i}")
            X[i] = row
        if fh.read().strip():
            raise LoadError(f"{path}: more than {N} rows")
    return X
