from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nfskit.errors import InvalidArgumentError
from nfskit.metrics.nfs import Normalization, feature_statistics


def _values(F) -> np.ndarray:
    return np.asarray(getattr(F, "values", F), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class CentroidClassifier:
    """Nearest-centroid labeler over standardized features.

    ``class_ids`` is ascending and row-aligned with ``centroids``; only
    classes seen in training have a centroid, so unseen classes are never
    predicted.
    """

    centroids: np.ndarray
    class_ids: np.ndarray
    normalization: Normalization

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def distances(self, features) -> np.ndarray:
        x = self.normalization.apply(_values(features))
        diff = x[:, None, :] - self.centroids[None, :, :]
        return np.einsum("nkd,nkd->nk", diff, diff)

    def predict(self, features) -> np.ndarray:
        x = _values(features)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise InvalidArgumentError(f"expected {self.d} feature channels, got shape {x.shape}")
        if x.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        # argmin takes the first minimum, i.e. the lowest class id on ties.
        return self.class_ids[np.argmin(self.distances(x), axis=1)]


def fit_centroids(features, labels) -> CentroidClassifier:
    """Per-class mean of features standardized with the training statistics."""
    x = _values(features)
    if labels is None:
        raise InvalidArgumentError("training labels are required")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if x.shape[0] == 0 or y.size == 0:
        raise InvalidArgumentError("cannot fit a classifier on zero points")
    if y.shape[0] != x.shape[0]:
        raise InvalidArgumentError(f"{y.shape[0]} labels for {x.shape[0]} feature rows")
    norm = feature_statistics(x)
    z = norm.apply(x)
    ids, inverse = np.unique(y, return_inverse=True)
    counts = np.bincount(inverse)
    sums = np.zeros((ids.size, x.shape[1]))
    np.add.at(sums, inverse, z)
    return CentroidClassifier(sums / counts[:, None], ids, norm)


def predict(classifier: CentroidClassifier, features) -> np.ndarray:
    return classifier.predict(features)
