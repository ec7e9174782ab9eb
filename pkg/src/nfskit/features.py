"""Per-point geometric descriptors and feature files.

The extractor is a fixed, training-free stand-in for a segmentation
backbone. For each point it looks at the neighbors within ``radius`` at
strictly positive distance (coincident points are not neighbors) and emits
``FEATURE_NAMES`` in order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from nfskit.core.cloud import PointCloud
from nfskit.core.io import atomic_write_bytes
from nfskit.errors import ConsistencyError, InvalidArgumentError, ParseError
from nfskit.metrics.index import SpatialIndex

FEATURE_NAMES = (
    "linearity",
    "planarity",
    "sphericity",
    "density",
    "mean_neighbor_distance",
    "height",
    "normal_z",
    "range",
)
SHAPE_CHANNELS = (0, 1, 2, 6)
DENSITY_CHANNEL = 3
FEATURE_DIM = len(FEATURE_NAMES)
FEATURE_RADIUS = 1.0
MIN_SHAPE_NEIGHBORS = 3
_EIG_EPS = 1e-12
# Upper-triangle entries of the 3x3 second-moment matrix.
_IU = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

FEATURE_MAGIC = b"NKFT"
FEATURE_VERSION = 1
_FHEADER = struct.Struct("<4sHHQI")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """``N x d`` per-point features, row-aligned with a cloud."""

    values: np.ndarray
    source: str = "computed"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise InvalidArgumentError(f"features must be N x d with d >= 1, got {v.shape}")
        if not np.isfinite(v).all():
            raise InvalidArgumentError("features contain NaN or inf")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def check_rows(self, cloud: PointCloud) -> None:
        if len(self) != len(cloud):
            raise ConsistencyError(f"{len(self)} feature rows for a {len(cloud)}-point cloud")


def _eigen_shape(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linearity/planarity/sphericity and |normal_z| from stacked 3x3 covariances."""
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, 0.0)
    l3, l2, l1 = w[:, 0], w[:, 1], w[:, 2]
    den = l1 + _EIG_EPS
    shape = np.stack([(l1 - l2) / den, (l2 - l3) / den, l3 / den], axis=1)
    return shape, np.abs(v[:, 2, 0])


def extract_features(cloud: PointCloud, radius: float = FEATURE_RADIUS,
                     index: SpatialIndex | None = None) -> FeatureMatrix:
    """Eight geometric channels per point.

    Points with fewer than three distinct neighbor positions get zero
    linearity, planarity, sphericity and normal_z; density and distance
    channels are still reported (both zero for an isolated point). Exact
    duplicates each count toward density, so duplicating a cloud doubles
    density and leaves every other channel unchanged.
    """
    if not radius > 0:
        raise InvalidArgumentError("feature radius must be positive")
    pts = cloud.points
    n = len(cloud)
    if n == 0:
        return FeatureMatrix(np.zeros((0, FEATURE_DIM)))
    # Coincident points collapse to one weighted position: each counts toward
    # density and moments, but the shape threshold looks at distinct positions.
    upts, inv, mult = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    if upts.shape[0] == n:
        upts, inv, mult = pts, None, None
    elif index is not None:
        index = None
    index = index or SpatialIndex(upts)
    sums, sdist, distinct = _moments(upts, mult, index, radius)
    m = upts.shape[0]
    u = np.zeros((m, FEATURE_DIM))
    count = sums[:, 0]
    safe = np.maximum(count, 1.0)
    mean = sums[:, 1:4] / safe[:, None]
    cov = np.empty((m, 3, 3))
    for k, (a, b) in enumerate(_IU):
        c = sums[:, 4 + k] / safe - mean[:, a] * mean[:, b]
        cov[:, a, b] = c
        cov[:, b, a] = c
    shape, nz = _eigen_shape(cov)
    enough = distinct >= MIN_SHAPE_NEIGHBORS
    u[:, 0:3] = np.where(enough[:, None], shape, 0.0)
    u[:, 6] = np.where(enough, nz, 0.0)
    u[:, 3] = count
    u[:, 4] = np.where(count > 0, sdist / safe, 0.0)
    u[:, 5] = upts[:, 2]
    u[:, 7] = np.sqrt(np.einsum("ij,ij->i", upts, upts))
    return FeatureMatrix(u if inv is None else u[inv])


def _moments(pts: np.ndarray, weights, index: SpatialIndex, radius: float):
    """Weighted neighborhood sums of ``1, x, y, z`` and second moments.

    Columns: 1, x, y, z, xx, yy, zz, xy, xz, yz. Also returns the weighted
    sum of neighbor distances and the number of distinct neighbors.
    """
    n = pts.shape[0]
    cols = np.empty((n, 10))
    cols[:, 0] = 1.0
    cols[:, 1:4] = pts
    for k, (a, b) in enumerate(_IU):
        cols[:, 4 + k] = pts[:, a] * pts[:, b]
    sums = np.zeros((n, 10))
    sdist = np.zeros(n)
    distinct = np.zeros(n)
    for qi, pi, d2 in index.neighbor_pairs(pts, radius, exact=False):
        keep = d2 > 0.0
        qi, pi, d2 = qi[keep], pi[keep], d2[keep]
        if qi.size == 0:
            continue
        w = np.ones(qi.size) if weights is None else weights[pi].astype(np.float64)
        lo = int(qi.min())
        rows = int(qi.max()) - lo + 1
        adj = sparse.coo_matrix((w, (qi - lo, pi)), shape=(rows, n))
        sums[lo : lo + rows] += adj @ cols
        sdist += np.bincount(qi, weights=w * np.sqrt(d2), minlength=n)
        distinct += np.bincount(qi, minlength=n)
    return sums, sdist, distinct


def save_features(features: FeatureMatrix, path) -> None:
    """Write ``features`` as header ``(magic, version, reserved, N, d)`` + float32 rows."""
    v = features.values
    head = _FHEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, 0, v.shape[0], v.shape[1])
    atomic_write_bytes(Path(path), head + v.astype("<f4").tobytes())


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _FHEADER.size:
        raise ParseError("truncated feature header", path, len(raw))
    magic, version, _, n, d = _FHEADER.unpack_from(raw, 0)
    if magic != FEATURE_MAGIC:
        raise ParseError(f"bad magic {magic!r}", path, 0)
    if version != FEATURE_VERSION:
        raise ParseError(f"unsupported version {version}", path, 4)
    if d < 1:
        raise ConsistencyError(f"{path}: declared feature width {d}")
    body = len(raw) - _FHEADER.size
    if body != 4 * n * d:
        raise ConsistencyError(
            f"{path}: header declares {n} x {d} float32 values ({4 * n * d} bytes), body has {body}"
        )
    vals = np.frombuffer(raw, dtype="<f4", offset=_FHEADER.size).reshape(n, d)
    return FeatureMatrix(vals.astype(np.float64), source="external-file")
