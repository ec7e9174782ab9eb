from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nfskit.core.cloud import PointCloud
from nfskit.errors import ConsistencyError, InvalidArgumentError
from nfskit.metrics.index import SpatialIndex, build_index

MATCH_RADIUS = 1.0


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Query-to-reference correspondences.

    ``pairs`` is a ``(K, 2)`` array of ``(reference_index, query_index)``
    sorted by query index; every query index appears either there or in
    ``unmatched_query``.
    """

    pairs: np.ndarray
    unmatched_query: np.ndarray
    radius: float
    distances: np.ndarray
    n_query: int

    @property
    def reference_indices(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def query_indices(self) -> np.ndarray:
        return self.pairs[:, 1]

    @property
    def matched_count(self) -> int:
        return self.pairs.shape[0]

    @property
    def unmatched_count(self) -> int:
        return self.unmatched_query.shape[0]

    @classmethod
    def identity(cls, n: int) -> MatchResult:
        """Match point i to point i, as for two copies of the same cloud."""
        i = np.arange(n, dtype=np.int64)
        return cls(np.stack([i, i], axis=1), np.zeros(0, dtype=np.int64), 0.0, np.zeros(n), n)


def match_points(reference: PointCloud, query: PointCloud, radius: float = MATCH_RADIUS,
                 index: SpatialIndex | None = None) -> MatchResult:
    """Pair each query point with its nearest reference point within ``radius``.

    Both clouds must come from the same frame. Reference points may serve
    several queries; queries without a reference point in range are
    reported as unmatched.
    """
    if reference.frame_id != query.frame_id:
        raise ConsistencyError(
            f"reference frame {reference.frame_id} != query frame {query.frame_id}"
        )
    if not radius > 0:
        raise InvalidArgumentError("match radius must be positive")
    index = index or build_index(reference)
    ref_idx, d2 = index.nearest_within(query.points, radius)
    hit = ref_idx >= 0
    q_idx = np.flatnonzero(hit).astype(np.int64)
    pairs = np.stack([ref_idx[hit], q_idx], axis=1) if q_idx.size else np.zeros((0, 2), np.int64)
    return MatchResult(
        pairs=pairs,
        unmatched_query=np.flatnonzero(~hit).astype(np.int64),
        radius=float(radius),
        distances=np.sqrt(d2[hit]),
        n_query=len(query),
    )
