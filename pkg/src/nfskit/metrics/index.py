from __future__ import annotations

import os

import numpy as np
from scipy.spatial import cKDTree

from nfskit.core.cloud import PointCloud

THREADS_ENV = "NFSKIT_THREADS"
# Relative slack used when asking the tree for candidates; the final decision
# is always made on exact squared distances.
_SLACK = 1e-7


def default_workers() -> int:
    try:
        return max(int(os.environ.get(THREADS_ENV, "1")), 1)
    except ValueError:
        return 1


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``|a - b|^2`` evaluated as ``dx*dx + dy*dy + dz*dz``."""
    dx = a[..., 0] - b[..., 0]
    dy = a[..., 1] - b[..., 1]
    dz = a[..., 2] - b[..., 2]
    return dx * dx + dy * dy + dz * dz


class SpatialIndex:
    """Exact nearest-within-radius and radius-neighbor queries over fixed points.

    Candidates come from a KD-tree; every accept/reject and ranking decision
    uses :func:`squared_distances`, so results equal a brute-force scan:
    a point is within ``radius`` iff its squared distance is ``<= radius**2``,
    and equal distances resolve to the lowest point index.
    """

    def __init__(self, points: np.ndarray, workers: int | None = None):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        self.workers = workers or default_workers()
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest_within(self, queries: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Nearest indexed point per query, or -1 if none lies within ``radius``.

        Returns ``(index, squared_distance)``; misses carry ``inf``.
        """
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        m = q.shape[0]
        idx = np.full(m, -1, dtype=np.int64)
        d2 = np.full(m, np.inf)
        n = len(self)
        if n == 0 or m == 0:
            return idx, d2
        r2 = radius * radius
        k = min(4, n)
        bound = radius * (1 + _SLACK) + 1e-12
        kd, ki = self._tree.query(q, k=k, distance_upper_bound=bound, workers=self.workers)
        kd = kd.reshape(m, k)
        ki = ki.reshape(m, k)

        valid = ki < n
        cand = np.where(valid, ki, 0)
        exact = np.where(valid, squared_distances(q[:, None, :], self.points[cand]), np.inf)
        # Rank by (distance, index): sort stably on index first, then distance.
        order = np.argsort(np.where(valid, cand, n), axis=1, kind="stable")
        exact_o = np.take_along_axis(exact, order, axis=1)
        cand_o = np.take_along_axis(cand, order, axis=1)
        best = np.argmin(exact_o, axis=1)
        rows = np.arange(m)
        idx[:] = cand_o[rows, best]
        d2[:] = exact_o[rows, best]

        # More equidistant points may hide beyond the k-th candidate.
        crowded = valid[:, -1] & (kd[:, -1] <= kd[:, 0] * (1 + _SLACK) + 1e-12)
        for j in np.flatnonzero(crowded):
            cands = np.asarray(
                self._tree.query_ball_point(q[j], kd[j, 0] * (1 + _SLACK) + 1e-12), dtype=np.int64
            )
            cands.sort()
            e = squared_distances(q[j][None, :], self.points[cands])
            b = int(np.argmin(e))
            idx[j], d2[j] = cands[b], e[b]

        miss = ~(d2 <= r2)
        idx[miss] = -1
        d2[miss] = np.inf
        return idx, d2

    def neighbor_pairs(self, queries: np.ndarray, radius: float, exact: bool = True,
                       max_pairs: int = 2_000_000):
        """Yield ``(query_index, point_index, squared_distance)`` array triples.

        Covers every pair with squared distance ``<= radius**2``. Queries are
        processed in contiguous blocks holding about ``max_pairs`` candidate
        pairs each; pair order within a block is unspecified. With
        ``exact=False`` the tree's own distances decide membership, which skips
        a gather over all pairs and may differ from brute force only for pairs
        within rounding of the radius.
        """
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(self) == 0 or q.shape[0] == 0:
            return
        r2 = radius * radius
        bound = radius * (1 + _SLACK) + 1e-12 if exact else radius
        counts = self._tree.query_ball_point(q, bound, return_length=True, workers=self.workers)
        cum = np.cumsum(counts)
        m = q.shape[0]
        bounds = [0]
        while bounds[-1] < m:
            base = cum[bounds[-1] - 1] if bounds[-1] else 0
            nxt = int(np.searchsorted(cum, base + max_pairs, side="right"))
            bounds.append(min(max(nxt, bounds[-1] + 1), m))
        for start, stop in zip(bounds[:-1], bounds[1:]):
            block = q[start:stop]
            sdm = cKDTree(block).sparse_distance_matrix(self._tree, bound, output_type="ndarray")
            qi = sdm["i"].astype(np.int64)
            pi = sdm["j"].astype(np.int64)
            if not exact:
                yield qi + start, pi, sdm["v"] * sdm["v"]
                continue
            e = squared_distances(block[qi], self.points[pi])
            keep = e <= r2
            yield qi[keep] + start, pi[keep], e[keep]


def build_index(cloud: PointCloud, workers: int | None = None) -> SpatialIndex:
    return SpatialIndex(cloud.points, workers)
