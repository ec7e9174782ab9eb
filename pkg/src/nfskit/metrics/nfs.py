"""Normalized Feature Similarity between index-aligned point features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nfskit.errors import InvalidArgumentError, NoOverlapError
from nfskit.metrics.matching import MatchResult

SIGMA_FLOOR = 1e-12


def _values(F) -> np.ndarray:
    a = np.asarray(getattr(F, "values", F), dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"feature matrix must be 2-D, got shape {a.shape}")
    return a


def cosine_sim(f, g) -> float:
    """Cosine of the angle between two vectors; 0.0 if either has zero norm."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise InvalidArgumentError(f"vector shapes differ: {f.shape} vs {g.shape}")
    nf, ng = np.linalg.norm(f), np.linalg.norm(g)
    if nf == 0.0 or ng == 0.0:
        return 0.0
    return float(np.clip(np.dot(f, g) / (nf * ng), -1.0, 1.0))


def rowwise_cosine(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine similarity of matching rows and a mask of zero-norm rows (scored 0)."""
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    zero = (na == 0.0) | (nb == 0.0)
    denom = np.where(zero, 1.0, na * nb)
    sims = np.einsum("ij,ij->i", A, B) / denom
    sims = np.where(zero, 0.0, np.clip(sims, -1.0, 1.0))
    return sims, zero


@dataclass(frozen=True)
class Normalization:
    mu: np.ndarray
    sigma: np.ndarray
    # Channels whose std fell below SIGMA_FLOOR and were divided by the floor.
    flat_channels: np.ndarray

    def apply(self, F) -> np.ndarray:
        return (_values(F) - self.mu) / np.maximum(self.sigma, SIGMA_FLOOR)


def feature_statistics(F) -> Normalization:
    a = _values(F)
    if a.shape[0] == 0:
        raise InvalidArgumentError("cannot normalize an empty feature matrix")
    mu = a.mean(axis=0)
    sigma = a.std(axis=0)
    return Normalization(mu, sigma, sigma < SIGMA_FLOOR)


def normalize_features(F) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardize every channel by its own mean and (population) std.

    Returns ``(normalized, mu, sigma)``.
    """
    stats = feature_statistics(F)
    return stats.apply(F), stats.mu, stats.sigma


@dataclass(frozen=True, eq=False)
class NfsReport:
    """Mean normalized cosine similarity over matched pairs.

    ``nfs`` is a fraction in ``[-1, 1]``; :attr:`percent` scales it.
    ``per_point[k]`` scores ``matches.pairs[k]``.
    """

    nfs: float
    per_point: np.ndarray
    pairs: np.ndarray
    matched_count: int
    unmatched_count: int
    zero_norm_count: int
    n_query: int

    @property
    def percent(self) -> float:
        return 100.0 * self.nfs

    def per_query(self) -> np.ndarray:
        """Similarity per query point, NaN where the point had no match."""
        out = np.full(self.n_query, np.nan)
        out[self.pairs[:, 1]] = self.per_point
        return out


def nfs(F, F_query, matches: MatchResult) -> NfsReport:
    """Normalized Feature Similarity of query features against reference features.

    Both sides are standardized with the mean and std of the reference
    matrix ``F`` (all rows), then each matched pair contributes its cosine
    similarity. Unmatched queries are ignored.
    """
    ref = _values(F)
    qry = _values(F_query)
    if ref.shape[1] != qry.shape[1]:
        raise InvalidArgumentError(f"feature widths differ: {ref.shape[1]} vs {qry.shape[1]}")
    if qry.shape[0] != matches.n_query:
        raise InvalidArgumentError(
            f"{qry.shape[0]} query feature rows for a {matches.n_query}-point query cloud"
        )
    if matches.matched_count == 0:
        raise NoOverlapError("no query point has a reference point within the match radius")
    pairs = matches.pairs
    if pairs[:, 0].max() >= ref.shape[0]:
        raise InvalidArgumentError("match references a row beyond the reference features")
    stats = feature_statistics(ref)
    a = stats.apply(ref[pairs[:, 0]])
    b = stats.apply(qry[pairs[:, 1]])
    sims, zero = rowwise_cosine(a, b)
    return NfsReport(
        nfs=float(sims.mean()),
        per_point=sims,
        pairs=pairs,
        matched_count=int(pairs.shape[0]),
        unmatched_count=matches.unmatched_count,
        zero_norm_count=int(zero.sum()),
        n_query=matches.n_query,
    )


@dataclass(frozen=True)
class NfsSummary:
    """Sequence-level NFS: per-frame mean/std (headline) and the point-pooled mean."""

    mean: float
    std: float
    pooled: float
    frames: int
    matched_count: int
    unmatched_count: int


def aggregate_nfs(reports) -> NfsSummary:
    reports = list(reports)
    if not reports:
        raise InvalidArgumentError("no NFS reports to aggregate")
    per_frame = np.array([r.nfs for r in reports])
    total = sum(r.matched_count for r in reports)
    pooled = float(sum(float(r.per_point.sum()) for r in reports) / total)
    return NfsSummary(
        mean=float(per_frame.mean()),
        std=float(per_frame.std()),
        pooled=pooled,
        frames=len(reports),
        matched_count=total,
        unmatched_count=sum(r.unmatched_count for r in reports),
    )
