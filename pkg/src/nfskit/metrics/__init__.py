"""Point matching, normalized feature similarity and segmentation scores."""
from nfskit.metrics.index import SpatialIndex, build_index, squared_distances
from nfskit.metrics.matching import MATCH_RADIUS, MatchResult, match_points
from nfskit.metrics.nfs import (
    NfsReport,
    NfsSummary,
    aggregate_nfs,
    cosine_sim,
    feature_statistics,
    nfs,
    normalize_features,
)
from nfskit.metrics.segmentation import confusion_matrix, iou_from_confusion, miou, rmiou

__all__ = [
    "MATCH_RADIUS",
    "MatchResult",
    "NfsReport",
    "NfsSummary",
    "SpatialIndex",
    "aggregate_nfs",
    "build_index",
    "confusion_matrix",
    "cosine_sim",
    "feature_statistics",
    "iou_from_confusion",
    "match_points",
    "miou",
    "nfs",
    "normalize_features",
    "rmiou",
    "squared_distances",
]
