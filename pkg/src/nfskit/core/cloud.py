from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from nfskit.errors import ConsistencyError, InvalidArgumentError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points in meters with optional per-point class ids.

    ``points`` is stored as a read-only ``(N, 3)`` float64 array and
    ``labels`` as a read-only ``(N,)`` int64 array. An empty cloud (N = 0)
    is valid.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    frame_id: int = 0
    sensor_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise InvalidArgumentError("points contain NaN or inf")
        object.__setattr__(self, "points", _frozen(pts))

        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.size == 0:
                lab = lab.reshape(0)
            if lab.ndim != 1 or lab.shape[0] != pts.shape[0]:
                raise ConsistencyError(
                    f"{lab.shape[0] if lab.ndim == 1 else lab.shape} labels for {pts.shape[0]} points"
                )
            if lab.size and (not np.issubdtype(lab.dtype, np.integer) or lab.min() < 0):
                raise InvalidArgumentError("labels must be non-negative integers")
            object.__setattr__(self, "labels", _frozen(lab.astype(np.int64, copy=False)))

        if int(self.frame_id) < 0:
            raise InvalidArgumentError("frame_id must be non-negative")
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "sensor_id", str(self.sensor_id))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, index) -> PointCloud:
        """Select points by integer index or boolean mask, labels in lockstep."""
        labels = None if self.labels is None else self.labels[index]
        return replace(self, points=self.points[index], labels=labels)

    def with_points(self, points: np.ndarray) -> PointCloud:
        return replace(self, points=points)

    def equals(self, other: PointCloud) -> bool:
        """Exact equality of points, labels and provenance."""
        if self.frame_id != other.frame_id or self.sensor_id != other.sensor_id:
            return False
        if not np.array_equal(self.points, other.points):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)

    @classmethod
    def empty(cls, frame_id: int = 0, sensor_id: str = "", labeled: bool = False) -> PointCloud:
        labels = np.zeros(0, dtype=np.int64) if labeled else None
        return cls(np.zeros((0, 3)), labels, frame_id, sensor_id)


def concatenate(clouds, frame_id: int | None = None, sensor_id: str | None = None) -> PointCloud:
    """Stack clouds in order. Labels survive only if every part carries them."""
    clouds = list(clouds)
    if not clouds:
        raise InvalidArgumentError("nothing to concatenate")
    points = np.concatenate([c.points for c in clouds], axis=0)
    if all(c.has_labels for c in clouds):
        labels = np.concatenate([c.labels for c in clouds])
    else:
        labels = None
    return PointCloud(
        points,
        labels,
        clouds[0].frame_id if frame_id is None else frame_id,
        clouds[0].sensor_id if sensor_id is None else sensor_id,
    )
