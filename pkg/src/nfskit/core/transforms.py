from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nfskit.core.cloud import PointCloud
from nfskit.errors import InvalidArgumentError

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``x -> rotation @ x + translation`` with a proper rotation matrix."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        tr = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rot.shape != (3, 3) or tr.shape != (3,):
            raise InvalidArgumentError("rotation must be 3x3 and translation length 3")
        if not (np.isfinite(rot).all() and np.isfinite(tr).all()):
            raise InvalidArgumentError("transform has non-finite entries")
        if np.abs(rot @ rot.T - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidArgumentError("rotation determinant is not +1")
        rot.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> RigidTransform:
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        # Row-vector form X @ R^T + t^T.
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return self.compose(other)


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_zyx(alpha_x: float, alpha_y: float, alpha_z: float) -> RigidTransform:
    """Rotation ``Rz(alpha_z) @ Ry(alpha_y) @ Rx(alpha_x)``, angles in degrees.

    Read extrinsically: rotate about the fixed x axis first, then y, then z.
    """
    angles = (alpha_x, alpha_y, alpha_z)
    if not all(math.isfinite(float(a)) for a in angles):
        raise InvalidArgumentError(f"non-finite rotation angle in {angles}")
    ax, ay, az = (math.radians(float(a)) for a in angles)
    return RigidTransform(_rz(az) @ _ry(ay) @ _rx(ax), np.zeros(3))


def yaw(alpha_z: float) -> RigidTransform:
    return rotation_zyx(0.0, 0.0, alpha_z)


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Move every point of ``cloud`` by ``transform``; labels, ids and order kept."""
    return cloud.with_points(transform.apply(cloud.points))
