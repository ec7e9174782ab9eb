"""Sensor-setup augmentations: Frustum Drop and Mis-Calibration.

Both are pure functions of ``(cloud, params, rng)``. Each call draws its
trigger decision first, even when the augmentation ends up not applying, so
later draws from the same stream do not shift between configurations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from nfskit.core.cloud import PointCloud, concatenate
from nfskit.core.rng import RngStream
from nfskit.core.transforms import RigidTransform, rotation_zyx
from nfskit.errors import InvalidArgumentError

log = logging.getLogger(__name__)

COINCIDENT_TOL = 1e-12
MC_TRAINING_P_CAP = 0.5


@dataclass(frozen=True)
class FrustumDropParams:
    r: float = 3.0
    angle_min: float = 2.5
    angle_max: float = 90.0
    p: float = 0.5

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidArgumentError("frustum origin half-extent r must be positive")
        if not (0 < self.angle_min <= self.angle_max <= 180):
            raise InvalidArgumentError("need 0 < angle_min <= angle_max <= 180 degrees")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidArgumentError("probability p must be in [0, 1]")

    @property
    def label(self) -> str:
        return f"FD(p={self.p:g})"


@dataclass(frozen=True)
class MisCalibrationParams:
    """Shift and rotation ranges for the perturbed copy.

    Probabilities above 0.5 are accepted (forcing ``p=1`` is useful for
    inspection) but flagged, since training usage stays at or below 0.5.
    """

    s_xy: float = 0.05
    s_z: float = 0.05
    alpha_max: float = 0.05
    p: float = 0.5

    def __post_init__(self):
        if self.s_xy < 0 or self.s_z < 0 or self.alpha_max < 0:
            raise InvalidArgumentError("s_xy, s_z and alpha_max must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidArgumentError("probability p must be in [0, 1]")
        if self.p > MC_TRAINING_P_CAP:
            log.warning("mis-calibration probability %g exceeds the training cap of %g",
                        self.p, MC_TRAINING_P_CAP)

    @property
    def label(self) -> str:
        return f"MC(p={self.p:g}, s={self.s_xy:g})"


@dataclass(frozen=True)
class FrustumSample:
    origin: np.ndarray
    center: int
    dtheta_max: float
    dpsi_max: float


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def frustum_angles(cloud, origin) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Azimuth and elevation of every point seen from ``origin``, in degrees.

    Returns ``(theta, psi, coincident)``. Points within 1e-12 of the origin
    on every axis get angles ``(0, 0)`` and are flagged in ``coincident``.
    """
    rel = _points(cloud) - np.asarray(origin, dtype=np.float64)
    x, y, z = rel[:, 0], rel[:, 1], rel[:, 2]
    theta = np.degrees(np.arctan2(y, x))
    psi = np.degrees(np.arctan2(z, np.sqrt(x * x + y * y)))
    coincident = (np.abs(rel) < COINCIDENT_TOL).all(axis=1)
    theta[coincident] = 0.0
    psi[coincident] = 0.0
    return theta, psi, coincident


def angular_offset(a_deg: np.ndarray, b_deg: float) -> np.ndarray:
    """``arccos(cos(a - b))`` in degrees: distance on the circle, in [0, 180]."""
    d = np.radians(np.asarray(a_deg) - b_deg)
    return np.degrees(np.arccos(np.clip(np.cos(d), -1.0, 1.0)))


def draw_frustum(rng: RngStream, n_points: int, params: FrustumDropParams) -> Optional[FrustumSample]:
    """Trigger decision, then origin, center index and the two angular limits."""
    if not rng.bernoulli(params.p) or n_points == 0:
        return None
    origin = rng.uniform(-params.r, params.r, 3)
    center = rng.integers(0, n_points)
    limits = rng.uniform(params.angle_min, params.angle_max, 2)
    return FrustumSample(origin, center, float(limits[0]), float(limits[1]))


def frustum_mask(cloud, sample: FrustumSample) -> np.ndarray:
    """Boolean mask of the points inside the sampled frustum."""
    theta, psi, _ = frustum_angles(cloud, sample.origin)
    dth = angular_offset(theta, theta[sample.center])
    dps = angular_offset(psi, psi[sample.center])
    return (dth <= sample.dtheta_max) & (dps <= sample.dpsi_max)


def frustum_drop(cloud: PointCloud, params: FrustumDropParams, rng: RngStream) -> PointCloud:
    """Remove every point inside a randomly placed view frustum.

    With probability ``p`` the frustum is drawn and applied; the center point
    is always inside it, so a triggered drop removes at least one point.
    Surviving points keep their order and labels.
    """
    sample = draw_frustum(rng, len(cloud), params)
    if sample is None:
        return cloud
    return cloud.subset(~frustum_mask(cloud, sample))


def draw_miscalibration(rng: RngStream, params: MisCalibrationParams) -> Optional[RigidTransform]:
    """Trigger decision, then ``(t_x, t_y)``, ``t_z`` and ``(alpha_x, alpha_y, alpha_z)``."""
    if not rng.bernoulli(params.p):
        return None
    txy = rng.uniform(-params.s_xy, params.s_xy, 2)
    tz = rng.uniform(-params.s_z, params.s_z)
    ax, ay, az = rng.uniform(-params.alpha_max, params.alpha_max, 3)
    rot = rotation_zyx(ax, ay, az).rotation
    return RigidTransform(rot, np.array([txy[0], txy[1], tz]))


def miscalibration(cloud: PointCloud, params: MisCalibrationParams, rng: RngStream) -> PointCloud:
    """Append a slightly shifted and rotated copy of the whole cloud.

    The copy is rotated about the frame origin and keeps the source point
    order; the first ``N`` output points are the input, untouched.
    """
    transform = draw_miscalibration(rng, params)
    if transform is None or len(cloud) == 0:
        return cloud
    return concatenate([cloud, cloud.with_points(transform.apply(cloud.points))])


@dataclass(frozen=True)
class AugmentConfig:
    """Training-time augmentation set; Mis-Calibration runs before Frustum Drop."""

    fd: Optional[FrustumDropParams] = None
    mc: Optional[MisCalibrationParams] = None

    @property
    def label(self) -> str:
        parts = ["Base"]
        if self.fd is not None:
            parts.append(self.fd.label)
        if self.mc is not None:
            parts.append(self.mc.label)
        return " + ".join(parts)

    def apply(self, cloud: PointCloud, rng: RngStream) -> PointCloud:
        if self.mc is not None:
            cloud = miscalibration(cloud, self.mc, rng)
        if self.fd is not None:
            cloud = frustum_drop(cloud, self.fd, rng)
        return cloud
