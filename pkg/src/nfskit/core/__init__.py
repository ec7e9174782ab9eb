"""Domain types, seeded randomness, rigid transforms and cloud IO."""
from nfskit.core.cloud import PointCloud, concatenate
from nfskit.core.io import read_cloud, read_labels, write_cloud, write_labels
from nfskit.core.rng import RngStream
from nfskit.core.transforms import RigidTransform, apply_transform, rotation_zyx

__all__ = [
    "PointCloud",
    "RigidTransform",
    "RngStream",
    "apply_transform",
    "concatenate",
    "read_cloud",
    "read_labels",
    "rotation_zyx",
    "write_cloud",
    "write_labels",
]
