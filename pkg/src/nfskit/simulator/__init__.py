"""Deterministic multi-LiDAR scan simulation over procedural street scenes."""
from nfskit.simulator.raycast import cast_rays, fuse, scan_sensor, simulate_scan
from nfskit.simulator.rig import (
    LidarSpec,
    Rig,
    SensorDefaults,
    get_rig,
    preset_rigs,
    rig_from_dict,
    with_sensor_overrides,
)
from nfskit.simulator.scene import (
    CLASS_TABLE,
    Box,
    Cylinder,
    Scene,
    SceneParams,
    build_scene,
    scene_params_from_dict,
)

__all__ = [
    "CLASS_TABLE",
    "Box",
    "Cylinder",
    "LidarSpec",
    "Rig",
    "Scene",
    "SceneParams",
    "SensorDefaults",
    "build_scene",
    "cast_rays",
    "fuse",
    "get_rig",
    "preset_rigs",
    "rig_from_dict",
    "scan_sensor",
    "scene_params_from_dict",
    "simulate_scan",
    "with_sensor_overrides",
]
