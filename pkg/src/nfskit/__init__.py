"""Sensor-setup augmentations and normalized feature similarity for LiDAR point clouds."""

__version__ = "0.1.0"
