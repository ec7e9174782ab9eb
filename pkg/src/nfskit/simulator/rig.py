from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from nfskit.core.transforms import RigidTransform
from nfskit.errors import InvalidArgumentError

# Vehicle roof geometry used for sensor mounts, meters.
ROOF_LENGTH = 4.0
ROOF_WIDTH = 1.8
ROOF_HEIGHT = 1.8

DEFAULT_VERTICAL_FOV = (-24.0, 2.0)
DEFAULT_AZIMUTH_STEP = 0.9
DEFAULT_MAX_RANGE = 100.0

HFOV_EXTENTS = (60, 120, 180, 240, 300, 360)
CHANNEL_SWEEP = (16, 32, 48, 64, 96, 128, 192, 256)
CORNER_ORDER = ("front-left", "front-right", "rear-left", "rear-right")


@dataclass(frozen=True, eq=False)
class LidarSpec:
    """Scan pattern and mounting pose of one spinning LiDAR.

    Channel elevations are spaced uniformly over ``vertical_fov`` (inclusive
    ends; a single channel sits at the midpoint). Azimuths lie on the global
    grid ``k * azimuth_step``: the first sample is ``horizontal_fov[0]``
    rounded to the nearest grid index, followed by
    ``floor(extent / azimuth_step)`` consecutive grid angles. Sensors that share
    a step therefore sample identical directions wherever their FOVs overlap.
    """

    name: str
    channels: int = 64
    vertical_fov: tuple[float, float] = DEFAULT_VERTICAL_FOV
    horizontal_fov: tuple[float, float] = (-180.0, 360.0)
    azimuth_step: float = DEFAULT_AZIMUTH_STEP
    max_range: float = DEFAULT_MAX_RANGE
    mount: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if int(self.channels) != self.channels or self.channels < 1:
            raise InvalidArgumentError(f"{self.name}: channels must be a positive integer")
        lo, hi = (float(v) for v in self.vertical_fov)
        if not (-90.0 <= lo <= hi <= 90.0):
            raise InvalidArgumentError(f"{self.name}: bad vertical_fov {self.vertical_fov}")
        start, extent = (float(v) for v in self.horizontal_fov)
        if not (0.0 < extent <= 360.0):
            raise InvalidArgumentError(f"{self.name}: horizontal extent must be in (0, 360]")
        if not self.azimuth_step > 0:
            raise InvalidArgumentError(f"{self.name}: azimuth_step must be positive")
        if not self.max_range > 0:
            raise InvalidArgumentError(f"{self.name}: max_range must be positive")
        object.__setattr__(self, "channels", int(self.channels))
        object.__setattr__(self, "vertical_fov", (lo, hi))
        object.__setattr__(self, "horizontal_fov", (start, extent))

    @property
    def azimuth_count(self) -> int:
        start, extent = self.horizontal_fov
        # Tolerance absorbs representation error, e.g. 360 / 0.9.
        return int(math.floor(extent / self.azimuth_step + 1e-9))

    @property
    def ray_count(self) -> int:
        return self.channels * self.azimuth_count

    def elevations(self) -> np.ndarray:
        lo, hi = self.vertical_fov
        if self.channels == 1:
            return np.array([(lo + hi) / 2.0])
        return np.linspace(lo, hi, self.channels)

    def azimuths(self) -> np.ndarray:
        k0 = round(self.horizontal_fov[0] / self.azimuth_step)
        return (k0 + np.arange(self.azimuth_count)) * self.azimuth_step

    def ray_directions(self) -> np.ndarray:
        """Unit directions in the sensor frame, channel-major then azimuth."""
        el = np.radians(self.elevations())[:, None]
        az = np.radians(self.azimuths())[None, :]
        ce = np.cos(el)
        d = np.stack(
            np.broadcast_arrays(ce * np.cos(az), ce * np.sin(az), np.sin(el)), axis=-1
        )
        return d.reshape(-1, 3)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "channels": self.channels,
            "vertical_fov": list(self.vertical_fov),
            "horizontal_fov": list(self.horizontal_fov),
            "azimuth_step": self.azimuth_step,
            "max_range": self.max_range,
            "mount": {
                "rotation": self.mount.rotation.tolist(),
                "translation": self.mount.translation.tolist(),
            },
        }


@dataclass(frozen=True, eq=False)
class Rig:
    name: str
    sensors: tuple[LidarSpec, ...]

    def __post_init__(self):
        sensors = tuple(self.sensors)
        if not sensors:
            raise InvalidArgumentError(f"rig {self.name!r} has no sensors")
        names = [s.name for s in sensors]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"rig {self.name!r} has duplicate sensor names {names}")
        object.__setattr__(self, "sensors", sensors)

    @property
    def ray_count(self) -> int:
        return sum(s.ray_count for s in self.sensors)

    def to_dict(self) -> dict:
        return {"name": self.name, "sensors": [s.to_dict() for s in self.sensors]}


@dataclass(frozen=True)
class SensorDefaults:
    """Shared scan-pattern and roof parameters applied by :func:`preset_rigs`."""

    vertical_fov: tuple[float, float] = DEFAULT_VERTICAL_FOV
    azimuth_step: float = DEFAULT_AZIMUTH_STEP
    max_range: float = DEFAULT_MAX_RANGE
    roof_length: float = ROOF_LENGTH
    roof_width: float = ROOF_WIDTH
    roof_height: float = ROOF_HEIGHT

    def center_mount(self) -> RigidTransform:
        return RigidTransform.from_translation(0.0, 0.0, self.roof_height)

    def corner_mounts(self) -> dict[str, RigidTransform]:
        hl, hw, h = self.roof_length / 2.0, self.roof_width / 2.0, self.roof_height
        xy = {
            "front-left": (hl, hw),
            "front-right": (hl, -hw),
            "rear-left": (-hl, hw),
            "rear-right": (-hl, -hw),
        }
        return {k: RigidTransform.from_translation(x, y, h) for k, (x, y) in xy.items()}

    def sensor(self, name: str, mount: RigidTransform, channels: int = 64,
               extent: float = 360.0) -> LidarSpec:
        return LidarSpec(
            name=name,
            channels=channels,
            vertical_fov=tuple(self.vertical_fov),
            horizontal_fov=(-extent / 2.0, float(extent)),
            azimuth_step=self.azimuth_step,
            max_range=self.max_range,
            mount=mount,
        )


def preset_rigs(defaults: SensorDefaults | None = None) -> list[Rig]:
    """All named evaluation rigs, in-domain first.

    ``in-domain``                      one centered 64-channel 360° sensor
    ``hfov-<deg>``                     centered sensor, FOV 60..360 in 60° steps, facing +x
    ``corners-<n>``                    n = 1..4 corner sensors, 64 channels each
    ``corners-<n>-constant-points``    n corner sensors with 64 // n channels each
    ``channels-<c>``                   centered 360° sensor with c channels
    """
    d = defaults or SensorDefaults()
    center = d.center_mount()
    corners = d.corner_mounts()
    rigs = [Rig("in-domain", (d.sensor("center", center),))]
    for ext in HFOV_EXTENTS:
        rigs.append(Rig(f"hfov-{ext}", (d.sensor("center", center, extent=ext),)))
    for n in range(1, 5):
        names = CORNER_ORDER[:n]
        rigs.append(Rig(f"corners-{n}", tuple(d.sensor(k, corners[k]) for k in names)))
    for n in range(1, 5):
        names = CORNER_ORDER[:n]
        rigs.append(
            Rig(
                f"corners-{n}-constant-points",
                tuple(d.sensor(k, corners[k], channels=64 // n) for k in names),
            )
        )
    for c in CHANNEL_SWEEP:
        rigs.append(Rig(f"channels-{c}", (d.sensor("center", center, channels=c),)))
    return rigs


def get_rig(name: str, defaults: SensorDefaults | None = None) -> Rig:
    for rig in preset_rigs(defaults):
        if rig.name == name:
            return rig
    known = ", ".join(r.name for r in preset_rigs(defaults))
    raise InvalidArgumentError(f"unknown rig preset {name!r}; known presets: {known}")


def rig_from_dict(data: dict, defaults: SensorDefaults | None = None) -> Rig:
    """Build a custom rig from a parsed config mapping.

    Each entry of ``sensors`` takes ``name``, ``channels``, ``vertical_fov``,
    ``horizontal_fov`` ``[start, extent]``, ``azimuth_step``, ``max_range`` and
    ``mount`` (``{translation: [x, y, z], rotation_deg: [ax, ay, az]}``).
    """
    from nfskit.core.transforms import rotation_zyx

    d = defaults or SensorDefaults()
    sensors = []
    for i, s in enumerate(data.get("sensors", [])):
        m = s.get("mount", {})
        rot = rotation_zyx(*m.get("rotation_deg", (0.0, 0.0, 0.0))).rotation
        mount = RigidTransform(rot, m.get("translation", (0.0, 0.0, d.roof_height)))
        sensors.append(
            LidarSpec(
                name=s.get("name", f"sensor-{i}"),
                channels=s.get("channels", 64),
                vertical_fov=tuple(s.get("vertical_fov", d.vertical_fov)),
                horizontal_fov=tuple(s.get("horizontal_fov", (-180.0, 360.0))),
                azimuth_step=s.get("azimuth_step", d.azimuth_step),
                max_range=s.get("max_range", d.max_range),
                mount=mount,
            )
        )
    return Rig(data.get("name", "custom"), tuple(sensors))


def with_sensor_overrides(rig: Rig, **overrides) -> Rig:
    return Rig(rig.name, tuple(replace(s, **overrides) for s in rig.sensors))
