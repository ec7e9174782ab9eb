from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from nfskit.core.rng import RngStream
from nfskit.core.transforms import RigidTransform
from nfskit.errors import ConsistencyError, InvalidArgumentError

CLASS_TABLE: dict[int, str] = {
    0: "road",
    1: "sidewalk",
    2: "building",
    3: "fence",
    4: "car",
    5: "pole",
    6: "trunk",
    7: "pedestrian",
}
GROUND_CLASS = 0

# Half-width of the lane the ego vehicle drives along x; primitives stay outside.
EGO_CORRIDOR = 2.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lo <= p <= hi``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    class_id: int

    def sdf(self, p: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c, h = (lo + hi) / 2.0, (hi - lo) / 2.0
        q = np.abs(np.atleast_2d(p) - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Cylinder:
    """Vertical capped cylinder around ``(cx, cy)`` spanning ``z0 <= z <= z1``."""

    cx: float
    cy: float
    radius: float
    z0: float
    z1: float
    class_id: int

    def sdf(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        dr = np.hypot(p[:, 0] - self.cx, p[:, 1] - self.cy) - self.radius
        zc, zh = (self.z0 + self.z1) / 2.0, (self.z1 - self.z0) / 2.0
        dz = np.abs(p[:, 2] - zc) - zh
        q = np.stack([dr, dz], axis=1)
        return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


@dataclass(frozen=True)
class SceneParams:
    """Counts and extents for :func:`build_scene`.

    The vehicle drives along +x: frame k sits at ``(k * frame_spacing, 0, 0)``.
    Primitives are scattered over ``x in [x_min, x_max]``.
    """

    n_buildings: int = 24
    n_fences: int = 8
    n_cars: int = 20
    n_poles: int = 20
    n_trees: int = 20
    n_pedestrians: int = 12
    sidewalks: bool = True
    n_frames: int = 80
    frame_spacing: float = 2.0
    x_min: float = -40.0
    x_max: float = 200.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k.startswith("n_") and v < 0:
                raise InvalidArgumentError(f"{k} must be non-negative")
        if self.n_frames < 1:
            raise InvalidArgumentError("n_frames must be at least 1")
        if not self.x_max > self.x_min:
            raise InvalidArgumentError("x_max must exceed x_min")

    @classmethod
    def empty(cls, n_frames: int = 1) -> SceneParams:
        return cls(0, 0, 0, 0, 0, 0, sidewalks=False, n_frames=n_frames)


@dataclass(frozen=True, eq=False)
class Scene:
    primitives: tuple
    pose_track: tuple[RigidTransform, ...]
    ground_class: int = GROUND_CLASS
    class_table: dict = field(default_factory=lambda: dict(CLASS_TABLE))

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "pose_track", tuple(self.pose_track))
        if self.ground_class not in self.class_table:
            raise ConsistencyError(f"ground class {self.ground_class} not in class table")
        for p in self.primitives:
            if p.class_id not in self.class_table:
                raise ConsistencyError(f"primitive class {p.class_id} not in class table")

    @property
    def n_frames(self) -> int:
        return len(self.pose_track)

    @property
    def boxes(self) -> list[Box]:
        return [p for p in self.primitives if isinstance(p, Box)]

    @property
    def cylinders(self) -> list[Cylinder]:
        return [p for p in self.primitives if isinstance(p, Cylinder)]

    def pose(self, frame_id: int) -> RigidTransform:
        if not 0 <= frame_id < len(self.pose_track):
            raise InvalidArgumentError(
                f"frame {frame_id} outside pose track of {len(self.pose_track)} frames"
            )
        return self.pose_track[frame_id]


def _side(rng: RngStream) -> int:
    return 2 * rng.integers(0, 2) - 1


def _span(side: int, near: float, far: float) -> tuple[float, float]:
    return (near, far) if side > 0 else (-far, -near)


def build_scene(rng: RngStream, params: SceneParams = SceneParams()) -> Scene:
    """Procedural street scene, a deterministic function of ``rng``'s seed.

    Sampling recipe (``U(a, b)`` is ``rng.uniform(a, b)``, ``side`` is
    ``2 * rng.integers(0, 2) - 1``, ``X`` is ``U(x_min, x_max)``), drawn in
    this order and in the listed order within each primitive:

    * sidewalks (no draws): boxes ``x in [x_min, x_max]``, ``|y| in [5, 8]``,
      ``z in [0, 0.15]``, one per side.
    * buildings: side, x0 = X, length U(6, 20), depth U(6, 15),
      height U(4, 20), near U(9, 12);
      box ``[x0, x0 + length] x side*[near, near + depth] x [0, height]``.
    * fences: side, x0 = X, length U(5, 15), height U(1, 2);
      box ``[x0, x0 + length] x side*[8.2, 8.4] x [0, height]``.
    * cars: side, xc = X, yc U(3, 3.8), length U(3.8, 4.8), height U(1.4, 1.7);
      box ``[xc -+ length/2] x side*[yc -+ 0.9] x [0, height]``.
    * poles: side, x = X, |y| U(5.3, 5.6), radius U(0.08, 0.15), height U(4, 8).
    * trees: side, x = X, |y| U(6, 7.5), radius U(0.2, 0.4), height U(3, 6).
    * pedestrians: side, x = X, |y| U(5.5, 7.8), radius U(0.25, 0.35),
      height U(1.5, 1.9).

    Every primitive keeps ``|y| > 2``, clear of the ego lane.
    """
    p = params
    prims: list = []
    if p.sidewalks:
        for side in (1, -1):
            y0, y1 = _span(side, 5.0, 8.0)
            prims.append(Box((p.x_min, y0, 0.0), (p.x_max, y1, 0.15), 1))
    X = lambda: rng.uniform(p.x_min, p.x_max)  # noqa: E731
    for _ in range(p.n_buildings):
        side = _side(rng)
        x0, length, depth = X(), rng.uniform(6.0, 20.0), rng.uniform(6.0, 15.0)
        height, near = rng.uniform(4.0, 20.0), rng.uniform(9.0, 12.0)
        y0, y1 = _span(side, near, near + depth)
        prims.append(Box((x0, y0, 0.0), (x0 + length, y1, height), 2))
    for _ in range(p.n_fences):
        side = _side(rng)
        x0, length, height = X(), rng.uniform(5.0, 15.0), rng.uniform(1.0, 2.0)
        y0, y1 = _span(side, 8.2, 8.4)
        prims.append(Box((x0, y0, 0.0), (x0 + length, y1, height), 3))
    for _ in range(p.n_cars):
        side = _side(rng)
        xc, yc = X(), rng.uniform(3.0, 3.8)
        length, height = rng.uniform(3.8, 4.8), rng.uniform(1.4, 1.7)
        y0, y1 = _span(side, yc - 0.9, yc + 0.9)
        prims.append(Box((xc - length / 2, y0, 0.0), (xc + length / 2, y1, height), 4))
    for n, (ylo, yhi), (rlo, rhi), (hlo, hhi), cls in (
        (p.n_poles, (5.3, 5.6), (0.08, 0.15), (4.0, 8.0), 5),
        (p.n_trees, (6.0, 7.5), (0.2, 0.4), (3.0, 6.0), 6),
        (p.n_pedestrians, (5.5, 7.8), (0.25, 0.35), (1.5, 1.9), 7),
    ):
        for _ in range(n):
            side = _side(rng)
            x, y = X(), rng.uniform(ylo, yhi)
            radius, height = rng.uniform(rlo, rhi), rng.uniform(hlo, hhi)
            prims.append(Cylinder(x, side * y, radius, 0.0, height, cls))

    track = tuple(
        RigidTransform.from_translation(k * p.frame_spacing, 0.0, 0.0) for k in range(p.n_frames)
    )
    return Scene(tuple(prims), track)


def scene_params_from_dict(data: dict | None) -> SceneParams:
    data = dict(data or {})
    unknown = set(data) - set(SceneParams.__dataclass_fields__)
    if unknown:
        raise InvalidArgumentError(f"unknown scene keys: {sorted(unknown)}")
    return SceneParams(**data)
