"""Analytic ray casting against the ground plane, boxes and vertical cylinders."""
from __future__ import annotations

import numpy as np

from nfskit.core.cloud import PointCloud, concatenate
from nfskit.errors import ConsistencyError
from nfskit.simulator.rig import LidarSpec, Rig
from nfskit.simulator.scene import Box, Cylinder, Scene

T_EPS = 1e-9


def _box_hits(o: np.ndarray, d: np.ndarray, box: Box) -> np.ndarray:
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    par = d == 0.0
    if par.any():
        inside = (o >= lo) & (o <= hi)
        tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
    tn = tmin.max(axis=1)
    tf = tmax.min(axis=1)
    return np.where((tn <= tf) & (tn > T_EPS), tn, np.inf)


def _cylinder_hits(o: np.ndarray, d: np.ndarray, cyl: Cylinder) -> np.ndarray:
    ox, oy = o[0] - cyl.cx, o[1] - cyl.cy
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - cyl.radius * cyl.radius
    disc = b * b - 4.0 * a * c
    best = np.full(d.shape[0], np.inf)
    ok = (a > 0.0) & (disc >= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-b - np.sqrt(np.where(ok, disc, 0.0))) / (2.0 * a)
    z = o[2] + t_side * dz
    side = ok & (t_side > T_EPS) & (z >= cyl.z0) & (z <= cyl.z1)
    best = np.where(side, t_side, best)
    r2 = cyl.radius * cyl.radius
    for zc in (cyl.z0, cyl.z1):
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cap = (zc - o[2]) / dz
        px = ox + t_cap * dx
        py = oy + t_cap * dy
        cap = (dz != 0.0) & (t_cap > T_EPS) & (px * px + py * py <= r2)
        best = np.where(cap & (t_cap < best), t_cap, best)
    return best


def _ground_hits(o: np.ndarray, d: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[2] / d[:, 2]
    return np.where((d[:, 2] < 0.0) & (o[2] > 0.0) & (t > T_EPS), t, np.inf)


def _reach(prim, o: np.ndarray, max_range: float) -> bool:
    if isinstance(prim, Box):
        lo, hi = np.asarray(prim.lo), np.asarray(prim.hi)
        gap = np.maximum(np.maximum(lo - o, o - hi), 0.0)
    else:
        dxy = max(np.hypot(o[0] - prim.cx, o[1] - prim.cy) - prim.radius, 0.0)
        dz = max(prim.z0 - o[2], o[2] - prim.z1, 0.0)
        gap = np.array([dxy, dz])
    return float(np.linalg.norm(gap)) <= max_range


def cast_rays(origin: np.ndarray, directions: np.ndarray, scene: Scene,
              max_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit per ray from a shared world-frame ``origin``.

    Returns ``(t, hit)``: hit distance along each unit direction (``inf`` on a
    miss or beyond ``max_range``) and the index of the surface hit, where -1
    is the ground plane and ``k >= 0`` is ``scene.primitives[k]``. Exact ties
    go to the ground, then to the lowest primitive index.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    best = _ground_hits(o, d)
    hit = np.where(np.isfinite(best), -1, -2)
    for k, prim in enumerate(scene.primitives):
        if not _reach(prim, o, max_range):
            continue
        t = _box_hits(o, d, prim) if isinstance(prim, Box) else _cylinder_hits(o, d, prim)
        closer = t < best
        best = np.where(closer, t, best)
        hit = np.where(closer, k, hit)
    miss = ~(best <= max_range)
    best[miss] = np.inf
    hit[miss] = -2
    return best, hit


def hit_classes(scene: Scene, hit: np.ndarray) -> np.ndarray:
    classes = np.array([p.class_id for p in scene.primitives] + [scene.ground_class],
                       dtype=np.int64)
    # Index -1 wraps to the trailing ground entry.
    return classes[hit]


def scan_sensor(sensor: LidarSpec, scene: Scene, frame_id: int) -> PointCloud:
    """One sensor's returns for ``frame_id``, expressed in the vehicle frame."""
    pose = scene.pose(frame_id)
    d_vehicle = sensor.ray_directions() @ sensor.mount.rotation.T
    d_world = d_vehicle @ pose.rotation.T
    o_world = pose.apply(sensor.mount.translation[None, :])[0]
    t, hit = cast_rays(o_world, d_world, scene, sensor.max_range)
    keep = hit > -2
    pts = sensor.mount.translation + d_vehicle[keep] * t[keep, None]
    return PointCloud(pts, hit_classes(scene, hit[keep]), frame_id, sensor.name)


def simulate_scan(rig: Rig, scene: Scene, frame_id: int) -> list[PointCloud]:
    """One cloud per rig sensor, all in the shared vehicle frame."""
    return [scan_sensor(s, scene, frame_id) for s in rig.sensors]


def fuse(clouds) -> PointCloud:
    """Concatenate same-frame clouds in order; a single cloud passes through."""
    clouds = list(clouds)
    if len(clouds) == 1:
        return clouds[0]
    frames = {c.frame_id for c in clouds}
    if len(frames) != 1:
        raise ConsistencyError(f"cannot fuse clouds from frames {sorted(frames)}")
    return concatenate(clouds, sensor_id="+".join(c.sensor_id for c in clouds))
