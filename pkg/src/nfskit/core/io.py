"""Point-cloud file formats.

``kitti-bin``
    N little-endian records of four float32 ``(x, y, z, intensity)``.
    Intensity is dropped on read and written as 0. Labels live in a sibling
    ``.label`` file of N little-endian uint32 whose low 16 bits hold the class
    id; high bits are ignored on read and written as zero.

``internal``
    Little-endian header followed by packed data::

        magic      4s   b"NKPC"
        version    u2   1
        has_labels u1   0 or 1
        reserved   u1   0
        n_points   u8
        frame_id   u8
        id_len     u2   length of the UTF-8 sensor id
        sensor_id  bytes[id_len]
        points     f8[n_points, 3]
        labels     u4[n_points]      (only if has_labels)
"""
from __future__ import annotations

import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

from nfskit.core.cloud import PointCloud
from nfskit.errors import ConsistencyError, InvalidArgumentError, ParseError

FORMATS = ("kitti-bin", "internal")
KITTI_RECORD = 16
INTERNAL_MAGIC = b"NKPC"
INTERNAL_VERSION = 1
_HEADER = struct.Struct("<4sHBBQQH")

_DIGITS = re.compile(r"(\d+)")


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def label_path(path: Path) -> Path:
    return Path(path).with_suffix(".label")


def format_from_path(path: Path) -> str:
    return "kitti-bin" if Path(path).suffix == ".bin" else "internal"


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise InvalidArgumentError(f"unknown cloud format {fmt!r}; expected one of {FORMATS}")
    return fmt


def read_labels(path: Path, expected: int | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 4:
        raise ParseError("truncated label file", path, len(raw) - len(raw) % 4)
    labels = (np.frombuffer(raw, dtype="<u4") & 0xFFFF).astype(np.int64)
    if expected is not None and labels.shape[0] != expected:
        raise ConsistencyError(f"{path}: {labels.shape[0]} labels for {expected} points")
    return labels


def write_labels(labels: np.ndarray, path: Path) -> None:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.size and lab.max() > 0xFFFF:
        raise InvalidArgumentError("class ids must fit in 16 bits")
    atomic_write_bytes(path, lab.astype("<u4").tobytes())


def _read_kitti(path: Path, frame_id: int | None, sensor_id: str | None) -> PointCloud:
    raw = path.read_bytes()
    if len(raw) % KITTI_RECORD:
        raise ParseError(
            f"kitti-bin size {len(raw)} is not a multiple of {KITTI_RECORD}",
            path,
            len(raw) - len(raw) % KITTI_RECORD,
        )
    rec = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    pts = rec[:, :3].astype(np.float64)
    if not np.isfinite(pts).all():
        bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
        raise ParseError("non-finite coordinate", path, bad * KITTI_RECORD)
    lp = label_path(path)
    labels = read_labels(lp, pts.shape[0]) if lp.exists() else None
    if frame_id is None:
        m = _DIGITS.search(path.stem)
        frame_id = int(m.group(1)) if m else 0
    return PointCloud(pts, labels, frame_id, path.stem if sensor_id is None else sensor_id)


def _read_internal(path: Path) -> PointCloud:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("truncated header", path, len(raw))
    magic, version, has_labels, _, n, frame_id, id_len = _HEADER.unpack_from(raw, 0)
    if magic != INTERNAL_MAGIC:
        raise ParseError(f"bad magic {magic!r}", path, 0)
    if version != INTERNAL_VERSION:
        raise ParseError(f"unsupported version {version}", path, 4)
    off = _HEADER.size
    if len(raw) < off + id_len:
        raise ParseError("truncated sensor id", path, len(raw))
    sensor_id = raw[off : off + id_len].decode("utf-8")
    off += id_len
    need = off + 24 * n + (4 * n if has_labels else 0)
    if len(raw) != need:
        if len(raw) < need:
            raise ParseError(f"expected {need} bytes, file has {len(raw)}", path, len(raw))
        raise ConsistencyError(f"{path}: {len(raw) - need} trailing bytes after {n} points")
    pts = np.frombuffer(raw, dtype="<f8", count=3 * n, offset=off).reshape(n, 3).astype(np.float64)
    off += 24 * n
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off).astype(np.int64)
    if not np.isfinite(pts).all():
        bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
        raise ParseError("non-finite coordinate", path, _HEADER.size + id_len + 24 * bad)
    return PointCloud(pts, labels, frame_id, sensor_id)


def read_cloud(path, fmt: str | None = None, frame_id: int | None = None,
               sensor_id: str | None = None) -> PointCloud:
    """Read a cloud; ``fmt`` defaults to the one implied by the suffix.

    kitti-bin files carry no provenance: ``frame_id`` defaults to the first
    run of digits in the file stem (0 if none) and ``sensor_id`` to the stem.
    """
    path = Path(path)
    fmt = _check_format(fmt or format_from_path(path))
    if fmt == "kitti-bin":
        return _read_kitti(path, frame_id, sensor_id)
    cloud = _read_internal(path)
    if frame_id is not None or sensor_id is not None:
        cloud = PointCloud(cloud.points, cloud.labels,
                           cloud.frame_id if frame_id is None else frame_id,
                           cloud.sensor_id if sensor_id is None else sensor_id)
    return cloud


def encode_internal(cloud: PointCloud) -> bytes:
    sid = cloud.sensor_id.encode("utf-8")
    n = len(cloud)
    head = _HEADER.pack(INTERNAL_MAGIC, INTERNAL_VERSION, int(cloud.has_labels), 0, n,
                        cloud.frame_id, len(sid))
    parts = [head, sid, cloud.points.astype("<f8").tobytes()]
    if cloud.has_labels:
        parts.append(cloud.labels.astype("<u4").tobytes())
    return b"".join(parts)


def write_cloud(cloud: PointCloud, path, fmt: str | None = None) -> None:
    """Write ``cloud``; kitti-bin stores float32 coordinates and a sibling label file."""
    path = Path(path)
    fmt = _check_format(fmt or format_from_path(path))
    if fmt == "internal":
        atomic_write_bytes(path, encode_internal(cloud))
        return
    rec = np.zeros((len(cloud), 4), dtype="<f4")
    rec[:, :3] = cloud.points
    atomic_write_bytes(path, rec.tobytes())
    if cloud.has_labels:
        write_labels(cloud.labels, label_path(path))
