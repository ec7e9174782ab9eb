import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_cloud
from nfskit.core import (
    PointCloud,
    RigidTransform,
    RngStream,
    apply_transform,
    concatenate,
    read_cloud,
    rotation_zyx,
    write_cloud,
)
from nfskit.core.io import read_labels, write_labels
from nfskit.errors import ConsistencyError, InvalidArgumentError, ParseError


def _elementary(ax, ay, az):
    """Independent oracle: elementary matrices written out, multiplied by hand."""
    a, b, c = (math.radians(v) for v in (ax, ay, az))
    rx = [[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]]
    ry = [[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]]
    rz = [[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]]

    def mul(p, q):
        return [[sum(p[i][k] * q[k][j] for k in range(3)) for j in range(3)] for i in range(3)]

    return mul(rz, mul(ry, rx))


# -- PointCloud -----------------------------------------------------------------

def test_cloud_arrays_are_read_only():
    c = PointCloud(np.zeros((2, 3)), [0, 1])
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0
    with pytest.raises(ValueError):
        c.labels[0] = 3


def test_cloud_rejects_bad_shapes_and_values():
    with pytest.raises(InvalidArgumentError):
        PointCloud(np.zeros((3, 2)))
    with pytest.raises(InvalidArgumentError):
        PointCloud([[0.0, np.nan, 0.0]])
    with pytest.raises(ConsistencyError):
        PointCloud(np.zeros((3, 3)), [1, 2])


def test_empty_cloud_is_valid():
    c = PointCloud.empty(labeled=True)
    assert len(c) == 0 and c.points.shape == (0, 3) and c.labels.shape == (0,)


def test_subset_keeps_labels_in_lockstep(rng):
    c = random_cloud(rng, 50)
    mask = rng.random(50) < 0.5
    s = c.subset(mask)
    assert np.array_equal(s.points, c.points[mask])
    assert np.array_equal(s.labels, c.labels[mask])


def test_concatenate_drops_labels_if_any_part_unlabeled(rng):
    a = random_cloud(rng, 3)
    b = random_cloud(rng, 4, labeled=False)
    assert concatenate([a, b]).labels is None
    assert len(concatenate([a, a]).labels) == 6


# -- rotations and transforms ---------------------------------------------------

def test_rotation_zero_is_identity():
    assert np.array_equal(rotation_zyx(0, 0, 0).rotation, np.eye(3))


def test_quarter_turn_about_z():
    out = rotation_zyx(0, 0, 90).apply(np.array([[1.0, 0.0, 0.0]]))
    assert np.allclose(out, [[0.0, 1.0, 0.0]], atol=1e-15)


def test_rotation_matches_elementary_product():
    got = rotation_zyx(10, 20, 30).rotation
    assert np.abs(got - np.array(_elementary(10, 20, 30))).max() < 1e-15


def test_rotation_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        rotation_zyx(0, math.inf, 0)
    with pytest.raises(InvalidArgumentError):
        rotation_zyx(math.nan, 0, 0)


@given(st.tuples(*[st.floats(-720, 720, allow_nan=False)] * 3))
def test_rotation_is_proper(angles):
    r = rotation_zyx(*angles).rotation
    assert abs(np.linalg.det(r) - 1.0) < 1e-12
    assert np.abs(r @ r.T - np.eye(3)).max() < 1e-12


def test_rigid_transform_rejects_reflection():
    with pytest.raises(InvalidArgumentError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_identity_transform_returns_same_cloud(rng):
    c = random_cloud(rng, 30, frame_id=4, sensor_id="x")
    out = apply_transform(c, RigidTransform.identity())
    assert out.equals(c)


def test_translation_example():
    c = PointCloud([[1.0, 2.0, 3.0]])
    out = apply_transform(c, RigidTransform.from_translation(0.05, 0, 0))
    assert np.allclose(out.points, [[1.05, 2.0, 3.0]], atol=1e-15)


def test_transform_matches_per_point_arithmetic(rng):
    c = random_cloud(rng, 100, frame_id=2, sensor_id="a")
    r = _elementary(*rng.uniform(-180, 180, 3))
    t = rng.uniform(-5, 5, 3)
    out = apply_transform(c, RigidTransform(np.array(r), t))
    for i in range(len(c)):
        x = c.points[i]
        oracle = [sum(r[j][k] * x[k] for k in range(3)) + t[j] for j in range(3)]
        assert np.linalg.norm(out.points[i] - oracle) < 1e-12
    assert np.array_equal(out.labels, c.labels)
    assert (out.frame_id, out.sensor_id) == (2, "a")


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_transform_inverse_round_trip(seed):
    gen = np.random.default_rng(seed)
    c = random_cloud(gen, 20, scale=100.0)
    t = rotation_zyx(*gen.uniform(-180, 180, 3))
    t = RigidTransform(t.rotation, gen.uniform(-50, 50, 3))
    back = apply_transform(apply_transform(c, t), t.inverse())
    assert np.abs(back.points - c.points).max() < 1e-9


def test_compose_applies_right_operand_first(rng):
    a = RigidTransform(rotation_zyx(0, 0, 90).rotation, [1.0, 0, 0])
    b = RigidTransform.from_translation(0, 2.0, 0)
    x = rng.normal(size=(5, 3))
    assert np.allclose((a @ b).apply(x), a.apply(b.apply(x)), atol=1e-12)


# -- RNG ------------------------------------------------------------------------

def test_rng_byte_identical_across_instances():
    a, b = RngStream(42, 3), RngStream(42, 3)
    da = np.concatenate([a.random(100), a.uniform(-1, 2, 50)]).tobytes()
    db = np.concatenate([b.random(100), b.uniform(-1, 2, 50)]).tobytes()
    assert da == db
    assert a.state_bytes() == b.state_bytes()


def test_rng_matches_documented_seeding():
    ref = np.random.Generator(np.random.PCG64(np.random.SeedSequence([9, 1, 2])))
    assert RngStream(9).derive(1, 2).random(8).tobytes() == ref.random(8).tobytes()


def test_derived_streams_differ():
    m = RngStream(5)
    assert m.derive(1).random() != m.derive(2).random()


def test_uniform_degenerate_interval():
    assert RngStream(1).uniform(2.5, 2.5) == 2.5


def test_bernoulli_consumes_one_draw():
    a, b = RngStream(3), RngStream(3)
    a.bernoulli(0.0)
    b.random()
    assert a.random() == b.random()


# -- IO -------------------------------------------------------------------------

def test_empty_file_reads_as_empty_cloud(tmp_path):
    p = tmp_path / "empty.bin"
    p.write_bytes(b"")
    assert len(read_cloud(p)) == 0


def test_32_byte_kitti_file_has_two_points(tmp_path):
    p = tmp_path / "two.bin"
    p.write_bytes(struct.pack("<8f", 1, 2, 3, 0.5, 4, 5, 6, 0.9))
    c = read_cloud(p)
    assert len(c) == 2
    assert np.array_equal(c.points, [[1, 2, 3], [4, 5, 6]])


def test_truncated_kitti_file_reports_offset(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\0" * 37)
    with pytest.raises(ParseError) as err:
        read_cloud(p)
    assert err.value.offset == 32
    assert "32" in str(err.value)


def test_label_count_mismatch(tmp_path):
    p = tmp_path / "c.bin"
    p.write_bytes(b"\0" * 32)
    (tmp_path / "c.label").write_bytes(b"\0" * 12)
    with pytest.raises(ConsistencyError):
        read_cloud(p)


def test_label_high_bits_ignored(tmp_path):
    p = tmp_path / "x.label"
    p.write_bytes(np.array([0x00050003, 7], dtype="<u4").tobytes())
    assert read_labels(p).tolist() == [3, 7]
    write_labels(np.array([3, 7]), p)
    assert np.frombuffer(p.read_bytes(), "<u4").tolist() == [3, 7]


def test_kitti_frame_id_from_file_name(tmp_path):
    c = PointCloud(np.ones((1, 3)))
    write_cloud(c, tmp_path / "frame_000123_center.bin")
    got = read_cloud(tmp_path / "frame_000123_center.bin")
    assert got.frame_id == 123 and got.sensor_id == "frame_000123_center"


def test_kitti_round_trip_1000_points(tmp_path, rng):
    c = random_cloud(rng, 1000)
    f32 = c.with_points(c.points.astype(np.float32).astype(np.float64))
    write_cloud(f32, tmp_path / "r.bin")
    back = read_cloud(tmp_path / "r.bin")
    assert np.array_equal(back.points, f32.points)
    assert np.array_equal(back.labels, c.labels)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 200), st.booleans(),
       st.text(max_size=12), st.integers(0, 10**9))
def test_internal_round_trip(tmp_path_factory, seed, n, labeled, sensor, frame):
    gen = np.random.default_rng(seed)
    c = PointCloud(gen.normal(scale=50, size=(n, 3)),
                   gen.integers(0, 2**16, n) if labeled else None, frame, sensor)
    p = tmp_path_factory.mktemp("io") / "c.nkpc"
    write_cloud(c, p)
    assert read_cloud(p).equals(c)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 200))
def test_kitti_round_trip_property(tmp_path_factory, seed, n):
    gen = np.random.default_rng(seed)
    pts = gen.normal(scale=50, size=(n, 3)).astype(np.float32).astype(np.float64)
    c = PointCloud(pts, gen.integers(0, 2**16, n), 0, "frame")
    p = tmp_path_factory.mktemp("io") / "frame.bin"
    write_cloud(c, p)
    assert read_cloud(p).equals(c)


def test_internal_truncation_and_trailing_bytes(tmp_path, rng):
    p = tmp_path / "c.nkpc"
    write_cloud(random_cloud(rng, 10), p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-5])
    with pytest.raises(ParseError):
        read_cloud(p)
    p.write_bytes(raw + b"\0")
    with pytest.raises(ConsistencyError):
        read_cloud(p)
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParseError):
        read_cloud(p)


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(InvalidArgumentError):
        read_cloud(tmp_path / "a.bin", fmt="pcd")
