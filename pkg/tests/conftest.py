import numpy as np
import pytest

from nfskit.core import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_cloud(gen, n, labeled=True, scale=20.0, frame_id=0, sensor_id="s"):
    pts = gen.uniform(-scale, scale, size=(n, 3))
    labels = gen.integers(0, 8, size=n) if labeled else None
    return PointCloud(pts, labels, frame_id, sensor_id)
