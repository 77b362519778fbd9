import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsemvs.geometry import CameraView, intrinsics_matrix, look_at

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_camera(cid, center, target=(0.0, 0.0, 0.0), f=100.0, size=(64, 64), image=None,
                up=(0.0, 0.0, 1.0)):
    H, W = size
    R, t = look_at(center, target, up)
    K = intrinsics_matrix(f, f, (W - 1) / 2, (H - 1) / 2)
    if image is None:
        image = np.zeros((H, W, 3))
    return CameraView(cid, K, R, t, image)


def random_camera(rng, cid=1, target=(0.0, 0.0, 0.0), dist=(5.0, 20.0), f=(20.0, 200.0),
                  size=(48, 64), image=None):
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    center = np.asarray(target) + direction * rng.uniform(*dist)
    up = rng.normal(size=3)
    if image is None:
        image = rng.uniform(size=(*size, 3))
    return make_camera(cid, center, target, rng.uniform(*f), size, image, up)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
