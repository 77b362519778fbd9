import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsemvs.geometry import SubVolume, project
from sparsemvs.scenegen import (
    PRESETS,
    Box,
    Checker,
    Constant,
    MultiRing,
    Plane,
    Ring,
    SceneSpec,
    Sphere,
    ground_truth_cloud,
    ground_truth_volume,
    preset_config,
    preset_scene,
    render,
    render_view,
    scene_from_dict,
    segment_blocked,
)

coords = st.floats(-20, 20)


def box_sdf_bruteforce(p, lo, hi):
    # distance to the box surface, sign from containment
    inside = all(l < x < h for x, l, h in zip(p, lo, hi))
    outside = math.sqrt(sum(max(l - x, 0, x - h) ** 2 for x, l, h in zip(p, lo, hi)))
    if not inside:
        return outside
    return -min(min(x - l, h - x) for x, l, h in zip(p, lo, hi))


class TestShapes:
    @given(coords, coords, coords)
    def test_box_sdf(self, x, y, z):
        box = Box((-3, -2, -1), (4, 5, 6))
        assert box.sdf(np.array([[x, y, z]]))[0] == pytest.approx(
            box_sdf_bruteforce((x, y, z), (-3, -2, -1), (4, 5, 6)), abs=1e-12)

    @given(coords, coords, coords)
    def test_sphere_sdf(self, x, y, z):
        s = Sphere((1, 2, 3), 5.0)
        want = math.dist((x, y, z), (1, 2, 3)) - 5.0
        assert s.sdf(np.array([[x, y, z]]))[0] == pytest.approx(want, abs=1e-12)

    def test_ray_hits(self):
        s = Sphere((0, 0, 0), 5.0)
        t = s.intersect(np.array([[-20.0, 0, 0], [-20.0, 9, 0]]), np.array([[1.0, 0, 0], [1.0, 0, 0]]))
        assert t[0] == pytest.approx(15.0) and np.isinf(t[1])
        b = Box((0, 0, 0), (2, 2, 2))
        assert b.intersect(np.array([[1.0, 1, -5]]), np.array([[0, 0, 1.0]]))[0] == pytest.approx(5.0)
        p = Plane((0, 0, 0), (0, 0, 1), 10.0)
        assert p.intersect(np.array([[0.0, 0, 4]]), np.array([[0, 0, -1.0]]))[0] == pytest.approx(4.0)

    def test_cube_hits_sphere(self):
        s = Sphere((0, 0, 0), 5.0)
        hits = s.cube_hits(np.array([[5.0, 0, 0], [0, 0, 0], [9, 0, 0]]), 0.5)
        assert hits.tolist() == [True, False, False]


class TestGroundTruth:
    def test_sphere_cloud_near_surface(self):
        spec = SceneSpec(Sphere((0, 0, 0), 10.0), Constant(), Ring(2, 40.0))
        gt = ground_truth_cloud(spec, 1.0)
        r = np.linalg.norm(gt.points, axis=1)
        assert len(gt) > 0
        assert np.all(np.abs(r - 10.0) <= math.sqrt(3) / 2 + 1e-9)

    def test_volume_consistent_with_cloud(self):
        spec = SceneSpec(Sphere((0, 0, 0), 10.0), Constant(), Ring(2, 40.0))
        sv = SubVolume(1, (4.0, -6.0, -6.0), 1.0, 8)
        gt = ground_truth_volume(spec, sv)
        cloud = ground_truth_cloud(spec, 1.0, anchor=(0.0, 0.0, 0.0))
        inside = np.all((cloud.points > sv.lower) & (cloud.points < sv.lower + 8), axis=1)
        assert int(gt.occupancy.sum()) == int(inside.sum())

    def test_bad_resolution(self):
        spec = preset_scene("sphere")
        with pytest.raises(ValueError):
            ground_truth_cloud(spec, 0.0)


class TestRendering:
    def test_deterministic(self):
        spec = SceneSpec(Sphere((0, 0, 0), 10.0), Checker(4.0, random_colors=True),
                         Ring(3, 40.0), (32, 32))
        a, _ = render(spec)
        b, _ = render(spec)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.image, y.image)

    def test_range_and_center_hit(self):
        spec = SceneSpec(Sphere((0, 0, 0), 10.0), Constant((0.2, 0.4, 0.6)), Ring(2, 40.0), (33, 33))
        img = render_view(spec, spec.cameras()[0])
        assert img.min() >= 0 and img.max() <= 1
        np.testing.assert_allclose(img[16, 16], [0.2, 0.4, 0.6])
        assert not np.allclose(img[0, 0], [0.2, 0.4, 0.6])

    def test_occluder_blocks(self):
        spec = SceneSpec(Sphere((0, 0, 0), 5.0), Constant(), Ring(2, 40.0),
                         occluders=(Box((10, -2, -2), (12, 2, 2)),))
        assert segment_blocked(spec, (40, 0, 0), (0, 0, 0))
        assert not segment_blocked(spec, (-40, 0, 0), (0, 0, 0))


class TestRigs:
    def test_ring_faces_target(self):
        for cam in Ring(6, 30.0, 5.0).cameras((40, 40)):
            u, v = project(cam, (0.0, 0.0, 0.0))
            assert (u, v) == pytest.approx((19.5, 19.5))
            assert np.linalg.norm(cam.center[:2]) == pytest.approx(30.0)

    def test_multiring(self):
        cams = MultiRing(4, 30.0, (10.0, -10.0)).cameras((20, 20))
        assert [c.id for c in cams] == list(range(1, 9))
        z = [round(c.center[2], 9) for c in cams]
        assert z == [10.0] * 4 + [-10.0] * 4
        phi = [math.degrees(math.atan2(c.center[1], c.center[0])) % 360 for c in cams]
        assert phi[4] == pytest.approx(45.0)

    def test_too_few(self):
        with pytest.raises(ValueError):
            Ring(1, 10.0).cameras((8, 8))


class TestConfig:
    def test_presets_load(self):
        for name in PRESETS:
            spec = preset_scene(name)
            assert len(spec.cameras()) >= 8
        assert len(preset_scene("wall").occluders) == 1

    def test_preset_config_is_a_copy(self):
        a = preset_config("sphere")
        a["shape"]["radius"] = 1.0
        assert preset_config("sphere")["shape"]["radius"] == 50.0

    def test_unknown(self):
        with pytest.raises(ValueError):
            preset_config("nope")
        cfg = preset_config("sphere")
        cfg["rig"]["type"] = "spiral"
        with pytest.raises(ValueError):
            scene_from_dict(cfg)

    def test_from_dict(self):
        spec = scene_from_dict({
            "shape": {"type": "box", "min": [0, 0, 0], "max": [1, 2, 3]},
            "texture": {"type": "gradient"},
            "rig": {"num_cameras": 3, "radius": 10.0},
            "image_size": [20, 30],
        })
        assert spec.image_size == (20, 30)
        assert spec.shape == Box((0, 0, 0), (1, 2, 3))
        assert spec.rig == Ring(3, 10.0)
