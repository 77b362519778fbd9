import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_camera, random_camera
from oracles import ray_pool_bruteforce
from sparsemvs.fusion import FusionError, fuse, ray_pool, ray_votes, threshold_binarize
from sparsemvs.geometry import SubVolume, pixel_indices
from sparsemvs.predictor import P_MAX, P_MIN, ProbabilityVolume
from sparsemvs.view_selection import ViewPairScore

SV = SubVolume(1, (0, 0, 0), 1.0, 2)
probs = arrays(float, (2, 2, 2), elements=st.floats(0, 1))


def vol(p, sv=SV):
    return ProbabilityVolume(sv, np.broadcast_to(np.asarray(p, dtype=float), (sv.side_voxels,) * 3))


def score(w):
    return ViewPairScore((1, 2), 0.3, (0, 0), 1.0, w, w)


class TestFuse:
    def test_single_identity(self):
        v = vol(0.3)
        assert fuse([(score(0.2), v)]) is v

    def test_equal_weights(self):
        out = fuse([(1.0, vol(0.2)), (1.0, vol(0.8))])
        np.testing.assert_allclose(out.probs, 0.5, atol=1e-15)

    def test_weights_one_three(self):
        out = fuse([(1.0, vol(0.0)), (3.0, vol(1.0))])
        np.testing.assert_allclose(out.probs, (P_MIN + 3 * P_MAX) / 4, rtol=1e-15)
        assert out.probs[0, 0, 0] == pytest.approx(0.75, abs=1e-6)

    def test_zero_weight(self):
        with pytest.raises(FusionError, match="zero-weight"):
            fuse([(0.0, vol(0.2)), (0.0, vol(0.3))])
        with pytest.raises(FusionError, match="zero-weight"):
            fuse([(score(0.0), vol(0.2)), (score(0.0), vol(0.3))])

    def test_mismatch(self):
        with pytest.raises(FusionError, match="cvc-mismatch"):
            fuse([(1.0, vol(0.2)), (1.0, vol(0.3, SubVolume(1, (5, 0, 0), 1.0, 2)))])

    def test_negative_weight(self):
        with pytest.raises(FusionError):
            fuse([(-1.0, vol(0.2)), (2.0, vol(0.3))])

    def test_underflowed_scores_use_log_weights(self):
        a = ViewPairScore((1, 2), 0.3, (400, 400), 0.0, 1.0, 0.0, -800.0)
        b = ViewPairScore((1, 3), 0.3, (400, 401), 0.0, 1.0, 0.0, -800.0 - math.log(3))
        out = fuse([(a, vol(0.2)), (b, vol(0.6))])
        np.testing.assert_allclose(out.probs, (3 * 0.2 + 0.6) / 4, rtol=1e-12)

    @given(st.lists(st.tuples(st.floats(0.01, 100), probs), min_size=2, max_size=5),
           st.floats(1e-3, 1e3), st.randoms(use_true_random=False))
    def test_algebra(self, items, c, rnd):
        preds = [(w, vol(p)) for w, p in items]
        out = fuse(preds).probs
        stack = np.stack([v.probs for _, v in preds])
        assert np.all(out >= stack.min(axis=0)) and np.all(out <= stack.max(axis=0))
        scaled = fuse([(w * c, v) for w, v in preds]).probs
        np.testing.assert_allclose(scaled, out, rtol=0, atol=1e-12)
        shuffled = list(preds)
        rnd.shuffle(shuffled)
        np.testing.assert_array_equal(fuse(shuffled).probs, out)


class TestThreshold:
    def test_strict(self):
        assert not threshold_binarize(vol(0.7), 0.7).any()

    def test_single(self):
        p = np.full((2, 2, 2), 0.69)
        p[1, 0, 1] = 0.71
        assert threshold_binarize(vol(p), 0.7).sum() == 1

    def test_tau_range(self):
        with pytest.raises(FusionError):
            threshold_binarize(vol(0.5), 1.0)


def axis_camera(cid, center, target, size=4, f=1.0):
    return make_camera(cid, center, target, f=f, size=(size, size), image=np.zeros((size, size, 3)))


class TestRayPool:
    def test_single_ray_argmax(self):
        sv = SubVolume(1, (0, 0, 0), 1.0, 3)
        p = np.zeros((3, 3, 3))
        p[:, 1, 1] = [0.1, 0.9, 0.3]
        cam = make_camera(1, (50, 1.5, 1.5), target=(1.5, 1.5, 1.5), f=0.01, size=(1, 1),
                          image=np.zeros((1, 1, 3)))
        v = ProbabilityVolume(sv, p)
        out = ray_pool(v, threshold_binarize(v, 0.5), [cam, cam], 0.5)
        assert out.sum() == 1 and out[1, 1, 1]

    def test_below_tau_empty(self, rng):
        sv = SubVolume(1, (0, 0, 0), 1.0, 4)
        v = ProbabilityVolume(sv, rng.uniform(0, 0.5, size=(4, 4, 4)))
        cam = axis_camera(1, (20, 2, 2), (2, 2, 2))
        assert not ray_pool(v, np.ones((4, 4, 4), bool), [cam], 0.5).any()

    def test_needs_views(self):
        with pytest.raises(FusionError):
            ray_pool(vol(0.9), np.ones((2, 2, 2), bool), [], 0.5)

    def check_against_oracle(self, rng, cams, trials=20):
        sv = SubVolume(1, (0, 0, 0), 1.0, 4)
        for _ in range(trials):
            p = rng.uniform(size=(4, 4, 4))
            p[rng.uniform(size=p.shape) < 0.2] = 0.95  # force ties
            v = ProbabilityVolume(sv, p)
            occ = threshold_binarize(v, 0.5)
            out = ray_pool(v, occ, cams, 0.5)
            want = ray_pool_bruteforce(v.probs, occ, sv.voxel_centers(), cams, 0.5)
            np.testing.assert_array_equal(out, want)
            assert not np.any(out & ~occ)
            for cam in cams:
                votes, seen = ray_votes(v, cam)
                col, row, valid = pixel_indices(cam, sv.voxel_centers())
                keys = (row * 100 + col)[out & valid]
                assert len(keys) == len(set(keys.tolist()))

    def test_orthogonal_views(self, rng):
        cams = [axis_camera(1, (40, 2, 2), (2, 2, 2), f=20.0, size=8),
                axis_camera(2, (2, 40, 2), (2, 2, 2), f=20.0, size=8)]
        self.check_against_oracle(rng, cams)

    def test_random_views(self, rng):
        for _ in range(5):
            cams = [random_camera(rng, k, target=(2, 2, 2), dist=(8, 20), f=(3, 20), size=(6, 6))
                    for k in (1, 2, 3)]
            self.check_against_oracle(rng, cams, trials=5)
