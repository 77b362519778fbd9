import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import balanced_ce_decimal
from sparsemvs.geometry import SubVolume
from sparsemvs.loss import (
    GroundTruthVolume,
    LossError,
    balanced_cross_entropy,
    occupancy_ratio,
    refine_mse,
    surface_weight,
    total_loss,
)
from sparsemvs.predictor import P_MAX, P_MIN, ProbabilityVolume

SV = SubVolume(1, (0, 0, 0), 1.0, 2)
occ = arrays(bool, (2, 2, 2))
prob = arrays(float, (2, 2, 2), elements=st.floats(0.001, 0.999))


def gt(a):
    return GroundTruthVolume(SV, a)


def pv(a):
    return ProbabilityVolume(SV, a)


class TestOccupancy:
    def test_empty_and_half(self):
        assert occupancy_ratio([gt(np.zeros((2, 2, 2)))]) == 0
        half = np.zeros((2, 2, 2), bool)
        half[0] = True
        assert occupancy_ratio([gt(half)]) == 0.5
        assert surface_weight([gt(half)]) == 0.5

    @given(st.lists(occ, min_size=1, max_size=5))
    def test_counting(self, vols):
        assert occupancy_ratio([gt(v) for v in vols]) == sum(int(v.sum()) for v in vols) / (8 * len(vols))

    def test_errors(self):
        with pytest.raises(LossError):
            occupancy_ratio([])
        with pytest.raises(LossError, match="shape-mismatch"):
            gt(np.zeros((3, 3, 3)))


class TestBalancedCrossEntropy:
    def test_hand_case(self):
        sv = SubVolume(1, (0, 0, 0), 1.0, 1)
        val = balanced_cross_entropy(np.array([0.8, 0.3]), np.array([1, 0]), 0.75)
        assert val == pytest.approx(0.25652, abs=1e-5)
        assert val == pytest.approx(balanced_ce_decimal([1, 0], [0.8, 0.3], 0.75), abs=1e-15)
        assert sv.side_voxels == 1

    def test_near_perfect(self):
        s = np.zeros((2, 2, 2), bool)
        s[0] = True
        p = pv(np.where(s, 1.0, 0.0))
        assert balanced_cross_entropy(p, gt(s), 0.3) < 1e-4 * 8

    @given(prob, occ)
    def test_half_beta_is_half_ce(self, p, s):
        ce = -np.sum(s * np.log(p) + (1 - s) * np.log(1 - p))
        assert balanced_cross_entropy(p, s, 0.5) == pytest.approx(0.5 * ce, rel=1e-12, abs=1e-12)

    @given(prob, occ, st.floats(0, 1))
    def test_matches_decimal(self, p, s, beta):
        want = balanced_ce_decimal(s.ravel(), p.ravel(), beta)
        assert balanced_cross_entropy(p, s, beta) == pytest.approx(want, rel=1e-12, abs=1e-12)

    @given(prob, occ, st.floats(0.01, 0.99), st.integers(0, 7))
    def test_decreases_toward_target(self, p, s, beta, idx):
        i = np.unravel_index(idx, p.shape)
        q = p.copy()
        q[i] = (q[i] + (1.0 if s[i] else 0.0)) / 2
        if q[i] == p[i]:
            return
        assert balanced_cross_entropy(q, s, beta) < balanced_cross_entropy(p, s, beta)

    @given(prob, occ, prob)
    def test_extreme_betas(self, p, s, q):
        # beta = 1 ignores negatives, beta = 0 ignores positives
        p_neg = np.where(s, p, q)
        assert balanced_cross_entropy(p, s, 1.0) == balanced_cross_entropy(p_neg, s, 1.0)
        p_pos = np.where(s, q, p)
        assert balanced_cross_entropy(p, s, 0.0) == balanced_cross_entropy(p_pos, s, 0.0)

    def test_errors(self):
        with pytest.raises(LossError, match="shape-mismatch"):
            balanced_cross_entropy(np.zeros(3) + 0.5, np.zeros(2), 0.5)
        with pytest.raises(LossError):
            balanced_cross_entropy(np.zeros(2) + 0.5, np.zeros(2), 1.5)


class TestRefineMse:
    def test_zero_iff_equal(self, rng):
        s = rng.uniform(size=(2, 2, 2)) > 0.5
        assert refine_mse(s.astype(float), gt(s)) == 0.0
        assert refine_mse(pv(s.astype(float)), gt(s)) <= 8 * 1e-10
        p = s.astype(float)
        p[0, 0, 0] = 0.5
        assert refine_mse(p, gt(s)) > 0

    def test_half(self):
        assert refine_mse(np.full((2, 2, 2), 0.5), gt(np.zeros((2, 2, 2)))) == 8 * 0.25

    @given(prob, occ)
    def test_summation(self, p, s):
        assert refine_mse(p, s) == pytest.approx(sum((float(a) - float(b)) ** 2
                                                     for a, b in zip(p.ravel(), s.ravel())), rel=1e-12)


class TestTotal:
    def test_values(self):
        assert total_loss(0, 0) == 0
        assert total_loss(1.5, 2.5) == 4.0
        with pytest.raises(LossError):
            total_loss(float("inf"), 0)

    def test_composition(self, rng):
        s = rng.uniform(size=(2, 2, 2)) > 0.5
        p = pv(rng.uniform(size=(2, 2, 2)))
        assert total_loss(balanced_cross_entropy(p, gt(s), 0.4), refine_mse(p, gt(s))) == \
            balanced_cross_entropy(p, gt(s), 0.4) + refine_mse(p, gt(s))
        assert P_MIN < P_MAX
