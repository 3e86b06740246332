import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from palmtex import glcm, haralick
from palmtex.glcm import CooccurrenceMatrix, NormalizedCooccurrence

from oracles import brute_features, brute_intermediates, random_probs

WORKED_C = np.array([[1, 2, 1], [3, 0, 1], [1, 2, 1]])


def point_mass(n, at=(0, 0)):
    p = np.zeros((n, n))
    p[at] = 1.0
    return NormalizedCooccurrence(p)


class TestIntermediates:
    def test_point_mass(self):
        t = haralick.intermediates(point_mass(5))
        assert (t.HXY, t.HX, t.HY) == (0.0, 0.0, 0.0)
        assert t.mu_x == t.mu_y == 1.0  # levels are 1-based
        assert t.sigma_x == t.sigma_y == 0.0

    @pytest.mark.parametrize("n", [2, 4, 32])
    def test_uniform(self, n):
        t = haralick.intermediates(NormalizedCooccurrence(np.full((n, n), 1 / n**2)))
        for h in (t.HXY, t.HXY1, t.HXY2):
            assert h == pytest.approx(2 * math.log(n), rel=1e-12)

    def test_worked_example_against_loops(self):
        p = WORKED_C / 12
        got = haralick.intermediates(NormalizedCooccurrence(p))
        ref = brute_intermediates(p.tolist())
        for key in ("mu_x", "mu_y", "sigma_x", "sigma_y", "HX", "HY", "HXY", "HXY1", "HXY2"):
            assert getattr(got, key) == pytest.approx(ref[key], rel=0, abs=1e-12), key
        np.testing.assert_allclose(got.Q, ref["Q"], rtol=0, atol=1e-12)

    def test_gibbs(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            t = haralick.intermediates(NormalizedCooccurrence(random_probs(rng, 8)))
            assert t.HXY1 >= t.HXY - 1e-9
            assert t.HXY2 >= t.HXY - 1e-9


class TestFeatures:
    def test_constant_block(self):
        f = haralick.features(point_mass(32, (17, 17)))
        assert f.angular_second_moment == 1.0
        assert f.contrast == 0.0
        assert f.inverse_difference_moment == 1.0
        for v in (f.sum_entropy, f.entropy, f.difference_variance, f.difference_entropy):
            assert abs(v) <= 1e-12
        assert f.correlation == 0.0
        assert f.info_correlation_1 == 0.0
        assert f.max_correlation_coeff == 0.0

    def test_worked_example_asm(self):
        f = haralick.features(glcm.normalize(CooccurrenceMatrix(WORKED_C)))
        assert f.angular_second_moment == pytest.approx(22 / 144, rel=1e-12)

    def test_named_access(self):
        f = haralick.features(NormalizedCooccurrence(WORKED_C / 12))
        assert len(f) == 14
        assert f[1] == f.contrast
        assert haralick.FEATURE_NAMES[13] == "max_correlation_coeff"

    def test_random_against_brute_force(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = (4, 8, 32)[seed % 3]
            p = random_probs(rng, n)
            got = np.array(haralick.features(NormalizedCooccurrence(p)))
            np.testing.assert_allclose(got, brute_features(p), rtol=1e-9, atol=0)

    def test_stack_matches_single(self):
        rng = np.random.default_rng(1)
        stack = np.stack([random_probs(rng, 8) for _ in range(5)])
        rows = haralick.features_stack(stack)
        for p, row in zip(stack, rows):
            np.testing.assert_allclose(row, haralick.features(NormalizedCooccurrence(p)), rtol=1e-13)

    def test_single_row_support_correlation_sentinel(self):
        p = np.zeros((4, 4))
        p[2, :] = 0.25
        f = haralick.features(NormalizedCooccurrence(p))
        assert f.correlation == 0.0
        assert f.max_correlation_coeff == 0.0

    def test_perfectly_dependent_has_unit_max_correlation(self):
        # block-diagonal dependence: two separated groups give second eigenvalue 1
        p = np.zeros((4, 4))
        p[0, 0] = p[1, 1] = p[2, 2] = p[3, 3] = 0.25
        assert haralick.features(NormalizedCooccurrence(p)).max_correlation_coeff == pytest.approx(1.0)


# normalized pair counts, the only inputs the pipeline ever produces
prob_matrices = st.integers(2, 12).flatmap(
    lambda n: arrays(np.int64, (n, n), elements=st.integers(0, 10_000))
).filter(lambda a: a.sum() > 0).map(lambda a: a / a.sum())


@settings(max_examples=100, deadline=None)
@given(p=prob_matrices, data=st.data())
def test_permutation_covariance(p, data):
    perm = data.draw(st.permutations(range(p.shape[0])))
    q = p[np.ix_(perm, perm)]
    a = haralick.features(NormalizedCooccurrence(p))
    b = haralick.features(NormalizedCooccurrence(q))
    assert b.angular_second_moment == pytest.approx(a.angular_second_moment, rel=1e-12)
    assert b.entropy == pytest.approx(a.entropy, rel=1e-12, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(p=prob_matrices)
def test_bounds(p):
    n = p.shape[0]
    f = haralick.features(NormalizedCooccurrence(p))
    slack = 1e-9
    assert 0 < f.angular_second_moment <= 1 + slack
    assert 0 < f.inverse_difference_moment <= 1 + slack
    assert -1 - slack <= f.correlation <= 1 + slack
    assert 0 <= f.info_correlation_2 <= 1 + slack
    assert 0 <= f.max_correlation_coeff <= 1 + slack
    assert -slack <= f.sum_entropy <= math.log(2 * n - 1) + slack
    assert -slack <= f.entropy <= 2 * math.log(n) + slack
    assert -slack <= f.difference_entropy <= math.log(n) + slack
    diagonal_only = p[~np.eye(n, dtype=bool)].sum() <= 1e-12
    assert (abs(f.contrast) <= 1e-12) == diagonal_only


@settings(max_examples=100, deadline=None)
@given(p=prob_matrices)
def test_info_correlation_identity(p):
    t = haralick.intermediates(NormalizedCooccurrence(p))
    f = haralick.features(NormalizedCooccurrence(p))
    gap = t.HXY2 - t.HXY
    assume(gap > 0)
    assert f.info_correlation_2**2 + math.exp(-2 * gap) == pytest.approx(1.0, abs=1e-9)


marginal_vectors = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        arrays(np.int64, n, elements=st.integers(0, 1000)).filter(lambda a: a.sum() > 0),
        arrays(np.int64, n, elements=st.integers(0, 1000)).filter(lambda a: a.sum() > 0),
    )
)


@settings(max_examples=100, deadline=None)
@given(vecs=marginal_vectors)
def test_independent_distribution(vecs):
    px, py = (v / v.sum() for v in vecs)
    p = np.outer(px, py)
    t = haralick.intermediates(NormalizedCooccurrence(p))
    f = haralick.features(NormalizedCooccurrence(p))
    assert t.HXY == pytest.approx(t.HXY1, abs=1e-9)
    assert abs(f.info_correlation_1) <= 1e-9


@pytest.mark.parametrize("n", [1, 3, 32])
def test_point_mass_max_correlation(n):
    assert haralick.features(point_mass(n, (n - 1, 0))).max_correlation_coeff == 0.0
