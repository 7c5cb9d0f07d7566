import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdpriv.dp_core import NOISELESS, InvalidParameterError, derive_rng
from hdpriv.mechanism import ShrinkageMatrix, stretch_profile
from hdpriv.similarity import (
    HDPCosineScorer,
    Profile,
    UndefinedSimilarityError,
    WeightedProfile,
    cosine_exact,
    cosine_post_process,
    hdp_cosine,
    hdp_scalar_product,
    stretched_scalar_product,
)

U = 10


def P(*items):
    return Profile(list(items), U)


def W(items, weights=None):
    p = Profile(list(items), U)
    return WeightedProfile.uniform(p) if weights is None else WeightedProfile(p, weights)


def test_profile_invariants():
    assert P(3, 1, 2).items.tolist() == [1, 2, 3]
    with pytest.raises(InvalidParameterError):
        P(1, 1)
    with pytest.raises(InvalidParameterError):
        P(10)
    with pytest.raises(InvalidParameterError):
        P(-1)
    assert P(0, 3).indicator().tolist() == [1, 0, 0, 1, 0, 0, 0, 0, 0, 0]


def test_weighted_profile_invariants():
    with pytest.raises(InvalidParameterError):
        W([1, 2], [0.5])
    with pytest.raises(InvalidParameterError):
        W([1], [1.5])


@pytest.mark.parametrize("x,y,expected", [
    ((1, 2), (2, 3), 0.5),
    ((4, 5, 6), (4, 5, 6), 1.0),
    ((1,), (2,), 0.0),
])
def test_cosine_exact_examples(x, y, expected):
    assert cosine_exact(P(*x), P(*y)) == pytest.approx(expected)


def test_cosine_undefined_and_mismatch():
    with pytest.raises(UndefinedSimilarityError):
        cosine_exact(P(), P(1))
    with pytest.raises(InvalidParameterError):
        cosine_exact(P(1), Profile([1], U + 1))
    with pytest.raises(UndefinedSimilarityError):
        hdp_cosine(W([]), W([1]), 1.0, NOISELESS)


def test_scalar_product_noiseless_examples():
    assert hdp_scalar_product(W([1, 2]), W([2, 3]), 1.0, NOISELESS).released == 1.0
    assert hdp_scalar_product(W([1], [0.5]), W([1], [0.5]), 1.0, NOISELESS).released == 0.25


def test_scalar_product_matches_dense_stretch():
    rng = np.random.default_rng(2)
    for _ in range(50):
        xi = np.sort(rng.choice(U, size=int(rng.integers(1, U)), replace=False))
        yi = np.sort(rng.choice(U, size=int(rng.integers(1, U)), replace=False))
        x, y = W(xi, rng.random(len(xi))), W(yi, rng.random(len(yi)))
        vx, vy = np.ones(U), np.ones(U)
        vx[xi], vy[yi] = x.weights, y.weights
        dense = stretch_profile(x.profile.indicator(), ShrinkageMatrix(vx)) @ stretch_profile(
            y.profile.indicator(), ShrinkageMatrix(vy))
        assert stretched_scalar_product(x, y) == pytest.approx(dense)


def test_scalar_product_noise_scale():
    out = hdp_scalar_product(W([1]), W([1]), 0.5, derive_rng(0))
    assert out.noise_scale.sigma == 2.0


def test_scalar_product_universe_mismatch():
    with pytest.raises(InvalidParameterError):
        hdp_scalar_product(W([1]), WeightedProfile.uniform(Profile([1], 99)), 1.0, NOISELESS)


def test_cosine_noiseless_equals_exact():
    x, y = W([1, 2, 5]), W([2, 5, 7, 9])
    assert hdp_cosine(x, y, 1.0, NOISELESS) == pytest.approx(cosine_exact(x.profile, y.profile))


def test_cosine_half_weights():
    x = W([1, 2, 3, 4], [0.5] * 4)
    assert hdp_cosine(x, x, 1.0, NOISELESS) == pytest.approx(0.25)


def test_clamping():
    assert cosine_post_process(-3.0, 2, 2) == 0.0
    assert cosine_post_process(9.0, 2, 2) == 1.0


@settings(max_examples=50)
@given(st.integers(0, 2**32))
def test_symmetry_under_mirrored_seeds(seed):
    x, y = W([1, 2, 3], [0.2, 1, 0.5]), W([2, 3, 8], [0.9, 0.1, 1])
    a = hdp_cosine(x, y, 1.0, derive_rng(seed))
    b = hdp_cosine(y, x, 1.0, derive_rng(seed))
    assert a == b
    assert 0.0 <= a <= 1.0


class _Replay:
    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return self.u


def test_scorer_matches_single_pair_mechanism():
    rng = np.random.default_rng(6)
    profiles = []
    for _ in range(8):
        items = np.sort(rng.choice(U, size=int(rng.integers(1, 6)), replace=False))
        profiles.append(W(items, rng.random(len(items))))
    scorer = HDPCosineScorer(profiles, 0.5, derive_rng(1))
    for a in range(8):
        for b in range(8):
            if a != b:
                expected = hdp_cosine(profiles[a], profiles[b], 0.5, _Replay(scorer._uniforms[a, b]))
                assert scorer.score(a, b) == pytest.approx(expected, abs=1e-12)
    assert scorer.evaluations == 56


def test_scorer_without_noise_is_exact():
    profiles = [W([1, 2]), W([2, 3]), W([7])]
    scorer = HDPCosineScorer(profiles, None)
    assert scorer.score(0, 1) == pytest.approx(0.5)
    assert scorer.score(0, 2) == 0.0
    with pytest.raises(InvalidParameterError):
        scorer.score(1, 1)


def test_scorer_requires_stream_with_epsilon():
    with pytest.raises(InvalidParameterError):
        HDPCosineScorer([W([1]), W([2])], 1.0, None)
