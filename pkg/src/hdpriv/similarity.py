"""Cosine similarity between item-set profiles, exact and heterogeneously private.

Profiles are sparse: a sorted array of item ids in ``[0, universe_size)``.
Privacy weights are stored only for present items, since an absent item's
indicator coordinate is zero and annihilates its weight in the scalar product.

The private cosine stretches both indicator vectors by their owners' weights,
noises the scalar product with Laplace(1/eps) (S(SP) = 1 on binary vectors),
then divides by the public profile sizes and clamps to [0, 1]. Division and
clamping only touch the released numerator, so they are post-processing.

Caveat: the sizes used as denominators are the true, unnoised profile sizes.
Treating them as public means profile size itself is not protected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from hdpriv.dp_core import (
    NOISELESS,
    InvalidParameterError,
    LaplaceScale,
    MechanismOutput,
    PrivacyBudget,
    RandomStream,
    laplace_inverse_cdf,
    laplacian_mechanism,
)

SCALAR_PRODUCT_SENSITIVITY = 1.0


class UndefinedSimilarityError(ValueError):
    """Cosine similarity is undefined for an empty profile."""


@dataclass(frozen=True, eq=False)
class Profile:
    items: np.ndarray
    universe_size: int

    def __post_init__(self) -> None:
        if self.universe_size < 1:
            raise InvalidParameterError("universe_size must be positive")
        items = np.unique(np.asarray(self.items, dtype=np.int64))
        if len(items) != len(np.asarray(self.items).ravel()):
            raise InvalidParameterError("duplicate items in profile")
        if len(items) and (items[0] < 0 or items[-1] >= self.universe_size):
            raise InvalidParameterError("item id outside the universe")
        items.setflags(write=False)
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Profile)
            and self.universe_size == other.universe_size
            and np.array_equal(self.items, other.items)
        )

    __hash__ = None

    def indicator(self) -> np.ndarray:
        chi = np.zeros(self.universe_size)
        chi[self.items] = 1.0
        return chi


@dataclass(frozen=True, eq=False)
class WeightedProfile:
    profile: Profile
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).ravel()
        if len(w) != len(self.profile):
            raise InvalidParameterError(
                f"{len(w)} weights for a profile of {len(self.profile)} items"
            )
        if np.any(~np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise InvalidParameterError("privacy weights must lie in [0, 1]")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, profile: Profile, weight: float = 1.0) -> "WeightedProfile":
        return cls(profile, np.full(len(profile), weight))

    def __len__(self) -> int:
        return len(self.profile)


def _check_universe(x: Profile, y: Profile) -> None:
    if x.universe_size != y.universe_size:
        raise InvalidParameterError(
            f"universe mismatch: {x.universe_size} vs {y.universe_size}"
        )


def _check_nonempty(*profiles: Profile) -> None:
    if any(len(p) == 0 for p in profiles):
        raise UndefinedSimilarityError("cosine similarity of an empty profile")


def cosine_exact(x: Profile, y: Profile) -> float:
    _check_universe(x, y)
    _check_nonempty(x, y)
    common = len(np.intersect1d(x.items, y.items, assume_unique=True))
    return common / math.sqrt(len(x) * len(y))


def stretched_scalar_product(x: WeightedProfile, y: WeightedProfile) -> float:
    """sum_i v^x_i x_i v^y_i y_i, without noise. Never released directly."""
    _check_universe(x.profile, y.profile)
    _, ix, iy = np.intersect1d(
        x.profile.items, y.profile.items, assume_unique=True, return_indices=True
    )
    return float(np.dot(x.weights[ix], y.weights[iy]))


def hdp_scalar_product(
    x: WeightedProfile,
    y: WeightedProfile,
    budget: PrivacyBudget | float,
    rng: RandomStream,
) -> MechanismOutput:
    return laplacian_mechanism(
        stretched_scalar_product(x, y), SCALAR_PRODUCT_SENSITIVITY, budget, rng
    )


def cosine_post_process(released_numerator: float, size_x: int, size_y: int) -> float:
    """Normalise a released scalar product by the public sizes and clamp to [0, 1]."""
    return min(1.0, max(0.0, released_numerator / math.sqrt(size_x * size_y)))


def hdp_cosine(
    x: WeightedProfile,
    y: WeightedProfile,
    budget: PrivacyBudget | float,
    rng: RandomStream,
) -> float:
    _check_nonempty(x.profile, y.profile)
    out = hdp_scalar_product(x, y, budget, rng)
    return cosine_post_process(out.released, len(x), len(y))


class HDPCosineScorer:
    """Batch source of private cosine scores for a fixed population.

    Holds the profiles and weights so that callers (the gossip simulator) only
    ever see released scores. The noiseless stretched products for all pairs are
    computed once as a sparse Gram matrix; the noise for ordered pair (a, b) is
    the inverse-CDF image of one uniform U[a, b] drawn up front, so each pair's
    release is independent of the order in which pairs are scored. Scoring a
    pair twice would reuse its draw, so callers must cache (the simulator does).

    ``epsilon=None`` gives exact cosine on the weighted profiles (noise-free).
    """

    def __init__(
        self,
        profiles: Sequence[WeightedProfile],
        epsilon: float | None,
        rng: RandomStream | None = None,
    ) -> None:
        if not profiles:
            raise InvalidParameterError("no profiles")
        universe = profiles[0].profile.universe_size
        for p in profiles:
            if p.profile.universe_size != universe:
                raise InvalidParameterError("profiles span different universes")
            _check_nonempty(p.profile)
        n = len(profiles)
        rows = np.repeat(np.arange(n), [len(p) for p in profiles])
        cols = np.concatenate([p.profile.items for p in profiles])
        vals = np.concatenate([p.weights for p in profiles])
        W = sparse.csr_matrix((vals, (rows, cols)), shape=(n, universe))
        self._products = np.asarray((W @ W.T).todense(), dtype=float)
        self._sizes = np.array([len(p) for p in profiles], dtype=float)
        self._norm = np.sqrt(np.outer(self._sizes, self._sizes))
        self.epsilon = epsilon
        if epsilon is None:
            self._noise = np.zeros((n, n))
        else:
            scale = LaplaceScale.from_budget(SCALAR_PRODUCT_SENSITIVITY, PrivacyBudget(epsilon))
            if rng is None:
                raise InvalidParameterError("a random stream is required when epsilon is set")
            self._uniforms = np.asarray(rng.random((n, n)), dtype=float)
            self._noise = laplace_inverse_cdf(self._uniforms, scale.sigma)
        # Post-processing is applied in bulk; a pair's value is only released
        # (and counted) when score() hands it out.
        released = np.clip((self._products + self._noise) / self._norm, 0.0, 1.0)
        self._rows = released.tolist()
        self.evaluations = 0

    def __len__(self) -> int:
        return len(self._sizes)

    def score(self, a: int, b: int) -> float:
        if a == b:
            raise InvalidParameterError("a node does not score itself")
        self.evaluations += 1
        return self._rows[a][b]


__all__ = [
    "NOISELESS",
    "HDPCosineScorer",
    "Profile",
    "UndefinedSimilarityError",
    "WeightedProfile",
    "cosine_exact",
    "cosine_post_process",
    "hdp_cosine",
    "hdp_scalar_product",
    "stretched_scalar_product",
]
