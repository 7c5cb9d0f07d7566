"""Homogeneous differential privacy primitives.

Laplace sampling by inverse CDF (exactly one uniform draw per sample), the
budget/sensitivity/scale value types, and the plain Laplacian mechanism that
every heterogeneous mechanism uses as its final noising step.

Randomness is always passed in explicitly as a ``numpy.random.Generator``
(or anything with a compatible ``random()`` method). There is no ambient RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class InvalidParameterError(ValueError):
    """A parameter lies outside the domain an operation is defined on."""


class RandomStream(Protocol):
    def random(self, size=None): ...


class _NoiselessStream:
    """Stream whose every uniform is 0.5, the Laplace median.

    Passing it where a RandomStream is expected suppresses noise exactly while
    keeping the code path identical. Test and baseline use only.
    """

    def random(self, size=None):
        if size is None:
            return 0.5
        return np.full(size, 0.5)

    def __repr__(self) -> str:
        return "NOISELESS"


NOISELESS = _NoiselessStream()


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the sub-stream named by ``keys`` under ``seed``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0) or math.isnan(self.epsilon):
            raise InvalidParameterError(f"epsilon must be > 0, got {self.epsilon!r}")


@dataclass(frozen=True)
class Sensitivity:
    value: float

    def __post_init__(self) -> None:
        if not (self.value >= 0) or not math.isfinite(self.value):
            raise InvalidParameterError(
                f"sensitivity must be finite and >= 0, got {self.value!r}"
            )


@dataclass(frozen=True)
class LaplaceScale:
    sigma: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0) or not math.isfinite(self.sigma):
            raise InvalidParameterError(f"sigma must be finite and > 0, got {self.sigma!r}")

    @classmethod
    def from_budget(cls, sensitivity: Sensitivity | float, budget: PrivacyBudget | float):
        s = sensitivity.value if isinstance(sensitivity, Sensitivity) else float(sensitivity)
        eps = budget.epsilon if isinstance(budget, PrivacyBudget) else float(budget)
        if s == 0:
            # A zero scale would release the true value untouched.
            raise InvalidParameterError("zero sensitivity: refusing a noiseless release")
        return cls(s / eps)


@dataclass(frozen=True)
class MechanismOutput:
    """A noised release. The exact value is kept out of repr and serialization."""

    released: float
    noise_scale: LaplaceScale
    _true_value: float = field(repr=False, compare=False, default=math.nan)

    def true_value_for_testing(self) -> float:
        return self._true_value

    def to_dict(self) -> dict:
        return {"released": self.released, "sigma": self.noise_scale.sigma}


def laplace_inverse_cdf(u, sigma: float):
    """Quantile function of Laplace(0, sigma); vectorised over ``u``."""
    u = np.asarray(u, dtype=float)
    tiny = np.finfo(float).tiny
    lower = sigma * np.log(np.maximum(2.0 * u, tiny))
    upper = -sigma * np.log(np.maximum(2.0 * (1.0 - u), tiny))
    out = np.where(u < 0.5, lower, upper)
    return float(out) if out.ndim == 0 else out


def _sigma_of(scale: LaplaceScale | float) -> float:
    sigma = scale.sigma if isinstance(scale, LaplaceScale) else float(scale)
    if not (sigma > 0) or not math.isfinite(sigma):
        raise InvalidParameterError(f"sigma must be finite and > 0, got {sigma!r}")
    return sigma


def laplace_sample(scale: LaplaceScale | float, rng: RandomStream, size=None):
    """Draw Laplace(0, sigma) noise, consuming one uniform per sample."""
    sigma = _sigma_of(scale)
    return laplace_inverse_cdf(rng.random(size), sigma)


def laplacian_mechanism(
    true_value: float,
    sensitivity: Sensitivity | float,
    budget: PrivacyBudget | float,
    rng: RandomStream,
) -> MechanismOutput:
    if not isinstance(budget, PrivacyBudget):
        budget = PrivacyBudget(float(budget))
    if not isinstance(sensitivity, Sensitivity):
        sensitivity = Sensitivity(float(sensitivity))
    scale = LaplaceScale.from_budget(sensitivity, budget)
    released = float(true_value) + laplace_sample(scale, rng)
    return MechanismOutput(released, scale, float(true_value))
