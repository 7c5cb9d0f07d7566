"""Brute-force global and modular sensitivity over small enumerable domains.

This is the ground truth that the analytic sensitivities in
:mod:`hdpriv.mechanism` are checked against. Evaluators are vectorised: they
take an ``(N, n)`` array of profiles and return ``N`` outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from hdpriv.dp_core import InvalidParameterError, Sensitivity

MAX_PROFILES = 2**20

Evaluator = Callable[[np.ndarray], np.ndarray]


class DomainCapacityError(RuntimeError):
    """The domain has more profiles than the oracle is willing to enumerate."""


@dataclass(frozen=True)
class EnumerableDomain:
    per_coordinate_values: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if not self.per_coordinate_values:
            raise InvalidParameterError("domain needs at least one coordinate")
        for vals in self.per_coordinate_values:
            if len(vals) == 0:
                raise InvalidParameterError("empty value set for a coordinate")

    @classmethod
    def binary(cls, n: int) -> "EnumerableDomain":
        return cls(tuple((0.0, 1.0) for _ in range(n)))

    @classmethod
    def grid(cls, values: Sequence[Sequence[float]]) -> "EnumerableDomain":
        return cls(tuple(tuple(float(v) for v in vs) for vs in values))

    @property
    def dimension(self) -> int:
        return len(self.per_coordinate_values)

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.per_coordinate_values)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.per_coordinate_values)

    def profiles(self) -> np.ndarray:
        """All profiles in lexicographic order, one per row."""
        if self.size > MAX_PROFILES:
            raise DomainCapacityError(
                f"domain has {self.size} profiles, cap is {MAX_PROFILES}"
            )
        axes = [np.asarray(v, dtype=float) for v in self.per_coordinate_values]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, d) -> bool:
        d = np.asarray(d, dtype=float)
        if d.shape != (self.dimension,):
            return False
        return all(
            np.any(np.isclose(x, vals)) for x, vals in zip(d, self.per_coordinate_values)
        )


def vectorize(f: Callable[[np.ndarray], float]) -> Evaluator:
    """Lift a per-profile function to the batched evaluator interface."""

    def batched(profiles: np.ndarray) -> np.ndarray:
        return np.array([f(row) for row in profiles], dtype=float)

    return batched


def stretched(f: Evaluator, weights) -> Evaluator:
    """The evaluator d -> f(diag(weights) d)."""
    w = np.asarray(weights, dtype=float)
    return lambda profiles: f(profiles * w)


def _output_grid(f: Evaluator, domain: EnumerableDomain) -> np.ndarray:
    X = domain.profiles()
    out = np.asarray(f(X), dtype=float)
    if out.shape != (X.shape[0],):
        raise InvalidParameterError(
            f"evaluator returned shape {out.shape}, expected ({X.shape[0]},)"
        )
    return out.reshape(domain.shape)


def _modular_from_grid(grid: np.ndarray, i: int) -> float:
    # All profiles sharing the other coordinates form one slice along axis i;
    # the largest neighbour difference within a slice is its range.
    if grid.shape[i] < 2:
        return 0.0
    return float(np.max(np.ptp(grid, axis=i)))


def modular_sensitivity_bruteforce(
    f: Evaluator, domain: EnumerableDomain, i: int
) -> Sensitivity:
    if not 0 <= i < domain.dimension:
        raise InvalidParameterError(f"coordinate {i} outside 0..{domain.dimension - 1}")
    return Sensitivity(_modular_from_grid(_output_grid(f, domain), i))


def all_modular_sensitivities(f: Evaluator, domain: EnumerableDomain) -> list[float]:
    grid = _output_grid(f, domain)
    return [_modular_from_grid(grid, i) for i in range(domain.dimension)]


def global_sensitivity_bruteforce(f: Evaluator, domain: EnumerableDomain) -> Sensitivity:
    return Sensitivity(max(all_modular_sensitivities(f, domain)))
