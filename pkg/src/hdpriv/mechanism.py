"""The stretching mechanism.

A privacy vector ``v`` is turned into a diagonal shrinkage ``w`` such that the
stretched query ``R(d) = f(diag(w) d)`` has modular sensitivity at most
``v_i * S(f)`` in every coordinate. Adding Laplace noise of scale ``S(f)/eps``
to ``R(d)`` then gives every coordinate its own indistinguishability factor
``exp(eps * v_i)``. The noise scale never depends on ``v`` or ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from hdpriv import oracle
from hdpriv.dp_core import (
    InvalidParameterError,
    MechanismOutput,
    PrivacyBudget,
    RandomStream,
    Sensitivity,
    laplacian_mechanism,
)

DEFAULT_TOLERANCE = 1e-9
MAX_BISECTION_STEPS = 64
DEFAULT_DISTORTION_GRID = 129


class ContractViolationError(RuntimeError):
    """A query broke a property the mechanism relies on (e.g. monotonicity)."""


class UnsupportedQueryError(TypeError):
    """The query lacks a capability the operation needs."""


def _unit_interval_array(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidParameterError(f"{what} must be one-dimensional")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise InvalidParameterError(f"{what} entries must lie in [0, 1]")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PrivacyVector:
    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _unit_interval_array(self.weights, "privacy weights"))

    @classmethod
    def ones(cls, n: int) -> "PrivacyVector":
        return cls(np.ones(n))

    @classmethod
    def from_partial(cls, n: int, weights: Mapping[int, float]) -> "PrivacyVector":
        """Unspecified coordinates default to weight 1."""
        arr = np.ones(n)
        for i, v in weights.items():
            arr[i] = v
        return cls(arr)

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class ShrinkageMatrix:
    """Diagonal matrix with coefficients in [0, 1]; only the diagonal is stored."""

    diagonal: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "diagonal", _unit_interval_array(self.diagonal, "shrinkage diagonal"))

    @classmethod
    def identity(cls, n: int) -> "ShrinkageMatrix":
        return cls(np.ones(n))

    def __len__(self) -> int:
        return len(self.diagonal)

    def compose(self, other: "ShrinkageMatrix") -> "ShrinkageMatrix":
        return ShrinkageMatrix(self.diagonal * other.diagonal)


@dataclass(frozen=True, eq=False)
class StretchSpec:
    shrink: ShrinkageMatrix
    certified_modular_sensitivities: tuple[Sensitivity, ...]
    base_sensitivity: Sensitivity


@dataclass(frozen=True, eq=False)
class QuerySpec:
    """A query together with what the mechanism needs to know about it.

    ``evaluate`` is batched over rows. ``modular_sensitivity(w, i)`` returns
    ``S_i(R, w)``, the sensitivity at coordinate ``i`` of ``d -> f(diag(w) d)``.
    """

    name: str
    dimension: int
    evaluate: oracle.Evaluator
    sensitivity: float
    modular_sensitivity: Callable[[np.ndarray, int], float]
    domain: oracle.EnumerableDomain | None = None
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    contains: Callable[[np.ndarray], bool] | None = None
    analytic_weights: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    distortion_closed_form: Callable[[np.ndarray, np.ndarray], float] | None = field(
        default=None, repr=False
    )

    def value(self, d) -> float:
        return float(self.evaluate(np.asarray(d, dtype=float)[None, :])[0])

    def in_domain(self, d) -> bool:
        d = np.asarray(d, dtype=float)
        if d.shape != (self.dimension,):
            return False
        if self.contains is not None:
            return bool(self.contains(d))
        if self.domain is not None:
            return self.domain.contains(d)
        return True


def scalar_product_query(m: int) -> QuerySpec:
    """SP(x, y) on binary profiles, with ``d = (x, y)`` of length ``2m``.

    S(SP) = 1. Coordinate i pairs with i +/- m; changing d_i moves the
    stretched product by at most ``w_i * w_partner``.
    """
    if m < 1:
        raise InvalidParameterError("profile length must be >= 1")

    def evaluate(X):
        return np.sum(X[:, :m] * X[:, m:], axis=1)

    def modular(w, i):
        return float(w[i] * w[(i + m) % (2 * m)])

    def gradient(z):
        return np.concatenate([z[m:], z[:m]])

    def contains(d):
        return bool(np.all((d == 0) | (d == 1)))

    def closed_form(d, w):
        return float((1.0 - np.min(w)) * np.dot(d, d))

    return QuerySpec(
        name=f"scalar_product[{m}]",
        dimension=2 * m,
        evaluate=evaluate,
        sensitivity=1.0,
        modular_sensitivity=modular,
        domain=oracle.EnumerableDomain.binary(2 * m),
        gradient=gradient,
        contains=contains,
        analytic_weights=lambda v: np.array(v, dtype=float),
        distortion_closed_form=closed_form,
    )


def weighted_sum_query(coefficients, values=None) -> QuerySpec:
    """f(d) = sum_k c_k d_k with d_k drawn from a finite value set (binary by default)."""
    c = np.asarray(coefficients, dtype=float)
    n = len(c)
    if values is None:
        values = [(0.0, 1.0)] * n
    domain = oracle.EnumerableDomain.grid(values)
    if domain.dimension != n:
        raise InvalidParameterError("one value set per coefficient required")
    spans = np.array([max(v) - min(v) for v in domain.per_coordinate_values])
    per_coord = np.abs(c) * spans
    s_f = float(per_coord.max())

    def analytic(v):
        v = np.asarray(v, dtype=float)
        w = np.ones(n)
        nz = per_coord > 0
        w[nz] = np.minimum(1.0, v[nz] * s_f / per_coord[nz])
        return w

    return QuerySpec(
        name=f"weighted_sum[{n}]",
        dimension=n,
        evaluate=lambda X: X @ c,
        sensitivity=s_f,
        modular_sensitivity=lambda w, i: float(w[i] * per_coord[i]),
        domain=domain,
        gradient=lambda z: c.copy(),
        analytic_weights=analytic,
    )


def bruteforce_query(f: oracle.Evaluator, domain: oracle.EnumerableDomain, name: str = "f") -> QuerySpec:
    """Generic query whose sensitivities all come from exhaustive enumeration."""
    s_f = oracle.global_sensitivity_bruteforce(f, domain).value

    def modular(w, i):
        return oracle.modular_sensitivity_bruteforce(oracle.stretched(f, w), domain, i).value

    return QuerySpec(
        name=name,
        dimension=domain.dimension,
        evaluate=f,
        sensitivity=s_f,
        modular_sensitivity=modular,
        domain=domain,
    )


def stretch_profile(profile_vector, shrink: ShrinkageMatrix) -> np.ndarray:
    d = np.asarray(profile_vector, dtype=float)
    if d.shape != shrink.diagonal.shape:
        raise InvalidParameterError(
            f"profile has shape {d.shape}, shrinkage has {shrink.diagonal.shape}"
        )
    return shrink.diagonal * d


def solve_shrink_weight(
    query: QuerySpec,
    coordinate: int,
    v_i: float,
    tolerance: float = DEFAULT_TOLERANCE,
) -> float:
    """Largest w_i in [0, 1] with S_i(R, (1_{-i}, w_i)) <= v_i * S(f), by bisection.

    Relies on S_i being non-decreasing in w_i; a violation seen while
    bracketing raises :class:`ContractViolationError`.
    """
    if not 0 <= coordinate < query.dimension:
        raise InvalidParameterError(f"coordinate {coordinate} out of range")
    if not 0.0 <= v_i <= 1.0:
        raise InvalidParameterError(f"privacy weight must be in [0, 1], got {v_i}")
    if tolerance <= 0:
        raise InvalidParameterError("tolerance must be positive")

    budget = v_i * query.sensitivity
    base = np.ones(query.dimension)

    def s_i(x: float) -> float:
        base[coordinate] = x
        return query.modular_sensitivity(base, coordinate)

    g_hi = s_i(1.0)
    if g_hi <= budget:
        return 1.0
    g_lo = s_i(0.0)
    if g_lo > budget:
        raise ContractViolationError(
            f"{query.name}: S_{coordinate}(R) = {g_lo} > 0 with w_{coordinate} = 0"
        )
    lo, hi = 0.0, 1.0
    for _ in range(MAX_BISECTION_STEPS):
        if hi - lo <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        g_mid = s_i(mid)
        if g_mid < g_lo or g_mid > g_hi:
            raise ContractViolationError(
                f"{query.name}: S_{coordinate}(R) not monotone in w on [{lo}, {hi}]"
            )
        if g_mid <= budget:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return lo


def build_stretch_spec(
    query: QuerySpec,
    v: PrivacyVector,
    tolerance: float = DEFAULT_TOLERANCE,
    use_analytic: bool = True,
) -> StretchSpec:
    if not isinstance(v, PrivacyVector):
        v = PrivacyVector(v)
    if len(v) != query.dimension:
        raise InvalidParameterError(
            f"privacy vector has {len(v)} entries, query has {query.dimension} coordinates"
        )
    if use_analytic and query.analytic_weights is not None:
        w = np.asarray(query.analytic_weights(v.weights), dtype=float)
    else:
        w = np.array(
            [solve_shrink_weight(query, i, v.weights[i], tolerance) for i in range(len(v))]
        )
    certified = []
    for i in range(len(w)):
        s_i = query.modular_sensitivity(w, i)
        if s_i > v.weights[i] * query.sensitivity:
            raise ContractViolationError(
                f"{query.name}: S_{i}(R, w) = {s_i} exceeds v_{i} S(f) = "
                f"{v.weights[i] * query.sensitivity}"
            )
        certified.append(Sensitivity(s_i))
    return StretchSpec(ShrinkageMatrix(w), tuple(certified), Sensitivity(query.sensitivity))


def hdp_estimate(
    query: QuerySpec,
    d,
    v: PrivacyVector,
    budget: PrivacyBudget | float,
    rng: RandomStream,
    spec: StretchSpec | None = None,
) -> MechanismOutput:
    """Release f(diag(w) d) + Laplace(S(f)/eps). ``w`` itself is never returned."""
    d = np.asarray(d, dtype=float)
    if not query.in_domain(d):
        raise InvalidParameterError(f"profile outside the domain of {query.name}")
    if spec is None:
        spec = build_stretch_spec(query, v)
    stretched_value = query.value(stretch_profile(d, spec.shrink))
    return laplacian_mechanism(stretched_value, spec.base_sensitivity, budget, rng)


def distortion_bound(
    query: QuerySpec,
    d,
    spec: StretchSpec,
    grid: int = DEFAULT_DISTORTION_GRID,
    closed_form: bool = True,
) -> float:
    """Upper bound on |f(d) - f(diag(w) d)| via the mean value theorem.

    max over c in [0, 1] of (1 - w_min) ||grad f(B d)|| ||d||, B = cI + (1-c)diag(w),
    with c on a uniform grid including both endpoints. Test-only: the bound
    depends on private inputs and must not be released.
    """
    if query.gradient is None:
        raise UnsupportedQueryError(f"{query.name} has no gradient")
    if grid < 2:
        raise InvalidParameterError("grid needs at least 2 points")
    d = np.asarray(d, dtype=float)
    w = spec.shrink.diagonal
    if d.shape != w.shape:
        raise InvalidParameterError("profile and shrinkage dimensions differ")
    slack = 1.0 - float(np.min(w))
    if slack == 0.0:
        return 0.0
    if closed_form and query.distortion_closed_form is not None:
        return query.distortion_closed_form(d, w)
    norm_d = float(np.linalg.norm(d))
    best = 0.0
    for c in np.linspace(0.0, 1.0, grid):
        b = c + (1.0 - c) * w
        best = max(best, float(np.linalg.norm(query.gradient(b * d))))
    return slack * best * norm_d
