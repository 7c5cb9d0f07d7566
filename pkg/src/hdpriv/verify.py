"""Executable property checks for the stretching mechanism.

Each check compares the mechanism against the brute-force oracle on small
binary scalar-product domains and stops at the first counterexample. The
``fast`` level covers profile lengths up to 4 (8 coordinates); ``full`` goes
to length 6 (12 coordinates) and adds Monte Carlo density-ratio tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from hdpriv import mechanism, oracle
from hdpriv.dp_core import derive_rng
from hdpriv.similarity import Profile, WeightedProfile, hdp_scalar_product

SLACK = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    counterexample: dict | None = None
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name} ({self.cases} cases, {self.seconds:.2f}s)"


@dataclass
class _Timer:
    start: float = field(default_factory=time.perf_counter)

    def done(self, result: CheckResult) -> CheckResult:
        result.seconds = time.perf_counter() - self.start
        return result


def solver_weights(query: mechanism.QuerySpec, v: np.ndarray) -> np.ndarray:
    # Looked up on the module so a patched solver is what gets verified.
    return np.array([mechanism.solve_shrink_weight(query, i, float(v[i])) for i in range(len(v))])


def check_stretched_sensitivity(profile_lengths, vectors: int, rng) -> CheckResult:
    """S_i(R, w) <= v_i S(f) by exhaustive enumeration, w from the bisection solver."""
    t, cases = _Timer(), 0
    name = "stretched sensitivity within v_i * S(f)"
    for m in profile_lengths:
        q = mechanism.scalar_product_query(m)
        for _ in range(vectors):
            v = rng.random(q.dimension)
            w = solver_weights(q, v)
            s = oracle.all_modular_sensitivities(oracle.stretched(q.evaluate, w), q.domain)
            cases += 1
            for i, s_i in enumerate(s):
                if s_i > v[i] * q.sensitivity + SLACK:
                    return t.done(CheckResult(name, False, cases, {
                        "query": q.name, "coordinate": i, "v": v.tolist(), "w": w.tolist(),
                        "S_i(R,w)": s_i, "v_i*S(f)": float(v[i] * q.sensitivity),
                    }))
    return t.done(CheckResult(name, True, cases))


def ordered_pair(rng, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Random w' <= w coordinate-wise in [0, 1]^n."""
    w = rng.random(n)
    return w * rng.random(n), w


def check_monotonicity(profile_lengths, pairs: int, rng) -> CheckResult:
    """w' <= w implies S_i(R, w') <= S_i(R, w) for all i, and S(R, w') <= S(R, w)."""
    t, cases = _Timer(), 0
    name = "modular and global sensitivity monotone in w"
    for m in profile_lengths:
        q = mechanism.scalar_product_query(m)
        for _ in range(pairs):
            lo, hi = ordered_pair(rng, q.dimension)
            s_lo = oracle.all_modular_sensitivities(oracle.stretched(q.evaluate, lo), q.domain)
            s_hi = oracle.all_modular_sensitivities(oracle.stretched(q.evaluate, hi), q.domain)
            cases += 1
            bad = [i for i in range(q.dimension) if s_lo[i] > s_hi[i] + SLACK]
            if bad or max(s_lo) > max(s_hi) + SLACK:
                return t.done(CheckResult(name, False, cases, {
                    "query": q.name, "w_low": lo.tolist(), "w_high": hi.tolist(),
                    "S_low": s_lo, "S_high": s_hi,
                }))
    return t.done(CheckResult(name, True, cases))


def check_shrinkage_composition(samples: int, n: int, rng) -> CheckResult:
    """ABx stays in the unit box with |ABx| <= |Bx| <= |x|; C(Ax) lies in A(unit box)."""
    t = _Timer()
    name = "shrinkage composition and closure"
    for case in range(1, samples + 1):
        a, b, x = rng.random(n), rng.random(n), rng.random(n)
        A, B = mechanism.ShrinkageMatrix(a), mechanism.ShrinkageMatrix(b)
        abx = A.compose(B).diagonal * x
        bx = B.diagonal * x
        ok = (
            np.all((abx >= 0) & (abx <= 1))
            and np.all(np.abs(abx) <= np.abs(bx) + SLACK)
            and np.all(np.abs(bx) <= np.abs(x) + SLACK)
        )
        # Closure: C(Ax) = A(Cx) with Cx in the unit box.
        c = rng.random(n)
        cx = c * x
        ok = ok and np.allclose(c * (a * x), a * cx) and np.all((cx >= 0) & (cx <= 1))
        if not ok:
            return t.done(CheckResult(name, False, case, {
                "A": a.tolist(), "B": b.tolist(), "C": c.tolist(), "x": x.tolist(),
            }))
    return t.done(CheckResult(name, True, samples))


def check_distortion(cases: int, m: int, rng) -> CheckResult:
    """|f(d) - f(diag(w) d)| <= (1 - w_min) ||d||^2 for the scalar product."""
    t = _Timer()
    name = "distortion bound"
    q = mechanism.scalar_product_query(m)
    for case in range(1, cases + 1):
        d = rng.integers(0, 2, q.dimension).astype(float)
        v = rng.random(q.dimension)
        spec = mechanism.build_stretch_spec(q, mechanism.PrivacyVector(v))
        gap = abs(q.value(d) - q.value(spec.shrink.diagonal * d))
        bound = mechanism.distortion_bound(q, d, spec)
        if gap > bound + SLACK:
            return t.done(CheckResult(name, False, case, {
                "d": d.tolist(), "v": v.tolist(), "distortion": gap, "bound": bound,
            }))
    return t.done(CheckResult(name, True, cases))


def check_solver_agreement(cases: int, rng, tol: float = 1e-6) -> CheckResult:
    """Bisection reproduces the closed form w_i = v_i for the scalar product."""
    t = _Timer()
    name = "bisection solver matches analytic weights"
    q = mechanism.scalar_product_query(3)
    for case in range(1, cases + 1):
        i = int(rng.integers(0, q.dimension))
        v_i = float(rng.random())
        w_i = mechanism.solve_shrink_weight(q, i, v_i)
        if abs(w_i - v_i) > tol:
            return t.done(CheckResult(name, False, case, {"coordinate": i, "v_i": v_i, "w_i": w_i}))
    return t.done(CheckResult(name, True, cases))


def density_ratio(a, b, bins: int = 50, min_hits: int = 100) -> float:
    """Largest two-sided bin ratio between two samples' histograms.

    Bins are shared and hold equal pooled mass (edges at pooled quantiles), so
    no compared bin sits in a sparse tail where counting noise alone would
    exceed the slack. Only bins where both samples have at least ``min_hits``
    points are compared.
    """
    a, b = np.asarray(a), np.asarray(b)
    edges = np.unique(np.quantile(np.concatenate([a, b]), np.linspace(0.0, 1.0, bins + 1)))
    ha, _ = np.histogram(a, bins=edges)
    hb, _ = np.histogram(b, bins=edges)
    mask = (ha >= min_hits) & (hb >= min_hits)
    if not mask.any():
        raise ValueError("no bin has enough hits in both samples")
    pa, pb = ha[mask] / len(a), hb[mask] / len(b)
    return float(np.max(np.maximum(pa / pb, pb / pa)))


def sample_releases(x: WeightedProfile, y: WeightedProfile, epsilon: float, n: int, rng) -> np.ndarray:
    return np.array([hdp_scalar_product(x, y, epsilon, rng).released for _ in range(n)])


def neighbour_profiles(v_item: float, universe: int = 4):
    """x holds items {0, 1} at weight 1; y and y' differ only in item 0 (weight v_item)."""
    x = WeightedProfile(Profile([0, 1], universe), [1.0, 1.0])
    y = WeightedProfile(Profile([0, 1], universe), [v_item, 1.0])
    y_nb = WeightedProfile(Profile([1], universe), [1.0])
    return x, y, y_nb


def check_dp_ratio(weights, epsilon: float, samples: int, rng, slack: float = 1.15) -> CheckResult:
    t = _Timer()
    name = f"Monte Carlo (eps, v)-DP ratio at eps={epsilon}"
    for case, v_i in enumerate(weights, start=1):
        x, y, y_nb = neighbour_profiles(v_i)
        ratio = density_ratio(
            sample_releases(x, y, epsilon, samples, rng),
            sample_releases(x, y_nb, epsilon, samples, rng),
        )
        if ratio > math.exp(epsilon * v_i) * slack:
            return t.done(CheckResult(name, False, case, {
                "v_i": v_i, "ratio": ratio, "limit": math.exp(epsilon * v_i) * slack,
            }))
    return t.done(CheckResult(name, True, len(weights)))


def check_weight_change_ratio(pairs, epsilon: float, samples: int, rng, slack: float = 1.15) -> CheckResult:
    """Same profiles, only v_i changes: the release density moves by at most exp(eps)."""
    t = _Timer()
    name = f"Monte Carlo weight-change ratio at eps={epsilon}"
    for case, (v_a, v_b) in enumerate(pairs, start=1):
        x, y_a, _ = neighbour_profiles(v_a)
        _, y_b, _ = neighbour_profiles(v_b)
        ratio = density_ratio(
            sample_releases(x, y_a, epsilon, samples, rng),
            sample_releases(x, y_b, epsilon, samples, rng),
        )
        if ratio > math.exp(epsilon) * slack:
            return t.done(CheckResult(name, False, case, {
                "v_i": v_a, "v_i'": v_b, "ratio": ratio, "limit": math.exp(epsilon) * slack,
            }))
    return t.done(CheckResult(name, True, len(pairs)))


MC_WEIGHTS = (0.25, 0.5, 1.0)
MC_WEIGHT_PAIRS = ((0.0, 1.0), (0.25, 1.0), (0.5, 1.0))

LEVELS = {
    "fast": {"lengths": (1, 2, 3, 4), "vectors": 50, "pairs": 50, "mc": False},
    "full": {"lengths": (1, 2, 3, 4, 5, 6), "vectors": 200, "pairs": 100, "mc": True},
}


def run_suite(level: str = "fast", seed: int = 0) -> list[CheckResult]:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; expected one of {sorted(LEVELS)}")
    cfg = LEVELS[level]
    rng = derive_rng(seed, 0x5EED)
    results = [
        check_stretched_sensitivity(cfg["lengths"], cfg["vectors"], rng),
        check_monotonicity(cfg["lengths"], cfg["pairs"], rng),
        check_shrinkage_composition(1000, 6, rng),
        check_distortion(1000, 2, rng),
        check_solver_agreement(100, rng),
    ]
    if cfg["mc"]:
        results.append(check_dp_ratio(MC_WEIGHTS, 1.0, 100_000, rng))
        results.append(check_weight_change_ratio(MC_WEIGHT_PAIRS, 1.0, 100_000, rng))
    return results
