"""Acceptance suite: one recorded PASS/FAIL line per numbered criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary. The two sweep
criteria take several minutes each on one core.
"""

import math
import time

import numpy as np
import pytest

from hdpriv import cli, experiments as ex, mechanism, verify
from hdpriv.dp_core import derive_rng, laplace_sample

SEED = 2024
LENGTHS = (2, 3, 4, 5, 6)


def test_criterion_01_stretched_sensitivity(acceptance):
    t0 = time.perf_counter()
    res = verify.check_stretched_sensitivity(LENGTHS, 200, derive_rng(SEED, 1))
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 60
    acceptance(1, ok, f"S_i(R,w) <= v_i on {res.cases} vectors, m=2..6, {elapsed:.1f}s "
                      f"counterexample={res.counterexample}")
    assert ok


def test_criterion_02_monotonicity(acceptance):
    res = verify.check_monotonicity(LENGTHS, 100, derive_rng(SEED, 2))
    acceptance(2, res.passed, f"{res.cases} ordered pairs, modular and global; counterexample={res.counterexample}")
    assert res.passed


def test_criterion_03_dp_ratio(acceptance):
    res = verify.check_dp_ratio((0.25, 0.5, 1.0), 1.0, 100_000, derive_rng(SEED, 3))
    acceptance(3, res.passed, f"neighbours at v_i in (0.25, 0.5, 1), eps=1, 1e5 samples each; "
                              f"counterexample={res.counterexample}")
    assert res.passed


def test_criterion_04_weight_change_ratio(acceptance):
    res = verify.check_weight_change_ratio(verify.MC_WEIGHT_PAIRS, 1.0, 100_000, derive_rng(SEED, 4))
    acceptance(4, res.passed, f"fixed d, v_i pairs {verify.MC_WEIGHT_PAIRS}, bound exp(eps)*1.15; "
                              f"counterexample={res.counterexample}")
    assert res.passed


def _tightness_gaps():
    """(m, distortion, bound) for all-ones d with one weight reduced."""
    out = []
    for m in LENGTHS:
        q = mechanism.scalar_product_query(m)
        d = np.ones(2 * m)
        for w in (0.0, 0.3, 0.75):
            v = np.ones(2 * m)
            v[0] = w
            spec = mechanism.build_stretch_spec(q, mechanism.PrivacyVector(v))
            distortion = abs(q.value(d) - q.value(spec.shrink.diagonal * d))
            out.append((m, w, distortion, mechanism.distortion_bound(q, d, spec)))
    return out


@pytest.mark.xfail(strict=True, reason=(
    "tightness clause unattainable: all-ones d with one reduced weight w gives "
    "distortion 1-w against a bound of (1-w)*2m"
))
def test_criterion_05_distortion(acceptance):
    res = verify.check_distortion(1000, 3, derive_rng(SEED, 5))
    gaps = _tightness_gaps()
    tight = all(abs(dist - bound) <= 1e-9 for _, _, dist, bound in gaps)
    worst = max(gaps, key=lambda g: g[3] - g[2])
    acceptance(5, res.passed and tight,
               f"bound holds on {res.cases} cases: {res.passed}; tight on all-ones d: {tight} "
               f"(e.g. m={worst[0]}, w={worst[1]}: distortion {worst[2]:.3g} vs bound {worst[3]:.3g})")
    assert res.passed
    assert tight


def test_criterion_05_bound_part_alone():
    # The inequality half of criterion 5, kept green on its own.
    assert verify.check_distortion(1000, 3, derive_rng(SEED, 5)).passed
    for _, w, dist, bound in _tightness_gaps():
        assert dist == pytest.approx(1 - w) and dist <= bound


def test_criterion_06_solver_agreement(acceptance):
    res = verify.check_solver_agreement(100, derive_rng(SEED, 6), tol=1e-6)
    acceptance(6, res.passed, f"bisection vs w_i=v_i on {res.cases} draws, tol 1e-6; "
                              f"counterexample={res.counterexample}")
    assert res.passed


def test_criterion_07_laplace_moments(acceptance):
    n = 10**6
    details, ok = [], True
    for sigma in (0.5, 1.0, 2.0):
        x = laplace_sample(sigma, derive_rng(SEED, 7, int(sigma * 10)), size=n)
        var_err = abs(x.var() - 2 * sigma**2) / (2 * sigma**2)
        z = abs(x.mean()) / (sigma * math.sqrt(2.0 / n))
        ok &= var_err <= 0.05 and z <= 3
        details.append(f"sigma={sigma}: var err {var_err:.2%}, |mean|/se {z:.2f}")
    acceptance(7, ok, "; ".join(details))
    assert ok


# --------------------------------------------------------------------------
# sweeps


FIG1_CONFIG = ex.ExperimentConfig(
    dataset=ex.PRESETS["delicious-like"],
    regime=ex.SliceRegime(u_lo=(0.9, 0.5, 0.0), u_hi=1.0, slices=tuple(range(1, 11))),
    epsilons=ex.DEFAULT_EPSILONS,
    k=10, rounds=20, rps_size=10, repeats=10, seed=SEED,
)

FIG3_CONFIG = ex.ExperimentConfig(
    dataset=ex.PRESETS["delicious-like"],
    regime=ex.GroupRegime(ex.westin_grid()),
    epsilons=ex.DEFAULT_EPSILONS,
    k=10, rounds=20, rps_size=10, repeats=10, seed=SEED, arms=(),
)


@pytest.fixture(scope="module")
def fig1_report():
    t0 = time.perf_counter()
    report = ex.run_sweep(FIG1_CONFIG)
    report.metadata["seconds"] = time.perf_counter() - t0
    return report


@pytest.fixture(scope="module")
def fig3_report():
    return ex.run_sweep(FIG3_CONFIG)


def _u_lo_mean(report, u_lo):
    """Unweighted mean over the (epsilon, slices) cells of one u_lo."""
    return report.mean(arm="hdp", group="all", u_lo=u_lo)


@pytest.mark.slow
def test_criterion_08_figure1_ordering(fig1_report, acceptance):
    r = fig1_report
    base = r.select(arm="baseline")[0]
    rand = r.select(arm="random")[0]
    chain = [base["mean_recall"]] + [_u_lo_mean(r, u) for u in (0.9, 0.5, 0.0)] + [rand["mean_recall"]]
    ordered = all(a >= b for a, b in zip(chain, chain[1:]))
    pooled_se = math.sqrt(base["variance"] / base["count"] + rand["variance"] / rand["count"])
    gap = base["mean_recall"] - rand["mean_recall"]
    minutes = r.metadata["seconds"] / 60
    ok = ordered and gap > 5 * pooled_se
    acceptance(8, ok, "baseline, u=0.9, u=0.5, u=0, random = "
               + ", ".join(f"{v:.4f}" for v in chain)
               + f"; gap {gap:.4f} vs 5*SE {5 * pooled_se:.4f}; {minutes:.1f} min")
    assert ordered
    assert gap > 5 * pooled_se


def _group_means(report, point):
    keys = {k: point[k] for k in ("fundamentalists", "pragmatists", "unconcerned")}
    return {
        g.value: report.mean(arm="hdp", group=g.value, **keys)
        for g in ex.GROUP_ORDER
        if report.select(arm="hdp", group=g.value, **keys)
    }


@pytest.mark.slow
def test_criterion_09_figure3_ordering(fig3_report, acceptance):
    bad, checked = [], 0
    for point in FIG3_CONFIG.regime.points():
        means = _group_means(fig3_report, point)
        f = means["Fundamentalists"]
        for other in ("Pragmatists", "Unconcerned"):
            checked += 1
            if f > means[other]:
                bad.append((tuple(point.values()), other, round(f, 4), round(means[other], 4)))
    acceptance(9, not bad, f"{checked} comparisons over {len(FIG3_CONFIG.regime.points())} splits; "
                           f"violations={bad}")
    assert not bad


def test_criterion_10_determinism(tmp_path, monkeypatch, acceptance):
    monkeypatch.delenv("HDP_SEED", raising=False)
    config = tmp_path / "run.yaml"
    config.write_text(
        "schema_version: 1\n"
        "seed: 99\n"
        "dataset: {preset: digg-like, node_count: 150}\n"
        "weights: {mode: slices, u_lo: [0.0, 0.5, 0.9], slices: [1, 5, 10]}\n"
        "epsilons: [0.1, 1, 3]\n"
        "sim: {k: 10, rounds: 20, rps_size: 10}\n"
        "repeats: 2\n"
    )
    outputs = []
    for name in ("first", "second"):
        assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / name)]) == 0
        outputs.append((tmp_path / name / "results.csv").read_bytes())
    same = outputs[0] == outputs[1]
    acceptance(10, same, f"two cmd_run executions, results.csv {len(outputs[0])} bytes, identical={same}")
    assert same


# --------------------------------------------------------------------------
# sweep-level properties beyond the numbered criteria


@pytest.mark.slow
def test_slices_barely_matter_at_high_floor(fig1_report):
    for u_lo in (0.9, 0.5):
        per_n = [fig1_report.mean(arm="hdp", group="all", u_lo=u_lo, slices=n) for n in range(1, 11)]
        assert max(per_n) - min(per_n) < SLICE_BAND[u_lo]


@pytest.mark.slow
def test_more_slices_hurt_at_zero_floor(fig1_report):
    per_n = np.array([fig1_report.mean(arm="hdp", group="all", u_lo=0.0, slices=n) for n in range(1, 11)])
    slope = np.polyfit(np.arange(1, 11), per_n, 1)[0]
    assert slope < 0
    # Non-increasing within noise: no later n beats an earlier one by more than the band.
    assert all(per_n[j] <= per_n[i] + NOISE_BAND for i in range(10) for j in range(i + 1, 10))


@pytest.mark.slow
def test_liberal_groups_not_punished(fig3_report):
    # Holding pragmatists at 10%, fundamentalists rise from 20% to 80%.
    lo = _group_means(fig3_report, {"fundamentalists": 0.2, "pragmatists": 0.1, "unconcerned": 0.7})
    hi = _group_means(fig3_report, {"fundamentalists": 0.8, "pragmatists": 0.1, "unconcerned": 0.1})
    liberal_drop = lo["Unconcerned"] - hi["Unconcerned"]
    conservative_drop = lo["Fundamentalists"] - hi["Fundamentalists"]
    assert liberal_drop < conservative_drop


# Bands fixed from a calibration sweep at SEED: observed slice ranges were
# 0.007 (0.9) and 0.045 (0.5, mostly n=1 where every weight is u_hi), and the
# largest later-over-earlier gain at u_lo=0 was 0.0033.
SLICE_BAND = {0.9: 0.02, 0.5: 0.06}
NOISE_BAND = 0.01


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
