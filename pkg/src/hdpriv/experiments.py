"""Utility experiments: synthetic data, privacy-weight regimes, recall sweeps.

The real bookmark/news datasets are replaced by a planted-partition generator
whose presets match their published sizes. A sweep runs the gossip clustering
for every (weight point, epsilon, repeat) cell plus two reference arms:
``baseline`` (exact cosine, no noise, all weights 1) and ``random`` (uniformly
random neighbour lists), and reports mean recall and variance per cell/group.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from hdpriv import gossip
from hdpriv.dp_core import InvalidParameterError, derive_rng
from hdpriv.mechanism import PrivacyVector
from hdpriv.similarity import HDPCosineScorer, Profile, WeightedProfile

log = logging.getLogger(__name__)

# Sub-stream tags for derive_rng.
_DATASET, _SPLIT, _GROUPS, _WEIGHTS, _NOISE, _GOSSIP, _RANDOM_ARM = range(7)

DEFAULT_EPSILONS = (0.1, 0.5, 1.0, 2.0, 3.0)
WESTIN_POLL = (0.34, 0.43, 0.23)


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DatasetSpec:
    node_count: int
    universe_size: int
    clusters: int
    affinity: float
    mean_profile_size: float
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise InvalidParameterError("need at least 2 nodes")
        if self.clusters < 1 or self.clusters > self.universe_size:
            raise InvalidParameterError("clusters must be in [1, universe_size]")
        if not 0 < self.affinity <= 1:
            raise InvalidParameterError("affinity must be in (0, 1]")
        if not 0 < self.mean_profile_size <= self.universe_size:
            raise InvalidParameterError(
                f"mean profile size {self.mean_profile_size} infeasible for a universe "
                f"of {self.universe_size} items"
            )


PRESETS = {
    "delicious-like": DatasetSpec(500, 50_000, 20, 0.9, 135, "delicious-like"),
    "digg-like": DatasetSpec(500, 1_250, 10, 0.8, 317, "digg-like"),
    "survey-like": DatasetSpec(120, 200, 4, 0.8, 68, "survey-like"),
}


@dataclass(frozen=True)
class SyntheticDataset:
    profiles: list[Profile]
    clusters: np.ndarray
    spec: DatasetSpec


def _blocks(universe_size: int, clusters: int) -> list[np.ndarray]:
    return np.array_split(np.arange(universe_size), clusters)


def generate_synthetic_dataset(spec: DatasetSpec, rng: np.random.Generator) -> SyntheticDataset:
    """Planted-partition profiles.

    Each cluster owns a contiguous item block. A profile's size is
    Poisson(mean_profile_size), at least 1 and at most the universe; each item
    comes from the node's own block with probability ``affinity`` and from
    the rest of the universe otherwise, all without repetition.
    """
    blocks = _blocks(spec.universe_size, spec.clusters)
    labels = rng.permutation(np.arange(spec.node_count) % spec.clusters)
    everything = np.arange(spec.universe_size)
    profiles = []
    for c in labels:
        block = blocks[c]
        outside = np.setdiff1d(everything, block, assume_unique=True)
        size = int(np.clip(rng.poisson(spec.mean_profile_size), 1, spec.universe_size))
        n_in = min(int(rng.binomial(size, spec.affinity)), len(block))
        n_out = min(size - n_in, len(outside))
        if n_in + n_out < size:
            n_in = min(size - n_out, len(block))
        items = np.concatenate([
            rng.choice(block, size=n_in, replace=False),
            rng.choice(outside, size=n_out, replace=False) if n_out else np.empty(0, np.int64),
        ])
        profiles.append(Profile(items, spec.universe_size))
    return SyntheticDataset(profiles, labels, spec)


# --------------------------------------------------------------------------
# privacy weights


@dataclass(frozen=True)
class WeightDistribution:
    u_lo: float
    u_hi: float = 1.0
    slices: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.u_lo < self.u_hi <= 1:
            raise InvalidParameterError("need 0 <= u_lo < u_hi <= 1")
        if self.slices < 1:
            raise InvalidParameterError("slices must be >= 1")

    def support(self) -> np.ndarray:
        if self.slices == 1:
            return np.array([self.u_hi])
        return np.linspace(self.u_lo, self.u_hi, self.slices)


class WestinGroup(enum.Enum):
    FUNDAMENTALISTS = "Fundamentalists"
    PRAGMATISTS = "Pragmatists"
    UNCONCERNED = "Unconcerned"

    @property
    def support(self) -> np.ndarray:
        return {
            WestinGroup.UNCONCERNED: np.array([1.0]),
            WestinGroup.PRAGMATISTS: np.array([0.5, 0.75, 1.0]),
            WestinGroup.FUNDAMENTALISTS: np.array([0.0, 0.5, 1.0]),
        }[self]


# Order used for proportion triples everywhere.
GROUP_ORDER = (WestinGroup.FUNDAMENTALISTS, WestinGroup.PRAGMATISTS, WestinGroup.UNCONCERNED)


def _draw_from_support(support: np.ndarray, count: int, rng) -> np.ndarray:
    return support[rng.integers(0, len(support), size=count)]


def sample_weights(dist: WeightDistribution | WestinGroup, profile: Profile, rng) -> PrivacyVector:
    """Independent uniform draw from the support for every present item."""
    support = dist.support() if isinstance(dist, WeightDistribution) else dist.support
    return PrivacyVector(_draw_from_support(support, len(profile), rng))


def largest_remainder(proportions: Sequence[float], total: int) -> list[int]:
    quotas = [p * total for p in proportions]
    counts = [math.floor(q) for q in quotas]
    short = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def assign_groups(
    proportions: Sequence[float], node_count: int, rng: np.random.Generator
) -> list[WestinGroup]:
    """Fixed-size partition by largest remainder, then shuffled.

    ``proportions`` is (fundamentalists, pragmatists, unconcerned).
    """
    if len(proportions) != 3 or any(p < 0 for p in proportions):
        raise InvalidParameterError("need three non-negative group proportions")
    if abs(sum(proportions) - 1.0) > 1e-9:
        raise InvalidParameterError(f"group proportions sum to {sum(proportions)}, not 1")
    counts = largest_remainder(proportions, node_count)
    labels = [g for g, c in zip(GROUP_ORDER, counts) for _ in range(c)]
    return [labels[i] for i in rng.permutation(node_count)]


# --------------------------------------------------------------------------
# split and recall


def split_profile(
    profile: Profile, fraction: float, rng: np.random.Generator
) -> tuple[Profile, frozenset[int]] | None:
    """Random train/test split; ``None`` for singleton profiles (no valid split)."""
    if not 0 < fraction < 1:
        raise InvalidParameterError("split fraction must be in (0, 1)")
    size = len(profile)
    if size < 2:
        log.info("profile of size %d cannot be split; node excluded from recall", size)
        return None
    n_train = min(size - 1, max(1, math.floor(fraction * size + 1e-9)))
    perm = rng.permutation(profile.items)
    train = Profile(perm[:n_train], profile.universe_size)
    return train, frozenset(int(i) for i in perm[n_train:])


def compute_recall(
    test_items: frozenset[int] | set[int],
    neighbour_ids: Sequence[int],
    training_profiles: Sequence[Profile],
) -> float:
    """Share of the held-out items present in some neighbour's training profile."""
    if not test_items:
        raise InvalidParameterError("empty test set")
    if len(neighbour_ids) == 0:
        raise InvalidParameterError("empty neighbour view")
    found = set()
    for p in neighbour_ids:
        found.update(test_items.intersection(training_profiles[p].items.tolist()))
    return len(found) / len(test_items)


# --------------------------------------------------------------------------
# sweep configuration and report


@dataclass(frozen=True)
class SliceRegime:
    u_lo: tuple[float, ...] = (0.0, 0.5, 0.9)
    u_hi: float = 1.0
    slices: tuple[int, ...] = tuple(range(1, 11))

    def points(self) -> list[dict]:
        return [
            {"u_lo": lo, "u_hi": self.u_hi, "slices": n}
            for lo in self.u_lo
            for n in self.slices
        ]


@dataclass(frozen=True)
class GroupRegime:
    proportions: tuple[tuple[float, float, float], ...] = (WESTIN_POLL,)

    def points(self) -> list[dict]:
        return [
            {"fundamentalists": f, "pragmatists": p, "unconcerned": u}
            for f, p, u in self.proportions
        ]


def westin_grid() -> tuple[tuple[float, float, float], ...]:
    """The poll split plus every (unconcerned, pragmatists) pair from {.1,.2,.6,.7}
    whose sum stays at or below 1, fundamentalists taking the rest."""
    steps = (0.1, 0.2, 0.6, 0.7)
    grid = [WESTIN_POLL]
    for prag in steps:
        for unc in steps:
            if prag + unc <= 1.0 + 1e-12:
                grid.append((round(1.0 - prag - unc, 10), prag, unc))
    return tuple(grid)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    regime: SliceRegime | GroupRegime
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    k: int = 10
    rounds: int = 20
    rps_size: int = 10
    repeats: int = 10
    split_fraction: float = 0.9
    seed: int = 0
    arms: tuple[str, ...] = ("baseline", "random")

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise InvalidParameterError("repeats must be >= 1")
        if not 0 < self.split_fraction < 1:
            raise InvalidParameterError("split_fraction must be in (0, 1)")
        if not self.epsilons or any(not e > 0 for e in self.epsilons):
            raise InvalidParameterError("epsilons must be a non-empty list of positive values")
        if self.dataset.node_count <= self.k:
            raise InvalidParameterError("node_count must exceed k")
        unknown = set(self.arms) - {"baseline", "random"}
        if unknown:
            raise InvalidParameterError(f"unknown arms: {sorted(unknown)}")
        if isinstance(self.regime, GroupRegime):
            for props in self.regime.proportions:
                if len(props) != 3 or abs(sum(props) - 1) > 1e-9 or min(props) < 0:
                    raise InvalidParameterError(f"bad group proportions {props}")


REPORT_COLUMNS = (
    "arm", "u_lo", "u_hi", "slices", "fundamentalists", "pragmatists",
    "unconcerned", "epsilon", "group", "mean_recall", "variance", "count",
)


@dataclass
class RecallReport:
    rows: list[dict]
    seed: int
    repeats: int
    dataset: str
    metadata: dict = field(default_factory=dict)

    def select(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def mean(self, **match) -> float:
        """Unweighted mean of the matching cells' mean recall."""
        rows = self.select(**match)
        if not rows:
            raise KeyError(f"no rows match {match}")
        return float(np.mean([r["mean_recall"] for r in rows]))

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "repeats": self.repeats,
            "dataset": self.dataset,
            "metadata": self.metadata,
            "rows": self.rows,
        }


# --------------------------------------------------------------------------
# sweep execution


@dataclass(frozen=True)
class _RepeatData:
    training: list[Profile]
    tests: list[frozenset[int] | None]


def _prepare_repeat(dataset: SyntheticDataset, fraction: float, seed: int, repeat: int) -> _RepeatData:
    rng = derive_rng(seed, _SPLIT, repeat)
    training, tests = [], []
    for prof in dataset.profiles:
        split = split_profile(prof, fraction, rng)
        if split is None:
            training.append(prof)
            tests.append(None)
        else:
            training.append(split[0])
            tests.append(split[1])
    return _RepeatData(training, tests)


def _gossip_seed(seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, _GOSSIP, repeat]).generate_state(1, np.uint64)[0] >> 1)


def _recalls(data: _RepeatData, neighbours: Sequence[Sequence[int]]) -> list[tuple[int, float]]:
    return [
        (a, compute_recall(t, neighbours[a], data.training))
        for a, t in enumerate(data.tests)
        if t is not None
    ]


def _cluster(config: ExperimentConfig, data: _RepeatData, weighted, epsilon, noise_rng, repeat):
    scorer = HDPCosineScorer(weighted, epsilon, noise_rng)
    sim = gossip.SimConfig(
        node_count=len(weighted),
        k=config.k,
        rounds=config.rounds,
        rps_size=config.rps_size,
        epsilon=epsilon,
        seed=_gossip_seed(config.seed, repeat),
    )
    return gossip.run_clustering(sim, scorer, keep_trace=False).neighbour_ids()


@dataclass(frozen=True)
class _Task:
    kind: str  # "baseline" | "random" | "hdp"
    repeat: int
    point_index: int = -1
    eps_index: int = -1


def _run_task(config: ExperimentConfig, dataset: SyntheticDataset, data: _RepeatData,
              groups: dict[int, list[WestinGroup]], task: _Task) -> list[tuple[int, float]]:
    n = len(data.training)
    if task.kind == "baseline":
        weighted = [WeightedProfile.uniform(p) for p in data.training]
        return _recalls(data, _cluster(config, data, weighted, None, None, task.repeat))
    if task.kind == "random":
        rng = derive_rng(config.seed, _RANDOM_ARM, task.repeat)
        return _recalls(data, gossip.random_views(n, config.k, rng))

    point = config.regime.points()[task.point_index]
    epsilon = config.epsilons[task.eps_index]
    wrng = derive_rng(config.seed, _WEIGHTS, task.repeat, task.point_index, task.eps_index)
    if isinstance(config.regime, SliceRegime):
        dist = WeightDistribution(point["u_lo"], point["u_hi"], point["slices"])
        dists = [dist] * n
    else:
        dists = groups[task.point_index]
    weighted = [
        WeightedProfile(p, sample_weights(d, p, wrng).weights)
        for p, d in zip(data.training, dists)
    ]
    nrng = derive_rng(config.seed, _NOISE, task.repeat, task.point_index, task.eps_index)
    return _recalls(data, _cluster(config, data, weighted, epsilon, nrng, task.repeat))


_WORKER_STATE: dict = {}


def _worker_init(config, dataset, repeats_data, groups) -> None:
    _WORKER_STATE.update(config=config, dataset=dataset, data=repeats_data, groups=groups)


def _worker_run(task: _Task):
    s = _WORKER_STATE
    return task, _run_task(s["config"], s["dataset"], s["data"][task.repeat], s["groups"], task)


def _tasks(config: ExperimentConfig) -> Iterator[_Task]:
    n_points = len(config.regime.points())
    for r in range(config.repeats):
        for arm in config.arms:
            yield _Task(arm, r)
        for pi in range(n_points):
            for ei in range(len(config.epsilons)):
                yield _Task("hdp", r, pi, ei)


def _summarise(values: list[float]) -> tuple[float, float, int]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.var()), int(arr.size)


def run_sweep(config: ExperimentConfig, jobs: int = 1, progress=None) -> RecallReport:
    """Run every cell of the sweep; results are independent of ``jobs``."""
    dataset = generate_synthetic_dataset(config.dataset, derive_rng(config.seed, _DATASET))
    repeats_data = [
        _prepare_repeat(dataset, config.split_fraction, config.seed, r)
        for r in range(config.repeats)
    ]
    groups: dict[int, list[WestinGroup]] = {}
    if isinstance(config.regime, GroupRegime):
        for pi, props in enumerate(config.regime.proportions):
            groups[pi] = assign_groups(props, config.dataset.node_count, derive_rng(config.seed, _GROUPS, pi))

    tasks = list(_tasks(config))
    results: dict[_Task, list[tuple[int, float]]] = {}
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_worker_init,
            initargs=(config, dataset, repeats_data, groups),
        ) as pool:
            for task, rec in pool.map(_worker_run, tasks, chunksize=4):
                results[task] = rec
                if progress:
                    progress(len(results), len(tasks))
    else:
        for task in tasks:
            results[task] = _run_task(config, dataset, repeats_data[task.repeat], groups, task)
            if progress:
                progress(len(results), len(tasks))

    return _aggregate(config, dataset, results, groups)


def _blank_row(arm: str) -> dict:
    row = dict.fromkeys(REPORT_COLUMNS)
    row["arm"] = arm
    return row


def _aggregate(config, dataset, results, groups) -> RecallReport:
    rows: list[dict] = []
    for arm in config.arms:
        vals = [v for t, rec in results.items() if t.kind == arm for _, v in rec]
        row = _blank_row(arm)
        row["group"] = "all"
        row["mean_recall"], row["variance"], row["count"] = _summarise(vals)
        rows.append(row)

    points = config.regime.points()
    for pi, point in enumerate(points):
        for ei, eps in enumerate(config.epsilons):
            cell = [
                rec for t, rec in sorted(results.items(), key=lambda kv: kv[0].repeat)
                if t.kind == "hdp" and t.point_index == pi and t.eps_index == ei
            ]
            by_group: dict[str, list[float]] = {"all": []}
            for rec in cell:
                for node, v in rec:
                    by_group["all"].append(v)
                    if pi in groups:
                        by_group.setdefault(groups[pi][node].value, []).append(v)
            names = ["all"] + [g.value for g in GROUP_ORDER if g.value in by_group]
            for name in names:
                row = _blank_row("hdp")
                row.update(point)
                row["epsilon"] = eps
                row["group"] = name
                row["mean_recall"], row["variance"], row["count"] = _summarise(by_group[name])
                rows.append(row)

    meta = {
        "config": _config_dict(config),
        "evaluation_accounting": "one epsilon-mechanism call per evaluated ordered pair per run",
    }
    return RecallReport(rows, config.seed, config.repeats, dataset.spec.name, meta)


def _config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["regime"] = {
        "mode": "slices" if isinstance(config.regime, SliceRegime) else "groups",
        **asdict(config.regime),
    }
    return d
