"""Round-based gossip simulator for decentralised k-nearest-neighbour clustering.

Two layers per node: a fresh random peer sample each round and a clustering
view of the k best-scoring peers seen so far. In round r every node, in id
order and against the round-start snapshot of all views:

1. picks one peer p uniformly from (own view ids) | (fresh random sample),
2. forms candidates = own view | p's view | {p}, minus itself,
3. scores candidates it has never scored, keeping earlier scores as they are,
4. keeps the top k by score, ties going to the lower peer id.

The simulator never touches profiles or privacy weights. It talks to a scorer
(:class:`hdpriv.similarity.HDPCosineScorer`) that only returns released
scores, and the only thing nodes exchange is :class:`ViewEntry` records.
Every ordered pair is scored at most once per run, so each run costs exactly
one mechanism invocation per evaluated pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from hdpriv.dp_core import InvalidParameterError, derive_rng

log = logging.getLogger(__name__)

_STREAM_INIT = 0
_STREAM_ROUND = 1


class Scorer(Protocol):
    def __len__(self) -> int: ...
    def score(self, a: int, b: int) -> float: ...


class ViewEntry(NamedTuple):
    peer: int
    score: float
    scored_round: int


@dataclass(frozen=True)
class ClusterView:
    entries: tuple[ViewEntry, ...] = ()

    def ids(self) -> list[int]:
        return [e.peer for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SimConfig:
    node_count: int
    k: int = 10
    rounds: int = 20
    rps_size: int = 10
    epsilon: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvalidParameterError("k must be >= 1")
        if self.rounds < 0:
            raise InvalidParameterError("rounds must be >= 0")
        if self.rps_size < 1:
            raise InvalidParameterError("rps_size must be >= 1")
        if self.node_count <= self.k:
            raise InvalidParameterError(
                f"node_count ({self.node_count}) must exceed k ({self.k})"
            )
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidParameterError("epsilon must be > 0")


@dataclass
class TraceRecord:
    round: int
    node: int
    peers: tuple[int, ...]
    scores: tuple[float, ...]


@dataclass
class ClusteringResult:
    views: list[ClusterView]
    trace: list[TraceRecord] = field(default_factory=list)
    evaluations: int = 0

    def neighbour_ids(self) -> list[list[int]]:
        return [v.ids() for v in self.views]


class _ScoreCache:
    """Per-run memo of released scores, keyed by ordered pair."""

    def __init__(self, scorer: Scorer) -> None:
        self.scorer = scorer
        self.scores: dict[tuple[int, int], ViewEntry] = {}

    def get(self, a: int, b: int, round_index: int) -> ViewEntry:
        hit = self.scores.get((a, b))
        if hit is None:
            hit = ViewEntry(b, self.scorer.score(a, b), round_index)
            self.scores[(a, b)] = hit
        return hit

    @property
    def evaluations(self) -> int:
        return len(self.scores)


def _rank(e: ViewEntry) -> tuple[float, int]:
    return -e.score, e.peer


def _top_k(entries: list[ViewEntry], k: int) -> ClusterView:
    entries.sort(key=_rank)
    return ClusterView(tuple(entries[:k]))


def init_views(
    node_count: int, k: int, cache: _ScoreCache, rng: np.random.Generator
) -> list[ClusterView]:
    """Seed every node with k distinct uniformly random peers, scored."""
    if node_count <= k:
        raise InvalidParameterError("node_count must exceed k")
    views = []
    for a in range(node_count):
        picks = rng.choice(node_count - 1, size=k, replace=False)
        picks = picks + (picks >= a)
        views.append(_top_k([cache.get(a, int(b), 0) for b in picks], k))
    return views


def gossip_round(
    views: Sequence[ClusterView],
    round_index: int,
    cache: _ScoreCache,
    rng: np.random.Generator,
    k: int,
    rps_size: int,
) -> list[ClusterView]:
    n = len(views)
    # All of the round's randomness is drawn up front so that each node's
    # update is a pure function of the snapshot and its own row of draws.
    rps = rng.integers(0, n - 1, size=(n, rps_size))
    rps += rps >= np.arange(n)[:, None]
    choice = rng.random(n)
    snapshot = [v.ids() for v in views]

    updated = []
    for a in range(n):
        own = snapshot[a]
        pool = sorted(set(own).union(rps[a].tolist()))
        p = pool[int(choice[a] * len(pool))]
        candidates = set(own)
        candidates.update(snapshot[p])
        candidates.add(p)
        candidates.discard(a)
        entries = [cache.get(a, b, round_index) for b in candidates]
        updated.append(_top_k(entries, k))
    return updated


def random_views(node_count: int, k: int, rng: np.random.Generator) -> list[list[int]]:
    """Neighbour lists chosen uniformly at random (the no-clustering reference)."""
    out = []
    for a in range(node_count):
        picks = rng.choice(node_count - 1, size=k, replace=False)
        out.append(sorted(int(b) for b in picks + (picks >= a)))
    return out


def run_clustering(
    config: SimConfig, scorer: Scorer, keep_trace: bool = True
) -> ClusteringResult:
    if len(scorer) != config.node_count:
        raise InvalidParameterError(
            f"scorer covers {len(scorer)} nodes, config says {config.node_count}"
        )
    cache = _ScoreCache(scorer)
    views = init_views(config.node_count, config.k, cache, derive_rng(config.seed, _STREAM_INIT))
    trace: list[TraceRecord] = []

    def record(r: int) -> None:
        if keep_trace:
            for a, v in enumerate(views):
                trace.append(
                    TraceRecord(r, a, tuple(v.ids()), tuple(e.score for e in v.entries))
                )

    record(0)
    for r in range(1, config.rounds + 1):
        rng = derive_rng(config.seed, _STREAM_ROUND, r)
        views = gossip_round(views, r, cache, rng, config.k, config.rps_size)
        record(r)
    log.debug("clustering done: %d rounds, %d evaluations", config.rounds, cache.evaluations)
    return ClusteringResult(views, trace, cache.evaluations)
