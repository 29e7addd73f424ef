"""Collapsed Gibbs sampling over follower links.

Resampling the link of document ``i`` first cuts it, splitting its storyline
when the cut disconnects it. The outcomes are then enumerated per storyline,
not per document: joining storyline ``k`` has weight (prior mass of ``i``'s
candidates in ``k``) times the merge likelihood ratio, staying in its own
storyline has the ratio 1, and the self-link has weight ``alpha``. After a
storyline is chosen, the concrete target inside it is drawn from the prior
weights alone, since the likelihood is the same for every member.

Outcome weights can be raised to an inverse temperature (annealing).
Storylines are always enumerated in order of their first member inside the
candidate range, which makes the chain independent of internal label ids.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from ddcrp_storylines.corpus import Document, DocumentStore
from ddcrp_storylines.hyper import HyperUpdateConfig, gradient_step
from ddcrp_storylines.model import (
    ClusterStats,
    DCMKernel,
    FollowerGraph,
    Hyperparams,
    LinkScope,
    Partition,
    log_link_prior,
)
from ddcrp_storylines.results import ClusteringResult, TraceRow

LOG = logging.getLogger(__name__)

ProgressCallback = Callable[[int], None]


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 500
    temperature: float = 2.0
    anneal_start_fraction: float = 0.8
    hyper_update: Optional[HyperUpdateConfig] = None
    seed: int = 0
    scope: LinkScope = LinkScope.ALL
    trace_every: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if not self.temperature >= 1.0:
            raise ValueError(f"temperature must be at least 1, got {self.temperature}")
        if not 0.0 <= self.anneal_start_fraction <= 1.0:
            raise ValueError(f"anneal_start_fraction must lie in [0, 1], got {self.anneal_start_fraction}")
        if self.trace_every < 1:
            raise ValueError(f"trace_every must be positive, got {self.trace_every}")

    @property
    def hyper_update_every(self) -> Optional[int]:
        return self.hyper_update.period if self.hyper_update else None

    def inverse_temperature(self, iteration: int) -> float:
        if iteration < self.anneal_start_fraction * self.iterations:
            return 1.0
        return 1.0 / self.temperature


def draw_index(rng: np.random.Generator, weights: np.ndarray) -> int:
    """Index drawn proportionally to nonnegative ``weights``."""
    cumulative = np.cumsum(weights)
    position = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(position, len(weights) - 1)


@dataclass
class _Outcomes:
    lo: int
    weights: np.ndarray
    labels: np.ndarray
    clusters: list[int]
    probabilities: np.ndarray


class SamplerState:
    """Follower links, their storylines and per-storyline word statistics.

    Documents occupy indices ``0..n-1`` in time order. Only documents at or
    after :attr:`window_start` are resampled and may be followed; offline
    inference keeps it at zero.

    Documents before the window are frozen by :meth:`freeze_before`. Their
    links never change again, so every connected group of frozen documents
    is contracted into one block that carries the group's word statistics.
    Graph nodes are live document indices (``>= 0``) and blocks (``~rep``,
    where ``rep`` is the block's representative document); ``members`` maps
    each storyline label to its nodes. Cuts and merges therefore touch the
    window and the blocks next to it, never the whole frozen history.
    """

    def __init__(self, hyper: Hyperparams, vocab_size: int, *, seed: int = 0, scope: LinkScope = LinkScope.ALL, capacity: int = 64) -> None:
        self.hyper = hyper
        self.vocab_size = vocab_size
        self.kernel = DCMKernel(hyper.eta, vocab_size)
        self.scope = scope
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.iteration = 0
        self.window_start = 0
        self.frozen = 0
        self.nodes_visited = 0
        self.documents: list[Document] = []
        self.link: list[int] = []
        self.followers: list[set[int]] = []
        self.members: dict[int, set[int]] = {}
        self.stats: dict[int, ClusterStats] = {}
        self._times = np.zeros(max(capacity, 1), dtype=np.float64)
        self._labels = np.zeros(max(capacity, 1), dtype=np.int64)
        self._free_labels: list[int] = []
        self._next_label = 0
        # live document -> {block rep: number of links between them}
        self._block_links: list[dict[int, int]] = []
        self._block_parent: dict[int, int] = {}
        self._block_size: dict[int, int] = {}
        self._block_stats: dict[int, ClusterStats] = {}
        self._block_label: dict[int, int] = {}
        self._block_touch: dict[int, set[int]] = {}

    @classmethod
    def from_store(cls, store: DocumentStore, hyper: Hyperparams, vocab_size: int, *, seed: int = 0, scope: LinkScope = LinkScope.ALL) -> "SamplerState":
        state = cls(hyper, vocab_size, seed=seed, scope=scope, capacity=len(store))
        for doc in store:
            state.add_document(doc)
        return state

    @property
    def n(self) -> int:
        return len(self.documents)

    @property
    def timestamps(self) -> np.ndarray:
        return self._times[: self.n]

    @property
    def labels(self) -> np.ndarray:
        labels = self._labels[: self.n].copy()
        for j in range(self.frozen):
            labels[j] = self._block_label[self._find(j)]
        return labels

    @property
    def num_clusters(self) -> int:
        return len(self.members)

    def graph(self) -> FollowerGraph:
        return FollowerGraph(tuple(self.link))

    def partition(self) -> Partition:
        return Partition.from_labels(self.labels.tolist())

    def set_hyper(self, hyper: Hyperparams) -> None:
        if hyper.eta != self.hyper.eta:
            self.kernel = DCMKernel(hyper.eta, self.vocab_size)
        self.hyper = hyper

    def add_document(self, doc: Document) -> int:
        """Append a self-linked document as a new storyline; returns its index."""
        i = self.n
        if i >= len(self._times):
            grow = max(2 * len(self._times), i + 1)
            self._times = np.resize(self._times, grow)
            self._labels = np.resize(self._labels, grow)
        label = self._new_label()
        self.documents.append(doc)
        self.link.append(i)
        self.followers.append(set())
        self._block_links.append({})
        self._times[i] = doc.timestamp
        self._labels[i] = label
        self.members[label] = {i}
        stats = ClusterStats()
        stats.add_document(doc)
        self.stats[label] = stats
        return i

    def documents_of(self, label: int) -> set[int]:
        """Document indices of storyline ``label``, frozen blocks expanded."""
        nodes = self.members[label]
        documents = {node for node in nodes if node >= 0}
        blocks = {~node for node in nodes if node < 0}
        if blocks:
            documents.update(j for j in range(self.frozen) if self._find(j) in blocks)
        return documents

    def _new_label(self) -> int:
        if self._free_labels:
            return self._free_labels.pop()
        label = self._next_label
        self._next_label += 1
        return label

    def candidate_range(self, i: int) -> tuple[int, int]:
        lo = self.window_start
        hi = i if self.scope is LinkScope.SEQUENTIAL else self.n
        return lo, max(lo, hi)

    def _find(self, j: int) -> int:
        parent = self._block_parent
        while parent[j] != j:
            parent[j] = parent[parent[j]]
            j = parent[j]
        return j

    def _label_of(self, node: int) -> int:
        return int(self._labels[node]) if node >= 0 else self._block_label[~node]

    def _set_label(self, nodes: Iterable[int], label: int) -> None:
        live = []
        for node in nodes:
            if node >= 0:
                live.append(node)
            else:
                self._block_label[~node] = label
        self._labels[np.asarray(live, dtype=np.int64)] = label

    def _nodes_stats(self, nodes: Iterable[int]) -> ClusterStats:
        part = ClusterStats()
        for node in nodes:
            if node >= 0:
                part.add_document(self.documents[node])
            else:
                part.absorb(self._block_stats[~node])
        return part

    def _nodes_weight(self, nodes: Iterable[int]) -> int:
        return sum(len(self.documents[node].items) if node >= 0 else len(self._block_stats[~node].counts) for node in nodes)

    def _add_block_link(self, i: int, rep: int) -> None:
        links = self._block_links[i]
        links[rep] = links.get(rep, 0) + 1
        self._block_touch[rep].add(i)

    def _drop_block_link(self, i: int, rep: int) -> None:
        links = self._block_links[i]
        left = links[rep] - 1
        if left:
            links[rep] = left
        else:
            del links[rep]
            self._block_touch[rep].discard(i)

    def _neighbours(self, node: int) -> Iterable[int]:
        if node < 0:
            yield from self._block_touch[~node]
            return
        target = self.link[node]
        if target != node and target >= self.frozen:
            yield target
        yield from self.followers[node]
        for rep in self._block_links[node]:
            yield ~rep

    def _reach(self, start: int, goal: int) -> Optional[set[int]]:
        """Nodes connected to ``start``, or None as soon as ``goal`` is reached."""
        seen = {start}
        frontier = [start]
        while frontier:
            node = frontier.pop()
            self.nodes_visited += 1
            for nxt in self._neighbours(node):
                if nxt == goal:
                    return None
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen

    def _cut(self, i: int) -> None:
        old = self.link[i]
        if old == i:
            return
        self.link[i] = i
        if old >= self.frozen:
            self.followers[old].discard(i)
            goal = old
        else:
            rep = self._find(old)
            self._drop_block_link(i, rep)
            goal = ~rep
        side = self._reach(i, goal)
        if side is None:
            return
        source = int(self._labels[i])
        if self.frozen:
            # a block may hold most of the storyline's words; split off the lighter side
            rest = self.members[source] - side
            if self._nodes_weight(rest) < self._nodes_weight(side):
                side = rest
        label = self._new_label()
        part = self._nodes_stats(side)
        self.stats[source].remove(part)
        self.stats[label] = part
        self.members[source] -= side
        self.members[label] = side
        self._set_label(side, label)

    def _attach(self, i: int, j: int) -> None:
        self.link[i] = j
        if j == i:
            return
        if j >= self.frozen:
            self.followers[j].add(i)
            target = j
        else:
            rep = self._find(j)
            self._add_block_link(i, rep)
            target = ~rep
        li = int(self._labels[i])
        lj = self._label_of(target)
        if li == lj:
            return
        keep, drop = (lj, li) if self._merge_cost(lj) >= self._merge_cost(li) else (li, lj)
        moved = self.members.pop(drop)
        self.members[keep] |= moved
        self._set_label(moved, keep)
        self.stats[keep].absorb(self.stats.pop(drop))
        self._free_labels.append(drop)

    def _merge_cost(self, label: int) -> int:
        return len(self.members[label]) + len(self.stats[label].counts)

    def freeze_before(self, start: int) -> None:
        """Freeze every document before ``start`` and move the window there."""
        for d in range(self.frozen, start):
            self._freeze(d)
        self.window_start = max(self.window_start, start)

    def _freeze(self, d: int) -> None:
        label = int(self._labels[d])
        members = self.members[label]
        adjacent = self._block_links[d]
        self._block_links[d] = {}
        self._block_parent[d] = d
        self._block_size[d] = 1
        self._block_stats[d] = ClusterStats.from_documents([self.documents[d]])
        self._block_touch[d] = set()

        group = [d, *adjacent]
        rep = max(group, key=lambda b: (self._block_size[b], -b))
        touch = self._block_touch[rep]
        members.discard(d)
        for b in group:
            if b == rep:
                continue
            members.discard(~b)
            self._block_parent[b] = rep
            self._block_size[rep] += self._block_size.pop(b)
            self._block_stats[rep].absorb(self._block_stats.pop(b))
            self._block_label.pop(b, None)
            for e in self._block_touch.pop(b):
                if e == d:
                    continue
                links = self._block_links[e]
                links[rep] = links.get(rep, 0) + links.pop(b)
                touch.add(e)
        touch.discard(d)
        members.add(~rep)
        self._block_label[rep] = label

        live = list(self.followers[d])
        self.followers[d] = set()
        target = self.link[d]
        if target > d:
            self.followers[target].discard(d)
            live.append(target)
        self.frozen = d + 1
        for e in live:
            self._add_block_link(e, rep)

    def _outcomes(self, i: int, inverse_temperature: float) -> _Outcomes:
        lo, hi = self.candidate_range(i)
        own = int(self._labels[i])
        weights = np.exp(-np.abs(self._times[lo:hi] - self._times[i]) / self.hyper.decay_scale)
        if lo <= i < hi:
            weights[i - lo] = 0.0
        labels = self._labels[lo:hi]
        mass: dict[int, float] = {}
        if hi > lo:
            # one bin per label present in the window
            present, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
            totals = np.bincount(inverse, weights=weights)
            for k in np.argsort(first, kind="stable"):
                if totals[k] > 0.0:
                    mass[int(present[k])] = float(totals[k])
        clusters = list(mass)
        log_weights = np.empty(len(clusters) + 1, dtype=np.float64)
        own_stats = self.stats[own]
        for position, k in enumerate(clusters):
            value = math.log(mass[k])
            if k != own:
                value += self.kernel.merge_log_ratio(own_stats, self.stats[k])
            log_weights[position] = value
        log_weights[-1] = math.log(self.hyper.alpha)
        log_weights *= inverse_temperature
        probabilities = np.exp(log_weights - logsumexp(log_weights))
        return _Outcomes(lo, weights, labels, clusters, probabilities)

    def resample_link(self, i: int, inverse_temperature: float = 1.0) -> int:
        """Gibbs-resample ``c_i``; returns the new target."""
        self._cut(i)
        outcomes = self._outcomes(i, inverse_temperature)
        choice = draw_index(self.rng, outcomes.probabilities)
        if choice == len(outcomes.clusters):
            target = i
        else:
            inside = np.flatnonzero(outcomes.labels == outcomes.clusters[choice])
            target = outcomes.lo + int(inside[draw_index(self.rng, outcomes.weights[inside])])
        self._attach(i, target)
        return target

    def link_probabilities(self, i: int, inverse_temperature: float = 1.0) -> dict[int, float]:
        """Probability of every target for ``c_i``; the state is left unchanged."""
        previous = self.link[i]
        self._cut(i)
        outcomes = self._outcomes(i, inverse_temperature)
        result = {i: float(outcomes.probabilities[-1])}
        for k, probability in zip(outcomes.clusters, outcomes.probabilities[:-1]):
            inside = np.flatnonzero(outcomes.labels == k)
            share = outcomes.weights[inside] / outcomes.weights[inside].sum()
            for j, part in zip(inside, share):
                if part > 0.0:
                    result[outcomes.lo + int(j)] = float(probability * part)
        self._attach(i, previous)
        return result

    def sweep(self, inverse_temperature: float = 1.0) -> None:
        """Resample every link from :attr:`window_start` on, in store order."""
        for i in range(self.window_start, self.n):
            self.resample_link(i, inverse_temperature)

    def joint_log_prob(self) -> float:
        value = log_link_prior(self.graph(), self, self.hyper, self.scope)
        for stats in self.stats.values():
            value += self.kernel.log_likelihood(stats)
        return value

    def trace_row(self) -> TraceRow:
        return TraceRow(
            iteration=self.iteration,
            joint_log_prob=self.joint_log_prob(),
            alpha=self.hyper.alpha,
            a=self.hyper.decay_scale,
            eta=self.hyper.eta,
            num_clusters=self.num_clusters,
        )

    def to_result(self, trace: Optional[list[TraceRow]] = None, **metadata: object) -> ClusteringResult:
        return ClusteringResult(
            ids=[doc.id for doc in self.documents],
            timestamps=[doc.timestamp for doc in self.documents],
            labels=self.partition().labels,
            links=tuple(self.link),
            topics=[doc.topic for doc in self.documents],
            hyper=self.hyper,
            seed=self.seed,
            trace=trace or [],
            metadata=dict(metadata),
        )


def resample_link(state: SamplerState, i: int, inverse_temperature: float = 1.0) -> SamplerState:
    state.resample_link(i, inverse_temperature)
    return state


def sweep(state: SamplerState, config: SamplerConfig) -> SamplerState:
    """One Gibbs pass, annealed once ``anneal_start_fraction`` of the run is done."""
    state.sweep(config.inverse_temperature(state.iteration))
    state.iteration += 1
    return state


def run_offline(
    store: DocumentStore,
    hyper: Hyperparams,
    config: SamplerConfig,
    vocab_size: int,
    progress: Optional[ProgressCallback] = None,
) -> ClusteringResult:
    """Offline dd-CRP inference from the all-self-links state."""
    if len(store) == 0:
        return ClusteringResult.empty(hyper=hyper, seed=config.seed, mode="offline")
    started = time.perf_counter()
    state = SamplerState.from_store(store, hyper, vocab_size, seed=config.seed, scope=config.scope)
    trace: list[TraceRow] = []
    period = config.hyper_update_every
    for step in range(1, config.iterations + 1):
        sweep(state, config)
        if config.hyper_update is not None and period and step % period == 0:
            state.set_hyper(gradient_step(state, config.hyper_update))
        if step % config.trace_every == 0 or step == config.iterations:
            row = state.trace_row()
            trace.append(row)
            if not math.isfinite(row.joint_log_prob):
                LOG.warning("Joint log probability is not finite at iteration %d", step)
        if step % 50 == 0:
            LOG.info("Sweep %d/%d: %d storylines", step, config.iterations, state.num_clusters)
        if progress is not None:
            progress(1)
    seconds = time.perf_counter() - started
    LOG.info("Offline inference finished in %.2fs with %d storylines (seed %d)", seconds, state.num_clusters, config.seed)
    return state.to_result(trace, mode="offline", seconds=seconds)


def _run_chain(args: tuple[DocumentStore, Hyperparams, SamplerConfig, int]) -> ClusteringResult:
    store, hyper, config, vocab_size = args
    return run_offline(store, hyper, config, vocab_size)


def run_chains(
    store: DocumentStore,
    hyper: Hyperparams,
    config: SamplerConfig,
    vocab_size: int,
    seeds: Sequence[int],
    workers: int = 1,
) -> ClusteringResult:
    """Independent offline chains; the one with the best final joint log probability wins."""
    if not seeds:
        raise ValueError("at least one seed is required")
    jobs = [(store, hyper, replace(config, seed=seed), vocab_size) for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(job) for job in jobs]
    best = max(results, key=lambda result: (result.final_log_prob, -(result.seed or 0)))
    for result in results:
        LOG.info("Chain seed %s: final joint log probability %.4f", result.seed, result.final_log_prob)
    best.metadata["chains"] = [{"seed": result.seed, "final_joint_log_prob": result.final_log_prob} for result in results]
    return best


@dataclass
class _MixtureState:
    assignments: np.ndarray
    stats: list[ClusterStats] = field(default_factory=list)


def _mixture_log_prob(state: _MixtureState, kernel: DCMKernel, dirichlet_param: float) -> float:
    K = len(state.stats)
    sizes = np.asarray([stats.size for stats in state.stats], dtype=np.float64)
    value = float(gammaln(K * dirichlet_param) - gammaln(K * dirichlet_param + sizes.sum()))
    value += float(np.sum(gammaln(sizes + dirichlet_param) - gammaln(dirichlet_param)))
    return value + sum(kernel.log_likelihood(stats) for stats in state.stats)


def run_baseline(
    store: DocumentStore,
    vocab_size: int,
    eta: float,
    K: int = 20,
    dirichlet_param: float = 0.5,
    config: SamplerConfig = SamplerConfig(),
    progress: Optional[ProgressCallback] = None,
) -> ClusteringResult:
    """Finite Dirichlet-multinomial mixture that ignores time.

    Mixture weights get a symmetric Dirichlet(``dirichlet_param``) prior and
    are integrated out, as are the per-cluster word distributions; cluster
    assignments are resampled by annealed collapsed Gibbs sweeps.
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if not dirichlet_param > 0:
        raise ValueError(f"dirichlet_param must be strictly positive, got {dirichlet_param}")
    if len(store) == 0:
        return ClusteringResult.empty(seed=config.seed, mode="baseline")
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    kernel = DCMKernel(eta, vocab_size)
    singles = [ClusterStats.from_documents([doc]) for doc in store]
    state = _MixtureState(assignments=rng.integers(K, size=len(store)), stats=[ClusterStats() for _ in range(K)])
    for i, doc in enumerate(store):
        state.stats[int(state.assignments[i])].add_document(doc)

    trace: list[TraceRow] = []
    log_weights = np.empty(K, dtype=np.float64)
    for step in range(config.iterations):
        inverse_temperature = config.inverse_temperature(step)
        for i, single in enumerate(singles):
            current = state.stats[int(state.assignments[i])]
            current.remove(single)
            for k, stats in enumerate(state.stats):
                log_weights[k] = math.log(stats.size + dirichlet_param) + kernel.merge_log_ratio(stats, single)
            scaled = log_weights * inverse_temperature
            choice = draw_index(rng, np.exp(scaled - logsumexp(scaled)))
            state.assignments[i] = choice
            state.stats[choice].absorb(single)
        if (step + 1) % config.trace_every == 0 or step + 1 == config.iterations:
            occupied = sum(1 for stats in state.stats if stats.size)
            trace.append(TraceRow(step + 1, _mixture_log_prob(state, kernel, dirichlet_param), dirichlet_param, None, eta, occupied))
        if progress is not None:
            progress(1)
    seconds = time.perf_counter() - started
    labels = Partition.from_labels(state.assignments.tolist()).labels
    LOG.info("Baseline mixture finished in %.2fs with %d occupied cluster(s)", seconds, len(set(labels)))
    return ClusteringResult(
        ids=store.ids,
        timestamps=[doc.timestamp for doc in store],
        labels=labels,
        links=None,
        topics=[doc.topic for doc in store],
        seed=config.seed,
        trace=trace,
        metadata={"mode": "baseline", "seconds": seconds, "K": K, "dirichlet_param": dirichlet_param, "eta": eta},
    )
