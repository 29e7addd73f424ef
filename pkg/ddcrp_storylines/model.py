"""The distance-dependent CRP over timestamped documents.

Each document ``i`` follows one document ``c_i`` (possibly itself). The
prior weight of a link is ``alpha`` for a self-link and
``exp(-|t_i - t_j| / a)`` otherwise; storylines are the connected components
of the undirected follower graph, and the words of each storyline share one
multinomial whose symmetric Dirichlet(eta) prior is integrated out.

All likelihood arithmetic happens in log space.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Protocol, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln

from ddcrp_storylines.corpus import Document, DocumentStore


class SupportsTimestamps(Protocol):
    """Anything exposing document timestamps in store order."""

    @property
    def timestamps(self) -> np.ndarray: ...


class LinkScope(str, Enum):
    """Which documents a document may follow.

    ``all``: every other document (the unrestricted prior).
    ``sequential``: only documents earlier in store order. With a flat
    distance function this reduces the model to the classic CRP.
    """

    ALL = "all"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class Hyperparams:
    alpha: float
    decay_scale: float
    eta: float

    def __post_init__(self) -> None:
        for name in ("alpha", "decay_scale", "eta"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    def replace(self, **changes: float) -> "Hyperparams":
        values = {"alpha": self.alpha, "decay_scale": self.decay_scale, "eta": self.eta}
        values.update(changes)
        return Hyperparams(**values)


@dataclass(frozen=True)
class FollowerGraph:
    links: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.links)
        for i, target in enumerate(self.links):
            if not 0 <= target < n:
                raise ValueError(f"link of document {i} points outside the graph: {target}")

    @classmethod
    def self_links(cls, n: int) -> "FollowerGraph":
        return cls(tuple(range(n)))

    def __len__(self) -> int:
        return len(self.links)


@dataclass(frozen=True)
class Partition:
    """Cluster id per document; ids are the lowest member index."""

    labels: tuple[int, ...]
    num_clusters: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "num_clusters", len(set(self.labels)))

    def __len__(self) -> int:
        return len(self.labels)

    def clusters(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {}
        for i, label in enumerate(self.labels):
            groups.setdefault(label, []).append(i)
        return groups

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        """Canonical partition from arbitrary labels (ids become lowest member index)."""
        first: dict[int, int] = {}
        canonical = []
        for i, label in enumerate(labels):
            canonical.append(first.setdefault(label, i))
        return cls(tuple(canonical))


@dataclass
class ClusterStats:
    """Word-count sufficient statistics of one storyline."""

    counts: dict[int, int] = field(default_factory=dict)
    total: int = 0
    size: int = 0

    @classmethod
    def from_documents(cls, documents: Iterable[Document]) -> "ClusterStats":
        stats = cls()
        for doc in documents:
            stats.add_document(doc)
        return stats

    def add_document(self, doc: Document) -> None:
        counts = self.counts
        for word, count in doc.items:
            counts[word] = counts.get(word, 0) + count
        self.total += doc.total
        self.size += 1

    def absorb(self, other: "ClusterStats") -> None:
        counts = self.counts
        for word, count in other.counts.items():
            counts[word] = counts.get(word, 0) + count
        self.total += other.total
        self.size += other.size

    def remove(self, other: "ClusterStats") -> None:
        counts = self.counts
        for word, count in other.counts.items():
            left = counts[word] - count
            if left < 0:
                raise ValueError(f"cannot remove {count} occurrence(s) of word {word}; only {counts[word]} present")
            if left:
                counts[word] = left
            else:
                del counts[word]
        self.total -= other.total
        self.size -= other.size

    def copy(self) -> "ClusterStats":
        return ClusterStats(dict(self.counts), self.total, self.size)


def distance_decay(t_i: float, t_j: float, a: float) -> float:
    """Exponential time decay ``exp(-|t_i - t_j| / a)``."""
    return math.exp(-abs(t_i - t_j) / a)


def link_prior_weight(i: int, j: int, timestamps: Sequence[float], hyper: Hyperparams) -> float:
    """Unnormalized prior weight of document ``i`` following ``j``."""
    if i == j:
        return hyper.alpha
    return distance_decay(timestamps[i], timestamps[j], hyper.decay_scale)


def candidate_range(i: int, n: int, scope: LinkScope = LinkScope.ALL) -> tuple[int, int]:
    """Half-open index range of the documents ``i`` may follow (``i`` itself excluded by callers).

    The store is sorted by ``(timestamp, id)``, so every scope is contiguous.
    """
    if scope is LinkScope.SEQUENTIAL:
        return 0, i
    return 0, n


def dcm_log_likelihood(stats: ClusterStats, eta: float, V: int) -> float:
    """Dirichlet-compound-multinomial log marginal likelihood of a cluster."""
    if stats.total == 0:
        return 0.0
    counts = np.fromiter(stats.counts.values(), dtype=np.float64, count=len(stats.counts))
    value = gammaln(V * eta) - gammaln(V * eta + stats.total)
    value += float(np.sum(gammaln(eta + counts) - gammaln(eta)))
    return float(value)


class DCMKernel:
    """Log-gamma tables for a fixed ``(eta, V)``.

    Counts are integers, so ``lgamma(eta + n)`` and ``lgamma(V * eta + n)``
    are looked up in tables that grow on demand. :meth:`merge_log_ratio`
    touches only the words shared by both clusters: a word present in one
    cluster contributes the same gamma factor to the merged and the separate
    likelihoods and cancels.
    """

    def __init__(self, eta: float, V: int) -> None:
        if not eta > 0:
            raise ValueError(f"eta must be strictly positive, got {eta!r}")
        self.eta = float(eta)
        self.V = max(int(V), 1)
        self._word: list[float] = []
        self._norm: list[float] = []
        self._grow(64)

    def _grow(self, needed: int) -> None:
        size = max(needed + 1, 2 * len(self._word))
        offsets = np.arange(size, dtype=np.float64)
        self._word = gammaln(self.eta + offsets).tolist()
        self._norm = gammaln(self.V * self.eta + offsets).tolist()

    def log_likelihood(self, stats: ClusterStats) -> float:
        if stats.total == 0:
            return 0.0
        if stats.total >= len(self._word):
            self._grow(stats.total)
        word = self._word
        base = word[0]
        value = self._norm[0] - self._norm[stats.total]
        for count in stats.counts.values():
            value += word[count] - base
        return value

    def merge_log_ratio(self, a: ClusterStats, b: ClusterStats) -> float:
        """``log DCM(a + b) - log DCM(a) - log DCM(b)``; exactly symmetric in ``a`` and ``b``."""
        if a.total == 0 or b.total == 0:
            return 0.0
        merged = a.total + b.total
        if merged >= len(self._word):
            self._grow(merged)
        word = self._word
        norm = self._norm
        small, large = (a.counts, b.counts) if len(a.counts) <= len(b.counts) else (b.counts, a.counts)
        value = (norm[a.total] + norm[b.total]) - norm[merged] - norm[0]
        shared = sorted(w for w in small if w in large)
        base = word[0]
        for w in shared:
            x = small[w]
            y = large[w]
            value += (word[x + y] + base) - (word[x] + word[y])
        return value


@functools.lru_cache(maxsize=32)
def dcm_kernel(eta: float, V: int) -> DCMKernel:
    return DCMKernel(eta, V)


def merge_log_ratio(A: ClusterStats, B: ClusterStats, eta: float, V: int) -> float:
    return dcm_kernel(float(eta), int(V)).merge_log_ratio(A, B)


def components(graph: FollowerGraph) -> Partition:
    """Connected components of the undirected follower graph."""
    n = len(graph)
    if n == 0:
        return Partition(())
    rows = np.arange(n)
    cols = np.asarray(graph.links, dtype=np.int64)
    adjacency = coo_matrix((np.ones(n, dtype=np.int8), (rows, cols)), shape=(n, n)).tocsr()
    _, component = connected_components(adjacency, directed=True, connection="weak")
    lowest = np.full(component.max() + 1, n, dtype=np.int64)
    np.minimum.at(lowest, component, rows)
    return Partition(tuple(int(label) for label in lowest[component]))


def log_link_prior(graph: FollowerGraph, store: SupportsTimestamps, hyper: Hyperparams, scope: LinkScope = LinkScope.ALL) -> float:
    """Sum over documents of the log normalized link prior.

    The normalizer of document ``i`` is ``alpha`` plus the decay weights of
    every candidate it may follow. A link outside the candidate set has
    probability zero.
    """
    times = store.timestamps.astype(np.float64)
    n = len(graph)
    a = hyper.decay_scale
    total = 0.0
    for i, target in enumerate(graph.links):
        lo, hi = candidate_range(i, n, scope)
        gaps = np.abs(times[lo:hi] - times[i])
        weights = np.exp(-gaps / a)
        if lo <= i < hi:
            weights[i - lo] = 0.0
        normalizer = hyper.alpha + float(weights.sum())
        if target == i:
            total += math.log(hyper.alpha) - math.log(normalizer)
        elif lo <= target < hi:
            total += -abs(times[i] - times[target]) / a - math.log(normalizer)
        else:
            return -math.inf
    return total


def joint_log_prob(graph: FollowerGraph, store: DocumentStore, hyper: Hyperparams, vocab_size: int, scope: LinkScope = LinkScope.ALL) -> float:
    """Log joint probability of a follower graph and the corpus words."""
    if len(graph) != len(store):
        raise ValueError(f"graph has {len(graph)} links but the store holds {len(store)} documents")
    value = log_link_prior(graph, store, hyper, scope)
    for members in components(graph).clusters().values():
        stats = ClusterStats.from_documents(store[i] for i in members)
        value += dcm_log_likelihood(stats, hyper.eta, vocab_size)
    return value


def cluster_topic_estimate(stats: ClusterStats, eta: float, V: int) -> np.ndarray:
    """Posterior mean of the storyline's word distribution."""
    estimate = np.full(V, eta, dtype=np.float64)
    for word, count in stats.counts.items():
        estimate[word] += count
    return estimate / (stats.total + V * eta)
