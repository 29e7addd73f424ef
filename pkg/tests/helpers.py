"""Shared testing helpers for ddcrp-storylines."""

from __future__ import annotations

import itertools
from typing import Iterable, Optional, Sequence

from ddcrp_storylines.corpus import Document, DocumentStore
from ddcrp_storylines.model import ClusterStats, FollowerGraph, components


def make_store(docs: Sequence[dict[int, int]], timestamps: Optional[Sequence[int]] = None, prefix: str = "d") -> DocumentStore:
    """Store of documents given as ``{word_id: count}`` maps.

    Ids are zero-padded so that store order matches the given order when
    timestamps tie.
    """
    stamps = list(timestamps) if timestamps is not None else [0] * len(docs)
    return DocumentStore(tuple(Document.from_counts(f"{prefix}{k:04d}", stamps[k], counts) for k, counts in enumerate(docs)))


def stats_of(docs: Iterable[Document]) -> ClusterStats:
    return ClusterStats.from_documents(docs)


def all_graphs(n: int) -> Iterable[FollowerGraph]:
    """Every follower graph over ``n`` documents (``n ** n`` of them)."""
    for links in itertools.product(range(n), repeat=n):
        yield FollowerGraph(tuple(links))


def assert_state_consistent(state) -> None:
    """Partition equals the graph's components and every storyline's stats equal its members' sums.

    Frozen blocks are checked too: each block's stats are the sum of its
    documents, and live/block adjacency matches the links.
    """
    graph = state.graph()
    assert state.partition() == components(graph)
    groups: dict[int, set[int]] = {}
    for i, label in enumerate(state.labels.tolist()):
        groups.setdefault(label, set()).add(i)
    assert set(groups) == set(state.members)
    for label, members in groups.items():
        assert state.documents_of(label) == members
        expected = stats_of(state.documents[i] for i in members)
        actual = state.stats[label]
        assert actual.counts == expected.counts
        assert actual.total == expected.total
        assert actual.size == expected.size
    frozen = state.frozen
    live = range(frozen, state.n)
    for i in live:
        target = state.link[i]
        if target != i and target >= frozen:
            assert i in state.followers[target]
        for j in state.followers[i]:
            assert j >= frozen and state.link[j] == i
    blocks: dict[int, list[int]] = {}
    for j in range(frozen):
        blocks.setdefault(state._find(j), []).append(j)
    for rep, documents in blocks.items():
        expected = stats_of(state.documents[j] for j in documents)
        assert state._block_stats[rep].counts == expected.counts
        assert state._block_stats[rep].size == len(documents)
        inside = set(documents)
        touching = {i for i in live if state.link[i] in inside} | {state.link[j] for j in documents if state.link[j] >= frozen}
        assert state._block_touch[rep] == touching


def canonical_stats(state) -> dict[int, tuple[tuple[tuple[int, int], ...], int, int]]:
    """Stats keyed by canonical storyline id, comparable across label renumbering."""
    partition = state.partition()
    result = {}
    for label in state.members:
        canonical = partition.labels[min(state.documents_of(label))]
        stats = state.stats[label]
        result[canonical] = (tuple(sorted(stats.counts.items())), stats.total, stats.size)
    return result
