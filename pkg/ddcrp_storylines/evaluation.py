"""Timeline scoring in the style of tweet timeline generation, plus ARI.

A predicted clustering becomes a timeline by keeping the earliest document of
every cluster. The timeline is then scored against gold clusters: a gold
cluster is covered when any of its members was returned, and a returned
document is credited only when it is the first timeline entry of its gold
cluster (later ones are redundant, documents outside every gold cluster are
not relevant).

Gold files are JSON-lines, one cluster per line::

    {"cluster": "c1", "weight": 2, "members": ["t1", "t2"], "topic": "MB171"}

``topic`` is optional and enables per-topic scoring.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import comb

from ddcrp_storylines.corpus import DocumentStore, StorylineError
from ddcrp_storylines.model import Partition
from ddcrp_storylines.results import Assignment

LOG = logging.getLogger(__name__)


class GoldFormatError(StorylineError):
    """A gold file or gold cluster list violates the expected structure."""


@dataclass(frozen=True)
class GoldCluster:
    cluster: str
    weight: float
    members: tuple[str, ...]
    topic: Optional[str] = None


@dataclass(frozen=True)
class GoldClusters:
    clusters: tuple[GoldCluster, ...]
    owner: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        owner: dict[str, int] = {}
        for position, gold in enumerate(self.clusters):
            if not gold.weight > 0:
                raise GoldFormatError(f"gold cluster {gold.cluster!r} has non-positive weight {gold.weight!r}")
            for member in gold.members:
                if member in owner:
                    other = self.clusters[owner[member]].cluster
                    raise GoldFormatError(f"document {member!r} belongs to gold clusters {other!r} and {gold.cluster!r}")
                owner[member] = position
        object.__setattr__(self, "owner", owner)

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def total_weight(self) -> float:
        return float(sum(gold.weight for gold in self.clusters))

    @property
    def topics(self) -> list[str]:
        return sorted({gold.topic for gold in self.clusters if gold.topic is not None})

    def for_topic(self, topic: str) -> "GoldClusters":
        return GoldClusters(tuple(gold for gold in self.clusters if gold.topic == topic))


@dataclass(frozen=True)
class Timeline:
    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("timeline ids must be unique")

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> "Timeline":
        """Timeline keeping the first occurrence of every id."""
        return cls(tuple(dict.fromkeys(ids)))

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class Metrics:
    recall: float
    weighted_recall: float
    precision: float
    f1: float
    weighted_f1: float

    @classmethod
    def zero(cls) -> "Metrics":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_rates(cls, recall: float, weighted_recall: float, precision: float) -> "Metrics":
        return cls(recall, weighted_recall, precision, harmonic_mean(precision, recall), harmonic_mean(precision, weighted_recall))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def harmonic_mean(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def select_representatives(clustering: Partition, store: DocumentStore) -> Timeline:
    """Earliest document of every cluster, in store order."""
    if len(clustering) != len(store):
        raise ValueError(f"clustering covers {len(clustering)} document(s) but the store holds {len(store)}")
    seen: set[int] = set()
    ids = []
    for i, label in enumerate(clustering.labels):
        if label not in seen:
            seen.add(label)
            ids.append(store[i].id)
    return Timeline(tuple(ids))


def timeline_from_assignments(assignments: Sequence[Assignment]) -> Timeline:
    """Earliest document by ``(timestamp, id)`` of every predicted cluster.

    Assignments without timestamps keep their file order.
    """
    order = list(range(len(assignments)))
    if all(a.timestamp is not None for a in assignments):
        order.sort(key=lambda k: (assignments[k].timestamp, assignments[k].id))
    seen: set[Hashable] = set()
    ids = []
    for k in order:
        assignment = assignments[k]
        if assignment.cluster not in seen:
            seen.add(assignment.cluster)
            ids.append(assignment.id)
    return Timeline(tuple(ids))


def score(timeline: Timeline, gold: GoldClusters) -> Metrics:
    if len(gold) == 0:
        raise GoldFormatError("gold clusters are empty")
    if len(timeline) == 0:
        return Metrics.zero()
    covered: set[int] = set()
    credited = 0
    for doc_id in timeline.ids:
        owner = gold.owner.get(doc_id)
        if owner is None:
            continue
        if owner not in covered:
            covered.add(owner)
            credited += 1
    recall = len(covered) / len(gold)
    weighted_recall = sum(gold.clusters[k].weight for k in covered) / gold.total_weight
    precision = credited / len(timeline)
    return Metrics.from_rates(recall, weighted_recall, precision)


def average_metrics(metrics: Iterable[Metrics]) -> Metrics:
    """Macro average; the F-measures are averaged, not recomputed."""
    items = list(metrics)
    if not items:
        return Metrics.zero()
    table = np.asarray([[m.recall, m.weighted_recall, m.precision, m.f1, m.weighted_f1] for m in items], dtype=np.float64)
    return Metrics(*(float(value) for value in table.mean(axis=0)))


def score_by_topic(assignments: Sequence[Assignment], gold: GoldClusters) -> tuple[dict[str, Metrics], Metrics]:
    """Score every gold topic on the timeline built from that topic's documents."""
    topics = gold.topics
    if not topics:
        raise GoldFormatError("gold clusters carry no topics")
    per_topic: dict[str, Metrics] = {}
    for topic in topics:
        relevant = [a for a in assignments if a.topic == topic]
        per_topic[topic] = score(timeline_from_assignments(relevant), gold.for_topic(topic))
    return per_topic, average_metrics(per_topic.values())


def adjusted_rand_index(predicted: Sequence[Hashable] | Partition, truth: Sequence[Hashable] | Partition) -> float:
    """Adjusted Rand index from the pair-counting contingency table."""
    left = predicted.labels if isinstance(predicted, Partition) else predicted
    right = truth.labels if isinstance(truth, Partition) else truth
    if len(left) != len(right):
        raise ValueError(f"partitions cover {len(left)} and {len(right)} documents")
    n = len(left)
    if n < 2:
        return 1.0
    _, rows = np.unique(np.asarray([str(x) for x in left]), return_inverse=True)
    _, cols = np.unique(np.asarray([str(x) for x in right]), return_inverse=True)
    table = np.zeros((rows.max() + 1, cols.max() + 1), dtype=np.int64)
    np.add.at(table, (rows, cols), 1)
    index = float(comb(table, 2).sum())
    row_pairs = float(comb(table.sum(axis=1), 2).sum())
    col_pairs = float(comb(table.sum(axis=0), 2).sum())
    total_pairs = float(comb(n, 2))
    expected = row_pairs * col_pairs / total_pairs
    maximum = (row_pairs + col_pairs) / 2.0
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def align_assignments(assignments: Sequence[Assignment], truth: Sequence[Assignment]) -> tuple[list[Hashable], list[Hashable]]:
    """Predicted and true labels over the shared document ids, in truth order."""
    predicted = {a.id: a.cluster for a in assignments}
    missing = [t.id for t in truth if t.id not in predicted]
    if missing or len(predicted) != len(truth):
        raise GoldFormatError(f"predictions and truth cover different documents ({len(missing)} truth id(s) unpredicted)")
    return [predicted[t.id] for t in truth], [t.cluster for t in truth]


def _gold_from_mapping(data: Mapping[str, object], line: int) -> GoldCluster:
    try:
        cluster = data["cluster"]
        weight = data.get("weight", 1.0)
        members = data["members"]
    except KeyError as exc:
        raise GoldFormatError(f"gold line {line}: missing field {exc.args[0]!r}") from None
    if not isinstance(members, list) or not all(isinstance(m, (str, int)) for m in members):
        raise GoldFormatError(f"gold line {line}: members must be a list of ids")
    if isinstance(weight, bool) or not isinstance(weight, (int, float)):
        raise GoldFormatError(f"gold line {line}: weight must be a number")
    topic = data.get("topic")
    return GoldCluster(cluster=str(cluster), weight=float(weight), members=tuple(str(m) for m in members), topic=None if topic is None else str(topic))


def load_gold(path: Path) -> GoldClusters:
    clusters = []
    with path.open("r", encoding="utf-8") as handle:
        for line, text in enumerate(handle, start=1):
            if not text.strip():
                continue
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise GoldFormatError(f"gold line {line}: invalid JSON ({exc.msg})") from None
            if not isinstance(data, dict):
                raise GoldFormatError(f"gold line {line}: expected a JSON object")
            clusters.append(_gold_from_mapping(data, line))
    gold = GoldClusters(tuple(clusters))
    if len(gold) == 0:
        raise GoldFormatError(f"gold file {path} contains no clusters")
    LOG.info("Loaded %d gold cluster(s) from %s", len(gold), path)
    return gold


def format_metrics_table(rows: Mapping[str, Metrics]) -> str:
    """Fixed-width table with one row per label."""
    header = f"{'':<16} {'Rec.':>8} {'Rec.w':>8} {'Prec.':>8} {'F1':>8} {'F1w':>8}"
    lines = [header, "-" * len(header)]
    for label, m in rows.items():
        lines.append(f"{label:<16} {m.recall:>8.4f} {m.weighted_recall:>8.4f} {m.precision:>8.4f} {m.f1:>8.4f} {m.weighted_f1:>8.4f}")
    return "\n".join(lines)
