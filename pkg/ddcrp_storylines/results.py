"""Clustering results and their on-disk formats.

Assignments are JSON-lines, one document per line in store order::

    {"id": "d1", "cluster": 0, "link": "d0", "timestamp": 1400000000}

``cluster`` is the lowest store index of the storyline, ``link`` the id of the
followed document (``null`` for the finite-mixture baseline) and ``topic`` is
written only when the input carried one. The trace is a CSV with header
``iteration,joint_log_prob,alpha,a,eta,num_clusters``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Optional, Sequence

import numpy as np

from ddcrp_storylines.corpus import DocumentStore, RecordFormatError, Vocabulary
from ddcrp_storylines.model import ClusterStats, Hyperparams, Partition, cluster_topic_estimate

LOG = logging.getLogger(__name__)

TRACE_HEADER = ("iteration", "joint_log_prob", "alpha", "a", "eta", "num_clusters")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    joint_log_prob: float
    alpha: Optional[float]
    a: Optional[float]
    eta: float
    num_clusters: int

    def as_csv_row(self) -> list[str]:
        return [
            str(self.iteration),
            repr(self.joint_log_prob),
            "" if self.alpha is None else repr(self.alpha),
            "" if self.a is None else repr(self.a),
            repr(self.eta),
            str(self.num_clusters),
        ]


@dataclass
class ClusteringResult:
    ids: list[str]
    timestamps: list[int]
    labels: tuple[int, ...]
    links: Optional[tuple[int, ...]] = None
    topics: list[Optional[str]] = field(default_factory=list)
    hyper: Optional[Hyperparams] = None
    seed: Optional[int] = None
    trace: list[TraceRow] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def empty(cls, hyper: Optional[Hyperparams] = None, seed: Optional[int] = None, **metadata: Any) -> "ClusteringResult":
        return cls(ids=[], timestamps=[], labels=(), links=(), hyper=hyper, seed=seed, metadata=dict(metadata))

    @property
    def partition(self) -> Partition:
        return Partition.from_labels(self.labels)

    @property
    def num_clusters(self) -> int:
        return len(set(self.labels))

    @property
    def final_log_prob(self) -> float:
        return self.trace[-1].joint_log_prob if self.trace else float("-inf")

    def assignment_rows(self) -> list[dict[str, Any]]:
        rows = []
        for i, doc_id in enumerate(self.ids):
            row: dict[str, Any] = {
                "id": doc_id,
                "cluster": int(self.labels[i]),
                "link": self.ids[self.links[i]] if self.links else None,
                "timestamp": int(self.timestamps[i]),
            }
            topic = self.topics[i] if self.topics else None
            if topic is not None:
                row["topic"] = topic
            rows.append(row)
        return rows


@dataclass(frozen=True)
class Assignment:
    id: str
    cluster: Hashable
    link: Optional[str] = None
    timestamp: Optional[int] = None
    topic: Optional[str] = None


def write_jsonl(rows: Iterable[dict[str, Any]], path: Path) -> int:
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, separators=(", ", ": ")))
            handle.write("\n")
            count += 1
    return count


def write_assignments(result: ClusteringResult, path: Path) -> Path:
    count = write_jsonl(result.assignment_rows(), path)
    LOG.info("Wrote %d assignment(s) to %s", count, path)
    return path


def write_trace(trace: Sequence[TraceRow], path: Path) -> Path:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_HEADER)
        for row in trace:
            writer.writerow(row.as_csv_row())
    return path


def read_assignments(path: Path) -> list[Assignment]:
    """Read an assignments or truth file (``{"id", "cluster"}`` lines at minimum)."""
    assignments: list[Assignment] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, text in enumerate(handle, start=1):
            if not text.strip():
                continue
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(line_number, f"invalid JSON in {path}: {exc.msg}") from None
            if not isinstance(data, dict) or "id" not in data or "cluster" not in data:
                raise RecordFormatError(line_number, f"{path}: expected an object with 'id' and 'cluster'")
            cluster = data["cluster"]
            if isinstance(cluster, (list, dict)) or cluster is None:
                raise RecordFormatError(line_number, f"{path}: cluster must be a string or integer")
            doc_id = str(data["id"])
            if doc_id in seen:
                raise RecordFormatError(line_number, f"{path}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            timestamp = data.get("timestamp")
            assignments.append(
                Assignment(
                    id=doc_id,
                    cluster=cluster,
                    link=data.get("link"),
                    timestamp=int(timestamp) if timestamp is not None else None,
                    topic=data.get("topic"),
                )
            )
    return assignments


def cluster_summaries(result: ClusteringResult, store: DocumentStore, vocabulary: Vocabulary, eta: float, top_n: int = 10) -> list[dict[str, Any]]:
    """Size, time span and most probable words of every storyline."""
    summaries = []
    V = max(vocabulary.size, 1)
    for label, members in sorted(result.partition.clusters().items()):
        docs = [store[store.position(result.ids[i])] for i in members]
        stats = ClusterStats.from_documents(docs)
        top: list[str] = []
        if vocabulary.size:
            estimate = cluster_topic_estimate(stats, eta, V)
            order = np.argsort(-estimate, kind="stable")[: min(top_n, vocabulary.size)]
            top = [vocabulary.words[w] for w in order if w in stats.counts]
        summaries.append(
            {
                "cluster": int(label),
                "size": len(members),
                "first_timestamp": min(doc.timestamp for doc in docs),
                "last_timestamp": max(doc.timestamp for doc in docs),
                "top_words": top,
            }
        )
    return summaries
