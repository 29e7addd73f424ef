"""Fixed-lag online inference.

Documents are pushed in timestamp order. After each arrival only the links
of documents inside the trailing window ``[t_new - window, t_new]`` are
resampled, and they may only follow documents inside that window. Links of
older documents are frozen for good, although their words still count in the
storylines they belong to. Frozen documents are contracted into blocks by
:meth:`SamplerState.freeze_before`, so a push costs the same however long the
stream has been running; ``nodes_visited`` in the timing log tracks it.

A :class:`StreamState` can be written to a JSON checkpoint and resumed; a
resumed stream continues with exactly the draws an uninterrupted one would
have made.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from ddcrp_storylines.corpus import Document, DuplicateDocumentError, StorylineError, Vocabulary
from ddcrp_storylines.model import Hyperparams, LinkScope
from ddcrp_storylines.results import ClusteringResult
from ddcrp_storylines.sampler import SamplerState

LOG = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ddcrp-stream-checkpoint"
CHECKPOINT_VERSION = 1
DEFAULT_WINDOW = 432000.0
TIMING_HEADER = ("push", "id", "seconds", "window_size", "num_clusters", "nodes_visited")


class OutOfOrderError(StorylineError):
    """A pushed document is older than the newest document already in the stream."""

    def __init__(self, doc_id: str, timestamp: int, latest: int) -> None:
        self.doc_id = doc_id
        self.timestamp = timestamp
        self.latest = latest
        super().__init__(f"document {doc_id!r} has timestamp {timestamp}, earlier than the latest pushed timestamp {latest}")


class CheckpointError(StorylineError):
    """A checkpoint file is unreadable, of an unknown version or inconsistent with the input."""


@dataclass(frozen=True)
class StreamConfig:
    window: float = DEFAULT_WINDOW
    iterations: int = 500
    temperature: float = 2.0
    anneal_start_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.window > 0:
            raise ValueError(f"window must be strictly positive, got {self.window}")
        if self.iterations < 0:
            raise ValueError(f"iterations must not be negative, got {self.iterations}")
        if not self.temperature >= 1.0:
            raise ValueError(f"temperature must be at least 1, got {self.temperature}")
        if not 0.0 <= self.anneal_start_fraction <= 1.0:
            raise ValueError(f"anneal_start_fraction must lie in [0, 1], got {self.anneal_start_fraction}")

    def inverse_temperature(self, iteration: int) -> float:
        if iteration < self.anneal_start_fraction * self.iterations:
            return 1.0
        return 1.0 / self.temperature


@dataclass
class StreamState:
    sampler: SamplerState
    config: StreamConfig
    vocabulary: Optional[Vocabulary] = None
    frozen_boundary: int = -1
    frozen_links: dict[int, int] = field(default_factory=dict)
    push_seconds: list[float] = field(default_factory=list)
    window_sizes: list[int] = field(default_factory=list)
    cluster_counts: list[int] = field(default_factory=list)
    visit_counts: list[int] = field(default_factory=list)
    ids: dict[str, int] = field(default_factory=dict)

    @classmethod
    def create(cls, hyper: Hyperparams, vocab_size: int, config: StreamConfig = StreamConfig(), vocabulary: Optional[Vocabulary] = None) -> "StreamState":
        sampler = SamplerState(hyper, vocab_size, seed=config.seed, scope=LinkScope.ALL)
        return cls(sampler=sampler, config=config, vocabulary=vocabulary)

    @property
    def n(self) -> int:
        return self.sampler.n

    @property
    def latest_timestamp(self) -> Optional[int]:
        return self.sampler.documents[-1].timestamp if self.sampler.documents else None

    def _freeze_through(self, boundary: int) -> None:
        for j in range(self.frozen_boundary + 1, boundary + 1):
            self.frozen_links[j] = self.sampler.link[j]
        self.frozen_boundary = max(self.frozen_boundary, boundary)


def window_start_for(state: StreamState, timestamp: float) -> int:
    """Index of the first document with ``t >= timestamp - window``."""
    if math.isinf(state.config.window):
        return 0
    cutoff = timestamp - state.config.window
    return int(np.searchsorted(state.sampler.timestamps, cutoff, side="left"))


def push_document(state: StreamState, doc: Document) -> StreamState:
    """Add one document and resample the links inside the trailing window."""
    latest = state.latest_timestamp
    if latest is not None and doc.timestamp < latest:
        raise OutOfOrderError(doc.id, doc.timestamp, latest)
    if doc.id in state.ids:
        raise DuplicateDocumentError(doc.id, state.ids[doc.id] + 1, state.n + 1, unit="push")

    started = time.perf_counter()
    sampler = state.sampler
    config = state.config
    visited = sampler.nodes_visited
    i = sampler.add_document(doc)
    state.ids[doc.id] = i

    start = window_start_for(state, doc.timestamp)
    state._freeze_through(start - 1)
    sampler.freeze_before(start)

    sampler.resample_link(i, 1.0 / config.temperature)
    for iteration in range(config.iterations):
        sampler.sweep(config.inverse_temperature(iteration))
    sampler.iteration += config.iterations

    elapsed = time.perf_counter() - started
    state.push_seconds.append(elapsed)
    state.window_sizes.append(sampler.n - start)
    state.cluster_counts.append(sampler.num_clusters)
    state.visit_counts.append(sampler.nodes_visited - visited)
    LOG.debug("Pushed %s (#%d): window %d document(s), %d storylines, %.4fs", doc.id, i, sampler.n - start, sampler.num_clusters, elapsed)
    return state


def timing_drift(seconds: Sequence[float]) -> float:
    """Relative change of push time over the stream.

    The slope of a least-squares line through the push times, scaled by the
    number of pushes and divided by the mean push time: 0.05 means the fitted
    last push is 5% slower than the fitted first one, relative to the mean.
    """
    if len(seconds) < 2:
        return 0.0
    values = np.asarray(seconds, dtype=np.float64)
    mean = float(values.mean())
    if mean <= 0.0:
        return 0.0
    slope = float(np.polyfit(np.arange(len(values), dtype=np.float64), values, 1)[0])
    return slope * len(values) / mean


def write_timing_log(state: StreamState, path: Path) -> Path:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TIMING_HEADER)
        rows = zip(state.push_seconds, state.window_sizes, state.cluster_counts, state.visit_counts)
        for push, (seconds, size, clusters, visited) in enumerate(rows):
            writer.writerow([push, state.sampler.documents[push].id, f"{seconds:.6f}", size, clusters, visited])
    return path


def finalize(state: StreamState) -> ClusteringResult:
    """Freeze everything and emit the clustering with timing metadata."""
    sampler = state.sampler
    if sampler.n == 0:
        return ClusteringResult.empty(hyper=sampler.hyper, seed=state.config.seed, mode="stream", seconds=0.0)
    state._freeze_through(sampler.n - 1)
    sampler.freeze_before(sampler.n)
    total = float(sum(state.push_seconds))
    metadata: dict[str, Any] = {
        "mode": "stream",
        "seconds": total,
        "mean_push_seconds": total / len(state.push_seconds) if state.push_seconds else 0.0,
        "timing_drift": timing_drift(state.push_seconds),
        "window": state.config.window,
        "iterations_per_push": state.config.iterations,
    }
    LOG.info("Stream finalized: %d document(s), %d storylines, %.2fs", sampler.n, sampler.num_clusters, total)
    return sampler.to_result([sampler.trace_row()], **metadata)


def _checkpoint_payload(state: StreamState) -> dict[str, Any]:
    sampler = state.sampler
    hyper = sampler.hyper
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "hyper": {"alpha": hyper.alpha, "decay_scale": hyper.decay_scale, "eta": hyper.eta},
        "vocab_size": sampler.vocab_size,
        "seed": sampler.seed,
        "iteration": sampler.iteration,
        "window_start": sampler.window_start,
        "frozen_boundary": state.frozen_boundary,
        "frozen_links": [[j, link] for j, link in sorted(state.frozen_links.items())],
        "documents": [
            {"id": doc.id, "timestamp": doc.timestamp, "items": [list(item) for item in doc.items], "topic": doc.topic}
            for doc in sampler.documents
        ],
        "links": list(sampler.link),
        "push_seconds": state.push_seconds,
        "window_sizes": state.window_sizes,
        "cluster_counts": state.cluster_counts,
        "visit_counts": state.visit_counts,
        "rng": sampler.rng.bit_generator.state,
        "vocabulary": (
            {"words": list(state.vocabulary.words), "frequencies": list(state.vocabulary.frequencies)} if state.vocabulary is not None else None
        ),
    }


def save_checkpoint(state: StreamState, path: Path) -> Path:
    """Write the stream state atomically (temporary file, then rename)."""
    payload = _checkpoint_payload(state)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise
    LOG.info("Checkpoint written to %s after %d document(s)", path, state.n)
    return path


def load_checkpoint(path: Path) -> StreamState:
    """Rebuild a :class:`StreamState` saved by :func:`save_checkpoint`."""
    try:
        with path.open("r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a stream checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} has unsupported checkpoint version {payload.get('version')!r}")

    try:
        raw_config = payload["config"]
        config = StreamConfig(
            window=float(raw_config["window"]),
            iterations=int(raw_config["iterations"]),
            temperature=float(raw_config["temperature"]),
            anneal_start_fraction=float(raw_config["anneal_start_fraction"]),
            seed=int(raw_config["seed"]),
        )
        hyper = Hyperparams(**{key: float(value) for key, value in payload["hyper"].items()})
        vocabulary = None
        if payload.get("vocabulary") is not None:
            vocabulary = Vocabulary(words=tuple(payload["vocabulary"]["words"]), frequencies=tuple(payload["vocabulary"]["frequencies"]))
        state = StreamState.create(hyper, int(payload["vocab_size"]), config, vocabulary)
        sampler = state.sampler
        for position, raw in enumerate(payload["documents"]):
            doc = Document(id=raw["id"], timestamp=int(raw["timestamp"]), items=tuple((int(w), int(c)) for w, c in raw["items"]), topic=raw.get("topic"))
            sampler.add_document(doc)
            state.ids[doc.id] = position
        links = [int(link) for link in payload["links"]]
        if len(links) != sampler.n:
            raise CheckpointError(f"{path} holds {sampler.n} document(s) but {len(links)} link(s)")
        for i, target in enumerate(links):
            if not 0 <= target < sampler.n:
                raise CheckpointError(f"{path}: link of document {i} points outside the stream")
            sampler._attach(i, target)
        sampler.iteration = int(payload["iteration"])
        sampler.freeze_before(int(payload["window_start"]))
        sampler.rng.bit_generator.state = payload["rng"]
        state.frozen_boundary = int(payload["frozen_boundary"])
        state.frozen_links = {int(j): int(link) for j, link in payload["frozen_links"]}
        state.push_seconds = [float(value) for value in payload["push_seconds"]]
        state.window_sizes = [int(value) for value in payload["window_sizes"]]
        state.cluster_counts = [int(value) for value in payload["cluster_counts"]]
        state.visit_counts = [int(value) for value in payload.get("visit_counts", [0] * len(state.push_seconds))]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path} is malformed: {exc}") from exc
    LOG.info("Resumed stream from %s with %d document(s)", path, state.n)
    return state
