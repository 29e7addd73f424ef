"""Planted-storyline corpora for recovery experiments.

Storyline ``k`` owns the words ``s{k}w0 .. s{k}w{m-1}``; the first
``shared_words`` of them are replaced by words common to every storyline
(``common0`` ...), so overlap can be dialled in. Document timestamps are
drawn from a normal distribution around the storyline's centre; centres are
``center_gap`` seconds apart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthConfig:
    num_storylines: int = 3
    docs_per_storyline: int = 30
    words_per_storyline: int = 5
    shared_words: int = 0
    doc_length: int = 6
    center_gap: float = 864000.0
    spread: float = 43200.0
    start: int = 1_400_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_storylines < 1:
            raise ValueError(f"num_storylines must be at least 1, got {self.num_storylines}")
        if self.docs_per_storyline < 1:
            raise ValueError(f"docs_per_storyline must be at least 1, got {self.docs_per_storyline}")
        if self.words_per_storyline < 1:
            raise ValueError(f"words_per_storyline must be at least 1, got {self.words_per_storyline}")
        if not 0 <= self.shared_words <= self.words_per_storyline:
            raise ValueError(f"shared_words must lie in [0, words_per_storyline], got {self.shared_words}")
        if self.doc_length < 1:
            raise ValueError(f"doc_length must be at least 1, got {self.doc_length}")
        if self.center_gap < 0 or self.spread < 0:
            raise ValueError("center_gap and spread must not be negative")


@dataclass
class SyntheticCorpus:
    records: list[dict[str, Any]]
    truth: list[dict[str, Any]]
    gold: list[dict[str, Any]] = field(default_factory=list)

    @property
    def labels(self) -> dict[str, int]:
        return {row["id"]: row["cluster"] for row in self.truth}


def storyline_words(config: SynthConfig, storyline: int) -> list[str]:
    shared = [f"common{m}" for m in range(config.shared_words)]
    own = [f"s{storyline}w{m}" for m in range(config.shared_words, config.words_per_storyline)]
    return shared + own


def generate_storylines(config: SynthConfig = SynthConfig()) -> SyntheticCorpus:
    """Records in timestamp order, the planted labels and a gold file.

    Each storyline becomes one gold cluster weighted by its document count.
    """
    rng = np.random.default_rng(config.seed)
    rows: list[tuple[int, str, str, int]] = []
    for k in range(config.num_storylines):
        vocabulary = storyline_words(config, k)
        center = config.start + k * config.center_gap
        stamps = np.rint(rng.normal(center, config.spread, size=config.docs_per_storyline)).astype(np.int64)
        for d, stamp in enumerate(stamps):
            tokens = rng.choice(vocabulary, size=config.doc_length)
            rows.append((int(stamp), f"s{k}d{d}", " ".join(str(t) for t in tokens), k))
    rows.sort(key=lambda row: (row[0], row[1]))

    records = [{"id": doc_id, "timestamp": stamp, "text": text} for stamp, doc_id, text, _ in rows]
    truth = [{"id": doc_id, "cluster": k} for _, doc_id, _, k in rows]
    gold = []
    for k in range(config.num_storylines):
        members = [doc_id for _, doc_id, _, label in rows if label == k]
        gold.append({"cluster": f"s{k}", "weight": len(members), "members": members})
    LOG.info("Generated %d document(s) in %d storylines (seed %d)", len(records), config.num_storylines, config.seed)
    return SyntheticCorpus(records=records, truth=truth, gold=gold)
