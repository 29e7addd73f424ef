"""
Unit tests for planted-storyline corpora.

Tests cover:
- SynthConfig validation
- Vocabulary layout with shared words
- Record order, truth labels and gold weights
"""

import pytest

from ddcrp_storylines.corpus import ingest
from ddcrp_storylines.synth import SynthConfig, generate_storylines, storyline_words


class TestSynthConfig:
    """Tests for SynthConfig validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_storylines": 0},
            {"docs_per_storyline": 0},
            {"words_per_storyline": 0},
            {"shared_words": 6},
            {"doc_length": 0},
            {"spread": -1.0},
        ],
    )
    def test_invalid_values(self, kwargs):
        with pytest.raises(ValueError):
            SynthConfig(**kwargs)


class TestStorylineWords:
    """Tests for storyline_words."""

    def test_disjoint_by_default(self):
        config = SynthConfig(words_per_storyline=3)
        assert storyline_words(config, 1) == ["s1w0", "s1w1", "s1w2"]

    def test_shared_prefix(self):
        config = SynthConfig(words_per_storyline=4, shared_words=2)
        assert storyline_words(config, 0)[:2] == storyline_words(config, 1)[:2] == ["common0", "common1"]
        assert storyline_words(config, 1)[2:] == ["s1w2", "s1w3"]


class TestGenerateStorylines:
    """Tests for generate_storylines."""

    @pytest.mark.minimal
    def test_sizes_and_order(self, planted):
        assert len(planted.records) == 90
        keys = [(r["timestamp"], r["id"]) for r in planted.records]
        assert keys == sorted(keys)
        assert [row["id"] for row in planted.truth] == [r["id"] for r in planted.records]

    def test_gold_weights_are_document_counts(self, planted):
        assert [g["cluster"] for g in planted.gold] == ["s0", "s1", "s2"]
        assert all(g["weight"] == len(g["members"]) == 30 for g in planted.gold)

    def test_documents_use_their_storyline_words(self, planted):
        labels = planted.labels
        for record in planted.records:
            k = labels[record["id"]]
            assert all(token.startswith(f"s{k}w") for token in record["text"].split())

    def test_same_seed_same_corpus(self):
        config = SynthConfig(num_storylines=2, docs_per_storyline=5, seed=3)
        assert generate_storylines(config) == generate_storylines(config)

    def test_centres_are_separated(self, planted):
        stamps = {k: [] for k in range(3)}
        for record in planted.records:
            stamps[planted.labels[record["id"]]].append(record["timestamp"])
        means = [sum(v) / len(v) for _, v in sorted(stamps.items())]
        assert means[1] - means[0] == pytest.approx(864000.0, abs=5 * 43200.0)

    def test_records_ingest_cleanly(self, planted_corpus):
        assert len(planted_corpus.store) == 90
        assert planted_corpus.issues == []
        assert planted_corpus.vocabulary.size == 15

    def test_single_storyline(self):
        corpus = generate_storylines(SynthConfig(num_storylines=1, docs_per_storyline=4, doc_length=2))
        assert len(ingest(corpus.records).store) == 4
        assert {row["cluster"] for row in corpus.truth} == {0}
