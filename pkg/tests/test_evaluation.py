"""
Unit tests for timeline scoring and clustering agreement.

Tests cover:
- select_representatives / timeline_from_assignments
- score on hand-computed examples and its monotonicity properties
- Per-topic scoring and macro averages
- adjusted_rand_index against scikit-learn
- Gold file loading and validation
"""

import json

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from ddcrp_storylines.evaluation import (
    GoldCluster,
    GoldClusters,
    GoldFormatError,
    Metrics,
    Timeline,
    adjusted_rand_index,
    align_assignments,
    average_metrics,
    format_metrics_table,
    harmonic_mean,
    load_gold,
    score,
    score_by_topic,
    select_representatives,
    timeline_from_assignments,
)
from ddcrp_storylines.model import Partition
from ddcrp_storylines.results import Assignment
from tests.helpers import make_store


def hand_gold():
    return GoldClusters((GoldCluster("c1", 2.0, ("t1", "t2")), GoldCluster("c2", 1.0, ("t3",))))


class TestTimeline:
    """Tests for Timeline construction and representatives."""

    def test_duplicates_are_rejected(self):
        with pytest.raises(ValueError):
            Timeline(("a", "a"))

    def test_from_ids_deduplicates(self):
        assert Timeline.from_ids(["a", "b", "a"]).ids == ("a", "b")

    def test_singletons_are_all_returned(self):
        store = make_store([{0: 1}] * 3, [1, 2, 3])
        assert select_representatives(Partition((0, 1, 2)), store).ids == tuple(store.ids)

    def test_earliest_member_represents_cluster(self):
        store = make_store([{0: 1}, {0: 1}], [3, 5])
        assert select_representatives(Partition((0, 0)), store).ids == (store.ids[0],)

    def test_relabeling_does_not_matter(self):
        store = make_store([{0: 1}] * 4, [1, 2, 3, 4])
        first = select_representatives(Partition.from_labels(["x", "y", "x", "z"]), store)
        second = select_representatives(Partition.from_labels([7, 3, 7, 1]), store)
        assert first == second

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            select_representatives(Partition((0,)), make_store([{0: 1}] * 2))

    def test_from_assignments_orders_by_time(self):
        assignments = [Assignment("b", 0, timestamp=5), Assignment("a", 0, timestamp=3), Assignment("c", 1, timestamp=4)]
        assert timeline_from_assignments(assignments).ids == ("a", "c")

    def test_from_assignments_without_timestamps_keeps_file_order(self):
        assignments = [Assignment("b", 0), Assignment("a", 0), Assignment("c", 1)]
        assert timeline_from_assignments(assignments).ids == ("b", "c")


class TestScore:
    """Tests for score."""

    @pytest.mark.minimal
    def test_hand_example_with_non_relevant_document(self):
        metrics = score(Timeline(("t1", "t3", "t5")), hand_gold())
        assert metrics.recall == 1.0
        assert metrics.weighted_recall == 1.0
        assert metrics.precision == pytest.approx(2 / 3, rel=1e-15)
        assert metrics.f1 == pytest.approx(0.8, rel=1e-15)

    def test_hand_example_with_redundant_document(self):
        metrics = score(Timeline(("t1", "t2")), hand_gold())
        assert metrics.recall == 0.5
        assert metrics.weighted_recall == pytest.approx(2 / 3)
        assert metrics.precision == 0.5
        assert metrics.f1 == 0.5

    def test_perfect_timeline(self):
        metrics = score(Timeline(("t2", "t3")), hand_gold())
        assert metrics == Metrics(1.0, 1.0, 1.0, 1.0, 1.0)

    def test_empty_timeline_scores_zero(self):
        assert score(Timeline(()), hand_gold()) == Metrics.zero()

    def test_empty_gold_is_an_error(self):
        with pytest.raises(GoldFormatError):
            score(Timeline(("t1",)), GoldClusters(()))

    def test_non_relevant_document_never_helps(self):
        base = score(Timeline(("t1",)), hand_gold())
        padded = score(Timeline(("t1", "zz")), hand_gold())
        assert padded.precision <= base.precision
        assert padded.recall == base.recall

    def test_uncovered_cluster_raises_recall(self):
        base = score(Timeline(("t1",)), hand_gold())
        extended = score(Timeline(("t1", "t3")), hand_gold())
        assert extended.recall > base.recall
        assert extended.weighted_recall > base.weighted_recall

    def test_order_only_matters_through_first_entries(self):
        gold = hand_gold()
        assert score(Timeline(("t1", "t3", "t2")), gold) == score(Timeline(("t3", "t1", "t2")), gold)

    def test_equal_weights_make_weighted_recall_equal_recall(self):
        gold = GoldClusters(tuple(GoldCluster(f"c{k}", 3.0, (f"d{k}a", f"d{k}b")) for k in range(5)))
        for ids in [("d0a",), ("d0a", "d1b", "x"), ("d4b", "d3a", "d2a", "d1a")]:
            metrics = score(Timeline(ids), gold)
            assert metrics.weighted_recall == metrics.recall

    def test_harmonic_mean_of_zeros(self):
        assert harmonic_mean(0.0, 0.0) == 0.0


class TestGoldClusters:
    """Tests for GoldClusters validation and load_gold."""

    def test_overlapping_clusters_are_rejected(self):
        with pytest.raises(GoldFormatError):
            GoldClusters((GoldCluster("a", 1.0, ("x",)), GoldCluster("b", 1.0, ("x",))))

    def test_non_positive_weight_is_rejected(self):
        with pytest.raises(GoldFormatError):
            GoldClusters((GoldCluster("a", 0.0, ("x",)),))

    def test_load_hand_gold(self, skip_if_no_sample):
        gold = load_gold(skip_if_no_sample("gold", "hand"))
        assert [g.cluster for g in gold.clusters] == ["c1", "c2"]
        assert gold.total_weight == 3.0

    def test_load_empty_gold(self, skip_if_no_sample):
        with pytest.raises(GoldFormatError):
            load_gold(skip_if_no_sample("gold", "empty"))

    @pytest.mark.parametrize(
        "line",
        ["not json", "[1, 2]", '{"weight": 1, "members": ["a"]}', '{"cluster": "a", "members": "a"}', '{"cluster": "a", "weight": "x", "members": ["a"]}'],
    )
    def test_malformed_lines(self, tmp_path, line):
        path = tmp_path / "gold.jsonl"
        path.write_text(line + "\n")
        with pytest.raises(GoldFormatError, match="line 1"):
            load_gold(path)

    def test_weight_defaults_to_one(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        path.write_text(json.dumps({"cluster": 5, "members": ["a", 7]}) + "\n")
        gold = load_gold(path)
        assert gold.clusters[0] == GoldCluster("5", 1.0, ("a", "7"))


class TestScoreByTopic:
    """Tests for score_by_topic and average_metrics."""

    def test_topics_are_scored_separately(self, skip_if_no_sample):
        gold = load_gold(skip_if_no_sample("gold", "default"))
        assignments = [
            Assignment("eq1", 0, timestamp=1, topic="MB01"),
            Assignment("eq2", 0, timestamp=2, topic="MB01"),
            Assignment("el1", 2, timestamp=3, topic="MB01"),
            Assignment("ft1", 3, timestamp=4, topic="MB02"),
            Assignment("ft2", 4, timestamp=5, topic="MB02"),
        ]
        per_topic, average = score_by_topic(assignments, gold)
        assert set(per_topic) == {"MB01", "MB02"}
        assert per_topic["MB01"] == Metrics(1.0, 1.0, 1.0, 1.0, 1.0)
        assert per_topic["MB02"].precision == 0.5
        assert average.precision == pytest.approx(0.75)

    def test_gold_without_topics(self):
        with pytest.raises(GoldFormatError):
            score_by_topic([Assignment("t1", 0)], hand_gold())

    def test_average_of_nothing(self):
        assert average_metrics([]) == Metrics.zero()

    def test_table_lists_every_row(self):
        table = format_metrics_table({"overall": Metrics.from_rates(1.0, 1.0, 2 / 3)})
        assert "overall" in table
        assert "0.6667" in table


class TestAdjustedRandIndex:
    """Tests for adjusted_rand_index."""

    @pytest.mark.minimal
    def test_identical_partitions(self):
        assert adjusted_rand_index([0, 0, 1, 2], [0, 0, 1, 2]) == 1.0

    def test_singletons_vs_one_cluster(self):
        assert adjusted_rand_index([0, 1, 2, 3], [0, 0, 0, 0]) == pytest.approx(0.0, abs=1e-15)

    def test_relabeling_invariance(self):
        assert adjusted_rand_index(["a", "a", "b", "c"], [5, 5, 9, 9]) == adjusted_rand_index([1, 1, 2, 3], ["x", "x", "y", "y"])

    def test_accepts_partitions(self):
        assert adjusted_rand_index(Partition((0, 0, 2)), Partition.from_labels(["q", "q", "r"])) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            adjusted_rand_index([0, 1], [0])

    def test_matches_scikit_learn(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            n = int(rng.integers(2, 60))
            left = rng.integers(0, int(rng.integers(1, 8)), size=n).tolist()
            right = rng.integers(0, int(rng.integers(1, 8)), size=n).tolist()
            assert adjusted_rand_index(left, right) == pytest.approx(adjusted_rand_score(right, left), abs=1e-12)

    def test_align_assignments(self):
        predicted = [Assignment("b", 1), Assignment("a", 0)]
        truth = [Assignment("a", "x"), Assignment("b", "y")]
        assert align_assignments(predicted, truth) == ([0, 1], ["x", "y"])
        with pytest.raises(GoldFormatError):
            align_assignments(predicted[:1], truth)
