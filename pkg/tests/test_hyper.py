"""
Unit tests for hyperparameter estimation.

Tests cover:
- log_prior_and_gradient values and analytic gradients vs finite differences
- gradient_step ascent behaviour
- estimate_eta heuristic and its fallback
"""

import math

import numpy as np
import pytest

from ddcrp_storylines.corpus import Vocabulary
from ddcrp_storylines.hyper import DEFAULT_ETA, HyperUpdateConfig, estimate_eta, gradient_step, log_prior_and_gradient
from ddcrp_storylines.model import FollowerGraph, Hyperparams, LinkScope
from ddcrp_storylines.sampler import SamplerState
from tests.helpers import make_store


def linked_state(timestamps, links, hyper):
    store = make_store([{0: 1}] * len(timestamps), timestamps)
    state = SamplerState.from_store(store, hyper, 1)
    for i, target in enumerate(links):
        state._attach(i, target)
    return state


class TestLogPriorAndGradient:
    """Tests for log_prior_and_gradient."""

    @pytest.mark.minimal
    def test_single_document(self):
        value, d_alpha, d_scale = log_prior_and_gradient(FollowerGraph((0,)), make_store([{0: 1}]), 2.5, 7.0)
        assert value == pytest.approx(0.0, abs=1e-15)
        assert d_alpha == pytest.approx(0.0, abs=1e-15)
        assert d_scale == pytest.approx(0.0, abs=1e-15)

    def test_two_self_linked_documents_one_scale_apart(self):
        a = 3600.0
        store = make_store([{0: 1}] * 2, [0, int(a)])
        value, d_alpha, _ = log_prior_and_gradient(FollowerGraph((0, 1)), store, 1.0, a)
        z = 1.0 + math.exp(-1.0)
        assert value == pytest.approx(2 * math.log(1 / z), rel=1e-12)
        assert d_alpha == pytest.approx(2 * (1 - 1 / z), rel=1e-12)

    def test_forward_link_in_sequential_scope_is_impossible(self):
        store = make_store([{0: 1}] * 2, [0, 1])
        value, _, _ = log_prior_and_gradient(FollowerGraph((1, 1)), store, 1.0, 1.0, LinkScope.SEQUENTIAL)
        assert value == -math.inf

    def test_gradients_match_central_differences(self):
        """Over 120 random graphs, analytic log-parameter gradients agree with finite differences."""
        rng = np.random.default_rng(17)
        h = 1e-5
        for _ in range(120):
            n = int(rng.integers(2, 7))
            timestamps = sorted(int(t) for t in rng.integers(0, 1000, size=n))
            store = make_store([{0: 1}] * n, timestamps)
            graph = FollowerGraph(tuple(int(j) for j in rng.integers(0, n, size=n)))
            alpha = float(rng.uniform(0.1, 5.0))
            a = float(rng.uniform(10.0, 1000.0))

            def value_at(log_alpha, log_a):
                return log_prior_and_gradient(graph, store, math.exp(log_alpha), math.exp(log_a))[0]

            _, d_alpha, d_scale = log_prior_and_gradient(graph, store, alpha, a)
            la, ls = math.log(alpha), math.log(a)
            numeric_alpha = (value_at(la + h, ls) - value_at(la - h, ls)) / (2 * h)
            numeric_scale = (value_at(la, ls + h) - value_at(la, ls - h)) / (2 * h)
            assert d_alpha == pytest.approx(numeric_alpha, rel=1e-4, abs=1e-6)
            assert d_scale == pytest.approx(numeric_scale, rel=1e-4, abs=1e-6)


class TestGradientStep:
    """Tests for gradient_step."""

    def test_zero_gradient_leaves_parameters_unchanged(self):
        hyper = Hyperparams(alpha=1.3, decay_scale=50.0, eta=0.2)
        state = linked_state([0], [0], hyper)
        assert gradient_step(state, HyperUpdateConfig()) == hyper

    def test_linked_pair_drives_scale_upward(self):
        hyper = Hyperparams(alpha=1.0, decay_scale=10.0, eta=0.2)
        state = linked_state([0, 20], [1, 0], hyper)
        config = HyperUpdateConfig(alpha_step=0.05, scale_step=0.05)
        scales = [hyper.decay_scale]
        values = [log_prior_and_gradient(state.graph(), state, hyper.alpha, hyper.decay_scale)[0]]
        for _ in range(30):
            state.set_hyper(gradient_step(state, config))
            scales.append(state.hyper.decay_scale)
            values.append(log_prior_and_gradient(state.graph(), state, state.hyper.alpha, state.hyper.decay_scale)[0])
        assert all(later > earlier for earlier, later in zip(scales, scales[1:]))
        assert all(later >= earlier for earlier, later in zip(values, values[1:]))
        assert state.hyper.eta == 0.2

    def test_small_step_is_an_ascent_step(self):
        rng = np.random.default_rng(8)
        config = HyperUpdateConfig(alpha_step=1e-4, scale_step=1e-4)
        for _ in range(30):
            n = int(rng.integers(2, 8))
            timestamps = sorted(int(t) for t in rng.integers(0, 500, size=n))
            links = [int(j) for j in rng.integers(0, n, size=n)]
            hyper = Hyperparams(alpha=float(rng.uniform(0.2, 3.0)), decay_scale=float(rng.uniform(20.0, 400.0)), eta=1.0)
            state = linked_state(timestamps, links, hyper)
            before = log_prior_and_gradient(state.graph(), state, hyper.alpha, hyper.decay_scale)[0]
            updated = gradient_step(state, config)
            after = log_prior_and_gradient(state.graph(), state, updated.alpha, updated.decay_scale)[0]
            assert after >= before - 1e-12

    def test_partition_is_untouched(self):
        hyper = Hyperparams(alpha=1.0, decay_scale=10.0, eta=0.2)
        state = linked_state([0, 5, 50], [1, 1, 2], hyper)
        partition = state.partition()
        state.set_hyper(gradient_step(state, HyperUpdateConfig()))
        assert state.partition() == partition
        assert state.link == [1, 1, 2]

    @pytest.mark.parametrize("kwargs", [{"alpha_step": 0}, {"scale_step": -1}, {"period": 0}, {"clip": 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            HyperUpdateConfig(**kwargs)


class TestEstimateEta:
    """Tests for estimate_eta."""

    @pytest.mark.minimal
    def test_two_singletons(self):
        """Tokens a, a, b, c: two singletons of probability 1/4 each."""
        vocab = Vocabulary.from_counter({"a": 2, "b": 1, "c": 1})
        assert estimate_eta(vocab) == pytest.approx(0.18034, abs=1e-5)

    def test_no_singletons_falls_back(self):
        assert estimate_eta(Vocabulary.from_counter({"a": 2, "b": 3})) == DEFAULT_ETA

    def test_one_singleton_falls_back(self):
        assert estimate_eta(Vocabulary.from_counter({"a": 2, "b": 1})) == DEFAULT_ETA

    def test_tiny_vocabulary_falls_back(self):
        assert estimate_eta(Vocabulary.from_counter({"a": 1})) == DEFAULT_ETA

    @pytest.mark.parametrize("n", [2, 10, 500])
    def test_all_distinct_words(self, n):
        vocab = Vocabulary.from_counter({f"w{k}": 1 for k in range(n)})
        assert estimate_eta(vocab) == pytest.approx(((n - 1) / 2) / (n * math.log(n)), rel=1e-12)

    def test_always_positive_and_finite(self, planted_corpus):
        eta = estimate_eta(planted_corpus.vocabulary)
        assert eta > 0
        assert math.isfinite(eta)
