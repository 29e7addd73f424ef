"""Hyperparameter estimation for the storyline model.

``alpha`` and the decay scale ``a`` are tuned by gradient ascent on the link
prior ``log P(c)``, interleaved with Gibbs sweeps (a Monte Carlo EM scheme).
Steps are taken on ``log alpha`` and ``log a`` so both stay positive.
``eta`` is set once from the corpus with Minka's closed-form heuristic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ddcrp_storylines.corpus import Vocabulary
from ddcrp_storylines.model import FollowerGraph, Hyperparams, LinkScope, SupportsTimestamps, candidate_range

if TYPE_CHECKING:
    from ddcrp_storylines.sampler import SamplerState

LOG = logging.getLogger(__name__)

DEFAULT_ETA = 0.1
MIN_ETA = 1e-4


@dataclass(frozen=True)
class HyperUpdateConfig:
    alpha_step: float = 0.01
    scale_step: float = 0.01
    period: int = 10
    clip: float = 10.0

    def __post_init__(self) -> None:
        if not self.alpha_step > 0 or not self.scale_step > 0:
            raise ValueError("step sizes must be strictly positive")
        if self.period < 1:
            raise ValueError(f"period must be at least 1, got {self.period}")
        if not self.clip > 0:
            raise ValueError(f"clip must be strictly positive, got {self.clip}")


def log_prior_and_gradient(
    graph: FollowerGraph,
    store: SupportsTimestamps,
    alpha: float,
    a: float,
    scope: LinkScope = LinkScope.ALL,
) -> tuple[float, float, float]:
    """Link log prior with its derivatives in ``log alpha`` and ``log a``.

    With ``Z_i = alpha + sum_j f_ij`` and ``f_ij = exp(-|dt_ij| / a)``:

    * d/d log alpha: ``[c_i = i] - alpha / Z_i``
    * d/d log a: ``[c_i != i] |dt_ic| / a - (sum_j f_ij |dt_ij| / a) / Z_i``
    """
    times = np.asarray(store.timestamps, dtype=np.float64)
    n = len(graph)
    value = 0.0
    d_alpha = 0.0
    d_scale = 0.0
    for i, target in enumerate(graph.links):
        lo, hi = candidate_range(i, n, scope)
        gaps = np.abs(times[lo:hi] - times[i])
        weights = np.exp(-gaps / a)
        if lo <= i < hi:
            weights[i - lo] = 0.0
        normalizer = alpha + float(weights.sum())
        spread = float(np.dot(weights, gaps)) / a
        if target == i:
            value += math.log(alpha) - math.log(normalizer)
            d_alpha += 1.0 - alpha / normalizer
            d_scale -= spread / normalizer
        elif lo <= target < hi:
            gap = abs(times[i] - times[target]) / a
            value += -gap - math.log(normalizer)
            d_alpha -= alpha / normalizer
            d_scale += gap - spread / normalizer
        else:
            return -math.inf, 0.0, 0.0
    return value, d_alpha, d_scale


def _clip(value: float, bound: float) -> float:
    return max(-bound, min(bound, value))


def gradient_step(state: "SamplerState", config: HyperUpdateConfig) -> Hyperparams:
    """One clipped ascent step on ``(log alpha, log a)``; ``eta`` is untouched."""
    hyper = state.hyper
    value, d_alpha, d_scale = log_prior_and_gradient(state.graph(), state, hyper.alpha, hyper.decay_scale, state.scope)
    alpha = hyper.alpha * math.exp(config.alpha_step * _clip(d_alpha, config.clip))
    scale = hyper.decay_scale * math.exp(config.scale_step * _clip(d_scale, config.clip))
    LOG.debug("Hyperparameter step: log prior %.4f, alpha %.6g -> %.6g, a %.6g -> %.6g", value, hyper.alpha, alpha, hyper.decay_scale, scale)
    return hyper.replace(alpha=alpha, decay_scale=scale)


def estimate_eta(vocabulary: Vocabulary) -> float:
    """Minka's heuristic ``eta = ((K - 1) / 2) / |sum_k log p_k|``.

    ``K`` counts the words seen exactly once in the corpus and ``p_k`` is the
    unigram probability of each of them. The sum is negative, so its absolute
    value is used to keep ``eta`` positive.
    """
    singletons = vocabulary.singleton_ids
    if vocabulary.size < 2 or len(singletons) <= 1:
        LOG.warning("Cannot estimate eta from %d singleton word(s); using default %.3g", len(singletons), DEFAULT_ETA)
        return DEFAULT_ETA
    unigram = vocabulary.unigram
    log_mass = float(np.sum(np.log(unigram[singletons])))
    eta = ((len(singletons) - 1) / 2.0) / abs(log_mass)
    eta = max(eta, MIN_ETA)
    LOG.info("Estimated eta %.6g from %d singleton word(s)", eta, len(singletons))
    return eta
