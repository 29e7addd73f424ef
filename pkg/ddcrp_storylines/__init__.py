"""Storyline clustering of timestamped short documents.

The offline sampler lives in :mod:`ddcrp_storylines.sampler`, the fixed-lag
stream in :mod:`ddcrp_storylines.streaming`; :mod:`ddcrp_storylines.cli`
wires both to the ``ddcrp-storylines`` command.
"""

from importlib import metadata

from ddcrp_storylines.corpus import Corpus, StorylineError, ingest, load_corpus
from ddcrp_storylines.model import Hyperparams, LinkScope
from ddcrp_storylines.results import ClusteringResult
from ddcrp_storylines.sampler import SamplerConfig, run_baseline, run_offline
from ddcrp_storylines.streaming import StreamConfig, StreamState, finalize, push_document


def _installed_version(distribution: str = "ddcrp-storylines") -> str:
    try:
        return metadata.version(distribution)
    except metadata.PackageNotFoundError:
        # running from a source checkout
        return "0.0.0+local"


__version__ = _installed_version()

__all__ = [
    "ClusteringResult",
    "Corpus",
    "Hyperparams",
    "LinkScope",
    "SamplerConfig",
    "StorylineError",
    "StreamConfig",
    "StreamState",
    "__version__",
    "finalize",
    "ingest",
    "load_corpus",
    "push_document",
    "run_baseline",
    "run_offline",
]
