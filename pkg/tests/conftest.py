"""Pytest configuration and fixtures for ddcrp-storylines tests.

Sample files (corpora and gold clusters) are looked up through a
``test_set.yaml``; synthetic corpora come from :mod:`ddcrp_storylines.synth`.
"""

import os
import shutil
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Generator

import pytest
import yaml

from ddcrp_storylines.corpus import Corpus, ingest
from ddcrp_storylines.synth import SynthConfig, SyntheticCorpus, generate_storylines

PROJECT_ROOT = Path(__file__).parent.parent
LOG_ARCHIVE = Path(__file__).parent / "results" / "logs"


@dataclass
class TestSetConfig:
    """A named set of sample corpora and gold files.

    ``samples`` maps a kind (``corpus`` or ``gold``) to variants such as
    ``jsonl``, ``tsv`` or ``truth``; every kind has a ``default`` variant.
    """

    name: str
    base_path: Path
    samples: dict[str, dict[str, str | None]] = field(default_factory=dict)

    def get_sample(self, kind: str, variant: str = "default") -> Path | None:
        variants = self.samples.get(kind) or {}
        relative = variants.get(variant, variants.get("default"))
        if relative is None:
            return None
        path = self.base_path / relative
        return path if path.exists() else None

    @classmethod
    def load(cls, config_path: Path) -> "TestSetConfig":
        data = yaml.safe_load(config_path.read_text(encoding="utf-8")) or {}
        return cls(
            name=data.get("name", config_path.stem),
            base_path=(config_path.parent / data.get("base_path", ".")).resolve(),
            samples=data.get("samples", {}),
        )


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--test-set",
        action="store",
        default=None,
        help="Path to a test_set.yaml (default: TEST_SET_CONFIG or samples/test_set.yaml).",
    )


@pytest.fixture(scope="session")
def test_set_config(request: pytest.FixtureRequest) -> TestSetConfig:
    """Test set chosen by --test-set, then TEST_SET_CONFIG, then the public samples."""
    option = request.config.getoption("--test-set") or os.environ.get("TEST_SET_CONFIG")
    config_path = Path(option) if option else PROJECT_ROOT / "samples" / "test_set.yaml"
    if not config_path.exists():
        pytest.skip(f"Test set config not found: {config_path}")
    return TestSetConfig.load(config_path)


@pytest.fixture
def skip_if_no_sample(test_set_config: TestSetConfig) -> Callable[..., Path]:
    """Return a lookup that skips the test when the sample is missing from the test set."""

    def lookup(kind: str, variant: str = "default") -> Path:
        sample = test_set_config.get_sample(kind, variant)
        if sample is None:
            pytest.skip(f"Sample not available: {kind}/{variant} (test set {test_set_config.name!r})")
        return sample

    return lookup


@pytest.fixture(scope="session")
def sample_corpus_path(test_set_config: TestSetConfig) -> Path:
    path = test_set_config.get_sample("corpus", "jsonl")
    if path is None:
        pytest.skip("sample corpus not available")
    return path


@pytest.fixture(scope="session")
def planted() -> SyntheticCorpus:
    """Three planted storylines, disjoint 5-word vocabularies, centres 10 days apart, 30 docs each."""
    return generate_storylines(SynthConfig(num_storylines=3, docs_per_storyline=30, seed=7))


@pytest.fixture(scope="session")
def planted_corpus(planted: SyntheticCorpus) -> Corpus:
    return ingest(planted.records)


@pytest.fixture(autouse=True)
def preserve_test_logs(request: pytest.FixtureRequest, tmp_path: Path) -> Generator[None, None, None]:
    """Copy every ``ddcrp_run_*.log`` a test wrote to ``tests/results/logs/``."""
    yield
    run_logs = sorted(tmp_path.rglob("ddcrp_run_*.log")) if tmp_path.exists() else []
    if not run_logs:
        return
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    LOG_ARCHIVE.mkdir(parents=True, exist_ok=True)
    for log_file in run_logs:
        try:
            shutil.copy2(log_file, LOG_ARCHIVE / f"{request.node.name}_{stamp}_{log_file.name}")
        except OSError as exc:
            print(f"Warning: could not keep run log {log_file}: {exc}")
