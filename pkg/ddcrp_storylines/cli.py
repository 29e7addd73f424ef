from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
import time
import unicodedata
from dataclasses import asdict, dataclass, field, fields
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable, NoReturn, Optional, Sequence

from ddcrp_storylines import __version__
from ddcrp_storylines.corpus import (
    RECORD_FORMATS,
    Corpus,
    DocumentStore,
    IngestIssue,
    RecordReader,
    StorylineError,
    Vocabulary,
    build_vocabulary,
    encode_record,
    load_corpus,
)
from ddcrp_storylines.evaluation import (
    Metrics,
    adjusted_rand_index,
    align_assignments,
    format_metrics_table,
    load_gold,
    score,
    score_by_topic,
    timeline_from_assignments,
)
from ddcrp_storylines.hyper import HyperUpdateConfig, estimate_eta
from ddcrp_storylines.model import Hyperparams, LinkScope
from ddcrp_storylines.results import ClusteringResult, cluster_summaries, read_assignments, write_assignments, write_jsonl, write_trace
from ddcrp_storylines.sampler import SamplerConfig, run_baseline, run_chains, run_offline
from ddcrp_storylines.streaming import (
    CheckpointError,
    StreamConfig,
    StreamState,
    finalize,
    load_checkpoint,
    push_document,
    save_checkpoint,
    write_timing_log,
)
from ddcrp_storylines.synth import SynthConfig, generate_storylines

LOG = logging.getLogger("ddcrp_storylines")
_FILE_LOG_HANDLER: Optional[logging.FileHandler] = None
_QUIET_MODE: bool = False  # Suppresses progress bars and the run summary (-q/--quiet)

ENV_SEED = "DDCRP_STORYLINES_SEED"
ENV_ITERATIONS = "DDCRP_STORYLINES_ITERATIONS"

_BANNER = r"""
     _     _                    _                   _ _
  __| | __| | ___ _ __ _ __    | |_ ___  _ __ _   _| (_)_ __   ___  ___
 / _` |/ _` |/ __| '__| '_ \   | __/ _ \| '__| | | | | | '_ \ / _ \/ __|
| (_| | (_| | (__| |  | |_) |  | || (_) | |  | |_| | | | | | |  __/\__ \
 \__,_|\__,_|\___|_|  | .__/    \__\___/|_|   \__, |_|_|_| |_|\___||___/
                      |_|                     |___/
"""


def print_banner(quiet: bool = False) -> None:
    """Print the ASCII art banner with version number."""
    if quiet:
        return
    print(_BANNER)
    print(f"                              v{__version__}")
    print()


class ExitCode(IntEnum):
    """Exit codes for the ddcrp-storylines CLI."""

    SUCCESS = 0
    USAGE_ERROR = 1  # Bad flags, bad config values, unreadable path arguments
    DATA_ERROR = 2  # Malformed input, out-of-order stream, bad gold or checkpoint
    INTERRUPTED = 130  # User interrupted (Ctrl+C, 128 + SIGINT=2)


@dataclass
class RunConfig:
    """Fully resolved settings of one run; written to ``config.json``.

    Resolution order: field defaults, then environment overrides, then a
    replayed ``--config`` file, then flags given on the command line.
    """

    command: str = "fit"
    input: Optional[Path] = None
    output: Optional[Path] = None
    format: str = "jsonl"
    alpha: float = 1.0
    decay_scale: float = 86400.0
    eta: Optional[float] = None
    window: float = 432000.0
    iterations: int = 500
    temperature: float = 2.0
    anneal_start_fraction: float = 0.8
    seed: int = 0
    scope: str = LinkScope.ALL.value
    learn_hyper: bool = False
    hyper_period: int = 10
    alpha_step: float = 0.01
    scale_step: float = 0.01
    chains: int = 1
    workers: int = 1
    clusters: int = 20
    dirichlet_param: float = 0.5
    top_words: int = 10
    checkpoint: Optional[Path] = None
    checkpoint_every: int = 0
    resume: Optional[Path] = None
    max_records: Optional[int] = None
    timing_log: bool = False
    predictions: Optional[Path] = None
    gold: Optional[Path] = None
    truth: Optional[Path] = None
    storylines: int = 3
    docs_per_storyline: int = 30
    words_per_storyline: int = 5
    shared_words: int = 0
    doc_length: int = 6
    center_gap: float = 864000.0
    spread: float = 43200.0
    start: int = 1_400_000_000
    eta_source: str = "auto"

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for name in PATH_FIELDS:
            if data[name] is not None:
                data[name] = str(data[name])
        return data

    def hyperparams(self, vocabulary: Vocabulary) -> Hyperparams:
        """Model hyperparameters; an unset ``eta`` is estimated from ``vocabulary`` and recorded."""
        if self.eta is None:
            self.eta = estimate_eta(vocabulary)
            self.eta_source = "auto"
        else:
            self.eta_source = "given"
        return Hyperparams(alpha=self.alpha, decay_scale=self.decay_scale, eta=self.eta)

    def sampler_config(self) -> SamplerConfig:
        hyper_update = None
        if self.learn_hyper:
            hyper_update = HyperUpdateConfig(alpha_step=self.alpha_step, scale_step=self.scale_step, period=self.hyper_period)
        return SamplerConfig(
            iterations=self.iterations,
            temperature=self.temperature,
            anneal_start_fraction=self.anneal_start_fraction,
            hyper_update=hyper_update,
            seed=self.seed,
            scope=LinkScope(self.scope),
        )

    def stream_config(self) -> StreamConfig:
        return StreamConfig(
            window=self.window,
            iterations=self.iterations,
            temperature=self.temperature,
            anneal_start_fraction=self.anneal_start_fraction,
            seed=self.seed,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            num_storylines=self.storylines,
            docs_per_storyline=self.docs_per_storyline,
            words_per_storyline=self.words_per_storyline,
            shared_words=self.shared_words,
            doc_length=self.doc_length,
            center_gap=self.center_gap,
            spread=self.spread,
            start=self.start,
            seed=self.seed,
        )


DEFAULTS = RunConfig()
PATH_FIELDS = ("input", "output", "checkpoint", "resume", "predictions", "gold", "truth")


class UsageError(Exception):
    """Settings that cannot form a valid run (reported with exit code 1)."""


def _env_int(name: str) -> Optional[int]:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"environment variable {name} must be an integer, got {raw!r}") from None


def load_config_file(path: Path) -> dict[str, Any]:
    """Settings recorded in a previous run's ``config.json``."""
    try:
        with path.open("r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    settings = data.get("config") if isinstance(data, dict) else None
    if not isinstance(settings, dict):
        raise UsageError(f"{path} does not contain a 'config' object")
    return settings


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(command=args.command)
    seed = _env_int(ENV_SEED)
    if seed is not None:
        config.seed = seed
    iterations = _env_int(ENV_ITERATIONS)
    if iterations is not None:
        config.iterations = iterations

    names = {f.name for f in fields(RunConfig)} - {"command", "eta_source"}
    replay_path = getattr(args, "config", None)
    if replay_path is not None:
        recorded = load_config_file(replay_path)
        if recorded.get("command") not in (None, args.command):
            LOG.warning("Replaying settings of a '%s' run for '%s'", recorded.get("command"), args.command)
        for name in (names - {"output"}) & recorded.keys():
            value = recorded[name]
            setattr(config, name, Path(value) if name in PATH_FIELDS and value is not None else value)

    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    return config


def write_config(config: RunConfig, directory: Path, run_ts: str) -> Path:
    path = directory / "config.json"
    payload = {"version": __version__, "created": run_ts, "config": config.to_dict()}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def validate_input_path(path_str: str) -> Path:
    """argparse ``type=`` for readable input files; errors name the path."""
    cleaned = unicodedata.normalize("NFC", path_str.strip())
    if not cleaned:
        raise argparse.ArgumentTypeError("Path cannot be empty")
    try:
        path = Path(cleaned).expanduser().resolve()
    except (ValueError, RuntimeError, OSError) as e:
        raise argparse.ArgumentTypeError(f"Invalid path {cleaned}: {e}")
    if not path.exists():
        raise argparse.ArgumentTypeError(f"Path does not exist: {path}")
    if path.is_dir():
        raise argparse.ArgumentTypeError(f"Expected a file but found a directory: {path}")
    try:
        with path.open("rb") as handle:
            handle.read(1)
    except PermissionError:
        raise argparse.ArgumentTypeError(f"Permission denied: Cannot read file {path}")
    except OSError as e:
        raise argparse.ArgumentTypeError(f"Cannot read file {path}: {e}")
    if path.stat().st_size == 0:
        LOG.warning("File is empty: %s", path)
    return path


def parse_float(value: str) -> float:
    """Float argument that also accepts ``inf``."""
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}")


class StorylineArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-o", "--output", type=Path, default=None, help="Output directory (default: ./storylines_<command>_<timestamp>)")
    parser.add_argument("--seed", type=int, default=None, help=f"Random seed (default: {DEFAULTS.seed}, or ${ENV_SEED})")
    parser.add_argument("--config", type=validate_input_path, default=None, help="Replay settings from a previous run's config.json")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Increase console verbosity (-v info, -vv debug)")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only print errors and results")


def _add_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", type=validate_input_path, metavar="INPUT", help="Document records (JSON-lines or TSV)")
    parser.add_argument("--format", choices=RECORD_FORMATS, default=None, help=f"Input record format (default: {DEFAULTS.format})")
    parser.add_argument("--top-words", type=int, default=None, help=f"Words listed per storyline in clusters.jsonl (default: {DEFAULTS.top_words})")


def _add_sampling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iterations", type=int, default=None, help=f"Gibbs sweeps (per push when streaming) (default: {DEFAULTS.iterations}, or ${ENV_ITERATIONS})")
    parser.add_argument("--temperature", type=parse_float, default=None, help=f"Annealing temperature gamma (default: {DEFAULTS.temperature})")
    parser.add_argument(
        "--anneal-start",
        dest="anneal_start_fraction",
        type=parse_float,
        default=None,
        help=f"Fraction of the sweeps run before annealing starts (default: {DEFAULTS.anneal_start_fraction})",
    )
    parser.add_argument("--eta", type=parse_float, default=None, help="Dirichlet word smoothing (default: estimated from the corpus)")


def _add_model(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=parse_float, default=None, help=f"Self-link weight (default: {DEFAULTS.alpha})")
    parser.add_argument("--decay", dest="decay_scale", type=parse_float, default=None, help=f"Time decay scale in seconds; inf disables decay (default: {DEFAULTS.decay_scale:g})")


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = StorylineArgumentParser(
        prog="ddcrp-storylines",
        description="Cluster timestamped short documents into storylines with a distance-dependent CRP.",
        epilog="""Exit Codes:
  0   Success
  1   Usage error - invalid flags, settings or unreadable path arguments
  2   Data error - malformed input, out-of-order stream, bad gold file or checkpoint
  130 Interrupted - user cancelled (Ctrl+C)

Examples:
  # Offline inference
  %(prog)s fit tweets.jsonl -o runs/offline

  # Four chains on two processes, learning alpha and the decay scale
  %(prog)s fit tweets.jsonl -o runs/chains --chains 4 --workers 2 --learn-hyper

  # Fixed-lag streaming with a checkpoint every 1000 documents
  %(prog)s stream tweets.jsonl -o runs/stream --checkpoint runs/stream.ckpt --checkpoint-every 1000
  %(prog)s stream tweets.jsonl -o runs/stream --resume runs/stream.ckpt

  # Time-agnostic mixture baseline and scoring
  %(prog)s baseline tweets.jsonl -o runs/baseline
  %(prog)s eval --predictions runs/offline/assignments.jsonl --gold gold.jsonl

  # Planted corpus for experiments
  %(prog)s synth -o data/planted --storylines 3""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND", parser_class=StorylineArgumentParser)

    fit = commands.add_parser("fit", help="Offline Gibbs inference over the whole corpus")
    _add_input(fit)
    _add_model(fit)
    _add_sampling(fit)
    fit.add_argument("--scope", choices=[scope.value for scope in LinkScope], default=None, help="Documents a document may follow (default: all)")
    fit.add_argument("--learn-hyper", action="store_true", default=None, help="Tune alpha and the decay scale by gradient ascent between sweeps")
    fit.add_argument("--hyper-period", type=int, default=None, help=f"Sweeps between hyperparameter steps (default: {DEFAULTS.hyper_period})")
    fit.add_argument("--alpha-step", type=parse_float, default=None, help=f"Step size on log alpha (default: {DEFAULTS.alpha_step})")
    fit.add_argument("--scale-step", type=parse_float, default=None, help=f"Step size on log decay scale (default: {DEFAULTS.scale_step})")
    fit.add_argument("--chains", type=int, default=None, help="Independent chains with seeds seed, seed+1, ...; the best joint wins (default: 1)")
    fit.add_argument("--workers", type=int, default=None, help="Processes for --chains (default: 1)")
    _add_common(fit)

    stream = commands.add_parser("stream", help="Fixed-lag online inference in arrival order")
    _add_input(stream)
    _add_model(stream)
    _add_sampling(stream)
    stream.add_argument("--window", type=parse_float, default=None, help=f"Fixed-lag window in seconds; inf disables freezing (default: {DEFAULTS.window:g})")
    stream.add_argument("--checkpoint", type=Path, default=None, help="Write the stream state to this file")
    stream.add_argument("--checkpoint-every", type=int, default=None, help="Also checkpoint every N pushed documents (default: only at the end)")
    stream.add_argument("--resume", type=validate_input_path, default=None, help="Continue from a checkpoint; records it already holds are skipped")
    stream.add_argument("--max-records", type=int, default=None, help="Stop after this many documents in the stream")
    stream.add_argument("--timing-log", action="store_true", default=None, help="Write per-push wall times to timing.csv")
    _add_common(stream)

    baseline = commands.add_parser("baseline", help="Finite Dirichlet-multinomial mixture that ignores time")
    _add_input(baseline)
    _add_sampling(baseline)
    baseline.add_argument("-k", "--clusters", type=int, default=None, help=f"Number of mixture components (default: {DEFAULTS.clusters})")
    baseline.add_argument("--dirichlet", dest="dirichlet_param", type=parse_float, default=None, help=f"Symmetric Dirichlet on the mixture weights (default: {DEFAULTS.dirichlet_param})")
    _add_common(baseline)

    evaluate = commands.add_parser("eval", help="Score predicted storylines against gold clusters")
    evaluate.add_argument("--predictions", type=validate_input_path, required=True, help="assignments.jsonl of a run")
    evaluate.add_argument("--gold", type=validate_input_path, required=True, help="Gold clusters (JSON-lines)")
    evaluate.add_argument("--truth", type=validate_input_path, default=None, help="Full true partition for the adjusted Rand index")
    _add_common(evaluate)

    synth = commands.add_parser("synth", help="Generate a planted-storyline corpus")
    synth.add_argument("--storylines", type=int, default=None, help=f"Number of storylines (default: {DEFAULTS.storylines})")
    synth.add_argument("--docs-per-storyline", type=int, default=None, help=f"Documents per storyline (default: {DEFAULTS.docs_per_storyline})")
    synth.add_argument("--words-per-storyline", type=int, default=None, help=f"Vocabulary per storyline (default: {DEFAULTS.words_per_storyline})")
    synth.add_argument("--shared-words", type=int, default=None, help="Words every storyline shares (default: 0)")
    synth.add_argument("--doc-length", type=int, default=None, help=f"Tokens per document (default: {DEFAULTS.doc_length})")
    synth.add_argument("--center-gap", type=parse_float, default=None, help=f"Seconds between storyline centres (default: {DEFAULTS.center_gap:g})")
    synth.add_argument("--spread", type=parse_float, default=None, help=f"Standard deviation of document times (default: {DEFAULTS.spread:g})")
    synth.add_argument("--start", type=int, default=None, help=f"Centre of the first storyline (default: {DEFAULTS.start})")
    _add_common(synth)

    return parser.parse_args(argv)


def configure_logging(verbosity: int = 0, quiet: bool = False) -> None:
    """Configure console logging based on verbosity level.

    Args:
        verbosity: Number of -v flags (0=default, 1=INFO, 2+=DEBUG)
        quiet: If True, only show ERROR level messages
    """
    global _FILE_LOG_HANDLER
    LOG.setLevel(logging.DEBUG)
    for handler in LOG.handlers:
        handler.close()
    LOG.handlers.clear()
    _FILE_LOG_HANDLER = None
    console = logging.StreamHandler()

    if quiet:
        console.setLevel(logging.ERROR)
    elif verbosity >= 2:
        console.setLevel(logging.DEBUG)
    elif verbosity == 1:
        console.setLevel(logging.INFO)
    else:
        console.setLevel(logging.WARNING)

    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    LOG.addHandler(console)


def attach_file_logger(output_dir: Path, run_ts: str) -> Path:
    """Attach the per-run log file ``ddcrp_run_<run_ts>.log`` inside ``output_dir``.

    Calling it again for the same directory returns the existing log path.
    """
    global _FILE_LOG_HANDLER
    if _FILE_LOG_HANDLER is not None:
        current = Path(_FILE_LOG_HANDLER.baseFilename)
        if current.parent == output_dir.resolve():
            return current
        LOG.removeHandler(_FILE_LOG_HANDLER)
        _FILE_LOG_HANDLER.close()

    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir.resolve() / f"ddcrp_run_{run_ts}.log"
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setLevel(logging.INFO)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    LOG.addHandler(handler)
    _FILE_LOG_HANDLER = handler
    return path


class ProgressReporter:
    def __init__(self, total: int, label: str) -> None:
        self.total = max(total, 0)
        self.label = label
        self.start = time.time()
        self.completed = 0
        self.last_render = 0.0
        self.dynamic = self.total == 0

    def update(self, step: int = 1, force: bool = False) -> None:
        self.completed += step
        if _QUIET_MODE:
            return
        now = time.time()
        if not force and now - self.last_render < 0.1 and (not self.dynamic and self.completed < self.total):
            return
        self.last_render = now
        if self.dynamic:
            sys.stdout.write(f"\r{self.label}: processed {self.completed}")
        else:
            percent = min(self.completed / self.total if self.total else 1.0, 1.0)
            elapsed = now - self.start
            rate = self.completed / elapsed if elapsed > 0 else 0
            remaining = (self.total - self.completed) / rate if rate > 0 else float("inf")
            bar_len = 30
            filled = int(bar_len * percent)
            bar = "#" * filled + "-" * (bar_len - filled)
            eta = "--:--" if remaining == float("inf") else time.strftime("%M:%S", time.gmtime(int(remaining)))
            sys.stdout.write(f"\r{self.label}: [{bar}] {percent * 100:5.1f}% ETA {eta}")
        sys.stdout.flush()

    def finish(self) -> None:
        if _QUIET_MODE:
            return
        if not self.dynamic:
            self.completed = self.total
        self.update(step=0, force=True)
        sys.stdout.write("\n")
        sys.stdout.flush()


@dataclass
class RunSummary:
    """Counts and output paths reported at the end of a run."""

    command: str
    documents: int = 0
    clusters: int = 0
    empty_documents: int = 0
    malformed_records: int = 0
    seconds: float = 0.0
    outputs: dict[str, Path] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def print_summary(self) -> None:
        """Print a colored, formatted summary of the run."""
        BOLD = "\033[1m"
        GREEN = "\033[92m"
        YELLOW = "\033[93m"
        CYAN = "\033[96m"
        RESET = "\033[0m"

        print(f"\n{BOLD}{'=' * 80}{RESET}")
        print(f"{BOLD}{CYAN}ddcrp-storylines {self.command} - Run Summary{RESET}")
        print(f"{BOLD}{'=' * 80}{RESET}\n")
        print(f"  Documents:                  {self.documents:>6}")
        print(f"  Storylines:                 {GREEN}{self.clusters:>6}{RESET}")
        print(f"  Empty documents:            {self.empty_documents:>6}")
        color = YELLOW if self.malformed_records else RESET
        print(f"  Malformed records skipped:  {color}{self.malformed_records:>6}{RESET}")
        print(f"  Wall time:                  {self.seconds:>9.2f}s\n")
        for note in self.notes:
            print(f"  {note}")
        for label, path in self.outputs.items():
            print(f"  {label + ':':<28}{path}")
        print(f"\n{BOLD}{'=' * 80}{RESET}\n")

    def log_summary(self) -> None:
        LOG.info(
            "Run summary (%s): %d document(s), %d storylines, %d empty, %d malformed, %.2fs",
            self.command,
            self.documents,
            self.clusters,
            self.empty_documents,
            self.malformed_records,
            self.seconds,
        )


def _report_issues(issues: Sequence[IngestIssue]) -> None:
    for issue in issues[:20]:
        LOG.warning("Line %d skipped: %s", issue.line, issue.message)
    if len(issues) > 20:
        LOG.warning("%d further malformed record(s) not shown", len(issues) - 20)


def _write_outputs(result: ClusteringResult, corpus_store: DocumentStore, vocabulary: Vocabulary, eta: float, config: RunConfig, output: Path, summary: RunSummary) -> None:
    summary.outputs["Assignments"] = write_assignments(result, output / "assignments.jsonl")
    summary.outputs["Trace"] = write_trace(result.trace, output / "trace.csv")
    clusters_path = output / "clusters.jsonl"
    write_jsonl(cluster_summaries(result, corpus_store, vocabulary, eta, config.top_words), clusters_path)
    summary.outputs["Storylines"] = clusters_path
    summary.clusters = result.num_clusters
    summary.documents = len(result.ids)


def _load(config: RunConfig) -> Corpus:
    assert config.input is not None
    corpus = load_corpus(config.input, config.format)
    _report_issues(corpus.issues)
    return corpus


def cmd_fit(config: RunConfig, output: Path, summary: RunSummary) -> int:
    corpus = _load(config)
    summary.malformed_records = len(corpus.issues)
    summary.empty_documents = len(corpus.store.empty_ids)
    hyper = config.hyperparams(corpus.vocabulary)
    sampler_config = config.sampler_config()
    if config.chains < 1 or config.workers < 1:
        raise UsageError("--chains and --workers must be at least 1")
    if config.chains > 1:
        seeds = [config.seed + k for k in range(config.chains)]
        result = run_chains(corpus.store, hyper, sampler_config, corpus.vocabulary.size, seeds, config.workers)
        summary.notes.append(f"Best of {config.chains} chains: seed {result.seed}")
    else:
        progress = ProgressReporter(config.iterations, "Sampling")
        result = run_offline(corpus.store, hyper, sampler_config, corpus.vocabulary.size, progress=progress.update)
        progress.finish()
    if result.hyper is not None and config.learn_hyper:
        summary.notes.append(f"Final alpha {result.hyper.alpha:.6g}, decay scale {result.hyper.decay_scale:.6g}")
    _write_outputs(result, corpus.store, corpus.vocabulary, hyper.eta, config, output, summary)
    return ExitCode.SUCCESS


def cmd_baseline(config: RunConfig, output: Path, summary: RunSummary) -> int:
    corpus = _load(config)
    summary.malformed_records = len(corpus.issues)
    summary.empty_documents = len(corpus.store.empty_ids)
    hyper = config.hyperparams(corpus.vocabulary)
    sampler_config = config.sampler_config()
    progress = ProgressReporter(config.iterations, "Sampling")
    result = run_baseline(
        corpus.store,
        corpus.vocabulary.size,
        hyper.eta,
        K=config.clusters,
        dirichlet_param=config.dirichlet_param,
        config=sampler_config,
        progress=progress.update,
    )
    progress.finish()
    _write_outputs(result, corpus.store, corpus.vocabulary, hyper.eta, config, output, summary)
    return ExitCode.SUCCESS


def cmd_stream(config: RunConfig, output: Path, summary: RunSummary) -> int:
    assert config.input is not None
    if config.resume is not None:
        state = load_checkpoint(config.resume)
        if state.vocabulary is None:
            raise CheckpointError(f"{config.resume} carries no vocabulary")
        vocabulary = state.vocabulary
        config.alpha = state.sampler.hyper.alpha
        config.decay_scale = state.sampler.hyper.decay_scale
        config.eta = state.sampler.hyper.eta
        config.eta_source = "checkpoint"
        config.window = state.config.window
        config.iterations = state.config.iterations
        config.temperature = state.config.temperature
        config.anneal_start_fraction = state.config.anneal_start_fraction
        config.seed = state.config.seed
    else:
        vocabulary = build_vocabulary(RecordReader(config.input, config.format))
        hyper = config.hyperparams(vocabulary)
        state = StreamState.create(hyper, vocabulary.size, config.stream_config(), vocabulary)
    resumed = state.n
    if resumed:
        summary.notes.append(f"Resumed after {resumed} document(s)")

    reader = RecordReader(config.input, config.format)
    progress = ProgressReporter(config.max_records or 0, "Streaming")
    seen = 0
    for record in reader:
        if seen < resumed:
            expected = state.sampler.documents[seen].id
            if record.id != expected:
                raise CheckpointError(f"record {seen + 1} of {config.input} is {record.id!r} but the checkpoint holds {expected!r}")
            seen += 1
            continue
        if config.max_records is not None and state.n >= config.max_records:
            break
        push_document(state, encode_record(record, vocabulary))
        seen += 1
        progress.update()
        if config.checkpoint is not None and config.checkpoint_every > 0 and state.n % config.checkpoint_every == 0:
            save_checkpoint(state, config.checkpoint)
    progress.finish()
    if seen < resumed:
        raise CheckpointError(f"{config.input} holds {seen} record(s) but the checkpoint already has {resumed}")
    _report_issues(reader.issues)
    summary.malformed_records = len(reader.issues)
    summary.empty_documents = sum(1 for doc in state.sampler.documents if doc.is_empty)

    if config.checkpoint is not None:
        summary.outputs["Checkpoint"] = save_checkpoint(state, config.checkpoint)
    if config.timing_log:
        summary.outputs["Timing log"] = write_timing_log(state, output / "timing.csv")
    result = finalize(state)
    if result.ids:
        summary.notes.append(f"Mean push {result.metadata['mean_push_seconds']:.4f}s, drift {result.metadata['timing_drift']:+.3f}")
    store = DocumentStore(tuple(state.sampler.documents))
    _write_outputs(result, store, vocabulary, state.sampler.hyper.eta, config, output, summary)
    return ExitCode.SUCCESS


def cmd_eval(config: RunConfig, output: Path, summary: RunSummary) -> int:
    assert config.predictions is not None and config.gold is not None
    predictions = read_assignments(config.predictions)
    gold = load_gold(config.gold)
    metrics = score(timeline_from_assignments(predictions), gold)
    report: dict[str, Any] = {"metrics": metrics.to_dict()}
    table: dict[str, Metrics] = {"overall": metrics}
    if gold.topics:
        per_topic, average = score_by_topic(predictions, gold)
        report["topics"] = {topic: m.to_dict() for topic, m in per_topic.items()}
        report["topic_average"] = average.to_dict()
        table.update(per_topic)
        table["topic average"] = average
    if config.truth is not None:
        predicted, truth = align_assignments(predictions, read_assignments(config.truth))
        report["adjusted_rand_index"] = adjusted_rand_index(predicted, truth)

    print(json.dumps(report, sort_keys=True))
    print(format_metrics_table(table))
    if "adjusted_rand_index" in report:
        print(f"Adjusted Rand index: {report['adjusted_rand_index']:.4f}")
    metrics_path = output / "metrics.json"
    metrics_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    summary.outputs["Metrics"] = metrics_path
    summary.documents = len(predictions)
    summary.clusters = len({a.cluster for a in predictions})
    return ExitCode.SUCCESS


def cmd_synth(config: RunConfig, output: Path, summary: RunSummary) -> int:
    corpus = generate_storylines(config.synth_config())
    summary.outputs["Corpus"] = output / "corpus.jsonl"
    summary.outputs["Truth"] = output / "truth.jsonl"
    summary.outputs["Gold"] = output / "gold.jsonl"
    write_jsonl(corpus.records, summary.outputs["Corpus"])
    write_jsonl(corpus.truth, summary.outputs["Truth"])
    write_jsonl(corpus.gold, summary.outputs["Gold"])
    summary.documents = len(corpus.records)
    summary.clusters = config.storylines
    return ExitCode.SUCCESS


COMMANDS: dict[str, Callable[[RunConfig, Path, RunSummary], int]] = {
    "fit": cmd_fit,
    "stream": cmd_stream,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    global _QUIET_MODE
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _QUIET_MODE = args.quiet
    configure_logging(args.verbose, args.quiet)
    if args.command != "eval":
        print_banner(args.quiet)
    LOG.info("ddcrp-storylines %s", __version__)

    run_ts = dt.datetime.now().strftime("%Y%m%d_%H%M%S")
    try:
        config = resolve_config(args)
    except UsageError as exc:
        LOG.error("%s", exc)
        return ExitCode.USAGE_ERROR
    output = config.output or Path.cwd() / f"storylines_{config.command}_{run_ts}"
    config.output = output
    summary = RunSummary(command=config.command)
    started = time.perf_counter()
    try:
        output.mkdir(parents=True, exist_ok=True)
        log_path = attach_file_logger(output, run_ts)
        LOG.info("Run %s started; output directory %s", config.command, output)
        code = COMMANDS[config.command](config, output, summary)
        summary.outputs["Config"] = write_config(config, output, run_ts)
        summary.outputs["Log"] = log_path
        summary.seconds = time.perf_counter() - started
        summary.log_summary()
        if not _QUIET_MODE:
            summary.print_summary()
        return code
    except KeyboardInterrupt:
        LOG.warning("Operation interrupted by user (Ctrl+C)")
        print("\n\nINTERRUPTED: Operation cancelled by user (Ctrl+C)")
        if config.command == "stream" and config.checkpoint is not None:
            print(f"To resume from the last checkpoint: ddcrp-storylines stream {config.input} --resume {config.checkpoint}")
        return ExitCode.INTERRUPTED
    except (StorylineError, OSError, json.JSONDecodeError) as exc:
        LOG.error("%s", exc)
        return ExitCode.DATA_ERROR
    except (UsageError, ValueError) as exc:
        LOG.error("%s", exc)
        return ExitCode.USAGE_ERROR


def run() -> None:
    sys.exit(main())
