"""Experiment orchestration: seeded runs, capacity sweeps, studies and pre-flight checks."""
import json
import logging
import math
from concurrent import futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from app.core.baselines import DqnScheme, IqlScheme, LruScheme
from app.core.config import SCHEMES, SimConfig, dump_config, parse_config
from app.core.environment import CachingScheme, Evaluator, WorkloadGenerator
from app.core.exceptions import ConfigurationError, FranCacheError, SimulationError
from app.core.marl import MarlScheme
from app.core.neural import QNetwork, finite_difference_check
from app.core.radio import RadioParams, median_delays, validate_delay_ordering
from app.core.topology import build_topology
from app.models.records import (
    METRICS_COLUMNS,
    METRICS_SCHEMA_VERSION,
    STUDY_COLUMNS,
    SUMMARY_COLUMNS,
    CheckResult,
    MetricsRow,
    StudyRow,
    SummaryRow,
    ValidationReport,
)
from app.utils.checkpoint import save_network
from app.utils.metrics_writer import CsvTable

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.25


@dataclass
class RunResult:
    out_dir: Path
    metrics_path: Path
    summary_path: Path
    summaries: List[SummaryRow]
    digests: Dict[str, str] = field(default_factory=dict)


def build_scheme(
    name: str, config: SimConfig, topology: Any, evaluator: Evaluator
) -> CachingScheme:
    """Instantiate a scheme with agent streams independent of the workload streams."""
    if name not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {name}")
    # Second entropy word keeps each scheme's stream disjoint from the workload's
    seed_seq = np.random.SeedSequence([config.seed, 1 + SCHEMES.index(name)])
    if name == "marl":
        return MarlScheme(config, topology, evaluator, seed_seq)
    if name == "dqn":
        return DqnScheme(config, topology, evaluator, seed_seq)
    if name == "iql":
        return IqlScheme(config, topology, evaluator, seed_seq)
    return LruScheme(config, topology, evaluator)


def tail_mean(values: Sequence[float], fraction: float = TAIL_FRACTION) -> float:
    """Mean over the final ``fraction`` of slots (at least one slot)."""
    count = max(1, math.ceil(len(values) * fraction))
    return float(np.mean(values[-count:]))


def run_scheme(
    name: str,
    config: SimConfig,
    quiet: bool = False,
    sink: Optional[CsvTable] = None,
) -> Tuple[List[MetricsRow], SummaryRow, str, CachingScheme]:
    """
    Simulate one scheme over the full horizon.

    Rows also go to ``sink`` as they are recorded, so a crash mid-run keeps
    every completed slot.

    Returns:
        Recorded rows, the summary row, the draw-stream digest and the scheme
        itself (for checkpointing)
    """
    topology = build_topology(config)
    params = RadioParams.from_config(config)
    evaluator = Evaluator(config, topology, params)
    generator = WorkloadGenerator(config, topology, params)
    scheme = build_scheme(name, config, topology, evaluator)

    rows: List[MetricsRow] = []
    inst_delays: List[float] = []
    running = 0.0
    skipped = 0
    draw = generator.next_slot()
    try:
        for t in tqdm(
            range(1, config.horizon + 1), desc=name, disable=quiet, leave=False
        ):
            next_draw = generator.next_slot()
            outcome = scheme.run_slot(draw, next_draw)
            skipped += outcome.skipped_learns
            metrics = evaluator.evaluate(scheme.cache, draw)
            inst_delays.append(metrics.inst_delay)
            running += metrics.inst_delay
            if t % config.record_every == 0:
                record = MetricsRow(
                    t=t,
                    scheme=name,
                    inst_delay_s=metrics.inst_delay,
                    cum_delay_s=running / t,
                    global_reward=metrics.global_reward,
                    hit_local=metrics.hit_local,
                    hit_neighbor=metrics.hit_neighbor,
                    hit_cloud=metrics.hit_cloud,
                    seed=config.seed,
                )
                rows.append(record)
                if sink is not None:
                    sink.append(record)
            draw = next_draw
    finally:
        scheme.close()

    summary = SummaryRow(
        scheme=name,
        S=config.cache_capacity,
        T=config.horizon,
        seed=config.seed,
        mean_delay_s=running / config.horizon,
        tail_mean_delay_s=tail_mean(inst_delays),
    )
    if skipped:
        logger.warning(f"{name}: {skipped} learning steps skipped while replay memory filled")
    logger.info(
        f"{name}: mean delay {summary.mean_delay_s:.6g}s, "
        f"tail mean {summary.tail_mean_delay_s:.6g}s"
    )
    return rows, summary, generator.digest(), scheme


def run_experiment(
    config: SimConfig,
    out_dir: Union[str, Path],
    quiet: bool = False,
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> RunResult:
    """
    Run every configured scheme on the same seeded realizations.

    Writes ``metrics.csv`` (one row per recording interval per scheme),
    ``summary.csv``, ``run.json`` and ``config.resolved.yaml`` into ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, out_dir / "config.resolved.yaml")
    metrics = CsvTable(out_dir / "metrics.csv", METRICS_COLUMNS)
    summary = CsvTable(out_dir / "summary.csv", SUMMARY_COLUMNS)
    summaries: List[SummaryRow] = []
    digests: Dict[str, str] = {}

    logger.info(
        f"Running schemes {config.schemes} with seed {config.seed}, "
        f"N={config.n_faps}, F={config.library_size}, S={config.cache_capacity}, "
        f"T={config.horizon}"
    )
    for name in config.schemes:
        try:
            _, row, digest, scheme = run_scheme(name, config, quiet=quiet, sink=metrics)
        except Exception as e:
            logger.error(f"Scheme {name} failed: {e}")
            metrics.mark_incomplete(f"{name} failed: {e}")
            summary.flush()
            if isinstance(e, ConfigurationError):
                raise
            raise SimulationError(f"scheme {name} failed: {e}") from e
        summary.append(row)
        summaries.append(row)
        digests[name] = digest
        if checkpoint_dir is not None:
            _save_checkpoints(scheme, Path(checkpoint_dir), config.seed)

    if len(set(digests.values())) > 1:
        metrics.mark_incomplete("schemes saw different request/channel streams")
        raise SimulationError(f"common random numbers violated: {digests}")

    metrics_path = metrics.flush()
    summary_path = summary.flush()
    manifest = {
        "metrics_schema_version": METRICS_SCHEMA_VERSION,
        "seed": config.seed,
        "schemes": list(config.schemes),
        "draw_digests": digests,
    }
    (out_dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(out_dir, metrics_path, summary_path, summaries, digests)


def _save_checkpoints(scheme: CachingScheme, directory: Path, seed: int) -> None:
    for n, agent in enumerate(getattr(scheme, "agents", [])):
        save_network(agent.current_net, directory / f"{scheme.name}_seed{seed}_fap{n}.npz")


def _run_job(job: Tuple[Dict[str, Any], str, bool]) -> RunResult:
    raw, out_dir, quiet = job
    return run_experiment(parse_config(raw), out_dir, quiet=quiet)


def _run_jobs(
    jobs: List[Tuple[Dict[str, Any], str, bool]], workers: int
) -> List[RunResult]:
    """Run independent experiments, in a process pool when ``workers > 1``."""
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    with futures.ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_job, jobs))


def run_seeds(
    config: SimConfig,
    seeds: Sequence[int],
    out_dir: Union[str, Path],
    workers: int = 1,
    quiet: bool = False,
) -> List[RunResult]:
    """One ``run_experiment`` per seed under ``out_dir/seed_<seed>``."""
    out_dir = Path(out_dir)
    raw = config.to_dict(exclude_unset=True)
    jobs = [({**raw, "seed": s}, str(out_dir / f"seed_{s}"), quiet) for s in seeds]
    results = _run_jobs(jobs, workers)
    table = CsvTable(out_dir / "summary.csv", SUMMARY_COLUMNS)
    for result in results:
        table.extend(result.summaries)
    table.flush()
    return results


def sweep_capacity(
    config: SimConfig,
    capacities: Sequence[int],
    out_dir: Union[str, Path],
    workers: int = 1,
    quiet: bool = False,
) -> Path:
    """
    One run per cache capacity with a shared seed.

    Returns:
        Path: ``capacity_summary.csv`` indexed by S
    """
    if not capacities:
        raise ConfigurationError("capacities must not be empty")
    out_dir = Path(out_dir)
    raw = config.to_dict(exclude_unset=True)
    jobs = []
    for capacity in capacities:
        # Validate each capacity up front so a bad entry fails before any run
        parse_config(raw, cache_capacity=capacity)
        jobs.append(({**raw, "cache_capacity": capacity}, str(out_dir / f"S_{capacity}"), quiet))
    results = _run_jobs(jobs, workers)
    table = CsvTable(out_dir / "capacity_summary.csv", SUMMARY_COLUMNS)
    for result in results:
        table.extend(result.summaries)
    logger.info(f"Capacity sweep over {list(capacities)} written to {table.path}")
    return table.flush()


STUDY_CASES = [
    ("cooperative_consistent", True, True),
    ("cooperative_inconsistent", True, False),
    ("noncooperative_consistent", False, True),
    ("noncooperative_inconsistent", False, False),
]


def study_cooperation(
    config: SimConfig,
    out_dir: Union[str, Path],
    workers: int = 1,
    quiet: bool = False,
) -> Path:
    """
    MARL under cooperative/noncooperative caching and consistent/inconsistent preferences.

    Noncooperative runs drop every inter-F-AP link.

    Returns:
        Path: ``study_summary.csv``
    """
    out_dir = Path(out_dir)
    raw = config.to_dict(exclude_unset=True)
    jobs = []
    for label, cooperative, consistent in STUDY_CASES:
        case = {
            **raw,
            "schemes": ["marl"],
            "consistent_preference": consistent,
            "connectivity_matrix": None,
            "connectivity": config.connectivity if cooperative else "none",
        }
        if cooperative and config.connectivity_matrix is not None:
            case["connectivity_matrix"] = config.connectivity_matrix
        jobs.append((case, str(out_dir / label), quiet))
    results = _run_jobs(jobs, workers)
    table = CsvTable(out_dir / "study_summary.csv", STUDY_COLUMNS)
    for (label, cooperative, consistent), result in zip(STUDY_CASES, results):
        row = result.summaries[0]
        table.append(
            StudyRow(
                label=label,
                cooperative=cooperative,
                consistent=consistent,
                seed=row.seed,
                mean_delay_s=row.mean_delay_s,
                tail_mean_delay_s=row.tail_mean_delay_s,
            )
        )
    return table.flush()


def validate(raw: Optional[Mapping[str, Any]]) -> ValidationReport:
    """
    Pre-flight checks: config invariants, delay ordering, gradient self-check.

    Failures are reported, never raised.
    """
    report = ValidationReport()
    try:
        config = parse_config(raw)
    except ConfigurationError as e:
        for err in e.errors:
            report.checks.append(CheckResult(name="config", status="fail", detail=err))
        return report
    report.checks.append(CheckResult(name="config", status="pass", detail="all invariants hold"))
    report.config = config.to_dict()

    params = RadioParams.from_config(config)
    z1, z2, z3 = median_delays(params, config.cell_radius)
    ordering = validate_delay_ordering(z1, z2, z3)
    report.checks.append(
        CheckResult(
            name="delay_ordering",
            status="pass" if ordering.ok else "warn",
            detail=f"{ordering.detail} (median geometry Z1={z1:.4g}s Z2={z2:.4g}s Z3={z3:.4g}s)",
        )
    )

    try:
        rng = np.random.default_rng(config.seed)
        size = config.cache_capacity + 1
        net = QNetwork([size, *config.hidden_layers, size], config.alpha, rng=rng)
        ok, worst = finite_difference_check(
            net, rng.random(size), int(rng.integers(size)), float(rng.normal())
        )
        report.checks.append(
            CheckResult(
                name="gradient_check",
                status="pass" if ok else "fail",
                detail=f"worst relative error {worst:.3g} (tolerance 1e-5)",
            )
        )
    except FranCacheError as e:
        report.checks.append(CheckResult(name="gradient_check", status="fail", detail=str(e)))
    return report
