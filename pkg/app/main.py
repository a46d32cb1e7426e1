import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer

from app.core.config import load_config, read_config_file, settings
from app.core.exceptions import ConfigurationError
from app.core.harness import (
    run_experiment,
    run_seeds,
    study_cooperation,
    sweep_capacity,
    validate as validate_config,
)

# Configure logging
logging.basicConfig(
    level=settings.LOG_LEVEL,
    format=settings.LOG_FORMAT,
    handlers=[logging.StreamHandler(sys.stdout)],
)

logger = logging.getLogger(__name__)

# Create Typer CLI app
app = typer.Typer(help="Cooperative edge caching simulator for fog radio access networks.")

EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2


def _split_ints(value: Optional[str], flag: str) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"{flag} expects comma-separated integers, got {value!r}") from e


def _overrides(seed: Optional[int], schemes: Optional[str]) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if schemes is not None:
        overrides["schemes"] = [s.strip() for s in schemes.split(",") if s.strip()]
    return overrides


def _quiet(quiet: bool) -> None:
    if quiet:
        logging.getLogger().setLevel(logging.WARNING)


def _fail(e: Exception) -> None:
    """Map an error to its exit code."""
    if isinstance(e, ConfigurationError):
        logger.error(f"Invalid configuration: {e}")
        for err in e.errors:
            logger.error(f"  {err}")
        raise typer.Exit(code=EXIT_CONFIG_ERROR)
    logger.error(f"Run failed: {e}")
    raise typer.Exit(code=EXIT_RUNTIME_ERROR)


@app.command()
def run(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML config file"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the config seed"),
    seeds: Optional[str] = typer.Option(
        None, "--seeds", help="Comma-separated seeds, one run each"
    ),
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", "-o", help="Output directory"),
    schemes: Optional[str] = typer.Option(
        None, "--schemes", help="Comma-separated subset of marl,dqn,iql,lru"
    ),
    workers: int = typer.Option(1, "--workers", help="Parallel processes for --seeds"),
    checkpoint_dir: Optional[Path] = typer.Option(
        None, "--checkpoint-dir", help="Save trained Q-networks here"
    ),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Hide progress bars"),
) -> None:
    """Run every configured scheme on the same seeded realizations."""
    _quiet(quiet)
    try:
        cfg = load_config(config, **_overrides(seed, schemes))
        seed_list = _split_ints(seeds, "--seeds")
        if seed_list:
            run_seeds(cfg, seed_list, out, workers=workers, quiet=quiet)
        else:
            run_experiment(cfg, out, quiet=quiet, checkpoint_dir=checkpoint_dir)
        logger.info(f"Results written to {out}")
    except Exception as e:
        _fail(e)


@app.command()
def sweep(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML config file"),
    capacities: Optional[str] = typer.Option(
        None, "--capacities", help="Comma-separated cache capacities"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the config seed"),
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", "-o", help="Output directory"),
    schemes: Optional[str] = typer.Option(
        None, "--schemes", help="Comma-separated subset of marl,dqn,iql,lru"
    ),
    workers: int = typer.Option(1, "--workers", help="Parallel processes"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Hide progress bars"),
) -> None:
    """Average delay against cache capacity."""
    _quiet(quiet)
    try:
        cfg = load_config(config, **_overrides(seed, schemes))
        caps = _split_ints(capacities, "--capacities")
        path = sweep_capacity(
            cfg, caps if caps is not None else cfg.capacities, out, workers=workers, quiet=quiet
        )
        logger.info(f"Capacity summary written to {path}")
    except Exception as e:
        _fail(e)


@app.command()
def study(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML config file"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the config seed"),
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", "-o", help="Output directory"),
    workers: int = typer.Option(1, "--workers", help="Parallel processes"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Hide progress bars"),
) -> None:
    """Cooperative vs noncooperative caching under consistent and inconsistent preferences."""
    _quiet(quiet)
    try:
        cfg = load_config(config, **_overrides(seed, None))
        path = study_cooperation(cfg, out, workers=workers, quiet=quiet)
        logger.info(f"Study summary written to {path}")
    except Exception as e:
        _fail(e)


@app.command()
def validate(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML config file"),
) -> None:
    """Check a config, the delay ordering and the gradient code without simulating."""
    try:
        raw = read_config_file(config) if config is not None else None
    except ConfigurationError as e:
        _fail(e)
        return
    report = validate_config(raw)
    typer.echo(report.render())
    if not report.ok:
        raise typer.Exit(code=EXIT_CONFIG_ERROR)


if __name__ == "__main__":
    app()
