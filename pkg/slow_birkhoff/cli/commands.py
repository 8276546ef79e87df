"""
Command handlers for slow-birkhoff.
construct, verify and trace: each returns the process exit code
(0 success, 1 input or configuration error, 2 certification failure).
"""
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from slow_birkhoff.services.birkhoff import trace_averages
from slow_birkhoff.services.construction import ConstructionFailed, ConstructionParams, run_construction, verify
from slow_birkhoff.services.dyadic_sets import Dyadic
from slow_birkhoff.services.reports import (
    REPORT_FIELDS,
    TRACE_FIELDS,
    VERIFY_FIELDS,
    report_rows,
    verify_rows,
    write_csv,
)
from slow_birkhoff.services.sampling import sample_points
from slow_birkhoff.services.spec_storage import SPEC_FILE, SpecStorage
from slow_birkhoff.utils.config import McSettings, get_settings, load_run_config
from slow_birkhoff.utils.errors import ConfigError, PreconditionViolated, SlowBirkhoffError
from slow_birkhoff.utils.monitoring import log_run_metrics
from slow_birkhoff.utils.rationals import format_rational, parse_rational

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _run(name: str, handler, *args, **kwargs) -> int:
    """Call a handler and map its outcome to an exit code."""
    try:
        return handler(*args, **kwargs)
    except SlowBirkhoffError as e:
        logger.error(f"{name} failed: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"{name} failed with an unexpected error: {e}", exc_info=True)
        return 1
    finally:
        log_run_metrics()


# ==========================================
# CONSTRUCT
# ==========================================

def _construct(config_path: PathLike, out_dir: Optional[PathLike]) -> int:
    config = load_run_config(config_path)
    params = ConstructionParams.from_run_config(config)
    out = Path(out_dir or config.out_dir or ".")
    storage = SpecStorage(out / SPEC_FILE)
    try:
        spec, report = run_construction(params)
    except ConstructionFailed as e:
        storage.save_spec(e.spec)
        write_csv(out / "report.csv", REPORT_FIELDS, report_rows(e.report))
        logger.error(f"construct: certification failed: {e}")
        return e.exit_code
    storage.save_spec(spec)
    write_csv(out / "report.csv", REPORT_FIELDS, report_rows(report))
    return 0


def cmd_construct(config_path: PathLike, out_dir: Optional[PathLike] = None) -> int:
    """Run a construction from a config file; writes function_spec.json and report.csv."""
    return _run("construct", _construct, config_path, out_dir)


# ==========================================
# VERIFY
# ==========================================

def parse_stage_option(text: str, k: int) -> Tuple[int, int, Fraction, Fraction]:
    """Parse "N,a,delta" into a schedule row for stage k."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"--stage expects N,a,delta, got {text!r}")
    try:
        N, a, delta = int(parts[0]), parse_rational(parts[1]), parse_rational(parts[2])
    except ValueError as e:
        raise ConfigError(f"--stage {text!r}: {e}") from e
    if N < 1 or a <= 0 or not 0 < delta < 1:
        raise ConfigError(f"--stage {text!r}: need N >= 1, a > 0 and 0 < delta < 1")
    return k, N, a, delta


def _mc_with(base: Optional[McSettings], overrides: Dict[str, Any]) -> McSettings:
    values = (base or McSettings()).model_dump()
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return McSettings(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid Monte-Carlo overrides: {e}") from e


def _verify(spec_path: PathLike, stages: Optional[Sequence[str]], out_dir: Optional[PathLike],
            overrides: Dict[str, Any]) -> int:
    spec_path = Path(spec_path)
    spec = SpecStorage(spec_path).load_spec()
    mc = _mc_with(spec.mc, overrides)
    schedule = [parse_stage_option(text, k) for k, text in enumerate(stages, start=1)] if stages else None
    report = verify(spec, schedule, mc)
    out = Path(out_dir) if out_dir else spec_path.parent
    write_csv(out / "verify.csv", VERIFY_FIELDS, verify_rows(report))
    failed = [check.k for check in report.finals if not check.passed]
    if failed:
        logger.error(f"verify: floors violated at k = {failed}")
        return 2
    logger.info(f"verify: all {len(report.finals)} floor(s) met, int f = {format_rational(report.integral_f)}")
    return 0


def cmd_verify(spec_path: PathLike, stages: Optional[Sequence[str]] = None, out_dir: Optional[PathLike] = None,
               samples: Optional[int] = None, seed: Optional[int] = None, alpha: Optional[float] = None,
               workers: Optional[int] = None) -> int:
    """Recheck a saved function against its schedule; writes verify.csv."""
    overrides = {"samples": samples, "seed": seed, "alpha": alpha, "workers": workers}
    return _run("verify", _verify, spec_path, stages, out_dir, overrides)


# ==========================================
# TRACE
# ==========================================

def parse_point(text: str, dimension: int) -> List[Dyadic]:
    """Parse "x" or "x1,x2,..." with dyadic coordinates in [0,1)."""
    try:
        coords = [Dyadic.parse(part.strip()) for part in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"--x {text!r}: {e}") from e
    if len(coords) != dimension or not all(c.is_point for c in coords):
        raise ConfigError(f"--x {text!r}: need {dimension} coordinate(s) in [0,1)")
    return coords


def _trace(spec_path: PathLike, points: Optional[int], xs: Optional[Sequence[str]], nmax: int,
           log_spaced: bool, seed: int, out_dir: Optional[PathLike]) -> int:
    spec_path = Path(spec_path)
    spec = SpecStorage(spec_path).load_spec()
    dimension = spec.dimension
    if xs:
        starts = [parse_point(text, dimension) for text in xs]
    else:
        count = points or 1
        rank = (spec.mc or McSettings()).rank
        raw = sample_points(seed, 0, count, dimension, rank)
        starts = [[Dyadic(int(u), rank) for u in row] for row in raw]

    if nmax < 1:
        raise PreconditionViolated("--nmax must be positive")
    steps = len(starts) * nmax
    budget = get_settings().trace_max_steps
    if not log_spaced and steps > budget:
        raise PreconditionViolated(f"{steps} orbit steps exceed the trace budget of {budget}; try --log-spaced")

    f, _ = spec.build()
    total = f.integral()
    rows = []
    for x_id, point in enumerate(starts):
        for N, average in trace_averages(point, f, nmax, log_spaced=log_spaced):
            rows.append({
                "x_id": x_id,
                "N": N,
                "average": format_rational(average),
                "integral": format_rational(total),
                "abs_deviation": format_rational(abs(average - total)),
            })
    out = Path(out_dir) if out_dir else spec_path.parent
    write_csv(out / "trace.csv", TRACE_FIELDS, rows)
    return 0


def cmd_trace(spec_path: PathLike, points: Optional[int] = None, xs: Optional[Sequence[str]] = None,
              nmax: int = 1000, log_spaced: bool = False, seed: int = 0,
              out_dir: Optional[PathLike] = None) -> int:
    """Write A(x, N, f) for N up to nmax at sampled or given points; writes trace.csv."""
    return _run("trace", _trace, spec_path, points, xs, nmax, log_spaced, seed, out_dir)
