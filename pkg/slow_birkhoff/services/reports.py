"""
CSV reports.
report.csv (construction), verify.csv (verification) and trace.csv (average traces).
Rationals are written as "p/q", radii as Python float reprs.
"""
import csv
import io
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

from slow_birkhoff.services.construction import DeviationReport
from slow_birkhoff.services.spec_storage import atomic_write_text
from slow_birkhoff.utils.rationals import format_rational

logger = logging.getLogger(__name__)

REPORT_FIELDS = [
    "k", "N_k", "h_k", "eps_k", "delta_k", "integral_fk", "stage_prob", "stage_radius",
    "final_prob", "final_radius", "floor", "method", "seed",
]
VERIFY_FIELDS = [
    "k", "N_k", "a_k", "delta_k", "integral_f", "final_prob", "final_radius", "floor", "passed", "method", "seed",
]
TRACE_FIELDS = ["x_id", "N", "average", "integral", "abs_deviation"]


def report_rows(report: DeviationReport) -> List[Dict[str, Any]]:
    """One row per stage of a construction report."""
    rows = []
    for stage in report.stages:
        final = report.final_for(stage.k)
        estimate = final.estimate if final else stage.stage_estimate
        rows.append({
            "k": stage.k,
            "N_k": stage.N,
            "h_k": stage.height,
            "eps_k": format_rational(stage.eps),
            "delta_k": format_rational(stage.delta),
            "integral_fk": format_rational(stage.integral_f),
            "stage_prob": format_rational(stage.stage_estimate.probability),
            "stage_radius": repr(stage.stage_estimate.confidence_radius),
            "final_prob": format_rational(final.estimate.probability) if final else "",
            "final_radius": repr(final.estimate.confidence_radius) if final else "",
            "floor": format_rational(final.floor) if final else "",
            "method": estimate.method,
            "seed": estimate.seed,
        })
    return rows


def verify_rows(report: DeviationReport) -> List[Dict[str, Any]]:
    """One row per checked scale of a verification report."""
    return [
        {
            "k": check.k,
            "N_k": check.N,
            "a_k": format_rational(check.a),
            "delta_k": format_rational(check.delta),
            "integral_f": format_rational(report.integral_f),
            "final_prob": format_rational(check.estimate.probability),
            "final_radius": repr(check.estimate.confidence_radius),
            "floor": format_rational(check.floor),
            "passed": "true" if check.passed else "false",
            "method": check.estimate.method,
            "seed": check.estimate.seed,
        }
        for check in report.finals
    ]


def render_csv(fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in fieldnames})
    return buf.getvalue()


def write_csv(path: Union[str, Path], fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """Render and write atomically."""
    path = Path(path)
    atomic_write_text(path, render_csv(fieldnames, rows))
    logger.info(f"Wrote {path}")
    return path
