"""Reporting and output generation for hbfopt."""

from __future__ import annotations

import csv
import io
import logging
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

import orjson
from jinja2 import Environment, FileSystemLoader, select_autoescape

from . import __version__
from .config import ExperimentSpec
from .errors import ReportingError
from .experiment import ExperimentResult
from .models import ConvergenceTrace, ResultRow
from .utils import ensure_directory, sanitize_filename

logger = logging.getLogger(__name__)

CSV_HEADER = ["variant", "seed", "snr_db", "quant_bits", "outer_iters", "rate", "fd_rate", "wall_ms", "flags"]
FD_BASELINE_METHOD = "svd-water-filling, n_streams eigenmodes, unit total power"
MANIFEST_VERSION = 1


def _write_bytes(path: Path, payload: bytes) -> Path:
    try:
        ensure_directory(path.parent)
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as exc:
        logger.error("Failed to write %s: %s", path, exc)
        raise ReportingError(f"Cannot write {path}: {exc}", code="WRITE_FAILED", details={"path": str(path)}) from exc
    return path


def render_results_csv(rows: List[ResultRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buffer.getvalue()


def write_results_csv(rows: List[ResultRow], path: Path) -> Path:
    """Write results CSV with the fixed header."""
    output = _write_bytes(path, render_results_csv(rows).encode("utf-8"))
    logger.debug("Results CSV written to: %s (%d rows)", output, len(rows))
    return output


def trace_payload(trace: ConvergenceTrace) -> dict:
    return {
        "variant": trace.variant,
        "exit_reason": trace.exit_reason.value if trace.exit_reason else None,
        "initial_objective": trace.initial_objective,
        "labels": [step.label.value for step in trace.steps],
        "outer_index": [step.outer_index for step in trace.steps],
        "objective": [step.objective for step in trace.steps],
        "rate": [step.rate for step in trace.steps],
        "outer_rates": list(trace.outer_rates),
        "quantized_rate": trace.quantized_rate,
        "degenerate": trace.degenerate,
    }


def write_traces(traces: Dict[str, ConvergenceTrace], directory: Path) -> List[Path]:
    """One JSON file per run."""
    written = []
    for key, trace in traces.items():
        path = directory / f"{sanitize_filename(key)}.json"
        written.append(_write_bytes(path, orjson.dumps(trace_payload(trace), option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)))
    logger.debug("Wrote %d traces to %s", len(written), directory)
    return written


def manifest_payload(spec: ExperimentSpec, row_count: int) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "hbfopt_version": __version__,
        "fd_baseline": FD_BASELINE_METHOD,
        "row_count": row_count,
        "spec": spec.model_dump(mode="json"),
    }


def write_manifest(spec: ExperimentSpec, row_count: int, path: Path) -> Path:
    """Echo the full resolved spec, defaulted tolerances included."""
    payload = orjson.dumps(manifest_payload(spec, row_count), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)
    return _write_bytes(path, payload)


def load_manifest(path: Path) -> ExperimentSpec:
    """Rebuild the experiment spec recorded in a manifest."""
    try:
        data = orjson.loads(Path(path).read_bytes())
    except FileNotFoundError as exc:
        raise ReportingError(f"Manifest not found: {path}", code="MANIFEST_MISSING", details={"path": str(path)}) from exc
    except orjson.JSONDecodeError as exc:
        raise ReportingError(f"Manifest is not valid JSON: {exc}", code="MANIFEST_CORRUPT", details={"path": str(path)}) from exc
    if not isinstance(data, dict) or "spec" not in data:
        raise ReportingError("Manifest has no 'spec' entry", code="MANIFEST_CORRUPT", details={"path": str(path)})
    return ExperimentSpec.validated(data["spec"])


_JINJA_ENV: Environment | None = None


def _get_environment() -> Environment:
    global _JINJA_ENV
    if _JINJA_ENV is None:
        template_root = resources.files("hbfopt") / "templates"
        _JINJA_ENV = Environment(
            loader=FileSystemLoader(str(template_root)),
            autoescape=select_autoescape(),
            keep_trailing_newline=True,
        )
    return _JINJA_ENV


def render_summary(result: ExperimentResult, spec: ExperimentSpec) -> str:
    """Render the Markdown summary: mean rate per variant and SNR next to the FD baseline."""
    means = result.mean_rates()
    fd_means = result.mean_fd_rates()
    series = sorted({(variant, quant) for variant, quant, _ in means})
    table = [
        {
            "snr_db": snr,
            "fd_rate": fd_means[snr],
            "rates": [means.get((variant, quant, snr)) for variant, quant in series],
        }
        for snr in sorted(fd_means)
    ]
    flagged: Dict[str, int] = {}
    for row in result.rows:
        for flag in row.flags:
            flagged[flag] = flagged.get(flag, 0) + 1

    template = _get_environment().get_template("summary.md.j2")
    return template.render(
        spec=spec,
        series=[f"{variant}" + ("" if quant == "inf" else f" ({quant} bit)") for variant, quant in series],
        table=table,
        flagged=dict(sorted(flagged.items())),
        row_count=len(result.rows),
        fd_method=FD_BASELINE_METHOD,
    )


def write_summary_report(result: ExperimentResult, spec: ExperimentSpec, path: Path) -> Path:
    output = _write_bytes(path, render_summary(result, spec).encode("utf-8"))
    logger.debug("Summary report written to: %s", output)
    return output


def emit(
    result: ExperimentResult,
    spec: ExperimentSpec,
    run_dir: Path,
    *,
    summary: bool = True,
) -> Dict[str, Optional[Path]]:
    """Write every output file of a run and return their paths."""
    if not result.rows:
        raise ReportingError("No result rows to write", code="EMPTY_RESULT", details={"path": str(run_dir)})

    output_files: Dict[str, Optional[Path]] = {
        "results_csv": write_results_csv(result.rows, run_dir / "results.csv"),
        "manifest": write_manifest(spec, len(result.rows), run_dir / "manifest.json"),
        "traces": None,
        "summary": None,
    }
    if spec.write_traces and result.traces:
        write_traces(result.traces, run_dir / "traces")
        output_files["traces"] = run_dir / "traces"
    if summary:
        output_files["summary"] = write_summary_report(result, spec, run_dir / "summary.md")

    logger.debug("All outputs written to: %s", run_dir)
    return output_files
