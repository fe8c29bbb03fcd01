"""Report emission: CSV and SVG projections of a canonical JSON payload.

Errors are printed with 2 decimals, confidences with 4.
"""
import json
import logging
from pathlib import Path

import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape

from attacks.sweep import saturation_point
from attacks.types import PatchReport, PatchResult, SweepRow, SweepTable
from evalkit.metrics import ConfidenceBreakdown, EvalReport
from utils.errors import ReportError
from utils.io_utils import atomic_write_text, canonical_json

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json", "svg")
TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"

LABEL_WIDTH = 160
BAR_SPAN = 300
ROW_HEIGHT = 18
GROUP_GAP = 26

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    autoescape=select_autoescape(enabled_extensions=("svg", "j2"), default=True),
    trim_blocks=True,
    lstrip_blocks=True,
)


def _eps_text(eps):
    return format(round(float(eps), 9), "g")


def _pct(value):
    return f"{value:.2f}"


def _as_eval_list(report):
    if isinstance(report, EvalReport):
        return [report]
    if isinstance(report, (list, tuple)) and report and all(isinstance(r, EvalReport) for r in report):
        return list(report)
    return None


def _as_breakdowns(report):
    if isinstance(report, ConfidenceBreakdown):
        return [report]
    if isinstance(report, (list, tuple)) and report and all(isinstance(r, ConfidenceBreakdown) for r in report):
        return list(report)
    return None


def to_payload(report):
    """Structural JSON encoding of any report type."""
    if isinstance(report, SweepTable):
        return {
            "kind": "sweep",
            "model_id": report.model_id,
            "dataset_id": report.dataset_id,
            "rows": [{"epsilon": r.epsilon, "top1_error": r.top1_error, "top5_error": r.top5_error}
                     for r in report.rows],
            "saturation_epsilon": saturation_point(report) if report.rows else None,
        }
    if isinstance(report, PatchReport):
        return {
            "kind": "patch",
            "model_id": report.model_id,
            "dataset_id": report.dataset_id,
            "rows": [{"patch": r.patch, "size": r.size, "top1_success": r.top1_success,
                      "top5_success": r.top5_success} for r in report.rows],
        }
    evals = _as_eval_list(report)
    if evals is not None:
        return {
            "kind": "eval",
            "reports": [{"dataset_id": r.dataset_id, "model_id": r.model_id, "top1_error": r.top1_error,
                         "top5_error": r.top5_error, "num_images": r.num_images} for r in evals],
        }
    breakdowns = _as_breakdowns(report)
    if breakdowns is not None:
        return {
            "kind": "confidence",
            "images": [{"image_id": b.image_id, "true_class": b.true_class,
                        "class_indices": list(b.class_indices),
                        "entries": [[name, conf] for name, conf in b.entries]} for b in breakdowns],
        }
    raise ReportError(f"cannot emit a report of type {type(report).__name__}")


def from_payload(payload):
    try:
        kind = payload["kind"]
        if kind == "sweep":
            rows = tuple(SweepRow(float(r["epsilon"]), float(r["top1_error"]), float(r["top5_error"]))
                         for r in payload["rows"])
            return SweepTable(rows, payload["model_id"], payload["dataset_id"])
        if kind == "patch":
            rows = tuple(PatchResult(r["patch"], int(r["size"]), float(r["top1_success"]), float(r["top5_success"]))
                         for r in payload["rows"])
            return PatchReport(rows, payload["model_id"], payload["dataset_id"])
        if kind == "eval":
            return [EvalReport(r["dataset_id"], r["model_id"], float(r["top1_error"]), float(r["top5_error"]),
                               int(r["num_images"])) for r in payload["reports"]]
        if kind == "confidence":
            return [ConfidenceBreakdown(b["image_id"], int(b["true_class"]),
                                        tuple((name, float(conf)) for name, conf in b["entries"]),
                                        tuple(b["class_indices"])) for b in payload["images"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"malformed report payload: {exc}") from exc
    raise ReportError(f"unknown report kind {payload.get('kind')!r}")


def _frame(report, pivot=False):
    if isinstance(report, SweepTable):
        return pd.DataFrame(
            [[_eps_text(r.epsilon), _pct(r.top1_error), _pct(r.top5_error)] for r in report.rows],
            columns=["epsilon", "top1_error", "top5_error"],
        )
    if isinstance(report, PatchReport) and pivot:
        sizes, table = report.pivot("top1_success")
        return pd.DataFrame(
            [[name] + [_pct(values[s]) if s in values else "" for s in sizes] for name, values in table.items()],
            columns=["patch"] + [f"size_{s}" for s in sizes],
        )
    if isinstance(report, PatchReport):
        return pd.DataFrame(
            [[r.patch, str(r.size), _pct(r.top1_success), _pct(r.top5_success)] for r in report.rows],
            columns=["patch", "size", "top1_success", "top5_success"],
        )
    evals = _as_eval_list(report)
    if evals is not None:
        return pd.DataFrame(
            [[r.model_id, r.dataset_id, _pct(r.top1_error), _pct(r.top5_error), str(r.num_images)] for r in evals],
            columns=["model", "dataset", "top1_error", "top5_error", "num_images"],
        )
    breakdowns = _as_breakdowns(report)
    if breakdowns is not None:
        return pd.DataFrame(
            [[b.image_id, str(b.true_class), str(rank), name, f"{conf:.4f}"]
             for b in breakdowns for rank, (name, conf) in enumerate(b.entries, start=1)],
            columns=["image", "true_class", "rank", "class_name", "confidence"],
        )
    raise ReportError(f"cannot emit a report of type {type(report).__name__}")


def render_csv(report, pivot=False):
    return _frame(report, pivot).to_csv(index=False, lineterminator="\n")


def render_json(report):
    return canonical_json(to_payload(report)) + "\n"


def _bar_groups(report):
    """(title, [(label, fraction of full bar, value text)]) per group."""
    if isinstance(report, SweepTable):
        return [(f"eps = {_eps_text(r.epsilon)}",
                 [("top-1 error", r.top1_error / 100.0, f"{_pct(r.top1_error)}%"),
                  ("top-5 error", r.top5_error / 100.0, f"{_pct(r.top5_error)}%")]) for r in report.rows]
    if isinstance(report, PatchReport):
        return [(f"{r.patch} ({r.size}x{r.size})",
                 [("top-1 success", r.top1_success / 100.0, f"{_pct(r.top1_success)}%"),
                  ("top-5 success", r.top5_success / 100.0, f"{_pct(r.top5_success)}%")]) for r in report.rows]
    evals = _as_eval_list(report)
    if evals is not None:
        return [(f"{r.model_id or 'model'} on {r.dataset_id}",
                 [("top-1 error", r.top1_error / 100.0, f"{_pct(r.top1_error)}%"),
                  ("top-5 error", r.top5_error / 100.0, f"{_pct(r.top5_error)}%")]) for r in evals]
    breakdowns = _as_breakdowns(report)
    if breakdowns is not None:
        return [(b.image_id or f"image {i}",
                 [(name, conf, f"{conf:.4f}") for name, conf in b.entries]) for i, b in enumerate(breakdowns)]
    raise ReportError(f"cannot emit a report of type {type(report).__name__}")


def render_svg(report):
    groups, y = [], GROUP_GAP
    for title, bars in _bar_groups(report):
        group = {"title": title, "y": y, "bars": []}
        for index, (label, fraction, text) in enumerate(bars):
            group["bars"].append({
                "label": label,
                "y": y + 6 + index * ROW_HEIGHT,
                "width": f"{max(0.0, min(1.0, fraction)) * BAR_SPAN:.2f}",
                "text": text,
            })
        groups.append(group)
        y += 6 + len(bars) * ROW_HEIGHT + GROUP_GAP
    return _env.get_template("bars.svg.j2").render(
        groups=groups,
        label_width=LABEL_WIDTH,
        bar_span=BAR_SPAN,
        bar_height=ROW_HEIGHT - 4,
        width=LABEL_WIDTH + BAR_SPAN + 80,
        height=y,
    )


def emit_report(report, fmt, path, pivot=False):
    """Write report to path as csv, json or svg; the write is atomic."""
    if fmt not in FORMATS:
        raise ReportError(f"unknown report format {fmt!r}, expected one of {FORMATS}")
    if fmt == "csv":
        text = render_csv(report, pivot)
    elif fmt == "json":
        text = render_json(report)
    else:
        text = render_svg(report)
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    logger.info("wrote %s report %s", fmt, path)
    return Path(path)


def load_report(path):
    """Read a JSON report back into its in-memory type."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path} is not a JSON report: {exc}") from exc
    if not isinstance(payload, dict):
        raise ReportError(f"{path} is not a JSON report")
    return from_payload(payload)
