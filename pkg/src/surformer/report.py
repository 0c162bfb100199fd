"""Comparison table across evaluated models (JSON plus aligned text)."""

import json
from pathlib import Path

from .bench import LatencyReport
from .errors import EmptyInputError
from .metrics import MetricsReport

COLUMNS = ("Model", "Precision", "Recall", "F1", "Accuracy", "Parameters", "Inference (ms)")


def table_rows(metrics, latencies=()):
    """One row per metrics report, in the given order.

    Latency reports are matched to metrics by model name; missing values
    show as ``-``.
    """
    lat = {l.model: l for l in latencies}
    rows = []
    for m in metrics:
        l = lat.get(m.model)
        params = l.parameters if l is not None and l.parameters is not None else None
        rows.append((
            m.model,
            f"{m.macro_precision:.4f}",
            f"{m.macro_recall:.4f}",
            f"{m.macro_f1:.4f}",
            f"{m.accuracy:.4f}",
            f"{params:,}" if params is not None else "-",
            f"{l.median_ms:.4f}" if l is not None else "-",
        ))
    return rows


def format_table(rows):
    widths = [max(len(COLUMNS[i]), *(len(r[i]) for r in rows)) for i in range(len(COLUMNS))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return " | ".join([first] + rest)

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(COLUMNS), sep] + [line(r) for r in rows]) + "\n"


def emit_report(metrics, latencies, path):
    """Write ``<stem>.json`` and ``<stem>.txt`` next to ``path``; returns both paths."""
    if not metrics:
        raise EmptyInputError("report needs at least one evaluated model")
    path = Path(path)
    json_path = path.with_suffix(".json")
    txt_path = path.with_suffix(".txt")
    payload = {
        "columns": list(COLUMNS),
        "metrics": [m.to_dict() for m in metrics],
        "latency": [l.to_dict() for l in latencies],
    }
    try:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(payload, indent=2) + "\n")
        txt_path.write_text(format_table(table_rows(metrics, latencies)))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return json_path, txt_path


def load_report(path):
    """Inverse of :func:`emit_report` for the JSON file: ``(metrics, latencies)``."""
    d = json.loads(Path(path).read_text())
    return ([MetricsReport.from_dict(m) for m in d["metrics"]],
            [LatencyReport.from_dict(l) for l in d["latency"]])
