"""Report files and plain-text result tables.

Evaluation reports are line-oriented key=value text carrying every
per-query AP (the statistics commands consume them); tables are aligned
plain text, with an optional JSON twin for machines. All formatting is
a pure function of the values, so identical inputs give identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .core import FusionParams, SampleId
from .errors import MalformedRecord
from .evaluation import EvalReport
from .stats import PairwiseResult


def _fmt(x: float) -> str:
    return repr(float(x))


def write_report(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_text(report))


def report_text(report: EvalReport) -> str:
    lines = [
        f"mode={report.mode}",
        f"query_split={report.query_split}",
        f"gallery_split={report.gallery_split}",
        f"model={report.model}",
    ]
    if report.params is not None:
        lines += [
            f"lambda={_fmt(report.params.lam)}",
            f"tau={_fmt(report.params.tau)}",
            f"k={report.params.k}",
            "streams=" + ",".join(report.params.streams),
        ]
    lines += [
        f"n_queries={len(report.per_query)}",
        f"n_excluded={report.n_excluded}",
        f"map={_fmt(report.map)}",
    ]
    for sid, ap in report.per_query:
        lines.append(f"query={sid};ap={_fmt(ap)}")
    return "\n".join(lines) + "\n"


def read_report(path) -> EvalReport:
    header: dict[str, str] = {}
    per_query: list[tuple[SampleId, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = dict(
                chunk.split("=", 1) for chunk in line.split(";") if "=" in chunk
            )
            if "query" in fields:
                if "ap" not in fields:
                    raise MalformedRecord("query line missing ap", number)
                per_query.append((SampleId.parse(fields["query"]), float(fields["ap"])))
            else:
                header.update(fields)
    for required in ("mode", "query_split", "gallery_split", "model"):
        if required not in header:
            raise MalformedRecord(f"report is missing {required!r}")
    params = None
    if "lambda" in header:
        params = FusionParams(
            lam=float(header["lambda"]),
            tau=float(header["tau"]),
            k=int(header["k"]),
            streams=tuple(header["streams"].split(",")),
        )
    return EvalReport(
        mode=header["mode"],
        query_split=header["query_split"],
        gallery_split=header["gallery_split"],
        model=header["model"],
        per_query=per_query,
        params=params,
        n_excluded=int(header.get("n_excluded", "0")),
    )


# --- plain-text tables ---

def render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in rows)
    return "\n".join(out) + "\n"


def map_with_ci(value: float, ci: tuple[float, float] | None) -> str:
    if ci is None:
        return f"{value:.3f}"
    return f"{value:.3f} ({ci[0]:.3f}, {ci[1]:.3f})"


def comparison_table(rows: list[dict]) -> str:
    """Model-comparison table: one row per configuration, mAP with CI."""
    modes = []
    for row in rows:
        for key in row:
            if key.endswith("_map") and key[:-4] not in modes:
                modes.append(key[:-4])
    headers = ["#", "setup"] + [f"{mode} mAP (95% CI)" for mode in modes]
    body = []
    for i, row in enumerate(rows, start=1):
        cells = [str(i), row["model"]]
        for mode in modes:
            if f"{mode}_map" in row:
                cells.append(map_with_ci(row[f"{mode}_map"], row.get(f"{mode}_ci")))
            else:
                cells.append("-")
        body.append(cells)
    return render_table(headers, body)


def holdout_table(rows: list[tuple[str, float]]) -> str:
    """One row per dropped stream plus the full ensemble ('none')."""
    return render_table(["holdout", "mAP"], [[name, f"{value:.3f}"] for name, value in rows])


def sweep_table(param: str, rows: list[tuple]) -> str:
    return render_table([param, "mAP"], [[_fmt_param(v), f"{m:.3f}"] for v, m in rows])


def _fmt_param(value) -> str:
    if isinstance(value, int):
        return str(value)
    return f"{value:g}"


def pairwise_table(results: list[PairwiseResult], names: list[str]) -> str:
    """Upper-triangular matrix of p-values and mAP differences.

    Diagonal and lower-triangle cells carry no extra information and are
    left blank.
    """
    cell = {}
    for r in results:
        cell[(r.model_a, r.model_b)] = f"p={r.p_value:.2g} d={r.delta_map:+.3f}"
    headers = ["model"] + list(names)
    body = []
    for a in names:
        row = [a]
        for b in names:
            row.append(cell.get((a, b), ""))
        body.append(row)
    return render_table(headers, body)


def pairwise_lines(results: list[PairwiseResult]) -> str:
    lines = []
    for r in results:
        lines.append(
            f"a={r.model_a};b={r.model_b};delta={_fmt(r.delta_map)};"
            f"p={_fmt(r.p_value)};significant={int(r.significant)}"
        )
    return "\n".join(lines) + "\n" if lines else ""


def ci_lines(name: str, point: float, lo: float, hi: float) -> str:
    return f"model={name};map={_fmt(point)};lo={_fmt(lo)};hi={_fmt(hi)}\n"


def to_json(obj) -> str:
    """Deterministic JSON twin of any report structure."""
    def default(value):
        if isinstance(value, SampleId):
            return str(value)
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        if isinstance(value, np.ndarray):
            return value.tolist()
        if hasattr(value, "__dict__"):
            return value.__dict__
        return str(value)
    return json.dumps(obj, sort_keys=True, indent=2, default=default) + "\n"
