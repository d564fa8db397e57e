"""Paper-style result tables in CSV or Markdown.

Rows are (dataset, regime, algorithm, pipeline); columns are every
availability level crossed with the feature sets (or scenario metrics for the
open-world table). Static cells read "mean (std)"; temporal cells, which come
from a single trial, read the bare value. Missing cells stay blank.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

from ..flowstore import FEATURE_SETS
from ..pipelines import BMD, MD, PIPELINE_KINDS
from ..splitter import AVAILABILITY_KINDS, STATIC
from ..stats import aggregate

TABLES = ("baseline", "open_world", "multiclass", "train_runtime", "test_runtime")
FORMATS = ("csv", "markdown", "md")
ROW_KEYS = ("dataset", "regime", "algorithm", "pipeline")
DIGITS = 3


class TableError(ValueError):
    pass


def _fmt(values: list[float], regime: str, digits: int) -> str:
    if not values:
        return ""
    if regime != STATIC:
        return f"{values[0]:.{digits}f}" if len(values) == 1 else aggregate(values).cell(digits)
    return aggregate(values).cell(digits)


def _pair(a: str, b: str) -> str:
    return f"{a} / {b}" if a and b else ""


def _columns(table: str, availabilities: list[str]) -> list[tuple[str, str]]:
    if table == "open_world":
        return [(a, part) for a in availabilities for part in ("unknown fpr / tpr", "adversarial tpr_org / tpr_adv")]
    return [(a, fs) for a in availabilities for fs in FEATURE_SETS]


def _availability_order(store) -> list[str]:
    seen = {r.availability for r in store.records}
    base = [a for a in AVAILABILITY_KINDS]
    extra = sorted(seen - set(base))
    return base + extra


def build_rows(store, table: str, digits: int = DIGITS) -> tuple[list[str], list[list[str]]]:
    if table not in TABLES:
        raise TableError(f"unknown table kind {table!r}; expected one of {TABLES}")
    avail = _availability_order(store)
    cols = _columns(table, avail)
    header = list(ROW_KEYS) + [f"{a} {c}" for a, c in cols]
    groups: dict[tuple, dict[tuple, list]] = defaultdict(lambda: defaultdict(list))
    for r in store.records:
        if r.skipped:
            continue
        row = (r.dataset, r.regime, r.algorithm, r.pipeline)
        if table == "open_world":
            if r.scenario == "unknown":
                groups[row][(r.availability, cols[0][1])].append(r)
            elif r.scenario == "adversarial":
                groups[row][(r.availability, cols[1][1])].append(r)
        elif r.scenario == "closed":
            if table == "multiclass" and r.pipeline not in (MD, BMD):
                continue
            groups[row][(r.availability, r.feature_set)].append(r)

    order = {k: i for i, k in enumerate(PIPELINE_KINDS)}
    rows = []
    for row in sorted(groups, key=lambda k: (k[0], k[1] != STATIC, k[1], k[2], order.get(k[3], 99))):
        regime = row[1]
        cells = []
        for col in cols:
            recs = sorted(groups[row].get(col, []), key=lambda r: r.trial)
            cells.append(_cell(table, col, recs, regime, digits))
        rows.append(list(row) + cells)
    return header, rows


def _cell(table: str, col: tuple, recs: list, regime: str, digits: int) -> str:
    if not recs:
        return ""

    def vals(m):
        return [float(r.metrics[m]) for r in recs if m in r.metrics]

    if table == "baseline":
        return _pair(_fmt(vals("fpr"), regime, digits), _fmt(vals("tpr"), regime, digits))
    if table == "open_world":
        if col[1].startswith("unknown"):
            return _pair(_fmt(vals("fpr"), regime, digits), _fmt(vals("tpr"), regime, digits))
        return _pair(_fmt(vals("tpr_org"), regime, digits), _fmt(vals("tpr_adv"), regime, digits))
    if table == "multiclass":
        return _fmt(vals("acc_mal"), regime, digits)
    attr = "train_wall_seconds" if table == "train_runtime" else "infer_wall_seconds"
    return _fmt([getattr(r, attr) for r in recs], regime, digits)


def render(header: list[str], rows: list[list[str]], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if fmt in ("markdown", "md"):
        lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise TableError(f"unknown format {fmt!r}; expected csv or markdown")


def emit_table(store, table: str, fmt: str = "csv", path: str | Path | None = None,
               digits: int = DIGITS) -> str:
    """Render ``table`` from ``store``; writes it to ``path`` when given and returns the text."""
    if fmt not in FORMATS:
        raise TableError(f"unknown format {fmt!r}; expected csv or markdown")
    text = render(*build_rows(store, table, digits), fmt)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_cell(cell: str) -> list[tuple[float, float | None]]:
    """Invert a cell: "0.040 (0.001) / 0.997 (0.000)" -> [(0.04, 0.001), (0.997, 0.0)]."""
    out = []
    for part in filter(None, (p.strip() for p in cell.split(" / "))):
        if "(" in part:
            mean, std = part.rstrip(")").split("(")
            out.append((float(mean), float(std)))
        else:
            out.append((float(part), None))
    return out
