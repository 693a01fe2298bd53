"""Score fusion, thresholding, per-attribute error tables and their text formats."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .stats import TTestResult, paired_ttest

OVERALL = "OVERALL"
FORMATS = ("csv", "tsv", "markdown")


def fuse_scores(views) -> np.ndarray:
    """Per-attribute mean over the first axis (views or ensemble members)."""
    views = np.asarray(views, dtype=np.float64)
    if views.ndim == 0 or views.shape[0] == 0:
        raise ValueError("cannot fuse an empty list of score vectors")
    return views.mean(axis=0)


def classify(scores, tau: float = 0.0) -> np.ndarray:
    """+1 where score > tau, else -1 (a score exactly at tau is negative)."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return np.where(scores > tau, 1, -1).astype(np.int8)


@dataclass
class ErrorTable:
    names: list
    errors: np.ndarray  # percent, one per attribute

    def __post_init__(self):
        self.names = [str(n) for n in self.names]
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if self.errors.shape != (len(self.names),):
            raise ValueError("need exactly one error per attribute name")
        if np.any((self.errors < 0) | (self.errors > 100)):
            raise ValueError("errors must be percentages in [0, 100]")

    @property
    def overall(self) -> float:
        return float(np.mean(self.errors))

    def __eq__(self, other) -> bool:
        return (isinstance(other, ErrorTable) and self.names == other.names
                and np.array_equal(self.errors, other.errors))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.errors.tolist()))


def error_table(predictions, truths, names: Sequence[str]) -> ErrorTable:
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise ValueError(f"prediction/truth shape mismatch: {predictions.shape} vs {truths.shape}")
    if predictions.ndim != 2 or predictions.shape[0] == 0:
        raise ValueError("expected a non-empty (images, attributes) array")
    if predictions.shape[1] != len(names):
        raise ValueError(f"{predictions.shape[1]} attributes but {len(names)} names")
    return ErrorTable(list(names), 100.0 * np.mean(predictions != truths, axis=0))


def per_image_errors(predictions, truths) -> np.ndarray:
    """Percentage of misclassified attributes per image."""
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise ValueError("prediction/truth shape mismatch")
    return 100.0 * np.mean(predictions != truths, axis=1)


def compare_tables(a: ErrorTable, b: ErrorTable) -> TTestResult:
    """Paired t-test over attributes (one pair per attribute)."""
    if a.names != b.names:
        raise ValueError("tables cover different attributes")
    return paired_ttest(a.errors, b.errors)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def emit_tables(tables: Mapping[str, ErrorTable], fmt: str = "csv") -> str:
    """Side-by-side tables (one column per condition), attribute rows then OVERALL."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown table format {fmt!r}; expected one of {FORMATS}")
    if not tables:
        raise ValueError("no tables to emit")
    columns = list(tables)
    names = tables[columns[0]].names
    for c in columns[1:]:
        if tables[c].names != names:
            raise ValueError(f"table {c!r} lists different attributes")
    rows = [[n] + [_fmt(tables[c].errors[i]) for c in columns] for i, n in enumerate(names)]
    rows.append([OVERALL] + [_fmt(tables[c].overall) for c in columns])
    header = ["attribute"] + columns
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def emit_table(table: ErrorTable, fmt: str = "csv", column: str = "error") -> str:
    return emit_tables({column: table}, fmt)


def parse_tables(text: str, fmt: str = "csv") -> dict:
    """Inverse of :func:`emit_tables`; OVERALL rows are checked, not stored."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown table format {fmt!r}")
    if fmt == "markdown":
        rows = []
        for i, line in enumerate(text.strip().splitlines()):
            if i == 1:
                continue
            rows.append([cell.strip() for cell in line.strip().strip("|").split("|")])
    else:
        rows = list(csv.reader(io.StringIO(text), delimiter="," if fmt == "csv" else "\t"))
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError("empty table")
    header, body = rows[0], rows[1:]
    columns = header[1:]
    names, values, overall = [], [], None
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if row[0] == OVERALL:
            overall = vals
        else:
            names.append(row[0])
            values.append(vals)
    arr = np.array(values, dtype=np.float64).reshape(len(names), len(columns))
    tables = {c: ErrorTable(names, arr[:, j]) for j, c in enumerate(columns)}
    if overall is not None:
        for c, v in zip(columns, overall):
            if abs(tables[c].overall - v) > 0.005 + 1e-9:
                raise ValueError(f"OVERALL of column {c!r} is {v}, attributes average {tables[c].overall:.4f}")
    return tables


def parse_table(text: str, fmt: str = "csv") -> ErrorTable:
    tables = parse_tables(text, fmt)
    if len(tables) != 1:
        raise ValueError(f"expected a single-column table, got {len(tables)} columns")
    return next(iter(tables.values()))


def write_scores(ids: Sequence[str], scores) -> str:
    """Score dump: one line per image, the id followed by its scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != len(ids):
        raise ValueError("need one score row per image id")
    return "".join(f"{i} " + " ".join(repr(float(v)) for v in row) + "\n" for i, row in zip(ids, scores))


def read_scores(text: str) -> tuple[list, np.ndarray]:
    ids, rows = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            row = [float(v) for v in parts[1:]]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric score") from None
        if rows and len(row) != len(rows[0]):
            raise ValueError(f"line {lineno}: expected {len(rows[0])} scores, got {len(row)}")
        ids.append(parts[0])
        rows.append(row)
    return ids, np.array(rows, dtype=np.float64)
