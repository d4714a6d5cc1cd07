"""Trace CSV, summary JSON and JSON-lines serialization.

Floats are written with ``repr`` (shortest round-trip decimal), so a trace read
back is bit-identical to the one written and reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .loop import RunTrace

CSV_HEADER = ("n", "x", "f_n_xn", "F_xn_xn", "S_n", "step_norm")


class TraceFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def fmt(v: float) -> str:
    return repr(float(v))


def trace_rows(trace: RunTrace):
    for i in range(trace.n_rounds):
        yield (
            str(i + 1),
            ";".join(fmt(c) for c in trace.iterates[i]),
            fmt(trace.per_round_values[i]),
            fmt(trace.self_values[i]),
            "" if i == 0 else fmt(trace.s_values[i]),
            fmt(trace.step_norms[i]),
        )


def trace_to_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(trace_rows(trace))
    return buf.getvalue()


def write_trace_csv(trace: RunTrace, path) -> Path:
    path = Path(path)
    path.write_text(trace_to_csv(trace))
    return path


@dataclass(frozen=True, eq=False)
class TraceTable:
    """Columns of a trace CSV."""

    n: np.ndarray
    iterates: np.ndarray
    f_values: np.ndarray
    self_values: np.ndarray
    s_values: np.ndarray
    step_norms: np.ndarray
    label: str = ""

    def __len__(self) -> int:
        return len(self.n)


def parse_trace_csv(text: str, label: str = "") -> TraceTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TraceFormatError("empty file", 0)
    if tuple(rows[0]) != CSV_HEADER:
        raise TraceFormatError(f"header must be {','.join(CSV_HEADER)}", 1)
    if len(rows) == 1:
        raise TraceFormatError("trace has no data rows", 1)
    n, X, f, F, S, st = [], [], [], [], [], []
    dim = None
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise TraceFormatError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", lineno)
        try:
            k = int(row[0])
            x = [float(c) for c in row[1].split(";")]
            vals = [float(row[2]), float(row[3]), math.nan if row[4] == "" else float(row[4]), float(row[5])]
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno) from None
        if k != len(n) + 1:
            raise TraceFormatError(f"expected n={len(n) + 1}, got {k}", lineno)
        if dim is None:
            dim = len(x)
        elif len(x) != dim:
            raise TraceFormatError(f"x has {len(x)} coordinates, expected {dim}", lineno)
        n.append(k)
        X.append(x)
        f.append(vals[0])
        F.append(vals[1])
        S.append(vals[2])
        st.append(vals[3])
    return TraceTable(np.array(n), np.array(X), np.array(f), np.array(F), np.array(S), np.array(st), label)


def read_trace_csv(path) -> TraceTable:
    path = Path(path)
    return parse_trace_csv(path.read_text(), label=path.stem)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _restore(v):
    if isinstance(v, str) and v in ("nan", "inf", "-inf"):
        return float(v)
    if isinstance(v, dict):
        return {k: _restore(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_restore(x) for x in v]
    return v


@dataclass(frozen=True)
class SummaryRecord:
    config: dict
    final_value: float
    best_index: int
    best_value: float
    fitted_exponent: float | None
    theoretical_exponent: float
    r_squared: float | None
    bounds: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    iterations_run: int = 0
    aborted: bool = False
    abort_reason: str = ""
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryRecord":
        return cls(**_restore(d))

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "SummaryRecord":
        return cls.from_dict(json.loads(text))

    def without_wall_time(self) -> dict:
        d = self.to_dict()
        d.pop("wall_time")
        return d


def write_summary(record: SummaryRecord, path) -> Path:
    path = Path(path)
    path.write_text(record.to_json() + "\n")
    return path


def read_summary(path) -> SummaryRecord:
    return SummaryRecord.from_json(Path(path).read_text())


def write_jsonl(records, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for r in records:
            fh.write(r.to_json(indent=None) + "\n")
    return path


def read_jsonl(path) -> list[SummaryRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.strip():
            try:
                out.append(SummaryRecord.from_json(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise TraceFormatError(str(exc), lineno) from None
    return out
