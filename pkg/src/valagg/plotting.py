"""Convergence plots of trace CSVs with their theoretical envelopes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import envelope_prop2, envelope_thm2
from .problem import StructuralConstants
from .svgplot import COLORS, Series, render_loglog, thin_indices, write_svg
from .traceio import SummaryRecord, TraceTable, read_summary, read_trace_csv

PLOT_KINDS = ("self_value", "s_curve", "step_norm")
_Y_LABELS = {"self_value": "F(x_n, x_n)", "s_curve": "S_n", "step_norm": "|x_{n+1} - x_n|"}
_ENVELOPE_LABELS = {"self_value": "last-iterate bound", "s_curve": "S_n bound", "step_norm": "theta S_n / n"}


def _constants_for(path: Path, summary: SummaryRecord | None) -> StructuralConstants | None:
    if summary is None:
        sibling = path.with_suffix(".json")
        if not sibling.exists():
            return None
        summary = read_summary(sibling)
    return StructuralConstants.from_dict(summary.constants)


def series_for(table: TraceTable, kind: str, constants: StructuralConstants | None, label: str,
               color: str) -> list[Series]:
    n = table.n
    if kind == "self_value":
        y = table.self_values
    elif kind == "s_curve":
        y = table.s_values
    else:
        y = table.step_norms
    idx = thin_indices(len(n))
    out = [Series(label, n[idx], y[idx], color=color)]
    if constants is None:
        return out
    if kind == "self_value":
        env = envelope_thm2(constants, n[idx])
    elif kind == "s_curve":
        env = envelope_prop2(constants.theta, table.s_values[1], n[idx]) if len(n) > 1 else np.full(len(idx), np.nan)
    else:
        env = constants.theta * table.s_values[idx] / n[idx]
    out.append(Series(f"{label}: {_ENVELOPE_LABELS[kind]}", n[idx], env, dashed=True, color=color))
    return out


def plot_traces(paths, kind: str, svg_path, summaries=None, constants=None) -> Path:
    """Write one log-log SVG overlaying every trace in ``paths``.

    Envelope constants come from ``constants`` (one per trace), else from the
    given summaries, else from a summary JSON next to each CSV.  Nothing is
    written if any trace fails to parse.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    paths = [Path(p) for p in paths]
    if not paths:
        raise ValueError("no traces given")
    summaries = summaries or [None] * len(paths)
    constants = constants or [None] * len(paths)
    tables = [read_trace_csv(p) for p in paths]
    series = []
    for i, (p, t, s, c) in enumerate(zip(paths, tables, summaries, constants)):
        c = c if c is not None else _constants_for(p, s)
        label = t.label
        if s is not None:
            label = " ".join(f"{k}={v}" for k, v in s.config.items() if k not in ("x1",))
        series += series_for(t, kind, c, label, COLORS[i % len(COLORS)])
    text = render_loglog(series, f"{_Y_LABELS[kind]} against n", "n", _Y_LABELS[kind])
    return write_svg(text, svg_path)
