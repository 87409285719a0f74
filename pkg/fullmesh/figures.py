# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Plotly figures built from result CSV rows, written as standalone HTML.
"""

from collections import defaultdict
from pathlib import Path

import numpy as np
import plotly.graph_objects as go
from loguru import logger

from fullmesh.models import read_csv


def _value(row: dict[str, str], column: str) -> float | None:
    text = row.get(column, "")
    return float(text) if text not in ("", None) else None


def _mean_by(rows, x_column: str, y_column: str) -> dict[str, tuple[list[float], list[float]]]:
    """Per routing: x values and the seed-mean of y at each x."""
    grouped: dict[str, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        x, y = _value(row, x_column), _value(row, y_column)
        if x is None or y is None:
            continue
        grouped[row["routing"]][x].append(y)
    series = {}
    for routing, points in grouped.items():
        xs = sorted(points)
        series[routing] = (xs, [float(np.mean(points[x])) for x in xs])
    return series


def create_load_plot(rows, metric: str, title: str, yaxis_title: str):
    """One line per routing of `metric` against offered load."""
    fig = go.Figure()
    for routing, (xs, ys) in sorted(_mean_by(rows, "offered", metric).items()):
        fig.add_trace(go.Scatter(x=xs, y=ys, mode="lines+markers", name=routing))
    fig.update_layout(title=title, xaxis_title="Offered load (flits/cycle/server)", yaxis_title=yaxis_title)
    return fig


def create_hop_histogram(rows, offered: float | None = None):
    """Hop distribution per routing at the highest (or given) offered load."""
    if offered is None:
        loads = [v for row in rows if (v := _value(row, "offered")) is not None]
        offered = max(loads) if loads else None
    fig = go.Figure()
    by_routing: dict[str, list[list[float]]] = defaultdict(list)
    for row in rows:
        if offered is not None and _value(row, "offered") != offered:
            continue
        by_routing[row["routing"]].append([_value(row, f"hops_{k}") or 0.0 for k in range(5)])
    for routing, samples in sorted(by_routing.items()):
        fig.add_trace(
            go.Bar(x=["0", "1", "2", "3", "4+"], y=list(np.mean(samples, axis=0)), name=routing)
        )
    suffix = f" at load {offered}" if offered is not None else ""
    fig.update_layout(
        title=f"Hop distribution{suffix}", xaxis_title="Hops", yaxis_title="Fraction of packets"
    )
    return fig


def create_cycles_bars(rows):
    """Cycles to finish per routing, grouped by pattern or kernel."""
    grouped: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if (cycles := _value(row, "cycles_to_finish")) is None:
            continue
        group = f"{row['topology']} {row['pattern']}"
        if row.get("mapping"):
            group += f"/{row['mapping']}"
        grouped[row["routing"]][group].append(cycles)
    fig = go.Figure()
    for routing, groups in sorted(grouped.items()):
        names = sorted(groups)
        fig.add_trace(
            go.Bar(x=names, y=[float(np.mean(groups[g])) for g in names], name=routing)
        )
    fig.update_layout(title="Cycles to finish", xaxis_title="Traffic", yaxis_title="Cycles")
    return fig


def create_estimate_plot(rows):
    """Analytical estimate against Full-mesh size, one line per service topology."""
    fig = go.Figure()
    series: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for row in rows:
        series[row["service"]].append((int(row["n"]), float(row["estimate"])))
    for service, points in series.items():
        points.sort()
        fig.add_trace(
            go.Scatter(
                x=[n for n, _ in points], y=[e for _, e in points], mode="lines+markers", name=service
            )
        )
    fig.update_layout(
        title="Estimated throughput", xaxis_title="Switches", yaxis_title="Flits/cycle/server"
    )
    return fig


def write_figures(results: list[str], out_dir: str | Path, estimate: str | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in results:
        rows = read_csv(path)
        if not rows:
            logger.warning(f"{path} has no rows")
            continue
        stem = Path(path).stem
        figures = {}
        if any(_value(row, "offered") is not None for row in rows):
            figures["accepted"] = create_load_plot(rows, "accepted", f"{stem}: accepted load", "Accepted load")
            figures["latency"] = create_load_plot(rows, "mean_latency", f"{stem}: latency", "Cycles")
            figures["jain"] = create_load_plot(rows, "jain", f"{stem}: Jain index", "Jain index")
            figures["hops"] = create_hop_histogram(rows)
        if any(_value(row, "cycles_to_finish") is not None for row in rows):
            figures["cycles"] = create_cycles_bars(rows)
        for name, fig in figures.items():
            target = out_dir / f"{stem}-{name}.html"
            fig.write_html(target)
            written.append(target)
    if estimate is not None:
        target = out_dir / "estimate.html"
        create_estimate_plot(read_csv(estimate)).write_html(target)
        written.append(target)
    return written
