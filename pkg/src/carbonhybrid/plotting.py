"""Line charts written as SVG with a companion CSV of the plotted values."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import InsufficientDataError  # noqa: E402
from .panel import DatedSeries  # noqa: E402


def _format(value: float) -> str:
    return repr(float(value))


def emit_series_plot(
    series: Mapping[str, DatedSeries] | DatedSeries,
    path: str | Path,
    title: str = "",
    ylabel: str = "",
) -> tuple[Path, Path]:
    """Write ``path`` (SVG) and ``path`` with a ``.csv`` suffix.

    ``series`` is one series or a mapping of label to series for an
    overlay. Output bytes depend only on the data and labels.
    """
    if isinstance(series, DatedSeries):
        series = {"value": series}
    if not series or any(len(s) == 0 for s in series.values()):
        raise InsufficientDataError("cannot plot an empty series")
    svg_path = Path(path).with_suffix(".svg")
    csv_path = svg_path.with_suffix(".csv")
    svg_path.parent.mkdir(parents=True, exist_ok=True)

    with plt.rc_context({"svg.hashsalt": "carbonhybrid", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 4))
        for label, s in series.items():
            marker = "o" if len(s) == 1 else None
            ax.plot(s.dates, s.values, label=label, linewidth=1.0, marker=marker)
        if title:
            ax.set_title(title)
        if ylabel:
            ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend()
        fig.autofmt_xdate()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)

    labels = list(series)
    dates = sorted({d for s in series.values() for d in s.dates})
    lookup = {label: dict(zip(s.dates, s.values)) for label, s in series.items()}
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *labels])
        for d in dates:
            row = [d.isoformat()]
            for label in labels:
                v = lookup[label].get(d)
                row.append("" if v is None else _format(v))
            writer.writerow(row)
    return svg_path, csv_path
