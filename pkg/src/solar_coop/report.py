"""Tables, distribution summaries, and figure files for the CLI.

Output formats are deterministic: CSV is RFC-4180 with a header row, JSON
documents are schema-versioned with money as integer cents, and SVG figures
are rendered with a fixed hash salt and no timestamp metadata, so identical
inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .billing import format_dollars, to_integer_cents

SCHEMA_VERSION = "v1"

_UNIT_SUFFIX = {"kwh": "_kwh", "money": "_usd", "pct": "_pct"}
_JSON_SUFFIX = {"kwh": "_kwh", "money": "_cents", "pct": "_pct"}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "str"  # str | int | kwh | money | pct


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    rows: tuple[tuple, ...]
    totals: tuple | None = None  # same arity as rows; None cells left blank

    def _format_cell(self, value, kind: str) -> str:
        if value is None:
            return ""
        if kind == "money":
            return format_dollars(value)
        if kind == "kwh":
            return f"{value:.2f}"
        if kind == "pct":
            return f"{value:.2f}"
        return str(value)

    def header(self) -> list[str]:
        return [c.name + _UNIT_SUFFIX.get(c.kind, "") for c in self.columns]

    def formatted_rows(self, include_totals: bool = True) -> list[list[str]]:
        out = [
            [self._format_cell(v, c.kind) for v, c in zip(row, self.columns)]
            for row in self.rows
        ]
        if include_totals and self.totals is not None:
            out.append([self._format_cell(v, c.kind) for v, c in zip(self.totals, self.columns)])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.header())
        writer.writerows(self.formatted_rows())
        return buf.getvalue()

    def to_markdown(self) -> str:
        header = self.header()
        lines = ["| " + " | ".join(header) + " |",
                 "| " + " | ".join("---" for _ in header) + " |"]
        for row in self.formatted_rows():
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"

    def _json_cell(self, value, kind: str):
        if value is None:
            return None
        if kind == "money":
            return to_integer_cents(value)
        if kind in ("kwh", "pct"):
            return float(value)
        return value

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "table": self.name,
            "columns": [c.name + _JSON_SUFFIX.get(c.kind, "") for c in self.columns],
            "rows": [
                [self._json_cell(v, c.kind) for v, c in zip(row, self.columns)]
                for row in self.rows
            ],
            "totals": None if self.totals is None else [
                self._json_cell(v, c.kind) for v, c in zip(self.totals, self.columns)
            ],
        }
        return json.dumps(doc, sort_keys=True)

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        if fmt == "md":
            return self.to_markdown()
        raise ValueError(f"unknown output format: {fmt!r}")


@dataclass(frozen=True)
class DistributionSummary:
    """Five-number band of a value distribution (all in the value's own unit)."""

    label: str
    mean: float
    q05: float
    q95: float
    vmin: float
    vmax: float

    def __post_init__(self):
        if not (self.vmin - 1e-12 <= self.mean <= self.vmax + 1e-12):
            raise ValueError(f"{self.label}: mean outside [min, max]")


def summarize(label: str, values) -> DistributionSummary:
    arr = np.asarray(values, dtype=np.float64)
    return DistributionSummary(
        label=label,
        mean=float(arr.mean()),
        q05=float(np.quantile(arr, 0.05)),
        q95=float(np.quantile(arr, 0.95)),
        vmin=float(arr.min()),
        vmax=float(arr.max()),
    )


def distribution_table(name: str, summaries, kind: str = "money") -> Table:
    cols = (
        Column("label"),
        Column("mean", kind),
        Column("q05", kind),
        Column("q95", kind),
        Column("min", kind),
        Column("max", kind),
    )
    rows = tuple(
        (s.label, s.mean, s.q05, s.q95, s.vmin, s.vmax) for s in summaries
    )
    return Table(name, cols, rows)


def write_table(table: Table, directory: Path, fmt: str) -> Path:
    ext = {"csv": "csv", "json": "json", "md": "md"}[fmt]
    path = directory / f"{table.name}.{ext}"
    path.write_text(table.render(fmt), encoding="utf-8")
    return path


# --- figures -------------------------------------------------------------

def render_band_figure(path: Path, panels, ylabel: str, title: str) -> Path:
    """Quantile-band chart: dark band min..max, light band q05..q95, mean line.

    ``panels`` is a list of (panel_title, [DistributionSummary, ...]); one
    axes row per panel.  Values are cents and drawn in dollars.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "solar-coop", "figure.max_open_warning": 0}):
        fig, axes = plt.subplots(
            len(panels), 1, figsize=(8, 3.2 * len(panels)), squeeze=False
        )
        for ax, (panel_title, summaries) in zip(axes[:, 0], panels):
            xs = np.arange(len(summaries))
            scale = 0.01  # cents -> dollars
            lo = np.array([s.vmin for s in summaries]) * scale
            hi = np.array([s.vmax for s in summaries]) * scale
            q05 = np.array([s.q05 for s in summaries]) * scale
            q95 = np.array([s.q95 for s in summaries]) * scale
            mean = np.array([s.mean for s in summaries]) * scale
            ax.bar(xs, hi - lo, bottom=lo, width=0.72, color="#27496d", label="min..max")
            ax.bar(xs, q95 - q05, bottom=q05, width=0.72, color="#a8d3f0",
                   label="5%..95% quantiles")
            ax.plot(xs, mean, "o-", color="black", markersize=3, linewidth=1.0, label="mean")
            ax.set_title(panel_title, fontsize=10)
            ax.set_ylabel(ylabel)
            ax.set_xticks(xs)
            labels = [s.label for s in summaries]
            rotation = 90 if len(labels) > 16 else 0
            ax.set_xticklabels(labels, fontsize=7, rotation=rotation)
            ax.axhline(0.0, color="gray", linewidth=0.6)
        axes[0, 0].legend(fontsize=8, loc="best")
        fig.suptitle(title, fontsize=11)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
