"""Report rendering: aligned-text tables and figures from the metrics CSV.

The core pipeline emits only delimited data; this module turns it into the
benchmark's presentation formats (subgroup-by-model tables, condition
breakdowns, EER bar charts, and pairwise-statistics heat maps) written next
to the CSVs under reports/.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import BenchError


def read_metrics(metrics_csv: str | Path) -> list[dict]:
    path = Path(metrics_csv)
    if not path.exists():
        raise BenchError(f"metrics file not found: {path} (run evaluate first)")
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _pivot(rows: list[dict], value: str) -> tuple[list[str], list[str], dict]:
    protocols = sorted({r["protocol"] for r in rows})
    models = sorted({r["model_id"] for r in rows})
    cells = {(r["protocol"], r["model_id"]): float(r[value]) for r in rows}
    return protocols, models, cells


def render_metric_table(rows: list[dict], value: str = "eer",
                        as_percent: bool = True) -> str:
    """Aligned text: one row per protocol, one column per model."""
    protocols, models, cells = _pivot(rows, value)
    unit = " (%)" if as_percent else ""
    header = [f"{value}{unit} by protocol and model"]
    width = max([len(p) for p in protocols] + [10])
    mwidths = [max(len(m), 8) for m in models]
    header.append(" " * width + "  " + "  ".join(m.rjust(w) for m, w in zip(models, mwidths)))
    for protocol in protocols:
        cols = []
        for m, w in zip(models, mwidths):
            v = cells.get((protocol, m))
            if v is None:
                cols.append("---".rjust(w))
            else:
                cols.append((f"{100 * v:.2f}" if as_percent else f"{v:.4f}").rjust(w))
        header.append(protocol.ljust(width) + "  " + "  ".join(cols))
    return "\n".join(header) + "\n"


def figure_metric_bars(rows: list[dict], out_path: str | Path,
                       value: str = "eer") -> Path:
    """Grouped bar chart of a metric per protocol, one bar group per model."""
    protocols, models, cells = _pivot(rows, value)
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(protocols)), 4.2))
    width = 0.8 / max(len(models), 1)
    for j, model in enumerate(models):
        xs = [i + j * width for i in range(len(protocols))]
        ys = [100 * cells.get((p, model), float("nan")) for p in protocols]
        ax.bar(xs, ys, width=width, label=model)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(protocols))])
    ax.set_xticklabels(protocols, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(f"{value} (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def figure_stats_heatmap(stats_csv: str | Path, out_path: str | Path) -> Path:
    """Heat map of the pairwise t statistics from a stats CSV."""
    path = Path(stats_csv)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    t_matrix = []
    for row in rows[1:]:
        t_row = []
        for cell in row[1:]:
            if cell == "---":
                t_row.append(0.0)
            else:
                t_row.append(float(cell.split("/")[0]))
        t_matrix.append(t_row)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * len(labels), 1.0 + 0.6 * len(labels)))
    image = ax.imshow(t_matrix, cmap="RdBu_r", vmin=-6, vmax=6)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    fig.colorbar(image, ax=ax, label="paired t")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_reports(output_dir: str | Path) -> dict:
    """Render every table and figure available under output_dir/reports."""
    reports = Path(output_dir) / "reports"
    metrics_csv = reports / "metrics.csv"
    written: list[str] = []
    rows = read_metrics(metrics_csv)
    if rows:
        for value in ("eer", "min_dcf", "auc"):
            table = render_metric_table(rows, value, as_percent=(value == "eer"))
            out = reports / f"table_{value}.txt"
            out.write_text(table)
            written.append(str(out))
            fig = figure_metric_bars(rows, reports / f"figure_{value}.png", value)
            written.append(str(fig))
    for stats_csv in sorted(reports.glob("stats_*.csv")):
        fig = figure_stats_heatmap(stats_csv, stats_csv.with_suffix(".png"))
        written.append(str(fig))
    return {"written": written}
