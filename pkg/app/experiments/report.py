"""
Report rendering: metrics overlays against the reference series and the
parallel-coordinates view of every evaluated CNN genome.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from ..boltzmann.training import EpochMetrics, read_metrics_csv
from ..core.errors import DataError
from ..core.logging import get_logger
from ..evolution.engine import read_evaluations_csv
from .reference import reference_series, trend

logger = get_logger(__name__)


def metrics_figure(series: Dict[str, List[EpochMetrics]], reference: bool = True) -> go.Figure:
    """Accuracy and reconstruction error per epoch, one trace per series."""
    fig = make_subplots(rows=1, cols=2, subplot_titles=("Accuracy", "Reconstruction error"))
    curves = dict(series)
    if reference:
        curves.update({f"reference {k}": v for k, v in reference_series().items()})
    for name, rows in curves.items():
        epochs = [r["epoch"] for r in rows]
        dash = "dot" if name.startswith("reference") else "solid"
        fig.add_trace(go.Scatter(x=epochs, y=[r["accuracy"] for r in rows], name=name, legendgroup=name,
                                 line={"dash": dash}), row=1, col=1)
        fig.add_trace(go.Scatter(x=epochs, y=[r["reconstruction_error"] for r in rows], name=name,
                                 legendgroup=name, showlegend=False, line={"dash": dash}), row=1, col=2)
    fig.update_xaxes(title_text="epoch")
    return fig


def genome_figure(names: Sequence[str], genomes: np.ndarray, fitness: np.ndarray) -> go.Figure:
    """Parallel coordinates over genes, coloured by fitness; failed evaluations are dropped."""
    keep = np.isfinite(fitness)
    dims = [{"label": name, "values": genomes[keep, i]} for i, name in enumerate(names)]
    dims.append({"label": "fitness", "values": fitness[keep]})
    return go.Figure(go.Parcoords(line={"color": fitness[keep], "colorscale": "Viridis", "showscale": True},
                                  dimensions=dims))


def comparison_table(series: Dict[str, List[EpochMetrics]]) -> str:
    """Run trends next to the reference trends, one line per series."""
    rows = {name: trend(rows) for name, rows in series.items() if rows}
    rows.update({f"reference {k}": trend(v) for k, v in reference_series().items()})
    columns = ("first_accuracy", "last_accuracy", "first_error", "last_error")
    width = max(len(name) for name in rows)
    lines = [f"{'series':<{width}}  " + "  ".join(f"{c:>14}" for c in columns)]
    for name, t in rows.items():
        lines.append(f"{name:<{width}}  " + "  ".join(f"{t[c]:14.4f}" for c in columns))
    return "\n".join(lines)


def render_report(metrics: Sequence[str | Path], evaluations: Optional[str | Path], out_dir: Path,
                  reference: bool = True) -> dict:
    """
    Write ``report.html`` (and ``genomes.html`` when an evaluations file is
    given) into ``out_dir``.

    Returns:
        summary with the written files and the comparison table text
    """
    series: Dict[str, List[EpochMetrics]] = {}
    for path in metrics:
        path = Path(path)
        if not path.exists():
            raise DataError(f"metrics file not found: {path}")
        name = path.parent.name if path.name == "metrics.csv" else path.stem
        series[name] = read_metrics_csv(path)
    files = []
    if series or reference:
        metrics_figure(series, reference).write_html(out_dir / "report.html", include_plotlyjs=True)
        files.append("report.html")
    if evaluations is not None:
        names, genomes, fitness = read_evaluations_csv(evaluations)
        genome_figure(names, genomes, fitness).write_html(out_dir / "genomes.html", include_plotlyjs=True)
        files.append("genomes.html")
    table = comparison_table(series)
    (out_dir / "comparison.txt").write_text(table + "\n")
    logger.info("Report rendered", series=len(series), files=files)
    return {"files": files, "table": table}
