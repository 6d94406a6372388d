"""SVG figures: equity curves, the elbow curve and forecast overlays."""

import io
import logging
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .backtest import BacktestReport  # noqa: E402
from .cluster import ElbowScan  # noqa: E402
from .forecast import ForecastSeries  # noqa: E402
from .ingest import PriceSeries  # noqa: E402

logger = logging.getLogger(__name__)

LINE_COLORS = ("#1f4e79", "#c0504d", "#9bbb59", "#8064a2", "#f79646", "#4bacc6")


def set_chart_style() -> None:
    plt.rcParams.update({
        "font.family": "DejaVu Sans",
        "font.size": 9,
        "axes.titlesize": 11,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "grid.linewidth": 0.4,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "legend.fontsize": 8,
        "svg.hashsalt": "forwardtest",
        "svg.fonttype": "path",
    })


def fig_to_svg(fig) -> str:
    """Render and close `fig`; no creation date so reruns give the same text."""
    buf = io.StringIO()
    fig.savefig(buf, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def equity_chart(reports: Mapping[str, BacktestReport], title: str = "Equity") -> str:
    set_chart_style()
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, (label, report) in enumerate(reports.items()):
        ax.plot(list(report.dates), report.equity, color=LINE_COLORS[i % len(LINE_COLORS)],
                linewidth=1.2, label=f"{label} ({report.total_return:+.2f})")
        if i == 0:
            ax.axhline(report.budget, color="gray", linewidth=0.5)
    ax.set_ylabel("Equity")
    ax.set_title(title)
    if reports:
        ax.legend(loc="best")
    fig.autofmt_xdate()
    fig.tight_layout()
    return fig_to_svg(fig)


def elbow_chart(scan: ElbowScan, title: str = "Within-cluster sum of squares") -> str:
    set_chart_style()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(scan.k_values, scan.wss, "o-", color=LINE_COLORS[0], markersize=4)
    knee_wss = scan.wss[list(scan.k_values).index(scan.knee)]
    ax.plot([scan.knee], [knee_wss], "s", color=LINE_COLORS[1], label=f"knee k={scan.knee}")
    ax.set_xlabel("Number of clusters")
    ax.set_ylabel("Sum of squared distances")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    return fig_to_svg(fig)


def forecast_chart(
    history: PriceSeries,
    forecasts: Sequence[ForecastSeries],
    actual: Optional[PriceSeries] = None,
    component: str = "close",
    tail: int = 120,
    title: Optional[str] = None,
) -> str:
    """The last `tail` real bars, each forecast path and the realized future if given."""
    set_chart_style()
    fig, ax = plt.subplots(figsize=(8, 4))
    shown = history[-tail:]
    ax.plot(shown.dates, shown.component(component), color="black", linewidth=1.0, label="history")
    if actual is not None and len(actual):
        ax.plot(actual.dates, actual.component(component), color="gray", linewidth=1.0,
                linestyle="--", label="actual")
    for i, forecast in enumerate(forecasts):
        values = forecast[component] if component in forecast.components else forecast[forecast.components[0]]
        ax.plot(forecast.dates, np.asarray(values), color=LINE_COLORS[(i + 1) % len(LINE_COLORS)],
                linewidth=1.2, label=forecast.model_id)
    ax.set_ylabel(component.capitalize())
    ax.set_title(title or f"{history.ticker} {component} forecast")
    ax.legend(loc="best")
    fig.autofmt_xdate()
    fig.tight_layout()
    return fig_to_svg(fig)
