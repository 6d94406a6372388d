import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import markdown

from .errors import ArgumentError, FormatError

# Published 30-day close errors of the three forecasters, for side-by-side reading.
REFERENCE_ERRORS: Dict[str, Dict[str, Dict[str, float]]] = {
    "arima": {
        "ANF": {"MSE": 25.49, "RMSE": 5.05, "MAE": 3.86, "MAPE": 0.09, "EVS": -0.02},
        "EOG": {"MSE": 56.23, "RMSE": 7.50, "MAE": 5.42, "MAPE": 0.06, "EVS": -3.94},
    },
    "prophet": {
        "ANF": {"MSE": 53.04, "RMSE": 7.28, "MAE": 6.71, "MAPE": 0.16, "EVS": 0.31},
        "EOG": {"MSE": 713.61, "RMSE": 26.71, "MAE": 26.54, "MAPE": 0.30, "EVS": -0.03},
    },
    "dnn": {
        "ANF": {"MSE": 1.75, "RMSE": 1.32, "MAE": 1.07, "MAPE": 0.02, "EVS": 0.91},
        "EOG": {"MSE": 2.39, "RMSE": 1.55, "MAE": 1.23, "MAPE": 0.01, "EVS": 0.70},
    },
}
ERROR_COLUMNS = ("MSE", "RMSE", "MAE", "MAPE", "EVS")
MAX_INLINE_ITEMS = 40


def _cell(value: Any) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def markdown_table(header: List[str], rows: List[List[Any]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in rows:
        lines.append("| " + " | ".join(_cell(v).replace("|", "\\|") for v in row) + " |")
    return "\n".join(lines)


class ReportGenerator:
    """Renders the JSON and SVG artifacts of an output directory into one HTML page."""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger("ReportGenerator")
        if not self.output_dir.is_dir():
            raise ArgumentError(f"output directory not found: {self.output_dir}")

    def _load_artifacts(self) -> Dict[str, Any]:
        artifacts = {}
        for path in sorted(self.output_dir.rglob("*.json")):
            rel = path.relative_to(self.output_dir).as_posix()
            if path.name == "manifest.json":
                continue
            try:
                artifacts[rel] = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise FormatError(f"{rel}: not valid JSON ({e})") from e
        self.logger.info(f"Found {len(artifacts)} JSON artifacts in {self.output_dir}")
        return artifacts

    def _artifact_section(self, name: str, payload: Any) -> str:
        parts = [f"## {name}"]
        if isinstance(payload, dict):
            scalars = [[k, v] for k, v in sorted(payload.items()) if not isinstance(v, (dict, list))]
            if scalars:
                parts.append(markdown_table(["key", "value"], scalars))
            for key, value in sorted(payload.items()):
                if isinstance(value, dict) and all(not isinstance(v, (dict, list)) for v in value.values()):
                    parts.append(f"### {key}")
                    parts.append(markdown_table(["key", "value"], [[k, v] for k, v in sorted(value.items())]))
                elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
                    header = sorted({k for row in value for k in row})
                    parts.append(f"### {key}")
                    parts.append(markdown_table(header, [[row.get(k) for k in header] for row in value]))
                elif isinstance(value, list) and len(value) > MAX_INLINE_ITEMS:
                    parts.append(f"### {key}")
                    parts.append(f"{len(value)} items, first `{_cell(value[0])}`, last `{_cell(value[-1])}`")
                elif isinstance(value, (dict, list)):
                    parts.append(f"### {key}")
                    parts.append(f"`{_cell(value)}`")
        else:
            parts.append(f"`{_cell(payload)}`")
        return "\n\n".join(parts)

    def _reference_section(self) -> str:
        rows = []
        for model, tickers in REFERENCE_ERRORS.items():
            for ticker, errors in sorted(tickers.items()):
                rows.append([model, ticker] + [errors[c] for c in ERROR_COLUMNS])
        return "## Published forecast errors (30-day close)\n\n" + markdown_table(["model", "ticker", *ERROR_COLUMNS], rows)

    def _figures_section(self) -> str:
        figures = sorted(p.relative_to(self.output_dir).as_posix() for p in self.output_dir.rglob("*.svg"))
        if not figures:
            return ""
        return "## Figures\n\n" + "\n\n".join(f"![{name}]({name})" for name in figures)

    def generate_markdown(self) -> str:
        sections = ["# forwardtest report"]
        sections += [self._artifact_section(name, payload) for name, payload in self._load_artifacts().items()]
        sections.append(self._reference_section())
        figures = self._figures_section()
        if figures:
            sections.append(figures)
        return "\n\n".join(sections) + "\n"

    def generate_html(self) -> str:
        body = markdown.markdown(self.generate_markdown(), extensions=["tables"])
        return (
            "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
            f"<title>forwardtest report</title>\n{self.generate_css()}\n</head>\n"
            f"<body>\n{body}\n</body>\n</html>\n"
        )

    def generate_css(self) -> str:
        return """<style>
    body {
        font-family: 'Arial', sans-serif;
        line-height: 1.5;
        color: #333;
        max-width: 1000px;
        margin: 0 auto;
        padding: 20px;
    }

    h1, h2, h3 {
        margin-top: 1.5em;
        margin-bottom: 0.5em;
    }

    table {
        border-collapse: collapse;
        margin: 1em 0;
        font-size: 0.9em;
    }

    th, td {
        border: 1px solid #ccc;
        padding: 4px 8px;
        text-align: right;
    }

    th {
        background: #f0f0f0;
    }

    code {
        font-size: 0.8em;
        word-break: break-all;
    }

    img {
        max-width: 100%;
    }
</style>"""
