import json

import pytest

from src.forwardtest.errors import ArgumentError, FormatError
from src.forwardtest.report import ReportGenerator, markdown_table


@pytest.fixture
def out_dir(tmp_path):
    (tmp_path / "backtest").mkdir()
    (tmp_path / "backtest" / "backtest.json").write_text(json.dumps({
        "ticker": "SYN",
        "final_equity": 104.25,
        "metrics": {"sharpe": 1.2, "calmar": None},
        "exit_reasons": ["signal", "end_of_data"],
        "equity": list(range(100)),
    }))
    (tmp_path / "manifest.json").write_text(json.dumps({"command": "backtest"}))
    (tmp_path / "backtest" / "equity.svg").write_text("<svg/>")
    return tmp_path


def test_markdown_table_escapes_pipes():
    table = markdown_table(["a", "b"], [["x|y", None], [0.5, [1, 2]]])
    assert table.splitlines() == ["| a | b |", "|---|---|", "| x\\|y | n/a |", "| 0.5 | [1, 2] |"]


def test_markdown_covers_artifacts(out_dir):
    text = ReportGenerator(out_dir).generate_markdown()
    assert text.startswith("# forwardtest report")
    assert "## backtest/backtest.json" in text
    assert "| final_equity | 104.25 |" in text
    assert "| calmar | n/a |" in text
    assert "100 items, first `0`, last `99`" in text
    assert "![backtest/equity.svg](backtest/equity.svg)" in text
    assert "Published forecast errors" in text
    assert "manifest.json" not in text


def test_html_renders_tables(out_dir):
    html = ReportGenerator(out_dir).generate_html()
    assert html.startswith("<!DOCTYPE html>")
    assert "<table>" in html
    assert "<style>" in html
    assert 'src="backtest/equity.svg"' in html


def test_missing_directory(tmp_path):
    with pytest.raises(ArgumentError):
        ReportGenerator(tmp_path / "absent")


def test_bad_json(tmp_path):
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(FormatError):
        ReportGenerator(tmp_path).generate_markdown()
