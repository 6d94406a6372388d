from pathlib import Path

import pytest

from src.forwardtest.ingest import load_series

FIXTURES = Path(__file__).parent / "fixtures"

FAST_CONFIG = """\
seed = 7

[cluster]
k_max = 8
restarts = 3

[arima]
p_max = 2
q_max = 1

[dnn]
epochs = 5
learning_rates = 0.001
optimizers = adam
"""


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture
def synthetic_csv():
    return FIXTURES / "synthetic_300.csv"


@pytest.fixture
def synthetic_series(synthetic_csv):
    return load_series(synthetic_csv, "SYN")


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text(FAST_CONFIG, encoding="utf-8")
    return path
