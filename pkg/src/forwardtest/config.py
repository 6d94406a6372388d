import configparser
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .errors import ConfigurationError


@dataclass(frozen=True)
class IngestSettings:
    strict: bool = True


@dataclass(frozen=True)
class FetchSettings:
    allow_network: bool = False
    require_https: bool = True
    timeout: float = 30.0
    chunk_size: int = 65536
    max_bytes: int = 64 * 1024 * 1024


@dataclass(frozen=True)
class VolatilitySettings:
    window: int = 30
    periods_per_year: int = 252


@dataclass(frozen=True)
class ClusterSettings:
    k_min: int = 2
    k_max: int = 20
    restarts: int = 10
    max_iter: int = 300


@dataclass(frozen=True)
class SynchronySettings:
    window: int = 120
    normalize: bool = True
    band: Optional[int] = None


@dataclass(frozen=True)
class ArimaSettings:
    p_max: int = 5
    q_max: int = 2
    d: int = 1
    transform: str = "level"
    horizon: int = 30
    adf_max_lag: Optional[int] = None
    max_evaluations: int = 20000


@dataclass(frozen=True)
class DnnSettings:
    lags: int = 5
    dropout: float = 0.2
    epochs: Tuple[int, ...] = (50, 100, 200)
    batch_sizes: Tuple[int, ...] = (5,)
    learning_rates: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    optimizers: Tuple[str, ...] = ("adam", "sgd")
    validation_fraction: float = 0.2
    horizon: int = 30


@dataclass(frozen=True)
class BacktestSettings:
    budget: float = 100.0
    fee_rate: float = 0.0
    periods_per_year: int = 252


@dataclass(frozen=True)
class SelectSettings:
    window: int = 30


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved configuration: file values, then CLI overrides."""
    seed: int = 0
    ingest: IngestSettings = field(default_factory=IngestSettings)
    fetch: FetchSettings = field(default_factory=FetchSettings)
    volatility: VolatilitySettings = field(default_factory=VolatilitySettings)
    cluster: ClusterSettings = field(default_factory=ClusterSettings)
    synchrony: SynchronySettings = field(default_factory=SynchronySettings)
    arima: ArimaSettings = field(default_factory=ArimaSettings)
    dnn: DnnSettings = field(default_factory=DnnSettings)
    backtest: BacktestSettings = field(default_factory=BacktestSettings)
    select: SelectSettings = field(default_factory=SelectSettings)

    def with_overrides(self, section: str, **values: Any) -> "PipelineConfig":
        """Replace keys of one section, ignoring None values (unset flags)."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        updated = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **{section: updated})

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


SECTIONS = {
    "ingest": IngestSettings,
    "fetch": FetchSettings,
    "volatility": VolatilitySettings,
    "cluster": ClusterSettings,
    "synchrony": SynchronySettings,
    "arima": ArimaSettings,
    "dnn": DnnSettings,
    "backtest": BacktestSettings,
    "select": SelectSettings,
}

_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


class ConfigReader:
    """Reads the plain-text `key = value` config, one [section] per module."""

    def __init__(self):
        self.logger = logging.getLogger("ConfigReader")

    def parse_value(self, text: str, default: Any) -> Any:
        """Coerce `text` to the type of the section default."""
        text = text.strip()
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, tuple):
            item = default[0] if default else ""
            return tuple(self.parse_value(part, item) for part in text.split(",") if part.strip())
        if default is None:
            return None if text.lower() in ("", "none") else int(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text

    def read_text(self, text: str, source: str = "<string>") -> PipelineConfig:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc

        config = PipelineConfig()
        if parser.has_option(parser.default_section, "seed"):
            config = dataclasses.replace(config, seed=int(parser.get(parser.default_section, "seed")))

        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigurationError(f"{source}: unknown section [{section}]")
            current = getattr(config, section)
            defaults = dataclasses.asdict(SECTIONS[section]())
            values = {}
            for key, raw in parser.items(section):
                if key == "seed":
                    continue
                if key not in defaults:
                    raise ConfigurationError(f"{source}: unknown key {key!r} in [{section}]")
                try:
                    values[key] = self.parse_value(raw, defaults[key])
                except ValueError as exc:
                    raise ConfigurationError(f"{source}: [{section}] {key}: {exc}") from exc
            self.logger.info(f"[{section}] {values}")
            config = dataclasses.replace(config, **{section: dataclasses.replace(current, **values)})
        return config

    def read(self, path: Union[str, Path]) -> PipelineConfig:
        config_path = Path(path)
        if not config_path.exists():
            raise FileNotFoundError(f"Config file not found: {config_path}")
        return self.read_text(config_path.read_text(encoding="utf-8"), source=str(config_path))


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """Defaults when `path` is None, else the parsed file."""
    if path is None:
        return PipelineConfig()
    return ConfigReader().read(path)
