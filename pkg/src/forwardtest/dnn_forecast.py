"""Feed-forward price networks: windows, forward/backward passes, training, grid search, forecasting, persistence."""

import itertools
import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    AggregateError,
    ArgumentError,
    ConfigurationError,
    DivergenceError,
    PersistenceError,
    ShapeError,
    SizeError,
)
from .forecast import ForecastSeries, future_trading_days
from .ingest import COMPONENTS, MinMaxScaler, PriceSeries
from .utils import validate_vector

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"FTMLP\n"
MODEL_VERSION = 1
OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 5
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ArgumentError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not 0 <= self.dropout < 1:
            raise ArgumentError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "dropout": self.dropout,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MlpModel:
    """Layers [t, 10t, 5t, 1] by default; weights[i] has shape (widths[i+1], widths[i])."""
    widths: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    scaler: MinMaxScaler
    component: str = "close"
    dropout: float = 0.2
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=float) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=float) for b in self.biases))
        if len(self.widths) < 2 or self.widths[-1] != 1:
            raise ShapeError(f"widths must end in a single output, got {self.widths}")
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError(f"{len(self.weights)} weight matrices for widths {self.widths}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i + 1], self.widths[i]) or b.shape != (self.widths[i + 1],):
                raise ShapeError(f"layer {i}: weights {w.shape}, biases {b.shape} do not match widths {self.widths}")
        if not 0 <= self.dropout < 1:
            raise ArgumentError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.component not in COMPONENTS:
            raise ArgumentError(f"unknown component {self.component!r}")

    @classmethod
    def initialize(
        cls,
        lags: int,
        scaler: MinMaxScaler,
        component: str = "close",
        dropout: float = 0.2,
        seed: int = 0,
        hidden: Optional[Sequence[int]] = None,
    ) -> "MlpModel":
        """He-uniform weights, limit sqrt(6 / fan_in), zero biases."""
        if lags < 1:
            raise ArgumentError(f"lags must be >= 1, got {lags}")
        hidden = tuple(hidden) if hidden is not None else (10 * lags, 5 * lags)
        widths = (lags,) + hidden + (1,)
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(widths, tuple(weights), tuple(biases), scaler, component, dropout, {"init_seed": seed})

    @property
    def lags(self) -> int:
        return self.widths[0]

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def with_parameters(self, weights, biases, **changes) -> "MlpModel":
        return replace(self, weights=tuple(weights), biases=tuple(biases), **changes)

    def predict(self, inputs) -> np.ndarray:
        """Eval-mode outputs for a (batch, t) array of normalized inputs."""
        return _forward(self, _as_batch(self, inputs), None)[0]


def _as_batch(model: MlpModel, inputs) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(inputs, dtype=float))
    if batch.shape[1] != model.lags:
        raise ShapeError(f"model takes {model.lags} inputs, got {batch.shape[1]}")
    return batch


def _dropout_masks(model: MlpModel, batch_size: int, rng: Optional[np.random.Generator], rate: float) -> List[np.ndarray]:
    """Inverted-dropout masks for the hidden layers; all ones when no rng is given."""
    masks = []
    for width in model.widths[1:-1]:
        if rng is None or rate == 0:
            masks.append(np.ones((batch_size, width)))
        else:
            keep = rng.random((batch_size, width)) >= rate
            masks.append(keep / (1.0 - rate))
    return masks


def _forward(model: MlpModel, batch: np.ndarray, masks: Optional[List[np.ndarray]]):
    """Returns (outputs, cache) where cache holds per-layer (input, pre-activation, mask)."""
    activation = batch
    cache = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activation @ w.T + b
        if i == last:
            cache.append((activation, z, None))
            return z[:, 0], cache
        mask = masks[i] if masks is not None else 1.0
        cache.append((activation, z, mask))
        activation = np.maximum(z, 0.0) * mask
    raise ShapeError("model has no layers")


def mlp_forward(model: MlpModel, inputs, train_mode: bool = False, seed: Optional[int] = None) -> float:
    """Single forward pass; dropout is sampled from `seed` only in train mode."""
    batch = _as_batch(model, inputs)
    if batch.shape[0] != 1:
        raise ShapeError(f"mlp_forward takes one input vector, got {batch.shape[0]}")
    masks = None
    if train_mode:
        masks = _dropout_masks(model, 1, np.random.default_rng(seed), model.dropout)
    return float(_forward(model, batch, masks)[0][0])


def loss_and_gradients(
    model: MlpModel,
    inputs,
    targets,
    masks: Optional[List[np.ndarray]] = None,
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Mean absolute error and its gradients with respect to every weight and bias."""
    batch = _as_batch(model, inputs)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if y.shape[0] != batch.shape[0]:
        raise ShapeError(f"{batch.shape[0]} inputs but {y.shape[0]} targets")
    outputs, cache = _forward(model, batch, masks)
    error = outputs - y
    loss = float(np.mean(np.abs(error)))

    grad_w: List[np.ndarray] = [None] * len(model.weights)
    grad_b: List[np.ndarray] = [None] * len(model.biases)
    delta = (np.sign(error) / len(y))[:, None]
    for i in range(len(model.weights) - 1, -1, -1):
        activation, z, mask = cache[i]
        if mask is not None:
            delta = delta * mask * (z > 0)
        grad_w[i] = delta.T @ activation
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ model.weights[i]
    return loss, grad_w, grad_b


def make_windows(values, t: int = 5) -> Tuple[np.ndarray, np.ndarray]:
    """Pair i is (values[i:i+t], values[i+t]); there are len(values) - t pairs."""
    if t < 1:
        raise ArgumentError(f"t must be >= 1, got {t}")
    arr = validate_vector(values, min_length=1, name="values")
    if len(arr) < t + 1:
        raise SizeError(f"windows of {t} lags need {t + 1} values, got {len(arr)}")
    inputs = np.lib.stride_tricks.sliding_window_view(arr[:-1], t).copy()
    return inputs, arr[t:].copy()


def prepare_pairs(values, t: int = 5, scaler: Optional[MinMaxScaler] = None) -> Tuple[np.ndarray, np.ndarray, MinMaxScaler]:
    """Min-max normalize (fitting the scaler unless one is given) and window."""
    arr = validate_vector(values, min_length=2, name="values")
    scaler = scaler or MinMaxScaler.fit(arr)
    inputs, targets = make_windows(scaler.transform(arr), t)
    return inputs, targets, scaler


class _Optimizer:
    def __init__(self, config: TrainConfig, shapes: Sequence[Tuple[int, ...]]):
        self.config = config
        self.step_count = 0
        self.m = [np.zeros(shape) for shape in shapes]
        self.v = [np.zeros(shape) for shape in shapes]

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        c = self.config
        if c.optimizer == "sgd":
            return [p - c.learning_rate * g for p, g in zip(params, grads)]
        self.step_count += 1
        correction1 = 1.0 - c.beta1 ** self.step_count
        correction2 = 1.0 - c.beta2 ** self.step_count
        updated = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            updated.append(p - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon))
        return updated


def train(
    model: MlpModel,
    inputs,
    targets,
    config: TrainConfig,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> Tuple[MlpModel, List[float]]:
    """Mini-batch training on L1 loss; returns the trained model and per-epoch mean batch loss."""
    batch = _as_batch(model, inputs)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if batch.shape[0] == 0 or y.shape[0] != batch.shape[0]:
        raise SizeError(f"need matching non-empty inputs and targets, got {batch.shape[0]} and {y.shape[0]}")

    rng = np.random.default_rng(config.seed)
    model = replace(model, dropout=config.dropout)
    n_layers = len(model.weights)
    params = list(model.weights) + list(model.biases)
    optimizer = _Optimizer(config, [p.shape for p in params])

    history: List[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        losses = []
        for start in range(0, len(order), config.batch_size):
            index = order[start:start + config.batch_size]
            masks = _dropout_masks(model, len(index), rng, config.dropout)
            loss, grad_w, grad_b = loss_and_gradients(model, batch[index], y[index], masks)
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
            params = optimizer.step(params, grad_w + grad_b)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise DivergenceError(epoch, f"non-finite weights at epoch {epoch}")
            model = model.with_parameters(params[:n_layers], params[n_layers:])
            losses.append(loss * len(index))
        epoch_loss = float(sum(losses) / len(y))
        history.append(epoch_loss)
        logger.debug(f"{model.component} epoch {epoch}: loss {epoch_loss:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)

    metadata = dict(model.metadata)
    metadata.update(config.to_dict())
    metadata["final_loss"] = history[-1]
    return replace(model, metadata=metadata), history


@dataclass(frozen=True)
class GridCell:
    config: TrainConfig
    validation_mae: Optional[float]
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> Dict[str, object]:
        return {**self.config.to_dict(), "validation_mae": self.validation_mae, "error": self.error}


@dataclass(frozen=True)
class GridSearchResult:
    best_config: TrainConfig
    best_model: MlpModel
    cells: Tuple[GridCell, ...]

    def to_dict(self) -> Dict[str, object]:
        return {"best": self.best_config.to_dict(), "cells": [cell.to_dict() for cell in self.cells]}


DEFAULT_GRID = {
    "epochs": (50, 100, 200),
    "batch_size": (5,),
    "learning_rate": (1e-2, 1e-3, 1e-4),
    "optimizer": ("adam", "sgd"),
}


def grid_search(
    inputs,
    targets,
    scaler: MinMaxScaler,
    component: str = "close",
    grid: Optional[Mapping[str, Sequence]] = None,
    dropout: float = 0.2,
    seed: int = 0,
    validation_fraction: float = 0.2,
) -> GridSearchResult:
    """Train every grid cell on the earlier pairs and score it on the last `validation_fraction`.

    The winner has the lowest validation MAE (normalized scale) and is
    retrained on all pairs.
    """
    grid = dict(DEFAULT_GRID if grid is None else grid)
    unknown = set(grid) - set(DEFAULT_GRID)
    if unknown:
        raise ArgumentError(f"unknown grid keys {sorted(unknown)}")
    for key, default in DEFAULT_GRID.items():
        grid.setdefault(key, default[:1])
    if any(len(values) == 0 for values in grid.values()):
        raise ArgumentError("empty hyperparameter grid")

    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    n_val = max(1, int(round(len(y) * validation_fraction)))
    if len(y) - n_val < 1:
        raise SizeError(f"{len(y)} pairs cannot be split into fit and validation parts")
    fit_X, fit_y, val_X, val_y = X[:-n_val], y[:-n_val], X[-n_val:], y[-n_val:]

    cells: List[GridCell] = []
    failures: List[Exception] = []
    keys = ("epochs", "batch_size", "learning_rate", "optimizer")
    for epochs, batch_size, learning_rate, optimizer in itertools.product(*(grid[k] for k in keys)):
        config = TrainConfig(
            epochs=int(epochs),
            batch_size=int(batch_size),
            learning_rate=float(learning_rate),
            optimizer=str(optimizer),
            dropout=dropout,
            seed=seed,
        )
        model = MlpModel.initialize(X.shape[1], scaler, component, dropout, seed)
        try:
            trained, _ = train(model, fit_X, fit_y, config)
            mae = float(np.mean(np.abs(trained.predict(val_X) - val_y)))
            if not math.isfinite(mae):
                raise DivergenceError(config.epochs, "non-finite validation error")
        except DivergenceError as exc:
            logger.warning(f"grid cell {config.to_dict()} diverged: {exc}")
            failures.append(exc)
            cells.append(GridCell(config, None, str(exc)))
            continue
        logger.info(f"grid cell {config.to_dict()}: validation MAE {mae:.6f}")
        cells.append(GridCell(config, mae))

    scored = [cell for cell in cells if not cell.failed]
    if not scored:
        raise AggregateError("every grid cell diverged", failures)
    best = min(scored, key=lambda cell: cell.validation_mae)
    model = MlpModel.initialize(X.shape[1], scaler, component, dropout, seed)
    best_model, _ = train(model, X, y, best.config)
    return GridSearchResult(best.config, best_model, tuple(cells))


def forecast_validation(model: MlpModel, actual: PriceSeries, horizon: int = 30) -> ForecastSeries:
    """One-step-ahead predictions of the last `horizon` bars, each from the true preceding lags."""
    if horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {horizon}")
    values = actual.component(model.component)
    if len(values) < horizon + model.lags:
        raise SizeError(f"{horizon} one-step forecasts need {horizon + model.lags} bars, got {len(values)}")
    start = len(values) - horizon
    windows = np.stack([model.scaler.transform(values[i - model.lags:i]) for i in range(start, len(values))])
    predicted = model.scaler.inverse_transform(model.predict(windows))
    return ForecastSeries(
        model_id=f"mlp-{model.component}",
        dates=actual.dates[start:],
        values={model.component: predicted},
        mode="one-step",
    )


def forecast_recursive(
    models: Mapping[str, MlpModel],
    seed_series: PriceSeries,
    horizon: int = 30,
    on_step: Optional[Callable[[str, int, np.ndarray, float], None]] = None,
) -> ForecastSeries:
    """Autoregressive OHLC path: each component is fed its own previous predictions.

    `on_step(component, step, window, prediction)` sees the normalized inputs of every step.
    """
    if horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {horizon}")
    missing = [name for name in COMPONENTS if name not in models]
    if missing:
        raise ConfigurationError(f"no model for component(s) {missing}")
    lags = {models[name].lags for name in COMPONENTS}
    if len(lags) != 1:
        raise ConfigurationError(f"component models disagree on lags: {sorted(lags)}")
    t = lags.pop()
    if len(seed_series) < t:
        raise SizeError(f"seed series needs {t} bars, got {len(seed_series)}")

    paths = {}
    for name in COMPONENTS:
        model = models[name]
        history = list(model.scaler.transform(seed_series.component(name)[-t:]))
        predicted = []
        for step in range(horizon):
            window = np.asarray(history[-t:])
            value = float(model.predict(window)[0])
            if on_step is not None:
                on_step(name, step, window, value)
            history.append(value)
            predicted.append(value)
        paths[name] = model.scaler.inverse_transform(predicted)

    forecast = ForecastSeries(
        model_id="mlp-ohlc",
        dates=future_trading_days(seed_series.dates[-1], horizon),
        values=paths,
        mode="recursive",
    )
    for problem in forecast.ohlc_violations():
        logger.warning(f"incoherent forecast bar {problem}")
    return forecast


def _header(model: MlpModel) -> Dict[str, object]:
    return {
        "format_version": MODEL_VERSION,
        "t": model.lags,
        "widths": list(model.widths),
        "dropout": model.dropout,
        "component": model.component,
        "scaler": model.scaler.to_dict(),
        "metadata": model.metadata,
    }


def model_to_bytes(model: MlpModel) -> bytes:
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(
        np.ascontiguousarray(array, dtype="<f8").tobytes()
        for w, b in zip(model.weights, model.biases)
        for array in (w, b)
    )
    return MODEL_MAGIC + struct.pack("<HI", MODEL_VERSION, len(header)) + header + body


def model_from_bytes(payload: bytes) -> MlpModel:
    prefix = len(MODEL_MAGIC) + struct.calcsize("<HI")
    if len(payload) < prefix or not payload.startswith(MODEL_MAGIC):
        raise PersistenceError("not a model file (bad magic)")
    version, header_length = struct.unpack("<HI", payload[len(MODEL_MAGIC):prefix])
    if version != MODEL_VERSION:
        raise PersistenceError(f"unsupported model format version {version}")
    try:
        header = json.loads(payload[prefix:prefix + header_length].decode("utf-8"))
        widths = tuple(int(w) for w in header["widths"])
        scaler = MinMaxScaler(float(header["scaler"]["min"]), float(header["scaler"]["max"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise PersistenceError(f"corrupt model header: {exc}") from exc

    body = memoryview(payload)[prefix + header_length:]
    expected = sum((fan_out * fan_in + fan_out) * 8 for fan_in, fan_out in zip(widths[:-1], widths[1:]))
    if len(body) != expected:
        raise PersistenceError(f"corrupt model payload: {len(body)} parameter bytes, expected {expected}")

    weights, biases, offset = [], [], 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        for shape in ((fan_out, fan_in), (fan_out,)):
            count = int(np.prod(shape))
            array = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
            offset += count * 8
            (weights if len(shape) == 2 else biases).append(array)
    try:
        return MlpModel(widths, tuple(weights), tuple(biases), scaler, header["component"], float(header["dropout"]), header.get("metadata", {}))
    except (ValueError, KeyError) as exc:
        raise PersistenceError(f"corrupt model header: {exc}") from exc


def save_model(model: MlpModel, path: Union[str, Path]) -> Path:
    target = Path(path)
    try:
        target.write_bytes(model_to_bytes(model))
    except OSError as exc:
        raise PersistenceError(f"cannot write {target}: {exc}") from exc
    logger.info(f"Saved {model.component} model to {target}")
    return target


def load_model(path: Union[str, Path]) -> MlpModel:
    source = Path(path)
    try:
        payload = source.read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read {source}: {exc}") from exc
    return model_from_bytes(payload)
