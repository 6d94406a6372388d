import numpy as np
import pytest

import src.forwardtest.dnn_forecast as dnn
from src.forwardtest.dnn_forecast import (
    MODEL_MAGIC,
    MlpModel,
    TrainConfig,
    forecast_recursive,
    forecast_validation,
    grid_search,
    load_model,
    loss_and_gradients,
    make_windows,
    mlp_forward,
    model_from_bytes,
    model_to_bytes,
    prepare_pairs,
    save_model,
    train,
)
from src.forwardtest.errors import (
    AggregateError,
    ArgumentError,
    ConfigurationError,
    DivergenceError,
    PersistenceError,
    ShapeError,
    SizeError,
)
from src.forwardtest.ingest import COMPONENTS, MinMaxScaler, load_series
from src.forwardtest.metrics import forecast_errors
from tests.helpers import make_series, published_csv, random_walk

UNIT = MinMaxScaler(0.0, 1.0)


def zero_model(lags=5, scaler=UNIT, component="close"):
    model = MlpModel.initialize(lags, scaler, component)
    return model.with_parameters([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])


def test_make_windows():
    inputs, targets = make_windows([1, 2, 3, 4, 5, 6, 7], t=5)
    assert inputs.tolist() == [[1, 2, 3, 4, 5], [2, 3, 4, 5, 6]]
    assert targets.tolist() == [6, 7]
    assert len(make_windows(np.arange(6.0), t=5)[1]) == 1


def test_window_index_oracle():
    values = np.random.default_rng(0).normal(size=40)
    inputs, targets = make_windows(values, t=4)
    assert len(targets) == 36
    for i in range(36):
        for j in range(4):
            assert inputs[i, j] == values[i + j]
        assert targets[i] == values[i + 4]


def test_make_windows_errors():
    with pytest.raises(SizeError):
        make_windows(np.arange(5.0), t=5)
    with pytest.raises(ArgumentError):
        make_windows(np.arange(5.0), t=0)


def test_prepare_pairs_uses_given_scaler():
    inputs, targets, scaler = prepare_pairs(np.arange(10.0, 20.0), t=3)
    assert (scaler.min, scaler.max) == (10.0, 19.0)
    assert inputs.min() == 0.0 and targets.max() == 1.0
    _, shifted, _ = prepare_pairs(np.arange(10.0, 20.0), t=3, scaler=MinMaxScaler(0.0, 10.0))
    assert shifted[0] == pytest.approx(1.3)


def test_default_geometry():
    model = MlpModel.initialize(5, UNIT)
    assert model.widths == (5, 50, 25, 1)
    assert [w.shape for w in model.weights] == [(50, 5), (25, 50), (1, 25)]


def test_zero_network_outputs_zero():
    model = zero_model()
    assert mlp_forward(model, [0.3, 0.1, 0.9, 0.5, 0.2]) == 0.0
    assert mlp_forward(model, [0.3, 0.1, 0.9, 0.5, 0.2], train_mode=True, seed=1) == 0.0


def test_hand_computed_output():
    model = MlpModel(
        widths=(2, 2, 1),
        weights=(np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([[1.0, 1.0]])),
        biases=(np.zeros(2), np.array([0.5])),
        scaler=UNIT,
    )
    # hidden = relu([2, -3]) = [2, 0]
    assert mlp_forward(model, [2.0, 3.0]) == 2.5


def test_eval_mode_is_deterministic():
    model = MlpModel.initialize(5, UNIT, seed=3)
    x = np.random.default_rng(4).random(5)
    assert mlp_forward(model, x) == mlp_forward(model, x)


def test_forward_width_mismatch():
    with pytest.raises(ShapeError):
        mlp_forward(MlpModel.initialize(5, UNIT), [0.1, 0.2])


def test_inverted_dropout_expectation():
    model = MlpModel.initialize(5, UNIT, seed=5)
    # positive weights and inputs keep every ReLU active, so the network is linear in the masks
    model = model.with_parameters([np.abs(w) for w in model.weights], model.biases)
    x = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
    expected = mlp_forward(model, x)
    sampled = np.mean([mlp_forward(model, x, train_mode=True, seed=s) for s in range(10000)])
    assert sampled == pytest.approx(expected, rel=0.02)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    model = MlpModel.initialize(4, UNIT, seed=7, hidden=(6, 5))
    inputs = rng.random((8, 4))
    # targets well away from the outputs keep the sign of every error fixed
    targets = model.predict(inputs) + 1.0
    _, grad_w, grad_b = loss_and_gradients(model, inputs, targets)

    def loss_with(layer, index, delta, is_bias):
        weights = [w.copy() for w in model.weights]
        biases = [b.copy() for b in model.biases]
        (biases if is_bias else weights)[layer][index] += delta
        return loss_and_gradients(model.with_parameters(weights, biases), inputs, targets)[0]

    eps = 1e-6
    for layer in range(len(model.weights)):
        for is_bias, grads in ((False, grad_w), (True, grad_b)):
            shape = grads[layer].shape
            for _ in range(5):
                index = tuple(int(rng.integers(n)) for n in shape)
                numeric = (loss_with(layer, index, eps, is_bias) - loss_with(layer, index, -eps, is_bias)) / (2 * eps)
                analytic = grads[layer][index]
                assert abs(numeric - analytic) <= 1e-4 * max(abs(analytic), abs(numeric), 1e-8)


def test_train_learns_a_constant():
    inputs = np.random.default_rng(8).random((20, 5))
    config = TrainConfig(epochs=200, learning_rate=1e-3, dropout=0.0, seed=1)
    _, history = train(MlpModel.initialize(5, UNIT, seed=1), inputs, np.full(20, 0.5), config)
    assert len(history) == 200
    assert history[-1] < 1e-3


def test_train_is_deterministic_and_improves():
    values = np.sin(np.linspace(0, 6, 60)) + 2
    inputs, targets, scaler = prepare_pairs(values, t=5)
    config = TrainConfig(epochs=30, dropout=0.0, seed=2)
    first, history = train(MlpModel.initialize(5, scaler, seed=2), inputs, targets, config)
    second, _ = train(MlpModel.initialize(5, scaler, seed=2), inputs, targets, config)
    for a, b in zip(first.weights, second.weights):
        assert np.array_equal(a, b)
    smoothed = np.convolve(history[10:], np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smoothed) <= 0.01 * smoothed[0])
    assert history[-1] < history[10]
    assert first.metadata["epochs"] == 30
    assert first.metadata["final_loss"] == history[-1]


def test_train_config_validation():
    with pytest.raises(ArgumentError):
        TrainConfig(batch_size=0)
    with pytest.raises(ArgumentError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ArgumentError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ArgumentError):
        TrainConfig(dropout=1.0)


def test_training_is_scale_consistent():
    values = random_walk(80, seed=9)
    predictions = []
    for a, b in ((1.0, 0.0), (3.0, 25.0)):
        inputs, targets, scaler = prepare_pairs(a * values + b, t=5)
        model, _ = train(MlpModel.initialize(5, scaler, seed=3), inputs, targets, TrainConfig(epochs=5, seed=3))
        predictions.append(scaler.inverse_transform(model.predict(inputs[-10:])))
    np.testing.assert_allclose(3.0 * predictions[0] + 25.0, predictions[1], rtol=1e-6)


def test_grid_single_cell():
    inputs, targets, scaler = prepare_pairs(np.sin(np.linspace(0, 8, 80)) + 2, t=5)
    result = grid_search(inputs, targets, scaler, grid={"epochs": [3], "learning_rate": [1e-3], "optimizer": ["sgd"]})
    assert len(result.cells) == 1
    assert result.best_config.optimizer == "sgd"
    assert result.best_config.epochs == 3


def test_grid_prefers_sane_learning_rate():
    inputs, targets, scaler = prepare_pairs(np.sin(np.linspace(0, 8, 100)) + 2, t=5)
    result = grid_search(inputs, targets, scaler, grid={"epochs": [20], "learning_rate": [1e3, 1e-3]})
    assert result.best_config.learning_rate == 1e-3
    scored = [cell.validation_mae for cell in result.cells if not cell.failed]
    best = next(cell for cell in result.cells if cell.config == result.best_config)
    assert all(best.validation_mae <= mae for mae in scored)
    assert len(result.to_dict()["cells"]) == 2


def test_grid_all_cells_diverged(monkeypatch):
    def explode(model, inputs, targets, config, on_epoch=None):
        raise DivergenceError(0)

    monkeypatch.setattr(dnn, "train", explode)
    inputs, targets, scaler = prepare_pairs(np.arange(1.0, 40.0), t=5)
    with pytest.raises(AggregateError) as info:
        grid_search(inputs, targets, scaler, grid={"epochs": [1], "learning_rate": [1e-2, 1e-3]})
    assert len(info.value.failures) == 2


def test_grid_errors():
    inputs, targets, scaler = prepare_pairs(np.arange(1.0, 40.0), t=5)
    with pytest.raises(ArgumentError):
        grid_search(inputs, targets, scaler, grid={"momentum": [0.9]})
    with pytest.raises(ArgumentError):
        grid_search(inputs, targets, scaler, grid={"epochs": []})


def test_validation_on_learned_ramp():
    series = make_series(np.linspace(100.0, 200.0, 200))
    inputs, targets, scaler = prepare_pairs(series.closes, t=5)
    config = TrainConfig(epochs=200, learning_rate=1e-3, dropout=0.0, seed=4)
    model, _ = train(MlpModel.initialize(5, scaler, seed=4), inputs, targets, config)
    forecast = forecast_validation(model, series, horizon=30)
    np.testing.assert_allclose(forecast["close"], series.closes[-30:], rtol=0.01)
    assert forecast.mode == "one-step"


def test_validation_horizon_one_is_a_single_forward_pass(synthetic_series):
    _, _, scaler = prepare_pairs(synthetic_series.closes)
    model = MlpModel.initialize(5, scaler, seed=5)
    forecast = forecast_validation(model, synthetic_series, horizon=1)
    window = scaler.transform(synthetic_series.closes[-6:-1])
    assert forecast["close"][0] == pytest.approx(scaler.inverse_transform([mlp_forward(model, window)])[0], rel=1e-12)
    assert forecast.dates == (synthetic_series.dates[-1],)
    with pytest.raises(SizeError):
        forecast_validation(model, synthetic_series[:10], horizon=10)


def component_models(series, seed=0):
    models = {}
    for i, name in enumerate(COMPONENTS):
        _, _, scaler = prepare_pairs(series.component(name))
        models[name] = MlpModel.initialize(5, scaler, name, seed=seed + i)
    return models


def test_recursive_zero_networks_are_flat(synthetic_series):
    models = {name: zero_model(scaler=MinMaxScaler(10.0, 20.0), component=name) for name in COMPONENTS}
    forecast = forecast_recursive(models, synthetic_series, horizon=7)
    for name in COMPONENTS:
        assert forecast[name].tolist() == [10.0] * 7
    assert forecast.start_date > synthetic_series.dates[-1]


def test_recursive_horizon_one_matches_validation(synthetic_series):
    models = component_models(synthetic_series)
    recursive = forecast_recursive(models, synthetic_series[:-1], horizon=1)
    for name in COMPONENTS:
        one_step = forecast_validation(models[name], synthetic_series, horizon=1)
        np.testing.assert_allclose(recursive[name], one_step[name], rtol=1e-12)


def test_recursive_feeds_back_its_own_outputs(synthetic_series):
    models = component_models(synthetic_series, seed=10)
    steps = {name: [] for name in COMPONENTS}
    forecast_recursive(models, synthetic_series, horizon=12, on_step=lambda name, k, window, value: steps[name].append((window.copy(), value)))
    for name in COMPONENTS:
        outputs = [value for _, value in steps[name]]
        for k in range(5, 12):
            np.testing.assert_array_equal(steps[name][k][0], outputs[k - 5:k])


def test_recursive_errors(synthetic_series):
    models = component_models(synthetic_series)
    with pytest.raises(ConfigurationError):
        forecast_recursive({k: v for k, v in models.items() if k != "low"}, synthetic_series)
    models["low"] = MlpModel.initialize(3, models["low"].scaler, "low")
    with pytest.raises(ConfigurationError):
        forecast_recursive(models, synthetic_series)


def test_model_file_round_trip(tmp_path):
    model = MlpModel.initialize(5, MinMaxScaler(40.0, 90.0), "high", seed=11)
    path = save_model(model, tmp_path / "dnn_high.bin")
    loaded = load_model(path)
    inputs = np.random.default_rng(12).random((100, 5))
    assert np.array_equal(loaded.predict(inputs), model.predict(inputs))
    assert loaded.component == "high"
    assert loaded.scaler == model.scaler


def test_model_file_size():
    model = MlpModel.initialize(5, UNIT)
    payload = model_to_bytes(model)
    header_length = int.from_bytes(payload[len(MODEL_MAGIC) + 2:len(MODEL_MAGIC) + 6], "little")
    assert len(payload) == len(MODEL_MAGIC) + 6 + header_length + model.parameter_count * 8


def test_corrupt_model_files(tmp_path):
    payload = model_to_bytes(MlpModel.initialize(5, UNIT))
    with pytest.raises(PersistenceError):
        model_from_bytes(payload[:-8])
    with pytest.raises(PersistenceError):
        model_from_bytes(b"NOTAMODEL" + payload)
    bumped = payload[:len(MODEL_MAGIC)] + (2).to_bytes(2, "little") + payload[len(MODEL_MAGIC) + 2:]
    with pytest.raises(PersistenceError):
        model_from_bytes(bumped)
    with pytest.raises(PersistenceError):
        load_model(tmp_path / "missing.bin")


@pytest.mark.slow
@pytest.mark.parametrize("name, max_mape", [("ANF.csv", 0.05), ("EOG.csv", 0.05)])
def test_published_one_step_close_error(name, max_mape):
    series = load_series(published_csv(name))
    history = series[:-30]
    inputs, targets, scaler = prepare_pairs(history.closes)
    result = grid_search(inputs, targets, scaler, seed=0)
    forecast = forecast_validation(result.best_model, series, horizon=30)
    errors = forecast_errors(series.closes[-30:], forecast["close"])
    assert errors.mape <= max_mape
    if name == "ANF.csv":
        assert errors.evs >= 0.5
