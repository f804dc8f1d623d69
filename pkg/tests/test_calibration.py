from pathlib import Path

import numpy as np
import pytest

from tagcal.calibration import (
    CalibModel,
    FeatureVector,
    ModelFormatError,
    TrainConfig,
    Trainer,
    TrainingError,
    assemble_features,
    calibrate_session,
    dumps_model,
    forward,
    jacobian,
    load_model,
    loads_model,
    loss_gradient,
    n_weights,
    normal_equations,
    outputs,
    regularised_loss,
    save_model,
    train,
    train_records,
)
from tagcal.core import BleRecord, Point2, Scenario, Session, Technology, UwbRecord


def _uwb(t: float, truth: Point2, dist=(1.0, 2.0, 3.0, 4.0)) -> UwbRecord:
    return UwbRecord(
        timestamp=t,
        cir=(5.0, 6.0, 7.0, 8.0),
        psa=(1024, 1000, 990, 980),
        dist=tuple(dist),
        truth=truth,
    )


def _ble(t: float) -> BleRecord:
    return BleRecord(
        timestamp=t,
        rssi=tuple(-50.0 - i for i in range(8)),
        aoa=tuple(float(10 * i) for i in range(8)),
        truth=Point2(1.0, 1.0),
    )


def test_feature_order_ble_and_uwb():
    ble = assemble_features(_ble(0.0))
    uwb = assemble_features(_uwb(0.0, Point2(0.0, 0.0)))

    assert ble.technology is Technology.BLE and len(ble) == 16
    assert list(ble.values[:2]) == [-50.0, -51.0]
    assert list(ble.values[8:10]) == [0.0, 10.0]
    assert uwb.technology is Technology.UWB and len(uwb) == 12
    assert list(uwb.values) == [5, 6, 7, 8, 1024, 1000, 990, 980, 1, 2, 3, 4]


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector(np.zeros(11), Technology.UWB)
    with pytest.raises(ValueError):
        FeatureVector(np.full(16, np.nan), Technology.BLE)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    n_inputs, n_hidden = 3, 5
    params = rng.normal(size=n_weights(n_inputs, n_hidden))
    inputs = rng.uniform(-1, 1, size=(6, n_inputs))
    analytic = jacobian(params, inputs, n_hidden)

    h = 1e-6
    numeric = np.empty_like(analytic)
    for k in range(params.size):
        step = np.zeros_like(params)
        step[k] = h
        plus = outputs(params + step, inputs, n_hidden).reshape(-1)
        minus = outputs(params - step, inputs, n_hidden).reshape(-1)
        numeric[:, k] = (plus - minus) / (2 * h)

    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-5


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    n_inputs, n_hidden = 2, 4
    params = rng.normal(size=n_weights(n_inputs, n_hidden))
    inputs = rng.uniform(-1, 1, size=(10, n_inputs))
    targets = rng.uniform(-1, 1, size=(10, 2))
    alpha, beta = 0.1, 2.0

    analytic = loss_gradient(params, inputs, targets, alpha, beta, n_hidden)
    h = 1e-6
    numeric = np.array(
        [
            (
                regularised_loss(params + h * e, inputs, targets, alpha, beta, n_hidden)
                - regularised_loss(params - h * e, inputs, targets, alpha, beta, n_hidden)
            )
            / (2 * h)
            for e in np.eye(params.size)
        ]
    )

    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-4


def _identity_model(b2=(0.25, -0.75)) -> CalibModel:
    hidden, inputs = 4, 12
    return CalibModel(
        technology=Technology.UWB,
        w1=np.zeros((hidden, inputs)),
        b1=np.zeros(hidden),
        w2=np.zeros((2, hidden)),
        b2=np.array(b2),
        input_min=np.zeros(inputs),
        input_max=np.ones(inputs),
        output_min=np.array([-1.0, -1.0]),
        output_max=np.array([1.0, 1.0]),
    )


def test_zero_weights_forward_returns_output_bias():
    features = assemble_features(_uwb(0.0, Point2(0.0, 0.0)))

    assert forward(_identity_model(), features) == Point2(0.25, -0.75)


def test_forward_rejects_wrong_feature_size():
    with pytest.raises(ValueError):
        forward(_identity_model(), assemble_features(_ble(0.0)))


def test_model_rejects_degenerate_ranges():
    with pytest.raises(ValueError):
        CalibModel(
            technology=None,
            w1=np.zeros((2, 1)),
            b1=np.zeros(2),
            w2=np.zeros((2, 2)),
            b2=np.zeros(2),
            input_min=np.ones(1),
            input_max=np.ones(1),
            output_min=np.zeros(2),
            output_max=np.ones(2),
        )


def test_noiseless_linear_map_is_learnt():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1.0, 1.0, size=(200, 1))
    y = np.hstack([2.0 * x, -x])

    result = Trainer(
        TrainConfig(hidden_nodes=10, max_epochs=300, min_improvement=0.0)
    ).fit(x, y)

    assert result.rmse(x, y) < 1e-3
    for entry in result.history:
        assert entry.loss_after < entry.loss_before
    assert result.stop_reason in {"gradient", "mu_max", "max_epochs"}


def test_pure_noise_keeps_effective_parameters_low():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1.0, 1.0, size=(400, 2))
    y = rng.normal(size=(400, 2))
    n_w = n_weights(2, 10)

    result = Trainer(TrainConfig(hidden_nodes=10, max_epochs=100)).fit(x, y)

    assert 0.0 <= result.model.gamma < 0.5 * n_w


def test_training_is_deterministic_for_a_seed():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=(40, 3))
    y = rng.uniform(size=(40, 2))
    cfg = TrainConfig(hidden_nodes=6, max_epochs=20, seed=11)

    first = Trainer(cfg).fit(x, y).model
    second = Trainer(cfg).fit(x, y).model

    assert np.array_equal(first.params, second.params)


def test_too_few_samples_raise():
    x = np.zeros((3, 12))
    y = np.zeros((3, 2))
    with pytest.raises(TrainingError):
        Trainer(TrainConfig(hidden_nodes=3)).fit(x, y)
    with pytest.raises(TrainingError):
        train_records([])


def test_train_rejects_mixed_technologies():
    data = [
        (assemble_features(_ble(0.0)), Point2(0.0, 0.0)),
        (assemble_features(_uwb(0.0, Point2(0.0, 0.0))), Point2(0.0, 0.0)),
    ]
    with pytest.raises(TrainingError):
        train(data)


def _uwb_session(session_id: str, n: int = 30, seed: int = 0) -> Session:
    rng = np.random.default_rng(seed)
    records = []
    for k in range(n):
        x, y = rng.uniform(0.5, 4.5, size=2)
        dist = (x + y, 5 - x + y, 10 - x - y, x + 5 - y)
        records.append(_uwb(0.1 * k, Point2(float(x), float(y)), dist))
    return Session(session_id, Scenario.WALKING, tuple(records))


def test_train_records_then_calibrate_session():
    session = _uwb_session("walking-1")
    cfg = TrainConfig(hidden_nodes=5, max_epochs=30)

    result = train_records(session.records, cfg)
    smoothed = calibrate_session(result.model, session, window=3)

    assert result.model.technology is Technology.UWB
    assert len(smoothed) == len(session)
    assert len(result.history) <= 30


def test_calibrate_session_rejects_other_technology():
    ble_session = Session("walking-1", Scenario.WALKING, (_ble(0.0),))
    with pytest.raises(ValueError):
        calibrate_session(_identity_model(), ble_session)


def test_model_text_round_trip_predicts_identically(tmp_path: Path):
    session = _uwb_session("trolley-1", seed=7)
    model = train_records(session.records, TrainConfig(hidden_nodes=4, max_epochs=10)).model
    path = tmp_path / "uwb.model"

    save_model(model, path)
    restored = load_model(path)

    features = np.vstack([assemble_features(r).values for r in session.records])
    assert np.array_equal(restored.predict(features), model.predict(features))
    assert restored.technology is Technology.UWB
    assert dumps_model(restored) == dumps_model(model)


def test_model_parse_errors_cite_lines():
    text = dumps_model(_identity_model())

    with pytest.raises(ModelFormatError, match=":1:"):
        loads_model("not-a-model 1\n" + text, source="bad.model")
    with pytest.raises(ModelFormatError, match="unexpected end of file"):
        loads_model("\n".join(text.splitlines()[:14]), source="short.model")
    with pytest.raises(ModelFormatError):
        load_model(Path("/nonexistent/dir/x.model"))


def test_normal_equations_match_dense_jacobian():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1.0, 1.0, size=(30, 3))
    y = rng.uniform(-1.0, 1.0, size=(30, 2))
    params = rng.normal(scale=0.5, size=n_weights(3, 4))

    jtj, jte, sse = normal_equations(params, x, y, n_hidden=4)

    J = jacobian(params, x, n_hidden=4)
    e = (outputs(params, x, n_hidden=4) - y).ravel()
    assert np.allclose(jtj, J.T @ J)
    assert np.allclose(jte, J.T @ e)
    assert sse == pytest.approx(float(e @ e))


def test_plateau_stops_training_early():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1.0, 1.0, size=(400, 2))
    y = rng.normal(size=(400, 2))

    eager = Trainer(
        TrainConfig(hidden_nodes=5, max_epochs=50, min_improvement=1.0, patience=1)
    ).fit(x, y)
    default = Trainer(TrainConfig(hidden_nodes=10, max_epochs=200)).fit(x, y)

    assert eager.stop_reason == "plateau"
    assert len(eager.history) == 1
    assert default.stop_reason != "max_epochs"
    assert len(default.history) < 200


@pytest.mark.parametrize("kwargs", [{"patience": 0}, {"min_improvement": -0.1}])
def test_train_config_rejects_bad_plateau_settings(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)
