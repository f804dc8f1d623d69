import math

import numpy as np
import pytest

from tagcal.core import (
    AnchorLayout,
    Area,
    BleRecord,
    Point2,
    Point3,
    Scenario,
    Technology,
    euclidean_errors,
    wrap_degrees,
)
from tagcal.simulator import NoiseProfile, gen_dataset
from tagcal.tracking import (
    BleLocaliser,
    KalmanState,
    TrackerConfig,
    confine,
    gate_and_rank,
    mahalanobis,
    measurement_matrix,
    predict,
    select_candidate,
    update,
)
from tagcal.triangulation import CandidateRegion

AREA = Area.of_size(5.0, 5.0)


def _candidate(x: float, y: float, overlap: int = 1) -> CandidateRegion:
    centroid = Point3(x, y, 1.0)
    pairs = frozenset(("A1", f"A{i + 2}") for i in range(overlap))
    return CandidateRegion(
        members=(centroid,), overlap_count=overlap, centroid=centroid, pairs=pairs
    )


def test_predict_moves_by_velocity_and_grows_covariance():
    state = KalmanState(x=np.array([1.0, 2.0, 0.5, -1.0]), P=np.eye(4))

    predicted = predict(state, 0.2)

    assert predicted.position.x == pytest.approx(1.1)
    assert predicted.position.y == pytest.approx(1.8)
    assert np.trace(predicted.P) > np.trace(state.P)
    assert np.allclose(predicted.P, predicted.P.T)


def test_predict_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        predict(KalmanState.at(Point2(0.0, 0.0)), 0.0)


def test_update_pulls_toward_measurement():
    state = KalmanState.at(Point2(0.0, 0.0))

    updated = update(state, Point2(1.0, 0.0))

    assert 0.0 < updated.position.x < 1.0
    assert np.all(np.linalg.eigvalsh(updated.P) > 0)


def test_static_measurements_converge():
    state = KalmanState.at(Point2(4.0, 6.0), q=25.0)
    for _ in range(50):
        state = update(predict(state, 0.1), Point2(5.0, 5.0))

    assert state.position.x == pytest.approx(5.0, abs=1e-3)
    assert state.position.y == pytest.approx(5.0, abs=1e-3)
    assert np.linalg.norm(state.velocity) < 1e-3


def test_gate_rejects_far_candidate():
    state = KalmanState.at(Point2(2.0, 2.0))

    assert mahalanobis(state, Point2(2.0, 2.0)) == 0.0
    assert select_candidate([_candidate(4.5, 4.5)], state, gate=3.0) is None
    assert gate_and_rank([_candidate(4.5, 4.5)], state, gate=3.0) == state.position


def test_rank_prefers_overlap_then_distance():
    state = KalmanState.at(Point2(2.0, 2.0), r=1.0)
    near = _candidate(2.1, 2.0, overlap=1)
    crowded = _candidate(2.8, 2.0, overlap=3)
    nearer = _candidate(2.05, 2.0, overlap=1)

    assert select_candidate([near, crowded], state) is crowded
    assert select_candidate([near, nearer], state) is nearer
    assert gate_and_rank([near, crowded], state) == Point2(2.8, 2.0)


def test_tracker_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(r=0.0)
    with pytest.raises(ValueError):
        TrackerConfig(half_angle=90.0)


def _ble_record(layout: AnchorLayout, truth: Point2, t: float) -> BleRecord:
    aoa = []
    for anchor in layout.anchors:
        azimuth = math.degrees(
            math.atan2(truth.y - anchor.position.y, truth.x - anchor.position.x)
        )
        local = wrap_degrees(round(azimuth - anchor.orientation))
        aoa.extend((local, local))
    return BleRecord(timestamp=t, rssi=(-50.0,) * 8, aoa=tuple(aoa), truth=truth)


@pytest.mark.parametrize("truth", [Point2(2.0, 3.1), Point2(3.2, 1.9)])
def test_localiser_tracks_static_target(truth: Point2):
    layout = AnchorLayout.corners(Technology.BLE, AREA, height=2.0)
    localiser = BleLocaliser(layout, AREA, target_height=1.0)

    estimates = [localiser.step(_ble_record(layout, truth, 0.1 * k)) for k in range(20)]

    final = estimates[-1]
    assert math.hypot(final.x - truth.x, final.y - truth.y) <= 0.3


def test_localiser_returns_center_without_candidates():
    layout = AnchorLayout.corners(Technology.BLE, AREA, height=2.0)
    localiser = BleLocaliser(layout, AREA)
    # every locator looks straight back out of the area
    record = BleRecord(0.0, rssi=(-60.0,) * 8, aoa=(-180.0,) * 8, truth=Point2(1.0, 1.0))

    assert localiser.step(record) == AREA.center
    assert localiser.state is None


@pytest.mark.parametrize("k", [0.5, 2.0, 4.0])
def test_gate_radius_scales_with_covariance(k: float):
    x = np.array([2.0, 2.0, 0.3, -0.2])
    P = np.diag([0.1, 0.2, 1.0, 1.0])
    state = KalmanState(x=x, P=P, r=0.05)
    scaled = KalmanState(x=x, P=k**2 * P, r=0.05 * k**2)
    offset = np.array([0.4, -0.3])

    near = Point2(2.0 + offset[0], 2.0 + offset[1])
    far = Point2(2.0 + k * offset[0], 2.0 + k * offset[1])

    assert mahalanobis(scaled, far) == pytest.approx(mahalanobis(state, near))
    gate = mahalanobis(state, near) * 1.01
    assert select_candidate([_candidate(far.x, far.y)], scaled, gate=gate) is not None
    beyond = Point2(2.0 + 1.05 * k * offset[0], 2.0 + 1.05 * k * offset[1])
    assert select_candidate([_candidate(beyond.x, beyond.y)], scaled, gate=gate) is None


def test_covariance_stays_positive_definite_over_long_prediction():
    state = KalmanState.at(Point2(1.0, 1.0))
    for _ in range(1000):
        state = predict(state, 0.1)

    assert np.array_equal(state.P, state.P.T)
    assert np.all(np.linalg.eigvalsh(state.P) > 0)


def test_lagged_measurement_looks_back_along_velocity():
    state = KalmanState(x=np.array([2.0, 3.0, 1.0, -0.5]), P=np.eye(4))

    assert np.array_equal(measurement_matrix(), np.hstack([np.eye(2), np.zeros((2, 2))]))
    expected = state.expected(0.2)
    assert (expected.x, expected.y) == pytest.approx((1.8, 3.1))
    unchanged = update(state, state.expected(0.2), lag=0.2)
    assert np.allclose(unchanged.x, state.x)


def test_confine_clamps_position_and_outward_velocity():
    outside = KalmanState(x=np.array([6.0, -1.0, 1.0, -1.0]), P=np.eye(4))
    inside = KalmanState.at(Point2(2.0, 2.0))

    confined = confine(outside, AREA)

    assert confined.position == Point2(AREA.x_max, AREA.y_min)
    assert np.array_equal(confined.velocity, [0.0, 0.0])
    assert confine(inside, AREA) is inside


def test_tracker_config_rejects_zero_reacquire():
    with pytest.raises(ValueError):
        TrackerConfig(reacquire_after=0)


def test_localiser_reacquires_after_jump():
    layout = AnchorLayout.corners(Technology.BLE, AREA, height=2.0)
    localiser = BleLocaliser(layout, AREA, target_height=1.0)
    start, moved = Point2(1.5, 3.5), Point2(3.5, 1.5)

    for k in range(20):
        localiser.step(_ble_record(layout, start, 0.1 * k))
    estimates = [localiser.step(_ble_record(layout, moved, 2.0 + 0.1 * k)) for k in range(20)]

    final = estimates[-1]
    assert math.hypot(final.x - moved.x, final.y - moved.y) <= 0.3
    assert localiser.misses == 0


@pytest.mark.slow
def test_noiseless_baseline_stays_on_track():
    layout = AnchorLayout.corners(Technology.BLE, AREA, height=2.0)
    sessions = gen_dataset(
        Technology.BLE,
        [Scenario.WALKING, Scenario.TROLLEY],
        2,
        NoiseProfile.noiseless(rng_seed=2),
        layout,
        AREA,
        session_duration=30.0,
    )

    errs = np.concatenate(
        [euclidean_errors(session.baselines(), session.truths()) for session in sessions]
    )
    assert float(errs.mean()) <= 0.3
