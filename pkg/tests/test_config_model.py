import pytest

from tagcal.config import (
    DEFAULTS,
    ConfigError,
    RunConfig,
    dump_toml,
    manifest_sections,
)
from tagcal.core import Scenario, Technology


def test_config_precedence_cli_over_file_over_defaults():
    file_cfg = {"technology": "ble", "seed": 5, "workers": 2}
    cli_cfg = {"seed": 9, "workers": None}

    runtime = RunConfig.from_sources(DEFAULTS, file_cfg, cli_cfg)

    assert runtime.technology is Technology.BLE
    assert runtime.seed == 9
    # None on the command line means "not given"
    assert runtime.workers == 2
    assert runtime.sessions_per_scenario == 5


def test_seed_flows_into_noise_and_training():
    runtime = RunConfig.from_sources(DEFAULTS, {}, {"seed": 42})

    assert runtime.noise.rng_seed == 42
    assert runtime.train.seed == 42


def test_string_values_are_coerced():
    runtime = RunConfig.from_sources(
        DEFAULTS,
        {
            "scenarios": "trolley, walking",
            "per_scenario": "yes",
            "max_epochs": "12",
            "kalman_q": "0.5",
            "aoa_filter_mode": "Pooled",
            "technology": "UWB",
        },
        {},
    )

    assert runtime.scenarios == (Scenario.TROLLEY, Scenario.WALKING)
    assert runtime.per_scenario is True
    assert runtime.train.max_epochs == 12
    assert runtime.tracker.q == 0.5
    assert runtime.aoa_filter_mode == "pooled"
    assert runtime.technology is Technology.UWB


@pytest.mark.parametrize(
    "override",
    [
        {"sessions_per_scenario": 1},
        {"technology": "wifi"},
        {"scenarios": ["walking", "running"]},
        {"scenarios": []},
        {"workers": 0},
        {"smoothing_window": 0},
        {"session_duration": -1.0},
        {"seed": -3},
        {"max_epochs": "many"},
        {"nlos_prob": 1.5},
        {"half_angle": 95.0},
        {"ble_truth": "gps"},
        {"reacquire_after": 0},
        {"patience": 0},
    ],
)
def test_invalid_values_raise_config_error(override):
    with pytest.raises(ConfigError):
        RunConfig.from_sources(DEFAULTS, {}, override)


def test_layout_and_evaluation_follow_config():
    runtime = RunConfig.from_sources(
        DEFAULTS,
        {"technology": "ble", "area_width": 6.0, "anchor_height": 2.5, "smoothing_window": 3},
        {},
    )

    layout = runtime.layout()
    assert layout.technology is Technology.BLE
    assert [a.position.x for a in layout.anchors] == [0.0, 6.0, 6.0, 0.0]
    assert {a.position.z for a in layout.anchors} == {2.5}
    assert runtime.evaluation().smoothing_window == 3


def test_flat_round_trips_through_from_sources():
    runtime = RunConfig.from_sources(DEFAULTS, {"technology": "ble", "gate": 2.5}, {})

    assert RunConfig.from_sources(DEFAULTS, runtime.flat(), {}) == runtime


def test_manifest_replays_the_same_config(tmp_path):
    runtime = RunConfig.from_sources(
        DEFAULTS, {"seed": 17, "sessions_per_scenario": 3, "session_duration": 4.5}, {}
    )
    path = tmp_path / "manifest.toml"
    path.write_text(dump_toml(manifest_sections(runtime, ["walking-1", "walking-2"])))

    replayed = RunConfig.from_manifest(path)

    assert replayed.seed == 17
    assert replayed.session_duration == 4.5
    assert replayed.noise == runtime.noise
    assert replayed.train == runtime.train
    assert replayed.tracker == runtime.tracker


def test_manifest_omits_output_location(tmp_path):
    runtime = RunConfig.from_sources(DEFAULTS, {}, {})

    sections = manifest_sections(runtime, ["walking-1"])

    assert sections["dataset"] == {
        "technology": "uwb",
        "root_seed": 0,
        "sessions": ["walking-1"],
    }
    assert "output_dir" not in sections["general"]
    assert "verbose" not in sections["general"]


def test_unreadable_manifest_raises(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_manifest(tmp_path / "missing.toml")


def test_tracker_and_plateau_settings_load():
    runtime = RunConfig.from_sources(
        DEFAULTS,
        {
            "reacquire_after": "5",
            "lag_compensation": "no",
            "min_improvement": 0.0,
            "patience": 2,
        },
        {},
    )

    assert runtime.tracker.reacquire_after == 5
    assert runtime.tracker.lag_compensation is False
    assert runtime.train.min_improvement == 0.0
    assert runtime.train.patience == 2
    assert DEFAULTS["reacquire_after"] == 3
    assert DEFAULTS["lag_compensation"] is True
