# Tests for the tagcal configuration file handling
import sys
from pathlib import Path
from unittest.mock import patch

from tagcal import config

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def test_get_config_path():
    """Test that get_config_path constructs the path correctly."""
    with patch("platformdirs.user_config_path") as mock_user_config_path:
        mock_user_config_path.return_value = Path("/fake/config/dir/tagcal")
        expected_path = Path("/fake/config/dir/tagcal") / "config.toml"
        assert config.get_config_path() == expected_path


def test_load_config_no_file():
    """Test that loading a non-existent file returns an empty dict."""
    with patch("pathlib.Path.exists", return_value=False):
        assert config.load_config() == {}


def test_load_config_with_sections(tmp_path):
    """Sections are flattened into config keys, aliases included."""
    config_path = tmp_path / "config.toml"
    config_path.write_text(
        """
    [general]
    tech = "ble"
    seed = 7

    [simulation]
    scenarios = ["trolley"]
    sessions = 3
    kalman_q = 0.5

    [noise]
    nlos_prob = 0.2

    [training]
    epochs = 40

    [evaluation]
    window = 3
    workers = 2
    """
    )

    with patch("tagcal.config.get_config_path", return_value=config_path):
        loaded = config.load_config()

    assert loaded == {
        "technology": "ble",
        "seed": 7,
        "scenarios": ["trolley"],
        "sessions_per_scenario": 3,
        "kalman_q": 0.5,
        "nlos_prob": 0.2,
        "max_epochs": 40,
        "smoothing_window": 3,
        "workers": 2,
    }


def test_load_config_flat_keys_preserved(tmp_path):
    config_path = tmp_path / "config.toml"
    config_path.write_text("workers = 4\nper_scenario = true\n")

    loaded = config.load_config(config_path)

    assert loaded["workers"] == 4
    assert loaded["per_scenario"] is True


def test_unknown_section_key_is_dropped_with_warning(tmp_path, caplog):
    config_path = tmp_path / "config.toml"
    config_path.write_text("[noise]\nbogus = 1\nrssi_sigma = 1.5\n")

    with caplog.at_level("WARNING"):
        loaded = config.load_config(config_path)

    assert loaded == {"rssi_sigma": 1.5}
    assert "bogus" in caplog.text


def test_invalid_toml_returns_empty_dict(tmp_path, caplog):
    config_path = tmp_path / "config.toml"
    config_path.write_text("[general\nseed = ")

    with caplog.at_level("WARNING"):
        assert config.load_config(config_path) == {}
    assert "Failed to parse config" in caplog.text


def test_dump_toml_round_trips_through_tomllib():
    sections = config.config_sections(config.DEFAULTS)

    parsed = tomllib.loads(config.dump_toml(sections))

    assert parsed["general"]["technology"] == "uwb"
    assert parsed["simulation"]["scenarios"] == ["walking", "trolley"]
    assert parsed["training"]["hidden_nodes"] == 50
    assert parsed["noise"]["nlos_prob"] == 0.35
    # None values are omitted
    assert "session_duration" not in parsed["simulation"]


def test_dump_toml_escapes_strings():
    text = config.dump_toml({"general": {"output_dir": 'C:\\data\\"x"'}})

    assert tomllib.loads(text)["general"]["output_dir"] == 'C:\\data\\"x"'


def test_every_default_has_a_section():
    sectioned = {key for keys in config.SECTIONS.values() for key in keys}
    assert sectioned == set(config.DEFAULTS)
