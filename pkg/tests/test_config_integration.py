import sys

from typer.testing import CliRunner

from tagcal import cli, config

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

runner = CliRunner()


def test_config_precedence(monkeypatch, tmp_path):
    """CLI flags beat the config file, which beats the defaults."""

    config_path = tmp_path / "config.toml"
    config_path.write_text(
        """
[general]
seed = 5

[simulation]
scenarios = ["walking"]
sessions = 3
duration = 1.5

[noise]
nlos_prob = 0.1
"""
    )
    monkeypatch.setattr(config, "get_config_path", lambda: config_path)

    captured: dict[str, config.RunConfig] = {}
    original_merge = config.merge_configs

    def capture_merge(defaults, cfg, cli_args):
        runtime = original_merge(defaults, cfg, cli_args)
        captured["value"] = runtime
        return runtime

    monkeypatch.setattr(config, "merge_configs", capture_merge)

    out = tmp_path / "data"
    result = runner.invoke(cli.app, ["simulate", "--seed", "7", "-o", str(out)])

    assert result.exit_code == 0, result.output
    runtime = captured["value"]
    assert runtime.seed == 7
    assert runtime.sessions_per_scenario == 3
    assert runtime.noise.nlos_prob == 0.1
    assert runtime.technology.value == "uwb"

    with open(out / "manifest.toml", "rb") as f:
        manifest = tomllib.load(f)
    assert manifest["dataset"]["root_seed"] == 7
    assert manifest["dataset"]["sessions"] == ["walking-1", "walking-2", "walking-3"]


def test_explicit_config_option_overrides_user_file(monkeypatch, tmp_path):
    user_file = tmp_path / "user.toml"
    user_file.write_text('[general]\ntechnology = "wifi"\n')
    explicit = tmp_path / "explicit.toml"
    explicit.write_text("[simulation]\nsessions = 2\nduration = 1.0\nscenarios = \"trolley\"\n")
    monkeypatch.setattr(config, "get_config_path", lambda: user_file)

    out = tmp_path / "data"
    result = runner.invoke(cli.app, ["simulate", "--config", str(explicit), "-o", str(out)])

    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in out.glob("*.csv")) == ["trolley-1.csv", "trolley-2.csv"]


def test_invalid_config_file_value_exits_with_usage_error(monkeypatch, tmp_path):
    config_path = tmp_path / "config.toml"
    config_path.write_text("[evaluation]\nworkers = 0\n")
    monkeypatch.setattr(config, "get_config_path", lambda: config_path)

    result = runner.invoke(cli.app, ["simulate", "-o", str(tmp_path / "data")])

    assert result.exit_code == 2
    assert "workers" in result.output


def test_config_init_creates_and_protects_file(tmp_path):
    target = tmp_path / "cfg" / "config.toml"

    first = runner.invoke(cli.app, ["config", "init", "--path", str(target)])
    second = runner.invoke(cli.app, ["config", "init", "--path", str(target)])
    forced = runner.invoke(cli.app, ["config", "init", "--path", str(target), "--force"])

    assert first.exit_code == 0
    assert second.exit_code == 1
    assert "--force" in second.output
    assert forced.exit_code == 0
    with open(target, "rb") as f:
        parsed = tomllib.load(f)
    assert parsed["general"]["technology"] == "uwb"
    assert parsed["training"]["hidden_nodes"] == 50
    assert parsed["evaluation"]["smoothing_window"] == 5


def test_config_show_prints_merged_values(tmp_path):
    config_path = tmp_path / "config.toml"
    config_path.write_text("[training]\nepochs = 42\n")

    result = runner.invoke(cli.app, ["config", "show", "--config", str(config_path)])

    assert result.exit_code == 0
    assert "max_epochs = 42" in result.output
    assert "hidden_nodes = 50" in result.output


def test_config_show_rejects_invalid_file(tmp_path):
    config_path = tmp_path / "config.toml"
    config_path.write_text('[general]\ntechnology = "wifi"\n')

    result = runner.invoke(cli.app, ["config", "show", "--config", str(config_path)])

    assert result.exit_code == 2
