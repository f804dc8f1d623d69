from typer.testing import CliRunner


def test_cli_help_lists_commands():
    """Ensure the Typer CLI can be invoked without errors."""

    import tagcal.cli as cli

    runner = CliRunner()
    result = runner.invoke(cli.app, ["--help"])

    assert result.exit_code == 0
    for command in ("simulate", "train", "evaluate", "report", "config"):
        assert command in result.stdout


def test_module_entrypoint_runs_app(monkeypatch):
    import tagcal.__main__ as entry

    calls = []
    monkeypatch.setattr(entry._cli, "app", lambda: calls.append("ran"))

    entry._main()

    assert calls == ["ran"]
