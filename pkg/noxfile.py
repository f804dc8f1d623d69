"""Project automation sessions."""

from __future__ import annotations

import nox

PY_VERSIONS = ["3.10", "3.11", "3.12", "3.13"]
SOURCES = ["tagcal", "tests", "scripts", "noxfile.py"]

nox.options.sessions = ["lint", "typecheck", "tests"]
nox.options.force_venv_backend = "venv"


@nox.session(python="3.11")
def lint(session: nox.Session) -> None:
    """ruff, black and isort in check mode."""

    session.install("ruff", "black", "isort")
    session.run("ruff", "check", *SOURCES)
    session.run("black", "--check", *SOURCES)
    session.run("isort", "--check-only", *SOURCES)


@nox.session(python="3.11")
def typecheck(session: nox.Session) -> None:
    session.install(".[dev]")
    session.run("mypy", "tagcal")


@nox.session(python=PY_VERSIONS)
def tests(session: nox.Session) -> None:
    """Fast suite on every supported interpreter; extra args go to pytest."""

    session.install(".[dev]")
    session.run("python", "-m", "tagcal", "--help", silent=True)
    session.run("pytest", "-m", "not slow", *session.posargs)


@nox.session(python="3.12")
def slow(session: nox.Session) -> None:
    """Tests marked slow (BLE simulation through the CLI)."""

    session.install(".[dev]")
    session.run("pytest", "-m", "slow", *session.posargs)


@nox.session(python="3.12")
def acceptance(session: nox.Session) -> None:
    """Full-scale simulate -> evaluate runs for both technologies."""

    session.install(".[dev]")
    session.run("python", "scripts/smoke_pipeline.py", *session.posargs)
