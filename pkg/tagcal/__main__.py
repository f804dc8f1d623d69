"""Module entrypoint for `python -m tagcal`."""

from __future__ import annotations

from tagcal import cli as _cli


def _main() -> None:
    _cli.app()


if __name__ == "__main__":
    _main()
