from __future__ import annotations

import math
import os
import re

MEASUREMENT_DIGITS = 9
COORDINATE_DIGITS = 6


def sanitize_filename(name: str, max_len: int = 100) -> str:
    """Make a session or model name safe to use as a file stem."""

    if not name:
        return "session"

    name = re.sub(r"[\x00-\x1f\x7f]", "", name)
    name = re.sub(r'[\\/*?:"<>|]', "", name)
    name = name.strip().strip(" .")
    name = re.sub(r"\s+", "_", name)

    if not name:
        name = "session"

    reserved = {
        "CON",
        "PRN",
        "AUX",
        "NUL",
        *(f"COM{i}" for i in range(1, 10)),
        *(f"LPT{i}" for i in range(1, 10)),
    }
    if name.upper() in reserved:
        name = name + "_file"

    return name[:max_len].rstrip("_") or "session"


def _significant(value: float, digits: int) -> str:
    if not math.isfinite(value):
        raise ValueError(f"Cannot format non-finite value {value!r}")
    text = format(float(value), f".{digits}g")
    # keep "-0" out of files so reruns compare byte-identical
    return "0" if text in ("-0", "-0.0") else text


def fmt_measurement(value: float) -> str:
    return _significant(value, MEASUREMENT_DIGITS)


def fmt_coordinate(value: float) -> str:
    return _significant(value, COORDINATE_DIGITS)


def fmt_metres(value: float, places: int = 4) -> str:
    return f"{value:.{places}f}"


def fmt_percent(fraction: float | None) -> str:
    if fraction is None:
        return "n/a"
    return f"{100.0 * fraction:.1f}%"


def write_text_file(path: str, base_dir: str, content: str) -> None:
    """Write ``content`` to ``path``, which must resolve inside ``base_dir``.

    Raises ValueError on any attempt to escape the output directory.
    """

    base_dir = os.path.abspath(base_dir)
    target = os.path.abspath(path)
    if not (target == base_dir or target.startswith(base_dir + os.sep)):
        raise ValueError("Attempt to write outside of output directory")
    os.makedirs(os.path.dirname(target), exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as f:
        f.write(content)
