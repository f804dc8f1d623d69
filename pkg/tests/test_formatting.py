import pytest

from tagcal.formatting import (
    fmt_coordinate,
    fmt_measurement,
    fmt_metres,
    fmt_percent,
    sanitize_filename,
    write_text_file,
)


@pytest.mark.parametrize(
    "name, expected",
    [
        ("walking-1", "walking-1"),
        ("a/b\\c:d", "abcd"),
        ("  spaced name  ", "spaced_name"),
        (" model v2. ", "model_v2"),
        ("", "session"),
        ("...", "session"),
        ("CON", "CON_file"),
    ],
)
def test_sanitize_filename(name, expected):
    assert sanitize_filename(name) == expected


def test_number_formats_are_stable():
    assert fmt_measurement(1 / 3) == "0.333333333"
    assert fmt_measurement(1024.0) == "1024"
    assert fmt_coordinate(2.123456789) == "2.12346"
    assert fmt_coordinate(-0.0) == "0"
    assert fmt_metres(0.5) == "0.5000"
    assert fmt_percent(0.533333) == "53.3%"
    assert fmt_percent(None) == "n/a"


def test_non_finite_values_are_refused():
    with pytest.raises(ValueError):
        fmt_measurement(float("nan"))


def test_write_text_file_stays_inside_base(tmp_path):
    target = tmp_path / "sub" / "file.csv"

    write_text_file(str(target), str(tmp_path), "a,b\n")

    assert target.read_text() == "a,b\n"
    with pytest.raises(ValueError):
        write_text_file(str(tmp_path.parent / "escape.txt"), str(tmp_path), "x")
