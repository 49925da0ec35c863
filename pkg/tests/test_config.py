import logging

import pytest

from gravicat.config import KEYS, help_text, parse_config, parse_override, read_config_text
from gravicat.errors import ConfigError


def test_empty_config_gives_documented_defaults():
    rc = parse_config("soliton")
    for key in KEYS:
        assert rc.get(key.section, key.name) == key.default, key.path
        assert rc.sources[(key.section, key.name)] == "default"


def test_help_lists_every_key():
    text = help_text()
    for key in KEYS:
        assert key.path in text


def test_grams_in_si_mode_become_kilograms():
    rc = parse_config("planck", "[physics]\nunit_system = SI\nM = 3e-5 g\n")
    assert rc["physics.M"] == pytest.approx(3e-8, rel=1e-15)
    assert f"M = {rc['physics.M']!r}" in rc.to_ini()


def test_planck_has_si_defaults():
    rc = parse_config("planck")
    assert rc["physics.unit_system"] == "SI"
    assert rc["physics.M"] == pytest.approx(50e-9)
    assert rc["cat.ell"] == pytest.approx(1e-3)


def test_flag_beats_file_and_conflict_is_logged(caplog):
    text = "[time]\ndt = 0.01\n"
    with caplog.at_level(logging.WARNING, logger="gravicat.config"):
        rc = parse_config("evolve", text, [(("time", "dt"), "0.002", "--dt")], "run.ini")
    assert rc["time.dt"] == 0.002
    assert rc.sources[("time", "dt")] == "--dt"
    assert any("overrides" in r.getMessage() and "run.ini:2" in r.getMessage()
               for r in caplog.records)


def test_identical_flag_and_file_are_not_a_conflict(caplog):
    with caplog.at_level(logging.WARNING, logger="gravicat.config"):
        parse_config("evolve", "[time]\ndt = 0.01\n", [(("time", "dt"), "0.01", "--dt")])
    assert not caplog.records


@pytest.mark.parametrize("text, fragment", [
    ("[grid]\nn_points = 64\nspacing = 0.1\n", "cfg.ini:3: unknown key 'spacing'"),
    ("[nonsense]\nx = 1\n", "cfg.ini:2: unknown key 'x' in section [nonsense]"),
    ("[physics]\nM = 2 g\n", "has unit 'g' but the unit system is dimensionless"),
    ("[physics]\nunit_system = SI\nM = 2 mm\n", "unit 'mm' does not match"),
    ("[physics]\nM = -1\n", "cfg.ini:2: physics.M must be positive"),
    ("[physics]\nalpha = 0\n", "physics.alpha must be positive"),
    ("[grid]\nn_points = 100\n", "power of two"),
    ("[grid]\ndim = 2\n", "grid.dim must be one of"),
    ("[time]\ndt = fast\n", "expects a number"),
    ("[run]\ngnuplot = maybe\n", "expects true/false"),
])
def test_bad_entries_name_the_line(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        parse_config("soliton", text, origin="cfg.ini")


def test_unknown_subcommand():
    with pytest.raises(ConfigError):
        parse_config("teleport")


def test_set_override_syntax():
    assert parse_override("time.dt=0.5") == (("time", "dt"), "0.5")
    for bad in ("dt=0.5", "time.dt", "time.nope=1"):
        with pytest.raises(ConfigError):
            parse_override(bad)


def test_round_trip_is_lossless():
    text = ("[physics]\nunit_system = SI\nM = 30 ug\n[grid]\ndim = 3\nn_points = 32\n"
            "box_length = 2 mm\n[scaling]\nells = 1 mm, 2 mm,3mm\n[time]\ndt = 0.1 ms\n"
            "[run]\nseed = 7\ngnuplot = yes\n")
    rc = parse_config("cat", text)
    assert rc["scaling.ells"] == pytest.approx((1e-3, 2e-3, 3e-3))
    again = parse_config("cat", rc.to_ini())
    assert again == rc
    assert again.digest() == rc.digest()
    assert again.to_ini() == rc.to_ini()


def test_comments_are_ignored():
    raw = read_config_text("# note\n[cat]\nell = 12 ; separation\n")
    assert raw[("cat", "ell")][0] == "12"
    assert parse_config("scaling", "[scaling]\nells = 6 8  10\n")["scaling.ells"] == (6, 8, 10)
