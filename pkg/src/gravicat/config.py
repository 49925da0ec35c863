"""Run configuration: an INI file with sections, overridable from the command line.

Values may carry a unit suffix in SI mode (``M = 30 ug``, ``box_length = 2 mm``);
they are converted to SI base units. In dimensionless mode suffixes are
rejected. Unknown sections or keys are errors that name the offending line.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import re
from dataclasses import dataclass, field

from .errors import ConfigError

log = logging.getLogger("gravicat.config")

SUBCOMMANDS = ("soliton", "evolve", "cat", "ortho-time", "telegraph", "witness", "planck",
               "janossy", "scaling")

UNITS = {
    "mass": {"kg": 1.0, "g": 1e-3, "mg": 1e-6, "ug": 1e-9, "µg": 1e-9},
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
}


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str  # float, int, str, bool, floats
    default: object
    doc: str
    unit: str = ""  # mass, length, time or empty
    positive: bool = False
    choices: tuple = ()

    @property
    def path(self):
        return f"{self.section}.{self.name}"


KEYS = (
    Key("physics", "unit_system", "str", "dimensionless", "unit system",
        choices=("dimensionless", "SI")),
    Key("physics", "M", "float", 1.0, "particle mass (M0 units, or kg in SI mode)", "mass", True),
    Key("physics", "alpha", "float", 1.0, "contractive-potential stiffness", positive=True),
    Key("grid", "dim", "int", 1, "spatial dimension", choices=(1, 3)),
    Key("grid", "n_points", "int", 512, "points per axis (power of two, >= 16)", positive=True),
    Key("grid", "box_length", "float", 32.0, "box side", "length", True),
    Key("potential", "kind", "str", "auto", "self-interaction (auto: newton1d_soft in 1D, "
        "newton3d in 3D)", choices=("auto", "newton3d", "newton1d_soft", "janossy", "none")),
    Key("potential", "softening", "float", 1.0, "1D kernel softening length", "length", True),
    Key("time", "dt", "float", 1e-3, "time step", "time", True),
    Key("time", "t_max", "float", 10.0, "evolution time (soliton, evolve)", "time", True),
    Key("time", "record_interval", "float", 0.05, "time between trace rows", "time", True),
    Key("cat", "ell", "float", 10.0, "soliton separation", "length", True),
    Key("cat", "sign", "int", 1, "relative sign of the cat", choices=(1, -1)),
    Key("cat", "threshold", "float", 0.1, "normalized overlap that counts as orthogonal",
        positive=True),
    Key("cat", "t_max_factor", "float", 5.0, "cat run length in units of hbar ell / G M^2",
        positive=True),
    Key("solver", "tol", "float", 1e-10, "relative energy tolerance of the relaxation",
        positive=True),
    Key("solver", "max_iter", "int", 5000, "relaxation iteration cap", positive=True),
    Key("scaling", "ells", "floats", (6.0, 8.0, 10.0, 14.0), "separations of the ell sweep",
        "length", True),
    Key("scaling", "mass_factors", "floats", (0.7539, 0.8298, 0.8939, 1.0),
        "masses of the mass sweep relative to M", positive=True),
    Key("scaling", "mass_ell", "float", 14.0, "separation used in the mass sweep", "length", True),
    Key("scaling", "periodic_ell", "float", 10.0, "separation followed to a second merger",
        "length", True),
    Key("janossy", "sigma0", "float", 0.5, "initial width of the free packet", "length", True),
    Key("janossy", "t_free", "float", 2.0, "free-spreading time", "time", True),
    Key("janossy", "periods", "float", 10.0, "stationarity run in oscillator periods",
        positive=True),
    Key("run", "seed", "int", 0, "random seed for sampled shots"),
    Key("run", "shots", "int", 1000, "sampled projector shots per case (0 disables)"),
    Key("run", "output_dir", "str", "gravicat-out", "output directory"),
    Key("run", "initial", "str", "soliton", "initial state for evolve",
        choices=("soliton", "gaussian")),
    Key("run", "sigma", "float", 1.0, "Gaussian width for evolve", "length", True),
    Key("run", "gnuplot", "bool", False, "also write a gnuplot script"),
    Key("run", "refine", "bool", False, "re-run at doubled resolution (convergence gate)"),
)

KEY_INDEX = {(k.section, k.name): k for k in KEYS}

SUBCOMMAND_DEFAULTS = {
    "planck": {("physics", "unit_system"): "SI", ("physics", "M"): "50 ug",
               ("cat", "ell"): "1 mm"},
}

_NUMBER_UNIT = re.compile(r"^\s*([-+0-9.eE]+)\s*([^\s0-9.+-][^\s]*)?\s*$")


@dataclass
class RunConfig:
    """Resolved configuration: typed values in canonical units plus their origin."""

    subcommand: str
    values: dict
    sources: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def get(self, section, name):
        return self.values[(section, name)]

    def __getitem__(self, path):
        section, name = path.split(".", 1)
        return self.get(section, name)

    def to_ini(self):
        """Canonical INI text; parsing it back yields an equal configuration."""
        lines = []
        section = None
        for key in KEYS:
            if key.section != section:
                if lines:
                    lines.append("")
                lines.append(f"[{key.section}]")
                section = key.section
            lines.append(f"{key.name} = {format_value(key, self.values[(key.section, key.name)])}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.subcommand == other.subcommand \
            and self.values == other.values


def format_value(key, value):
    if key.kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if key.kind == "float":
        return repr(float(value))
    if key.kind == "bool":
        return "true" if value else "false"
    return str(value)


def _locate(text, section, name):
    """Line number of ``name`` inside ``[section]`` (1-based), or None."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(name)}\s*[=:]", stripped, re.I):
            return i
    return None


def read_config_text(text, origin="<config>"):
    """Raw ``{(section, key): (value, where)}`` from INI text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for name, value in parser.items(section):
            line = _locate(text, section, name)
            where = f"{origin}:{line}" if line else origin
            if (section, name) not in KEY_INDEX:
                raise ConfigError(f"{where}: unknown key '{name}' in section [{section}]")
            out[(section, name)] = (value, where)
    return out


def parse_override(item):
    """``section.key=value`` from ``--set``."""
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"--set {item!r}: expected section.key=value")
    path, value = item.split("=", 1)
    section, name = path.strip().split(".", 1)
    if (section, name) not in KEY_INDEX:
        raise ConfigError(f"--set {item!r}: unknown key '{path.strip()}'")
    return (section, name), value.strip()


def _convert_scalar(key, text, unit_system, where):
    if key.kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: {key.path} expects an integer, got {text!r}") from None
    if key.kind == "bool":
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: {key.path} expects true/false, got {text!r}")
    if key.kind == "str":
        return text.strip()
    m = _NUMBER_UNIT.match(text)
    if not m:
        raise ConfigError(f"{where}: {key.path} expects a number, got {text!r}")
    try:
        number = float(m.group(1))
    except ValueError:
        raise ConfigError(f"{where}: {key.path} expects a number, got {text!r}") from None
    suffix = m.group(2)
    if suffix:
        if unit_system != "SI":
            raise ConfigError(f"{where}: {key.path} has unit '{suffix}' but the unit system "
                              "is dimensionless")
        table = UNITS.get(key.unit, {})
        if suffix not in table:
            expected = ", ".join(table) if table else "no unit"
            raise ConfigError(f"{where}: {key.path} unit '{suffix}' does not match "
                              f"(expected {expected})")
        number *= table[suffix]
    return number


def convert(key, text, unit_system, where):
    if key.kind == "floats":
        if isinstance(text, str):
            # commas separate values when present, so "1 mm, 2 mm" keeps its units
            sep = r"\s*,\s*" if "," in text else r"\s+"
            items = [s for s in re.split(sep, text.strip()) if s]
        else:
            items = list(text)
        if not items:
            raise ConfigError(f"{where}: {key.path} needs at least one value")
        value = tuple(_convert_scalar(Key(key.section, key.name, "float", None, "", key.unit),
                                      str(s), unit_system, where) for s in items)
        bad = [v for v in value if not v > 0] if key.positive else []
    else:
        value = _convert_scalar(key, str(text), unit_system, where)
        bad = [value] if key.positive and not value > 0 else []
    if bad:
        raise ConfigError(f"{where}: {key.path} must be positive, got {text!r}")
    if key.choices and value not in key.choices:
        raise ConfigError(f"{where}: {key.path} must be one of {list(key.choices)}, got {text!r}")
    return value


def parse_config(subcommand, text=None, overrides=(), origin="<config>"):
    """Resolve defaults, file entries and ``(section, key) -> value`` flag overrides.

    ``overrides`` holds ``((section, name), value_text, flag_label)`` triples.
    A flag wins over the file; differing values are logged as a conflict.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    raw = {(k.section, k.name): (k.default, "default") for k in KEYS}
    for path, value in SUBCOMMAND_DEFAULTS.get(subcommand, {}).items():
        raw[path] = (value, f"default for {subcommand}")
    file_entries = read_config_text(text, origin) if text else {}
    raw.update(file_entries)
    for path, value, label in overrides:
        if path not in KEY_INDEX:
            raise ConfigError(f"{label}: unknown key '{'.'.join(path)}'")
        if path in file_entries and str(file_entries[path][0]).strip() != str(value).strip():
            log.warning("%s: flag %s=%s overrides %s from %s", ".".join(path), label, value,
                        file_entries[path][0], file_entries[path][1])
        raw[path] = (value, label)
    us_text, us_where = raw[("physics", "unit_system")]
    unit_system = convert(KEY_INDEX[("physics", "unit_system")], us_text, None, us_where)
    values = {}
    for path, (value, where) in raw.items():
        key = KEY_INDEX[path]
        if where == "default" and key.unit and unit_system == "SI" and key.kind != "str":
            # defaults are dimensionless numbers, meaningful as SI base units
            values[path] = value
            continue
        values[path] = convert(key, value, unit_system, where)
    n = values[("grid", "n_points")]
    if n < 16 or n & (n - 1):
        raise ConfigError(f"{raw[('grid', 'n_points')][1]}: grid.n_points must be a power of "
                          f"two >= 16, got {n}")
    return RunConfig(subcommand, values, {p: w for p, (v, w) in raw.items()},
                     {p: v for p, (v, w) in raw.items()})


def help_text():
    """Key listing with defaults, used by ``--help``."""
    lines = []
    for key in KEYS:
        unit = f" [{key.unit}]" if key.unit else ""
        default = format_value(key, key.default)
        lines.append(f"  {key.path} = {default}{unit}: {key.doc}")
    return "\n".join(lines)
