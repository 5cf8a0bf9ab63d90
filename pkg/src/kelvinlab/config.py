"""Run configuration: typed options per subcommand, INI files, precedence rules."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

OUT_ENV = "KELVINLAB_OUT"
DEFAULT_OUT = "kelvinlab-out"


class ConfigError(ValueError):
    """Invalid configuration; ``flag`` names the offending option when known."""

    def __init__(self, message, flag=None):
        super().__init__(message)
        self.flag = flag


def parse_point(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]


def parse_points(text):
    return [parse_point(p) for p in str(text).split(";") if p.strip()]


@dataclass(frozen=True)
class Option:
    name: str
    kind: type | object = float
    default: object = None
    required: bool = False
    help: str = ""
    choices: tuple | None = None

    @property
    def dest(self):
        return self.name.replace("-", "_")

    def convert(self, raw):
        try:
            if self.kind is int:
                val = int(raw)
            elif self.kind is float:
                val = float(raw)
            elif self.kind == "point":
                val = raw if isinstance(raw, list) else parse_point(raw)
            elif self.kind == "points":
                val = raw if isinstance(raw, list) else parse_points(raw)
            else:
                val = str(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {raw!r} for --{self.name}: {exc}", self.name) from None
        if self.choices is not None and val not in self.choices:
            raise ConfigError(f"--{self.name} must be one of {list(self.choices)}, got {val!r}", self.name)
        return val


COMMON = (
    Option("seed", int, 0, help="random seed"),
    Option("out", str, None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})"),
)

SUBCOMMANDS = {
    "geometry-check": (
        Option("n", int, 3, help="dimension"),
        Option("alpha", float, 1.0, help="Riesz order"),
        Option("p", float, 2.0, help="power-mode exponent"),
        Option("samples", int, 10000, help="random exterior samples"),
    ),
    "verify-bubble": (
        Option("n", int, required=True, help="dimension"),
        Option("alpha", float, required=True, help="Riesz order"),
        Option("d", float, 1.0, help="bubble scale parameter"),
        Option("center", "point", None, help="bubble center, comma separated"),
        Option("grid", int, None, help="cells per axis of a grid cross-check (n <= 3)"),
        Option("radius", float, None, help="truncation radius (default 1e8 sqrt(d))"),
        Option("resolution", int, 16, help="Gauss points per radial panel"),
        Option("points", int, 7, help="residual sample points on |x - center| <= 3 sqrt(d)"),
    ),
    "verify-singular": (
        Option("n", int, required=True, help="dimension"),
        Option("alpha", float, required=True, help="Riesz order"),
        Option("resolution", int, 16, help="Gauss points per radial panel"),
    ),
    "verify-poly": (
        Option("n", int, required=True, help="dimension"),
        Option("p", float, required=True, help="kernel power"),
        Option("d", float, 1.0, help="family scale parameter"),
        Option("center", "point", None, help="family center"),
        Option("perturb", float, 0.5, help="shift of q for the exclusivity check"),
        Option("radius", float, None, help="truncation radius (default 1e8 sqrt(d))"),
        Option("resolution", int, 16, help="Gauss points per radial panel"),
        Option("points", int, 7, help="residual sample points on |x - center| <= 3 sqrt(d)"),
    ),
    "moving-spheres": (
        Option("n", int, required=True, help="dimension"),
        Option("alpha", float, required=True, help="Riesz order"),
        Option("d", float, 1.0, help="bubble scale parameter"),
        Option("center", "point", None, help="bubble center"),
        Option("x", "points", None, help="base points, ';' separated (default: the center)"),
        Option("lambda-min", float, None, help="lower end of the search (default 0.1 sqrt(d))"),
        Option("lambda-max", float, None, help="upper end of the search"),
        Option("tol", float, None, help="bisection tolerance (default 1e-4 sqrt(d))"),
        Option("directions", int, 64, help="sample directions per shell"),
        Option("sweep", int, 0, help="number of lambda values in an optional sweep CSV"),
    ),
    "invariance-check": (
        Option("mode", str, "riesz", choices=("riesz", "power"), help="equation"),
        Option("n", int, required=True, help="dimension (<= 3)"),
        Option("alpha", float, None, help="Riesz order (riesz mode)"),
        Option("p", float, None, help="kernel power (power mode)"),
        Option("d", float, 1.0, help="family scale parameter"),
        Option("samples", int, 5, help="random (x, lambda, xi) configurations"),
        Option("angular", int, 24, help="angular Gauss points per piece"),
        Option("resolution", int, 16, help="Gauss points per radial panel"),
    ),
    "local-estimate": (
        Option("n", int, required=True, help="dimension (<= 3)"),
        Option("alpha", float, None, help="Riesz order (default n/2)"),
        Option("r", float, None, help="lower exponent (default 1.5 n/(n-alpha))"),
        Option("nu", float, None, help="upper exponent (default 3 n/(n-alpha))"),
        Option("delta-target", float, None, help="delta(V) of the draws (default delta_bar/2)"),
        Option("delta-bar", float, 0.05, help="smallness threshold"),
        Option("draws", int, 50, help="random draws"),
        Option("grid", int, None, help="cells per axis of [-3, 3]^n"),
        Option("cap", float, 1e6, help="truncation level for the contraction solve"),
    ),
    "iterate": (
        Option("mode", str, "riesz", choices=("riesz", "power"), help="equation"),
        Option("n", int, required=True, help="dimension"),
        Option("alpha", float, None, help="Riesz order (riesz mode)"),
        Option("mu", float, None, help="exponent mu (default critical)"),
        Option("p", float, None, help="kernel power (power mode)"),
        Option("q", float, None, help="exponent q (default critical)"),
        Option("family", str, "bubble", choices=("bubble", "poly", "zero"), help="initial data"),
        Option("steps", int, 30, help="step budget"),
        Option("d", float, 1.0, help="scale of the initial family"),
    ),
}


def options_for(subcommand):
    return COMMON + SUBCOMMANDS[subcommand]


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.values.get("seed", 0)

    def out_dir(self):
        out = self.values.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
        return Path(out)

    def echo(self):
        """Effective configuration without the output location (which does not affect results)."""
        return {k: v for k, v in sorted(self.values.items()) if k != "out"}

    def __getitem__(self, key):
        return self.values[key]


def config_file_load(path, subcommand=None):
    """Read an INI file into {section: {dest: raw string}}.

    Sections are ``common`` or subcommand names; keys use flag names (dashes or
    underscores).  Duplicate keys, unknown sections and unknown keys are errors.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} does not exist", "config")
    parser = configparser.ConfigParser(strict=True, interpolation=None, default_section="\0none")
    try:
        parser.read_string(p.read_text(), source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}", "config") from None
    out = {}
    for section in parser.sections():
        if section == "common":
            allowed = COMMON
        elif section in SUBCOMMANDS:
            allowed = options_for(section)
        else:
            raise ConfigError(f"unknown config section [{section}]", "config")
        names = {o.dest: o for o in allowed}
        entries = {}
        for key, raw in parser.items(section):
            dest = key.replace("-", "_")
            if dest not in names:
                raise ConfigError(f"unknown key {key!r} in section [{section}]", key)
            entries[dest] = raw
        out[section] = entries
    if subcommand is not None:
        merged = dict(out.get("common", {}))
        merged.update(out.get(subcommand, {}))
        return merged
    return out


def resolve(subcommand, flag_values: dict, file_values: dict | None = None) -> RunConfig:
    """defaults < config file < flags; conversion and required checks happen here."""
    values = {}
    for opt in options_for(subcommand):
        raw = opt.default
        if file_values and opt.dest in file_values:
            raw = file_values[opt.dest]
        if opt.dest in flag_values and flag_values[opt.dest] is not None:
            raw = flag_values[opt.dest]
        if raw is None:
            if opt.required:
                raise ConfigError(f"missing required option --{opt.name}", opt.name)
            values[opt.dest] = None
            continue
        values[opt.dest] = opt.convert(raw)
    return RunConfig(subcommand, values)
