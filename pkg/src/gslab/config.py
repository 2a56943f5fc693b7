"""Flat ``key = value`` experiment configs.

One assignment per line; ``#`` starts a comment.  Values are typed per
experiment: integers, reals, exact rationals written ``p/q`` (or plain
integers), booleans and comma-separated lists.  All problems are collected
and raised together as a ``ConfigError`` with line numbers.
"""

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ConfigError

INT, REAL, RATIONAL, BOOL, REAL_LIST = "integer", "real", "rational", "boolean", "list of reals"

_REQUIRED = object()

# experiment -> key -> (type, default); _REQUIRED marks mandatory keys
SCHEMAS = {
    "free-decay": {
        "theta": (REAL, _REQUIRED),
        "rho0": (REAL, _REQUIRED),
        "times": (REAL_LIST, _REQUIRED),
        "num_points": (INT, 8192),
        "half_length": (REAL, 400.0),
        "oversample": (INT, 32),
    },
    "growth-sweep": {
        "sigma": (REAL, _REQUIRED),
        "sigma_k_list": (REAL_LIST, _REQUIRED),
        "T_star": (REAL, 0.1),
        "rho0": (REAL, 1.0),
        "theta": (REAL, 2.0),
        "rho2": (REAL, 0.0),
        "s": (REAL, 1.0),
        "lambda": (REAL, None),
        "theta1": (REAL, 2.2),
        "theta_h": (REAL, 2.0),
        "drift": (BOOL, True),
        "exact": (BOOL, False),
        "tolerance": (REAL, 0.15),
    },
    "conjugate-check": {
        "delta": (REAL, _REQUIRED),
        "sigma_list": (REAL_LIST, [0.25, 0.5, 0.75]),
        "s_list": (REAL_LIST, [1.0, 2.0, 4.0]),
        "num_points": (INT, 2048),
        "half_length": (REAL, 40.0),
        "decay_num_points": (INT, 4096),
        "decay_half_length": (REAL, 400.0),
    },
    "multiplier-check": {
        "theta": (REAL, _REQUIRED),
        "s": (REAL, _REQUIRED),
        "t": (RATIONAL, _REQUIRED),
        "alpha_max": (INT, _REQUIRED),
        "A": (RATIONAL, Fraction(1)),
        "B": (RATIONAL, Fraction(1)),
        "a": (RATIONAL, Fraction(1)),
        "bits": (INT, 256),
    },
    "psido-selftest": {
        "num_points_list": (REAL_LIST, [512.0, 1024.0, 2048.0]),
        "sigma": (REAL, 0.5),
        "ensemble_size": (INT, 8),
    },
    "energy-initial": {
        "sigma_k_list": (REAL_LIST, _REQUIRED),
        "rho0": (REAL, 1.0),
        "theta": (REAL, 2.0),
        "rho2": (REAL, 0.0),
        "s": (REAL, 1.0),
        "lambda": (REAL, 0.25),
        "theta1": (REAL, 2.2),
        "theta_h": (REAL, 2.0),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    parameters: dict
    output_dir: str = "lab_output"
    seed: int = 0
    source: str = field(default="", compare=False)

    def __getitem__(self, key):
        return self.parameters[key]

    def config_hash(self):
        """sha256 over the canonical parameter listing (first 16 hex digits)."""
        lines = [f"experiment={self.experiment}", f"seed={self.seed}"]
        lines += [f"{k}={_render(v)}" for k, v in sorted(self.parameters.items())]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]

    def echo(self):
        return {"experiment": self.experiment, "seed": self.seed,
                "output_dir": self.output_dir,
                "parameters": {k: _render(v) for k, v in sorted(self.parameters.items())}}


def _render(v):
    if isinstance(v, list):
        return ",".join(repr(x) for x in v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return repr(v)


def _convert(kind, text):
    """Parse ``text`` as ``kind``; raises ValueError with a readable message."""
    if kind == INT:
        try:
            return int(text)
        except ValueError:
            raise ValueError(f"expected an integer, got {text!r}") from None
    if kind == REAL:
        try:
            return float(text)
        except ValueError:
            raise ValueError(f"expected a real number, got {text!r}") from None
    if kind == RATIONAL:
        num, sep, den = text.partition("/")
        try:
            if sep:
                return Fraction(int(num), int(den))
            return Fraction(int(text))
        except (ValueError, ZeroDivisionError):
            raise ValueError(
                f"expected a rational written p/q, got {text!r} (decimals are not exact)") from None
    if kind == BOOL:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == REAL_LIST:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("expected a non-empty comma-separated list")
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"expected a comma-separated list of reals, got {text!r}") from None
    raise AssertionError(kind)


def parse_config(text, output_dir=None, seed=None):
    """Parse config text into an ExperimentConfig, or raise ConfigError listing every problem."""
    problems = []
    raw = {}
    where = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            problems.append((lineno, f"expected key=value, got {body!r}"))
            continue
        if key in raw:
            problems.append((lineno, f"duplicate key {key!r} (first set on line {where[key]})"))
            continue
        raw[key] = value
        where[key] = lineno

    experiment = raw.pop("experiment", None)
    exp_line = where.get("experiment", 0)
    file_seed = raw.pop("seed", None)
    file_out = raw.pop("output_dir", None)
    if experiment is None:
        problems.append((0, "missing key 'experiment'"))
        raise ConfigError(problems)
    if experiment not in SCHEMAS:
        problems.append((exp_line, f"unknown experiment {experiment!r}; "
                                   f"expected one of {', '.join(sorted(SCHEMAS))}"))
        raise ConfigError(problems)

    schema = SCHEMAS[experiment]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            problems.append((where[key], f"unknown key {key!r} for {experiment}"))
            continue
        try:
            params[key] = _convert(schema[key][0], value)
        except ValueError as exc:
            problems.append((where[key], f"{key}: {exc}"))
    for key, (_, default) in schema.items():
        if key in raw:
            continue
        if default is _REQUIRED:
            problems.append((0, f"missing required key {key!r} for {experiment}"))
        else:
            params[key] = list(default) if isinstance(default, list) else default

    if file_seed is not None:
        try:
            file_seed = int(file_seed)
        except ValueError:
            problems.append((where["seed"], f"seed: expected an integer, got {file_seed!r}"))
            file_seed = None
    if problems:
        raise ConfigError(sorted(problems))
    return ExperimentConfig(
        experiment, params,
        output_dir=output_dir or file_out or "lab_output",
        seed=seed if seed is not None else (file_seed or 0),
        source=text)


def load_config(path, output_dir=None, seed=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), output_dir=output_dir, seed=seed)
