"""Flat plain-text experiment configuration files.

The format is one ``key = value`` assignment per line; blank lines and
``#`` comments are ignored.  List values are comma separated.  Unknown and
duplicate keys are rejected rather than skipped, so a typo in a grid key
can never silently run the wrong experiment.

Keys (see ExperimentConfig for semantics and invariants):

    n_grid        list of int, required
    k_grid        list of int, required
    replications  int, required
    theta_grid    list of float
    a_grid        list of float
    epsilon       float in (0, 2); unset means "report both 0.1 and 0.01"
    master_seed   unsigned 64-bit int (default 104729)
    max_steps     int >= 1 (default 10000000)
"""
from __future__ import annotations

from .experiments import ConfigError, ConfigValueError, ExperimentConfig


class ConfigFileError(ConfigError):
    """The configuration file is missing or unreadable."""


class ConfigSyntaxError(ConfigError):
    """A line or value cannot be parsed."""


class ConfigKeyError(ConfigError):
    """An assignment uses a key that is not part of the schema."""


_LIST_INT_KEYS = ("n_grid", "k_grid")
_LIST_FLOAT_KEYS = ("theta_grid", "a_grid")
_SCALAR_INT_KEYS = ("replications", "master_seed", "max_steps")
_SCALAR_FLOAT_KEYS = ("epsilon",)
_ALL_KEYS = _LIST_INT_KEYS + _LIST_FLOAT_KEYS + _SCALAR_INT_KEYS + _SCALAR_FLOAT_KEYS
_REQUIRED_KEYS = ("n_grid", "k_grid", "replications")


def _parse_scalar(key: str, text: str, kind: type) -> "int | float":
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigSyntaxError(f"{key}: cannot parse {text!r} as {kind.__name__}") from exc


def _parse_list(key: str, text: str, kind: type) -> list:
    items = [tok.strip() for tok in text.split(",")]
    items = [tok for tok in items if tok]
    if not items:
        raise ConfigValueError(f"{key}: must be nonempty")
    return [_parse_scalar(key, tok, kind) for tok in items]


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; see parse_config."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigSyntaxError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigSyntaxError(f"{source}:{lineno}: missing key before '='")
        if key not in _ALL_KEYS:
            raise ConfigKeyError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigSyntaxError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigValueError(f"{key}: required key is missing")

    kwargs: dict = {
        "n_grid": _parse_list("n_grid", raw["n_grid"], int),
        "k_grid": _parse_list("k_grid", raw["k_grid"], int),
        "replications": _parse_scalar("replications", raw["replications"], int),
    }
    if "theta_grid" in raw:
        kwargs["theta_grid"] = _parse_list("theta_grid", raw["theta_grid"], float)
    if "a_grid" in raw:
        kwargs["a_grid"] = _parse_list("a_grid", raw["a_grid"], float)
    if "epsilon" in raw:
        kwargs["epsilon"] = _parse_scalar("epsilon", raw["epsilon"], float)
    if "master_seed" in raw:
        kwargs["master_seed"] = _parse_scalar("master_seed", raw["master_seed"], int)
    if "max_steps" in raw:
        kwargs["max_steps"] = _parse_scalar("max_steps", raw["max_steps"], int)
    return ExperimentConfig(**kwargs)


def parse_config(path) -> ExperimentConfig:
    """Read and validate an experiment configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def format_config(config: ExperimentConfig) -> str:
    """Render a config as parseable text; parse(format(c)) == c."""
    lines = [
        "n_grid = " + ", ".join(str(v) for v in config.n_grid),
        "k_grid = " + ", ".join(str(v) for v in config.k_grid),
        "replications = " + str(config.replications),
    ]
    if config.theta_grid:
        lines.append("theta_grid = " + ", ".join(repr(v) for v in config.theta_grid))
    if config.a_grid:
        lines.append("a_grid = " + ", ".join(repr(v) for v in config.a_grid))
    if config.epsilon is not None:
        lines.append("epsilon = " + repr(config.epsilon))
    lines.append("master_seed = " + str(config.master_seed))
    lines.append("max_steps = " + str(config.max_steps))
    return "\n".join(lines) + "\n"


def config_to_dict(config: ExperimentConfig) -> dict:
    """JSON-safe echo of a config, for run manifests."""
    return {
        "n_grid": list(config.n_grid),
        "k_grid": list(config.k_grid),
        "replications": config.replications,
        "theta_grid": list(config.theta_grid),
        "a_grid": list(config.a_grid),
        "epsilon": config.epsilon,
        "master_seed": config.master_seed,
        "max_steps": config.max_steps,
    }
