"""INI-style configuration files for runs and mazes.

Unknown sections or keys are rejected so a typo cannot silently fall back to
a default. Every supported environment has a full default hyper-parameter
block; only the dubins block is exercised by the test suite.
"""

from __future__ import annotations

import configparser
from dataclasses import fields

from .dubins import BUILTIN_MAZES, CarState, Goal, MazeLayout
from .training import TrainConfig


class ConfigError(ValueError):
    pass


ENV_DEFAULTS: dict[str, dict] = {
    "dubins": dict(
        critic_hidden=(400, 300), policy_hidden=(400, 300), batch_size=256,
        gamma=0.9, alpha=1e-3, critic_lr=1e-3, policy_lr=1e-3,
        eps_success=0.1, eps_dist=1.0, t_max=25,
        v=0.5, dt=1.0, n_substeps=5, u_max=1.0),
    "fetch": dict(
        critic_hidden=(512, 512, 512), policy_hidden=(512, 512, 512),
        batch_size=256, gamma=0.98, alpha=1e-4, critic_lr=1e-4, policy_lr=1e-4,
        eps_success=0.05, eps_dist=0.5, t_max=100,
        v=0.5, dt=1.0, n_substeps=5, u_max=1.0),
    "humanoid_locomotion": dict(
        critic_hidden=(512, 512, 512), policy_hidden=(512, 512, 512),
        batch_size=64, gamma=0.98, alpha=1e-4, critic_lr=3e-4, policy_lr=3e-4,
        eps_success=0.05, eps_dist=0.5, t_max=100,
        v=0.5, dt=1.0, n_substeps=5, u_max=1.0),
    "humanoid_standup": dict(
        critic_hidden=(512, 512, 512), policy_hidden=(512, 512, 512),
        batch_size=64, gamma=0.98, alpha=1e-4, critic_lr=3e-4, policy_lr=3e-4,
        eps_success=0.05, eps_dist=0.3, t_max=100,
        v=0.5, dt=1.0, n_substeps=5, u_max=1.0),
    "cassie_run": dict(
        critic_hidden=(512, 512, 512), policy_hidden=(512, 512, 512),
        batch_size=64, gamma=0.98, alpha=1e-4, critic_lr=3e-4, policy_lr=3e-4,
        eps_success=0.05, eps_dist=0.75, t_max=100,
        v=0.5, dt=1.0, n_substeps=5, u_max=1.0),
}

RUN_KEYS = ("env", "maze", "mode", "seed", "total_steps", "eval_period",
            "checkpoint_period", "relabel_fraction", "buffer_capacity",
            "learning_starts", "normalizer_steps", "success_window",
            "roulette_delta", "tau", "stop_on_chain_success")

ENV_KEYS = tuple(ENV_DEFAULTS["dubins"].keys())

_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}

_BOOL_VALUES = {"true": True, "1": True, "yes": True,
                "false": False, "0": False, "no": False}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in ("critic_hidden", "policy_hidden"):
            sizes = tuple(int(p) for p in raw.split(",") if p.strip())
            if not sizes:
                raise ValueError("empty size list")
            return sizes
        if key == "stop_on_chain_success":
            if raw.lower() not in _BOOL_VALUES:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_VALUES[raw.lower()]
        if key in ("env", "maze", "mode"):
            return raw
        if key in ("seed", "total_steps", "eval_period", "checkpoint_period",
                   "buffer_capacity", "learning_starts", "normalizer_steps",
                   "success_window", "batch_size", "t_max", "n_substeps"):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError:
        raise
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parser


def load_train_config(path) -> tuple[TrainConfig, str]:
    """Parse a run configuration; returns (config, raw file text)."""
    parser = _read_ini(path)
    known_sections = {"run", *ENV_DEFAULTS}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")

    run_kv = {}
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key not in RUN_KEYS:
                raise ConfigError(f"unknown key {key!r} in [run]")
            run_kv[key] = _parse_value(key, raw)
    env = run_kv.pop("env", "dubins")
    if env not in ENV_DEFAULTS:
        raise ConfigError(f"unknown env {env!r}; known: {sorted(ENV_DEFAULTS)}")
    run_kv.pop("maze", None)  # consumed by the CLI, not by TrainConfig

    env_kv = dict(ENV_DEFAULTS[env])
    for section in ENV_DEFAULTS:
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in ENV_KEYS:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if section == env:
                env_kv[key] = _parse_value(key, raw)
            else:
                _parse_value(key, raw)  # other blocks still validated

    config = TrainConfig(env_name=env, **env_kv, **run_kv)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with open(path) as fh:
        return config, fh.read()


def maze_name_from_config(path) -> str | None:
    parser = _read_ini(path)
    if parser.has_section("run") and parser.has_option("run", "maze"):
        return parser.get("run", "maze")
    return None


def _floats(raw: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(parts)}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{what}: non-numeric entry in {raw!r}") from None


def load_maze_config(path) -> MazeLayout:
    parser = _read_ini(path)
    if not parser.has_section("maze"):
        raise ConfigError("missing [maze] section")
    keys = set(parser.options("maze"))
    required = {"bounds", "start", "target"}
    allowed = required | {"target_radius"}
    if not required <= keys:
        raise ConfigError(f"[maze] must define {sorted(required)}")
    if not keys <= allowed:
        raise ConfigError(f"unknown [maze] keys: {sorted(keys - allowed)}")
    for section in parser.sections():
        if section not in ("maze", "walls"):
            raise ConfigError(f"unknown section [{section}]")

    bounds = _floats(parser.get("maze", "bounds"), 4, "bounds")
    start = CarState(*_floats(parser.get("maze", "start"), 3, "start"))
    target = Goal(*_floats(parser.get("maze", "target"), 2, "target"))
    radius = 0.5
    if parser.has_option("maze", "target_radius"):
        radius = float(parser.get("maze", "target_radius"))
    walls = []
    if parser.has_section("walls"):
        for key, raw in parser.items("walls"):
            walls.append(_floats(raw, 4, f"wall {key}"))
    try:
        return MazeLayout(bounds=bounds, walls=tuple(walls), start=start,
                          target=target, target_radius=radius)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def resolve_maze(spec: str) -> MazeLayout:
    """A builtin maze name or a path to a maze configuration file."""
    if spec in BUILTIN_MAZES:
        return BUILTIN_MAZES[spec]()
    return load_maze_config(spec)


def default_config_text() -> str:
    lines = ["[run]",
             "env = dubins",
             "maze = canonical",
             "mode = dcil2",
             "seed = 0",
             "total_steps = 60000",
             "eval_period = 1000",
             "checkpoint_period = 20000",
             "relabel_fraction = 0.5",
             "buffer_capacity = 1000000",
             "learning_starts = 256",
             "normalizer_steps = 10000",
             "success_window = 20",
             "roulette_delta = 0.05",
             "tau = 0.005",
             "stop_on_chain_success = false",
             ""]
    for env, block in ENV_DEFAULTS.items():
        lines.append(f"[{env}]")
        for key, value in block.items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
