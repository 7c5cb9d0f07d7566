"""Experiment configuration files.

A config is a YAML mapping. Every error is reported against the line of the
offending node. Schema (version 1)::

    schema_version: 1          # required
    seed: 7                    # optional, default 0
    dataset:
      preset: delicious-like   # delicious-like | digg-like | survey-like
      node_count: 200          # optional overrides of any preset field
      universe_size: 50000
      clusters: 20
      affinity: 0.9
      mean_profile_size: 135
    weights:                   # either slices ...
      mode: slices
      u_lo: [0.0, 0.5, 0.9]
      u_hi: 1.0
      slices: [1, 2, 3]
    # weights:                 # ... or Westin groups
    #   mode: groups
    #   proportions: westin-grid          # or [[0.34, 0.43, 0.23], ...]
    epsilons: [0.1, 0.5, 1, 2, 3]
    sim: {k: 10, rounds: 20, rps_size: 10}
    repeats: 10
    split_fraction: 0.9
    arms: [baseline, random]   # reference arms to run alongside the private one

Proportion triples are ordered (fundamentalists, pragmatists, unconcerned).
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path
from typing import Any, Callable

import yaml

from hdpriv.dp_core import InvalidParameterError
from hdpriv.experiments import (
    DEFAULT_EPSILONS,
    PRESETS,
    ExperimentConfig,
    GroupRegime,
    SliceRegime,
    westin_grid,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>") -> None:
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _Reader:
    def __init__(self, source: str) -> None:
        self.source = source

    def fail(self, node: yaml.Node | None, message: str) -> ConfigError:
        line = node.start_mark.line + 1 if node is not None else None
        return ConfigError(message, line, self.source)

    def mapping(self, node: yaml.Node, what: str) -> dict[str, tuple[yaml.Node, yaml.Node]]:
        if not isinstance(node, yaml.MappingNode):
            raise self.fail(node, f"{what} must be a mapping")
        out: dict[str, tuple[yaml.Node, yaml.Node]] = {}
        for key, value in node.value:
            name = key.value if isinstance(key, yaml.ScalarNode) else None
            if not isinstance(name, str):
                raise self.fail(key, f"{what}: keys must be strings")
            if name in out:
                raise self.fail(key, f"{what}: duplicate key {name!r}")
            out[name] = (key, value)
        return out

    def scalar(self, node: yaml.Node, what: str) -> Any:
        if not isinstance(node, yaml.ScalarNode):
            raise self.fail(node, f"{what} must be a scalar")
        return yaml.constructor.SafeConstructor().construct_object(node)

    def number(self, node: yaml.Node, what: str) -> float:
        v = self.scalar(node, what)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.fail(node, f"{what} must be a number, got {v!r}")
        return float(v)

    def integer(self, node: yaml.Node, what: str) -> int:
        v = self.scalar(node, what)
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.fail(node, f"{what} must be an integer, got {v!r}")
        return v

    def string(self, node: yaml.Node, what: str) -> str:
        v = self.scalar(node, what)
        if not isinstance(v, str):
            raise self.fail(node, f"{what} must be a string, got {v!r}")
        return v

    def sequence(self, node: yaml.Node, what: str, item: Callable) -> tuple:
        if not isinstance(node, yaml.SequenceNode):
            raise self.fail(node, f"{what} must be a list")
        if not node.value:
            raise self.fail(node, f"{what} must not be empty")
        return tuple(item(n, f"{what}[{i}]") for i, n in enumerate(node.value))


_TOP_KEYS = {
    "schema_version", "seed", "dataset", "weights", "epsilons", "sim",
    "repeats", "split_fraction", "arms",
}
_DATASET_NUMBERS = {
    "node_count": int, "universe_size": int, "clusters": int,
    "affinity": float, "mean_profile_size": float,
}
_SIM_KEYS = {"k", "rounds", "rps_size"}


def _reject_unknown(r: _Reader, keys: dict, allowed: set, what: str) -> None:
    for name, (key, _) in keys.items():
        if name not in allowed:
            raise r.fail(key, f"unknown {what} key {name!r}; allowed: {sorted(allowed)}")


def _dataset(r: _Reader, node: yaml.Node):
    keys = r.mapping(node, "dataset")
    _reject_unknown(r, keys, {"preset", *_DATASET_NUMBERS}, "dataset")
    if "preset" not in keys:
        raise r.fail(node, f"dataset.preset is required; one of {sorted(PRESETS)}")
    preset_node = keys["preset"][1]
    preset = r.string(preset_node, "dataset.preset")
    if preset not in PRESETS:
        raise r.fail(preset_node, f"unknown preset {preset!r}; one of {sorted(PRESETS)}")
    overrides: dict[str, Any] = {}
    for name, kind in _DATASET_NUMBERS.items():
        if name in keys:
            reader = r.integer if kind is int else r.number
            overrides[name] = reader(keys[name][1], f"dataset.{name}")
    try:
        return dataclasses.replace(PRESETS[preset], **overrides)
    except InvalidParameterError as exc:
        raise r.fail(node, f"dataset: {exc}") from None


def _proportion_triple(r: _Reader, node: yaml.Node, what: str) -> tuple[float, float, float]:
    triple = r.sequence(node, what, r.number)
    if len(triple) != 3:
        raise r.fail(node, f"{what} must have 3 entries (fundamentalists, pragmatists, unconcerned)")
    if min(triple) < 0 or abs(sum(triple) - 1) > 1e-9:
        raise r.fail(node, f"{what} must be non-negative and sum to 1, got {list(triple)}")
    return triple


def _weights(r: _Reader, node: yaml.Node):
    keys = r.mapping(node, "weights")
    if "mode" not in keys:
        raise r.fail(node, "weights.mode is required (slices or groups)")
    mode_node = keys["mode"][1]
    mode = r.string(mode_node, "weights.mode")
    if mode == "slices":
        _reject_unknown(r, keys, {"mode", "u_lo", "u_hi", "slices"}, "weights")
        default = SliceRegime()
        u_lo = r.sequence(keys["u_lo"][1], "weights.u_lo", r.number) if "u_lo" in keys else default.u_lo
        u_hi = r.number(keys["u_hi"][1], "weights.u_hi") if "u_hi" in keys else default.u_hi
        slices = r.sequence(keys["slices"][1], "weights.slices", r.integer) if "slices" in keys else default.slices
        for lo in u_lo:
            if not 0 <= lo < u_hi <= 1:
                raise r.fail(node, f"weights: need 0 <= u_lo < u_hi <= 1, got u_lo={lo}, u_hi={u_hi}")
        if min(slices) < 1:
            raise r.fail(keys["slices"][1], "weights.slices entries must be >= 1")
        return SliceRegime(u_lo, u_hi, slices)
    if mode == "groups":
        _reject_unknown(r, keys, {"mode", "proportions"}, "weights")
        if "proportions" not in keys:
            return GroupRegime()
        pnode = keys["proportions"][1]
        if isinstance(pnode, yaml.ScalarNode):
            if r.string(pnode, "weights.proportions") != "westin-grid":
                raise r.fail(pnode, "weights.proportions must be a list of triples or 'westin-grid'")
            return GroupRegime(westin_grid())
        return GroupRegime(r.sequence(pnode, "weights.proportions",
                                      lambda n, w: _proportion_triple(r, n, w)))
    raise r.fail(mode_node, f"weights.mode must be 'slices' or 'groups', got {mode!r}")


def _positive(r: _Reader, node: yaml.Node, what: str) -> float:
    v = r.number(node, what)
    if not v > 0:
        raise r.fail(node, f"{what} must be > 0")
    return v


def parse_config(text: str, source: str = "<config>") -> tuple[ExperimentConfig, int | None]:
    """Parse and validate; returns the config and the seed given in the file (if any)."""
    r = _Reader(source)
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax: {exc.problem}", mark.line + 1 if mark else None, source) from None
    if root is None:
        raise ConfigError("empty config", 1, source)
    keys = r.mapping(root, "config")
    _reject_unknown(r, keys, _TOP_KEYS, "top-level")

    if "schema_version" not in keys:
        raise r.fail(root, "schema_version is required")
    version_node = keys["schema_version"][1]
    if r.integer(version_node, "schema_version") != SCHEMA_VERSION:
        raise r.fail(version_node, f"unsupported schema_version; this build reads {SCHEMA_VERSION}")
    for required in ("dataset", "weights"):
        if required not in keys:
            raise r.fail(root, f"{required} is required")

    seed = None
    if "seed" in keys:
        seed = r.integer(keys["seed"][1], "seed")
        if seed < 0:
            raise r.fail(keys["seed"][1], "seed must be >= 0")

    fields: dict[str, Any] = {
        "dataset": _dataset(r, keys["dataset"][1]),
        "regime": _weights(r, keys["weights"][1]),
        "epsilons": DEFAULT_EPSILONS,
    }
    if "epsilons" in keys:
        fields["epsilons"] = r.sequence(keys["epsilons"][1], "epsilons",
                                        lambda n, w: _positive(r, n, w))
    if "sim" in keys:
        sim = r.mapping(keys["sim"][1], "sim")
        _reject_unknown(r, sim, _SIM_KEYS, "sim")
        for name, (_, value) in sim.items():
            fields[name] = r.integer(value, f"sim.{name}")
    if "repeats" in keys:
        fields["repeats"] = r.integer(keys["repeats"][1], "repeats")
    if "split_fraction" in keys:
        fields["split_fraction"] = r.number(keys["split_fraction"][1], "split_fraction")
    if "arms" in keys:
        arms_node = keys["arms"][1]
        if isinstance(arms_node, yaml.SequenceNode) and not arms_node.value:
            fields["arms"] = ()
        else:
            fields["arms"] = r.sequence(arms_node, "arms", r.string)
    try:
        config = ExperimentConfig(seed=seed or 0, **fields)
    except InvalidParameterError as exc:
        raise r.fail(root, str(exc)) from None
    return config, seed


def load_config(path: str | Path) -> tuple[ExperimentConfig, int | None, str]:
    """Read a config file; also returns the sha256 of its bytes."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError("config is not valid UTF-8", None, str(path)) from None
    config, seed = parse_config(text, str(path))
    return config, seed, hashlib.sha256(raw).hexdigest()


def resolve_seed(cli_seed: int | None, env_value: str | None, file_seed: int | None) -> int:
    """Precedence: command line, then HDP_SEED, then the config file, then 0."""
    if cli_seed is not None:
        return cli_seed
    if env_value not in (None, ""):
        try:
            seed = int(env_value)
        except ValueError:
            raise ConfigError(f"HDP_SEED must be an integer, got {env_value!r}", None, "HDP_SEED") from None
        if seed < 0:
            raise ConfigError("HDP_SEED must be >= 0", None, "HDP_SEED")
        return seed
    return file_seed if file_seed is not None else 0
