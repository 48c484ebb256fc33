"""TOML experiment configuration.

A config file has top-level run parameters plus ``[init]``, ``[kernel]``,
optional ``[strategy]`` and any number of ``[[cones]]`` tables.  Every
:class:`ConfigError` raised here names the offending key, dotted with its
table (``init.N``, ``cones[1].c``).
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import HardSphereDSMC, NullKernel, Thermalize
from .errors import ConfigError
from .functionals import ConeSpec, PairReduceStrategy
from .harness import ExperimentConfig
from .phase import FromFile, GaussianCloud, Ring, TwoBeam

INIT_KINDS = {"gaussian_cloud": GaussianCloud, "two_beam": TwoBeam, "ring": Ring,
              "from_file": FromFile}
KERNEL_KINDS = {"null": NullKernel, "hard_sphere_dsmc": HardSphereDSMC, "thermalize": Thermalize}
TOP_LEVEL = ("dt", "T_end", "diag_every", "pair_every", "pair_refine_until", "D_radius",
             "interaction_R", "master_seed", "kappa", "output")
REQUIRED = ("dt", "T_end", "init", "kernel")
TUPLE_FIELDS = ("center_x", "center_xi")


def _build(cls, table: dict, section: str, drop=("kind",)):
    allowed = {f for f in cls.__dataclass_fields__ if f not in drop}
    params = {}
    for key, value in table.items():
        if key in drop:
            continue
        if key not in allowed:
            raise ConfigError(f"unknown key {section}.{key}", key=f"{section}.{key}")
        params[key] = tuple(value) if key in TUPLE_FIELDS else value
    try:
        return cls(**params)
    except ConfigError as exc:
        name = f"{section}.{exc.key}" if exc.key else section
        raise ConfigError(f"{section}: {exc}", key=name) from None
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}", key=section) from None


def _kinded(table, kinds: dict, section: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table", key=section)
    kind = table.get("kind")
    if kind not in kinds:
        raise ConfigError(f"{section}.kind must be one of {sorted(kinds)}, got {kind!r}",
                          key=f"{section}.kind")
    obj = _build(kinds[kind], table, section)
    try:
        obj.validate()
    except ConfigError as exc:
        name = f"{section}.{exc.key}" if exc.key else section
        raise ConfigError(f"{section}: {exc}", key=name) from None
    return obj


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed config mapping and build the experiment config."""
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", key=key)
    known = set(TOP_LEVEL) | {"init", "kernel", "strategy", "cones"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", key=key)
    init = _kinded(raw["init"], INIT_KINDS, "init")
    if isinstance(init, FromFile) and base_dir is not None and not Path(init.path).is_absolute():
        init = FromFile(str(base_dir / init.path))
    kernel = _kinded(raw["kernel"], KERNEL_KINDS, "kernel")
    strategy = _build(PairReduceStrategy, raw.get("strategy", {}), "strategy", drop=())
    cones = raw.get("cones", [])
    if not isinstance(cones, list):
        raise ConfigError("cones must be an array of tables", key="cones")
    cones = tuple(_build(ConeSpec, c, f"cones[{q}]", drop=()) for q, c in enumerate(cones))
    top = {k: raw[k] for k in TOP_LEVEL if k in raw}
    for key, value in top.items():
        if key == "output":
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
    try:
        return ExperimentConfig(init=init, kernel=kernel, strategy=strategy, cones=cones, **top)
    except ConfigError as exc:
        raise ConfigError(str(exc), key=exc.key) from None


def read_config(path) -> tuple[ExperimentConfig, dict]:
    """Parse ``path``; returns the config and the raw mapping."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key="config") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}", key="config") from None
    return config_from_dict(raw, path.parent), raw


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()
