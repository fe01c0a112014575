"""Run configuration: a dataclass tree loaded from YAML, with named profiles."""
from __future__ import annotations
import copy
import dataclasses
import hashlib
import json
import logging
import types
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from .baselines import BaselineConfig
from .noise import NoiseCalibration
from .types import ConfigError, NoiseKind
from .world import WorldParams

log = logging.getLogger(__name__)


class AgentKind(Enum):
    APF = "apf"
    BUG = "bug"
    DQN = "dqn"
    IQN = "iqn"
    DRIQN = "driqn"
    DRIQN_W = "driqn-w"

    @property
    def learned(self) -> bool:
        return self not in (AgentKind.APF, AgentKind.BUG)

    @property
    def distributional(self) -> bool:
        return self in (AgentKind.IQN, AgentKind.DRIQN, AgentKind.DRIQN_W)

    @property
    def robust(self) -> bool:
        return self in (AgentKind.DRIQN, AgentKind.DRIQN_W)


class Strategy(Enum):
    GREEDY = "greedy"
    ADAPTIVE = "adaptive"


class RestGradient(Enum):
    UNIFORM = "uniform"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class NoiseConfig:
    kinds: tuple[NoiseKind, ...] = (NoiseKind.GAUSSIAN, NoiseKind.POISSON)
    intensity: float = 0.6
    calibration: NoiseCalibration = NoiseCalibration()


@dataclass(frozen=True)
class NetworkConfig:
    hidden: int = 128
    n_cos: int = 64


@dataclass(frozen=True)
class DistRLConfig:
    n: int = 8
    n_prime: int = 8
    k: int = 32
    kappa: float = 1.0
    gamma: float = 0.99
    target_sync: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.2
    eta_min: float = 0.25


@dataclass(frozen=True)
class OptimConfig:
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    train_every: int = 1


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = 100_000
    min_fill: int = 1000
    batch_size: int = 32


@dataclass(frozen=True)
class DROConfig:
    lr_last: float | None = None       # None follows the scheduled learning rate
    shrink_cap: float | None = 1.0
    rest_gradient: RestGradient = RestGradient.UNIFORM
    qp_tol: float = 1e-12
    qp_max_iter: int = 20000


@dataclass(frozen=True)
class RunConfig:
    agent: AgentKind = AgentKind.DRIQN
    strategy: Strategy = Strategy.GREEDY
    seeds: tuple[int, ...] = (0, 1, 2)
    total_steps: int = 50_000
    eval_interval: int = 5000
    eval_envs: int = 15
    eval_seed_base: int = 10_000
    randomize_layout: bool = True
    desk_scale: bool = True
    energy_scale: float = 100.0
    world: WorldParams = WorldParams()
    noise: NoiseConfig = NoiseConfig()
    network: NetworkConfig = NetworkConfig()
    distrl: DistRLConfig = DistRLConfig()
    optim: OptimConfig = OptimConfig()
    replay: ReplayConfig = ReplayConfig()
    dro: DROConfig = DROConfig()
    baselines: BaselineConfig = BaselineConfig()

    @property
    def eval_seeds(self) -> list[int]:
        return [self.eval_seed_base + i for i in range(self.eval_envs)]

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


PROFILES: dict[str, dict] = {
    "desk": {},
    "full": {
        "seeds": list(range(9)),
        "total_steps": 1_500_000,
        "eval_interval": 10_000,
        "desk_scale": False,
    },
    "multi_noise": {
        "noise": {"kinds": ["gaussian", "poisson", "salt_pepper", "occlusion"], "intensity": 0.2},
        "strategy": "greedy",
    },
}


# ============================================================
# Building from documents
# ============================================================

def _coerce(tp, value, key: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None:
            return None
        (inner,) = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(inner, value, key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", key)
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{key}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"expected {len(args)} values, got {len(value)}", key)
        return tuple(_coerce(a, v, f"{key}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if dataclasses.is_dataclass(tp):
        if isinstance(value, tp):
            return value
        if not isinstance(value, dict):
            raise ConfigError(f"expected a mapping, got {value!r}", key)
        return _build(tp, value, key)
    if isinstance(tp, type) and issubclass(tp, Enum):
        if isinstance(value, tp):
            return value
        try:
            return tp(value)
        except ValueError:
            allowed = ", ".join(m.value for m in tp)
            raise ConfigError(f"{value!r} is not one of: {allowed}", key) from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    return value


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigError("unknown key", where)
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        kwargs[name] = _coerce(hints[name], value, key)
    return cls(**kwargs)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def validate(cfg: RunConfig) -> RunConfig:
    """Range checks the type coercion cannot express."""
    def require(ok: bool, key: str, message: str):
        if not ok:
            raise ConfigError(message, key)

    require(len(cfg.seeds) >= 1, "seeds", "at least one seed")
    require(cfg.total_steps > 0, "total_steps", "must be positive")
    require(cfg.eval_interval > 0, "eval_interval", "must be positive")
    require(cfg.eval_envs >= 1, "eval_envs", "at least one evaluation environment")
    require(cfg.energy_scale > 0.0, "energy_scale", "must be positive")
    require(len(cfg.noise.kinds) >= 1, "noise.kinds", "noise catalog is empty")
    require(len(set(cfg.noise.kinds)) == len(cfg.noise.kinds), "noise.kinds", "duplicate noise kind")
    require(0.0 <= cfg.noise.intensity <= 1.0, "noise.intensity", "must lie in [0, 1]")
    require(cfg.network.hidden >= 1 and cfg.network.n_cos >= 1, "network", "sizes must be positive")
    d = cfg.distrl
    require(d.n >= 1 and d.n_prime >= 1 and d.k >= 1, "distrl", "N, N' and K must be at least 1")
    require(d.kappa > 0.0, "distrl.kappa", "must be positive")
    require(0.0 <= d.gamma < 1.0, "distrl.gamma", "must lie in [0, 1)")
    require(d.target_sync >= 1, "distrl.target_sync", "must be at least 1")
    require(0.0 < d.eta_min <= 1.0, "distrl.eta_min", "must lie in (0, 1]")
    require(0.0 <= d.eps_end <= d.eps_start <= 1.0, "distrl.eps_start", "need 0 <= eps_end <= eps_start <= 1")
    o = cfg.optim
    require(o.lr_start > 0.0 and o.lr_end > 0.0, "optim", "learning rates must be positive")
    require(o.train_every >= 1, "optim.train_every", "must be at least 1")
    r = cfg.replay
    require(r.batch_size >= 1, "replay.batch_size", "must be at least 1")
    require(r.capacity >= len(cfg.noise.kinds), "replay.capacity", "smaller than the subgroup count")
    require(1 <= r.min_fill <= r.capacity // len(cfg.noise.kinds), "replay.min_fill",
            "must lie in [1, per-subgroup capacity]")
    require(cfg.dro.lr_last is None or cfg.dro.lr_last > 0.0, "dro.lr_last", "must be positive")
    require(cfg.dro.shrink_cap is None or cfg.dro.shrink_cap > 0.0, "dro.shrink_cap", "must be positive")
    require(cfg.dro.qp_max_iter >= 1, "dro.qp_max_iter", "must be at least 1")
    require(cfg.world.dt > 0.0, "world.dt", "must be positive")
    require(cfg.world.n_beams >= 1, "world.n_beams", "must be at least 1")
    return cfg


def config_from_dict(data: dict | None) -> RunConfig:
    data = dict(data or {})
    profile = data.pop("profile", None)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r} (known: {', '.join(PROFILES)})", "profile")
        data = _merge(PROFILES[profile], data)
    return validate(_build(RunConfig, data))


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("top level of a config document must be a mapping")
    cfg = config_from_dict(data)
    log.info("loaded config %s (agent=%s, hash=%s)", path, cfg.agent.value, config_hash(cfg)[:12])
    return cfg


def profile_config(name: str, **overrides) -> RunConfig:
    return config_from_dict({"profile": name, **overrides})


# ============================================================
# Documents and hashing
# ============================================================

def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: RunConfig) -> dict:
    return _plain(dataclasses.asdict(cfg))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON rendering of the config tree."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)
