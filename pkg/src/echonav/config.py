"""Run configuration: TOML files plus ``--set key=value`` overrides.

Sections mirror the package modules (``fusion``, ``obs``, ``policy``, ``ppo``,
``world``, ``reward``, ``run``).  Unknown sections or keys are rejected, and
values are type-checked against each field's default before anything runs.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .attention import FusionConfig
from .encoders import ObsConfig
from .errors import ConfigError
from .policy import PolicyConfig
from .world import SPLITS, RewardConfig, WorldConfig


@dataclass
class PPOHyper:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    lr: float = 2.5e-4
    horizon: int = 128
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ConfigError("ppo.gamma and ppo.lam must lie in (0, 1]")
        if self.clip_eps < 0:
            raise ConfigError("ppo.clip_eps must be >= 0")
        if self.epochs < 1 or self.minibatches < 1 or self.horizon < 1:
            raise ConfigError("ppo.epochs, ppo.minibatches and ppo.horizon must be >= 1")
        if self.lr <= 0 or self.value_coef < 0 or self.entropy_coef < 0 or self.max_grad_norm < 0:
            raise ConfigError("ppo: lr must be positive; coefficients and max_grad_norm nonnegative")


@dataclass
class RunSection:
    seed: int = 0
    updates: int = 300
    num_envs: int = 8
    train_split: str = "heard_train"
    val_split: str = "heard_val"
    val_interval: int = 25
    val_episodes: int = 20
    eval_batch: int = 16
    workers: int = 1
    deterministic: bool = True
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("train_split", "val_split"):
            if getattr(self, name) not in SPLITS:
                raise ConfigError(f"run.{name} must be one of {SPLITS}, got {getattr(self, name)!r}")
        if self.updates < 0 or self.val_interval < 0 or self.val_episodes < 0:
            raise ConfigError("run.updates, run.val_interval and run.val_episodes must be >= 0")
        if self.num_envs < 1 or self.eval_batch < 1 or self.workers < 1:
            raise ConfigError("run.num_envs, run.eval_batch and run.workers must be >= 1")


SECTIONS = {
    "fusion": FusionConfig,
    "obs": ObsConfig,
    "policy": PolicyConfig,
    "ppo": PPOHyper,
    "world": WorldConfig,
    "reward": RewardConfig,
    "run": RunSection,
}
# excluded from checkpoint snapshots so identical runs in different directories match byte for byte
SNAPSHOT_EXCLUDE = {("run", "out_dir")}


@dataclass
class RunConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    obs: ObsConfig = field(default_factory=ObsConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    ppo: PPOHyper = field(default_factory=PPOHyper)
    world: WorldConfig = field(default_factory=WorldConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.fusion.T != self.obs.Tw:
            raise ConfigError(f"fusion.T ({self.fusion.T}) must equal obs.Tw ({self.obs.Tw})")
        if self.fusion.N != self.obs.n_regions:
            raise ConfigError(f"fusion.N ({self.fusion.N}) must equal the patch count of obs "
                              f"({self.obs.n_regions} = ({self.obs.Hv}/{self.obs.patch})*({self.obs.Wv}/{self.obs.patch}))")
        chunks = math.ceil(self.ppo.minibatches / self.run.num_envs)
        if self.ppo.horizon % chunks:
            raise ConfigError(f"ppo.horizon ({self.ppo.horizon}) must be divisible by "
                              f"ceil(minibatches / num_envs) = {chunks}")

    def to_dict(self, snapshot: bool = False) -> dict:
        out = {}
        for sec in SECTIONS:
            values = dataclasses.asdict(getattr(self, sec))
            if snapshot:
                values = {k: v for k, v in values.items() if (sec, k) not in SNAPSHOT_EXCLUDE}
            out[sec] = values
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not (isinstance(value, int) or (isinstance(value, float) and value.is_integer())):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return list(value)
    return value


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    built = {}
    for sec, cls in SECTIONS.items():
        values = data.get(sec, {})
        if not isinstance(values, dict):
            raise ConfigError(f"[{sec}] must be a table")
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(values) - names
        if bad:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(bad))}")
        kwargs = {k: _coerce(sec, k, v, getattr(defaults, k)) for k, v in values.items()}
        try:
            built[sec] = cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{sec}]: {exc}") from None
    return RunConfig(**built)


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def resolve_key(key: str) -> tuple:
    """``section.field`` or a bare field name that is unique across sections."""
    if "." in key:
        sec, name = key.split(".", 1)
        if sec not in SECTIONS:
            raise ConfigError(f"--set {key}: unknown section {sec!r}")
        if name not in {f.name for f in dataclasses.fields(SECTIONS[sec])}:
            raise ConfigError(f"--set {key}: unknown key {name!r} in [{sec}]")
        return sec, name
    hits = [sec for sec, cls in SECTIONS.items() if key in {f.name for f in dataclasses.fields(cls)}]
    if not hits:
        raise ConfigError(f"--set {key}: no such config key")
    if len(hits) > 1:
        raise ConfigError(f"--set {key}: ambiguous, qualify it as one of "
                          + ", ".join(f"{s}.{key}" for s in hits))
    return hits[0], key


def apply_overrides(data: dict, overrides) -> dict:
    data = {k: dict(v) for k, v in data.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        sec, name = resolve_key(key.strip())
        data.setdefault(sec, {})[name] = _parse_value(text.strip())
    return data


def load_config(path=None, overrides=()) -> RunConfig:
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(apply_overrides(data, overrides))


def loads(text: str) -> RunConfig:
    return from_dict(tomli.loads(text))
