"""Flat ``key = value`` run configuration covering every tunable of a run."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .envs import ENVS, env_spec
from .gcql import GCQLAgent, GCQLConfig
from .gctd3bc import GCTD3BCAgent, GCTD3BCConfig
from .oorb import OORBConfig
from .training import VARIANTS, Schedule

AGENTS = ("gcql", "gctd3bc")
DEFAULT_P = {"gcql": 0.5, "gctd3bc": 0.1}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    agent: str = "gcql"
    env: str = "pendulum"
    variant: str = "full"
    dataset: str = ""
    out_dir: str = ""
    seed: int = 0
    # replay buffer; p < 0 means "agent default"
    p: float = -1.0
    t_s: int = 1_000
    online_capacity: int = 2_000
    offline_capacity: int = 300_000
    batch_size: int = 256
    # schedule
    t_initial: int = 5_000
    t_on: int = 1_000
    t_off: int = 2_000
    s_t: int = 20_000
    eval_every: int = 1
    eval_episodes: int = 10
    reference_episodes: int = 100
    references: str = ""
    # shared learner settings
    gamma: float = 0.99
    tau: float = 0.005
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    # gcql
    alpha_cql: float = 1.0
    alpha_ent: float = 0.2
    n_penalty_samples: int = 10
    n_critics: int = 5
    subset_size: int = 2
    per_transition_subset: bool = False
    # gctd3bc
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    lambda_mode: str = "normalized"
    lambda_fixed: float = 1.0
    alpha_norm: float = 2.5
    explore_noise: float = 0.1

    def __post_init__(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {AGENTS}")
        if self.env not in ENVS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {sorted(ENVS)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.p < 0:
            object.__setattr__(self, "p", DEFAULT_P[self.agent])
        try:
            self.oorb_config()
            self.schedule()
            self.agent_config()
        except ValueError as err:
            raise ConfigError(str(err)) from None

    # -- parsing --------------------------------------------------------------

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in pairs.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, known[key].type, raw)
        return cls(**values)

    @classmethod
    def from_file(cls, path, overrides: list[str] | None = None) -> "RunConfig":
        pairs = parse_pairs(Path(path).read_text(encoding="utf-8").splitlines(), str(path))
        for item in overrides or []:
            pairs.update(parse_pairs([item], "--override"))
        return cls.from_pairs(pairs)

    def snapshot(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    # -- component configs ----------------------------------------------------

    def oorb_config(self) -> OORBConfig:
        return OORBConfig(self.p, self.t_s, self.online_capacity, self.offline_capacity, self.batch_size)

    def schedule(self) -> Schedule:
        return Schedule(self.t_initial, self.t_on, self.t_off, self.s_t, self.eval_every, self.eval_episodes)

    def agent_config(self) -> GCQLConfig | GCTD3BCConfig:
        if self.agent == "gcql":
            return GCQLConfig(self.gamma, self.alpha_cql, self.alpha_ent, self.n_penalty_samples, self.tau,
                              self.critic_lr, self.actor_lr, self.n_critics, self.subset_size,
                              tuple(self.hidden), self.per_transition_subset)
        return GCTD3BCConfig(self.gamma, self.policy_noise, self.noise_clip, self.policy_delay, self.tau,
                             self.lambda_mode, self.lambda_fixed, self.alpha_norm, self.critic_lr,
                             self.actor_lr, tuple(self.hidden), self.explore_noise)

    def build_agent(self):
        spec = env_spec(self.env)
        rng = np.random.default_rng([self.seed, 3])
        cls = GCQLAgent if self.agent == "gcql" else GCTD3BCAgent
        return cls.create(spec.obs_dim, spec.low, spec.high, self.agent_config(), rng)

    def output_dir(self) -> Path:
        return Path(self.out_dir or os.environ.get("APL_OUT_DIR", "runs"))


def parse_pairs(lines: list[str], origin: str) -> dict[str, str]:
    pairs = {}
    for n, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{origin}:{n}: expected key=value, got {line.strip()!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if not key:
            raise ConfigError(f"{origin}:{n}: empty key")
        pairs[key] = value
    return pairs


def _coerce(key: str, annotation, raw: str):
    kind = str(annotation)
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
