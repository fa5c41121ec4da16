"""Offline dataset files and behaviour-tier dataset generation.

File layout (newline-delimited JSON): line 1 is the header object, every
following line one record ``{"s": [...], "a": [...], "r": x, "s2": [...], "done": 0|1}``.
Floats are written in shortest round-trip form, so reading back is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import make_env
from .oorb import Batch

FORMAT_VERSION = 1
TIERS = ("random", "medium", "expert", "medium-replay", "medium-expert")
EXPERT_NOISE = 0.05  # fraction of the action half-range
MEDIUM_EXPERT_PROB = 0.5


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class DimensionMismatchError(DatasetFormatError):
    pass


class RecordValueError(DatasetFormatError):
    pass


@dataclass
class Dataset:
    env_name: str
    behavior_tag: str
    generator_seed: int
    data: Batch
    provenance: list[str] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    @property
    def obs_dim(self) -> int:
        return self.data.states.shape[1]

    @property
    def act_dim(self) -> int:
        return self.data.actions.shape[1]

    @property
    def n_records(self) -> int:
        return len(self.data)

    def header(self) -> dict:
        h = {
            "format_version": self.format_version,
            "env_name": self.env_name,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "n_records": self.n_records,
            "behavior_tag": self.behavior_tag,
            "generator_seed": self.generator_seed,
        }
        if self.provenance:
            h["provenance"] = list(self.provenance)
        return h


def write_dataset(path, dataset: Dataset) -> None:
    d = dataset.data
    for name in ("states", "actions", "rewards", "next_states"):
        if not np.all(np.isfinite(getattr(d, name))):
            raise ValueError(f"dataset {name} contain non-finite values")
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(dataset.header()) + "\n")
        for i in range(len(d)):
            rec = {"s": d.states[i].tolist(), "a": d.actions[i].tolist(), "r": float(d.rewards[i]),
                   "s2": d.next_states[i].tolist(), "done": int(d.done[i] != 0.0)}
            f.write(json.dumps(rec) + "\n")


def _vector(rec: dict, key: str, dim: int, line: int) -> list[float]:
    v = rec.get(key)
    if not isinstance(v, list):
        raise RecordValueError(f"field {key!r} must be an array", line)
    if len(v) != dim:
        raise DimensionMismatchError(f"field {key!r} has {len(v)} entries, header says {dim}", line)
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise RecordValueError(f"field {key!r} must hold numbers", line)
    return v


def read_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise TruncatedFileError("missing header", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise DatasetFormatError(f"header is not valid JSON ({err.msg})", 1) from None
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format_version {header.get('format_version')!r} is not supported (expected {FORMAT_VERSION})", 1)
    try:
        obs_dim, act_dim, n = int(header["obs_dim"]), int(header["act_dim"]), int(header["n_records"])
        env_name, tag, seed = str(header["env_name"]), str(header["behavior_tag"]), int(header["generator_seed"])
    except (KeyError, TypeError, ValueError) as err:
        raise DatasetFormatError(f"bad or missing header field: {err}", 1) from None

    records = lines[1:]
    if len(records) < n:
        raise TruncatedFileError(f"header declares {n} records but the file ends after {len(records)}",
                                 len(records) + 2)
    if len(records) > n and any(r.strip() for r in records[n:]):
        raise DatasetFormatError(f"more records than the {n} declared in the header", n + 2)

    s = np.empty((n, obs_dim))
    a = np.empty((n, act_dim))
    r = np.empty(n)
    s2 = np.empty((n, obs_dim))
    done = np.empty(n)
    for i, raw in enumerate(records[:n]):
        line = i + 2
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as err:
            raise DatasetFormatError(f"record is not valid JSON ({err.msg})", line) from None
        if not isinstance(rec, dict):
            raise RecordValueError("record must be an object", line)
        s[i] = _vector(rec, "s", obs_dim, line)
        a[i] = _vector(rec, "a", act_dim, line)
        s2[i] = _vector(rec, "s2", obs_dim, line)
        rew = rec.get("r")
        if not isinstance(rew, (int, float)) or isinstance(rew, bool) or not math.isfinite(rew):
            raise RecordValueError("reward must be a finite number", line)
        r[i] = rew
        d = rec.get("done")
        if d not in (0, 1) or isinstance(d, bool) or isinstance(d, float):
            raise RecordValueError(f"done must be 0 or 1, got {d!r}", line)
        done[i] = d
    return Dataset(env_name, tag, seed, Batch(s, a, r, s2, done),
                   list(header.get("provenance", [])), FORMAT_VERSION)


def episode_returns(data: Batch) -> np.ndarray:
    """Undiscounted returns of the complete episodes in a chronological log.

    An episode ends at a terminal record or where the next record does not start
    from this record's successor state. A trailing partial episode is dropped.
    """
    n = len(data)
    if n == 0:
        return np.zeros(0)
    breaks = data.done.astype(bool).copy()
    breaks[:-1] |= np.any(data.next_states[:-1] != data.states[1:], axis=1)
    returns = []
    start = 0
    for i in np.flatnonzero(breaks):
        returns.append(math.fsum(data.rewards[start:i + 1]))
        start = i + 1
    return np.array(returns)


# Generation

def _behavior_action(env, tag: str, rng: np.random.Generator) -> np.ndarray:
    spec = env.spec
    if tag == "random":
        return env.random_action(rng)
    if tag == "expert":
        a = env.expert_action() + rng.standard_normal(spec.act_dim) * EXPERT_NOISE * spec.half_range
        return np.clip(a, spec.low, spec.high)
    if tag == "medium":
        use_expert = rng.random() < MEDIUM_EXPERT_PROB
        random_a = env.random_action(rng)
        return env.expert_action() if use_expert else random_a
    raise ValueError(f"unknown behaviour tag {tag!r}")


def _rollout_log(env_name: str, tag: str, n: int, seed: int) -> Batch:
    env = make_env(env_name)
    rng = np.random.default_rng([seed, 11])
    seeds = np.random.default_rng([seed, 12])
    s = np.empty((n, env.spec.obs_dim))
    a = np.empty((n, env.spec.act_dim))
    r = np.empty(n)
    s2 = np.empty((n, env.spec.obs_dim))
    done = np.zeros(n)
    obs = env.reset(int(seeds.integers(2**31)))
    for i in range(n):
        act = _behavior_action(env, tag, rng)
        res = env.step(act)
        s[i], a[i], r[i], s2[i], done[i] = obs, act, res.reward, res.observation, float(res.terminal)
        obs = env.reset(int(seeds.integers(2**31))) if (res.terminal or res.truncated) else res.observation
    return Batch(s, a, r, s2, done)


def behavior_episode_returns(env_name: str, tag: str, episodes: int, seed: int) -> np.ndarray:
    """Returns of ``episodes`` full episodes of a scripted behaviour tier."""
    env = make_env(env_name)
    rng = np.random.default_rng([seed, 11])
    seeds = np.random.default_rng([seed, 12])
    out = []
    for _ in range(episodes):
        env.reset(int(seeds.integers(2**31)))
        total = 0.0
        while True:
            res = env.step(_behavior_action(env, tag, rng))
            total += res.reward
            if res.terminal or res.truncated:
                break
        out.append(total)
    return np.array(out)


def generate_dataset(env_name: str, tag: str, n: int, seed: int, replay_config=None) -> Dataset:
    """Dataset of ``n`` transitions from behaviour tier ``tag``.

    ``medium-replay`` is the chronological interaction log of a GCQL agent
    trained online from scratch until its evaluation return reaches the
    medium tier's mean return; ``n`` caps that log.
    """
    if tag not in TIERS:
        raise ValueError(f"unknown behaviour tag {tag!r}; choose from {TIERS}")
    if n < 1:
        raise ValueError("n must be positive")
    if tag in ("random", "medium", "expert"):
        return Dataset(env_name, tag, seed, _rollout_log(env_name, tag, n, seed), [tag])
    if tag == "medium-expert":
        half = n // 2
        if half < 1:
            raise ValueError("medium-expert needs n >= 2")
        med = _rollout_log(env_name, "medium", half, seed)
        exp = _rollout_log(env_name, "expert", half, seed + 1)
        return Dataset(env_name, tag, seed, Batch.concatenate([med, exp]), ["medium", "expert"])
    from .replay_gen import medium_replay_log
    return Dataset(env_name, tag, seed, medium_replay_log(env_name, n, seed, replay_config), [tag])
