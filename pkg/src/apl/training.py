"""Offline pre-training followed by interleaved interaction and update phases,
with periodic evaluation on a random-to-expert normalized scale."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .envs import Env, make_env
from .oorb import OORB, ONLINE, Transition, weight_for

log = logging.getLogger(__name__)

VARIANTS = ("full", "WG", "WGO")
METRIC_COLUMNS = ("iteration", "s_on", "mean_return", "normalized_score",
                  "critic_loss", "penalty_value", "policy_objective")


class Agent(Protocol):
    name: str

    def update(self, sbatch, weight: float, rng: np.random.Generator) -> dict: ...

    def explore(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def act(self, obs: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Schedule:
    t_initial: int = 5_000
    t_on: int = 1_000
    t_off: int = 2_000
    s_t: int = 20_000
    eval_every: int = 1
    eval_episodes: int = 10

    def __post_init__(self):
        if self.t_initial < 0:
            raise ValueError("t_initial must be non-negative")
        for name in ("t_on", "t_off", "s_t", "eval_every", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def normalized_score(raw: float, random_ref: float, expert_ref: float) -> float:
    """0 for the uniform-random policy, 100 for the scripted expert."""
    if not expert_ref > random_ref:
        raise ValueError(f"degenerate score scale: expert {expert_ref} <= random {random_ref}")
    return 100.0 * (raw - random_ref) / (expert_ref - random_ref)


def rollout(env: Env, policy: Callable[[Env, np.ndarray], np.ndarray], seed: int) -> float:
    obs = env.reset(seed)
    total = 0.0
    while True:
        step = env.step(policy(env, obs))
        total += step.reward
        if step.terminal or step.truncated:
            return total
        obs = step.observation


def evaluate(policy: Callable[[np.ndarray], np.ndarray], env_name: str, episodes: int, seed: int) -> float:
    """Mean undiscounted return of a deterministic policy; episode ``i`` uses env seed ``seed + i``."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    env = make_env(env_name)
    returns = [rollout(env, lambda _e, o: policy(o), seed + i) for i in range(episodes)]
    return math.fsum(returns) / episodes


def behavior_returns(env_name: str, behavior: str, episodes: int, seed: int) -> np.ndarray:
    """Per-episode returns of the uniform-random or scripted-expert policy."""
    env = make_env(env_name)
    rng = np.random.default_rng([seed, 1])
    if behavior == "random":
        act = lambda e, _o: e.random_action(rng)  # noqa: E731
    elif behavior == "expert":
        act = lambda e, _o: e.expert_action()  # noqa: E731
    else:
        raise ValueError(f"unknown reference behaviour {behavior!r}")
    return np.array([rollout(env, act, seed + i) for i in range(episodes)])


@dataclass(frozen=True)
class References:
    random_ref: float
    expert_ref: float
    episodes: int = 0
    seed: int = 0

    def score(self, raw: float) -> float:
        return normalized_score(raw, self.random_ref, self.expert_ref)


def compute_references(env_name: str, seed: int, episodes: int) -> References:
    rand = behavior_returns(env_name, "random", episodes, seed)
    expert = behavior_returns(env_name, "expert", episodes, seed)
    return References(math.fsum(rand) / episodes, math.fsum(expert) / episodes, episodes, seed)


@dataclass
class EvalRow:
    iteration: int
    s_on: int
    mean_return: float
    normalized_score: float
    critic_loss: float | None
    penalty_value: float | None
    policy_objective: float | None


@dataclass
class RunRecord:
    seed: int
    config: dict
    references: References | None = None
    rows: list[EvalRow] = field(default_factory=list)
    # one entry per update step: (phase, source, weight)
    batch_log: list[tuple[str, str, float]] = field(default_factory=list)

    def append(self, row: EvalRow) -> None:
        if self.rows and row.s_on < self.rows[-1].s_on:
            raise ValueError("evaluation rows must be ordered by s_on")
        self.rows.append(row)

    def final_score(self, last: int = 3) -> float:
        """Mean normalized score over the last ``last`` evaluations after iteration 0."""
        online = [r.normalized_score for r in self.rows if r.iteration > 0] or \
                 [r.normalized_score for r in self.rows]
        tail = online[-last:]
        return math.fsum(tail) / len(tail)

    def pretrain_score(self) -> float:
        return next(r.normalized_score for r in self.rows if r.iteration == 0)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in METRIC_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _mean_of(values: list) -> float | None:
    xs = [v for v in values if v is not None]
    return math.fsum(xs) / len(xs) if xs else None


class Trainer:
    """Owns the buffers, counters and random streams of one training run.

    The master seed is split into independent streams for batch sampling,
    agent updates, exploration and environment resets, so that changing how
    batches are weighted never changes which batches are drawn.
    """

    def __init__(self, agent: Agent, env_name: str, oorb: OORB, schedule: Schedule,
                 variant: str = "full", seed: int = 0, references: References | None = None,
                 config: dict | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        self.agent = agent
        self.env_name = env_name
        self.env = make_env(env_name)
        self.oorb = oorb
        self.schedule = schedule
        self.variant = variant
        self.seed = seed
        self.references = references
        streams = np.random.SeedSequence(seed).spawn(4)
        self.sample_rng, self.update_rng, self.explore_rng, self.env_rng = (
            np.random.default_rng(s) for s in streams)
        self.eval_seed = int(np.random.default_rng([seed, 2]).integers(2**31))
        self.s_on = 0
        self.update_steps = 0
        self.iteration = 0
        self.record = RunRecord(seed, dict(config or {}), references)
        self._obs = None
        self._pending: list[dict] = []

    # -- updates -------------------------------------------------------------

    def _update_once(self, phase: str) -> dict:
        sbatch = self.oorb.sample(self.s_on, self.sample_rng, force_offline=self.variant == "WGO")
        weight = 1.0 if self.variant in ("WG", "WGO") else weight_for(sbatch.source)
        info = self.agent.update(sbatch, weight, self.update_rng)
        self.update_steps += 1
        self.record.batch_log.append((phase, sbatch.source, weight))
        self._pending.append(info)
        return info

    def pretrain(self) -> None:
        if len(self.oorb.offline) == 0:
            raise RuntimeError("offline buffer is empty; load a dataset before pre-training")
        if len(self.oorb.online) != 0:
            raise RuntimeError("online buffer must be empty before pre-training")
        for _ in range(self.schedule.t_initial):
            self._update_once("pretrain")

    # -- interaction ---------------------------------------------------------

    def _new_episode(self) -> np.ndarray:
        return self.env.reset(int(self.env_rng.integers(2**31)))

    def collect(self, steps: int) -> None:
        if self._obs is None:
            self._obs = self._new_episode()
        for _ in range(steps):
            obs = self._obs
            action = self.agent.explore(obs, self.explore_rng)
            res = self.env.step(action)
            self.oorb.push_online(Transition(obs, np.clip(action, self.env.spec.low, self.env.spec.high),
                                             res.reward, res.observation, res.terminal))
            self._obs = self._new_episode() if (res.terminal or res.truncated) else res.observation
        self.s_on += steps

    # -- evaluation ----------------------------------------------------------

    def evaluate_now(self) -> EvalRow:
        ret = evaluate(self.agent.act, self.env_name, self.schedule.eval_episodes, self.eval_seed)
        score = self.references.score(ret) if self.references is not None else float("nan")
        pending, self._pending = self._pending, []
        row = EvalRow(self.iteration, self.s_on, ret, score,
                      _mean_of([p["critic_loss"] for p in pending]),
                      _mean_of([p["penalty_value"] for p in pending]),
                      _mean_of([p["policy_objective"] for p in pending]))
        self.record.append(row)
        log.info("iter %d  s_on %d  return %.2f  score %.1f", row.iteration, row.s_on, ret, score)
        return row

    def run(self, stop_when: Callable[[EvalRow], bool] | None = None) -> RunRecord:
        """Interaction/update iterations until ``s_on`` exceeds the online budget.

        Evaluates once before the first iteration (iteration 0) and then every
        ``eval_every`` iterations. ``stop_when`` may end the run early after an
        evaluation.
        """
        sch = self.schedule
        row = self.evaluate_now()
        if stop_when is not None and stop_when(row):
            return self.record
        while True:
            self.collect(sch.t_on)
            for _ in range(sch.t_off):
                self._update_once("online")
            self.iteration += 1
            if self.iteration % sch.eval_every == 0:
                row = self.evaluate_now()
                if stop_when is not None and stop_when(row):
                    break
            if self.s_on > sch.s_t:
                break
        return self.record

    def online_source_count(self) -> int:
        return sum(1 for _, src, _ in self.record.batch_log if src == ONLINE)

