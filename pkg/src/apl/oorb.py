"""Online-offline replay buffer.

A small FIFO buffer holds recent (near-on-policy) interaction data; a large
buffer holds the offline dataset plus every online transition. Each sample call
flips a biased coin to pick one source, and the whole batch comes from it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ONLINE = "online"
OFFLINE = "offline"


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    """Column-stacked transitions. ``done`` is 1.0 only for true terminals."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Batch":
        if not transitions:
            raise ValueError("cannot build a batch from zero transitions")
        return cls(
            np.array([t.state for t in transitions], dtype=np.float64),
            np.array([t.action for t in transitions], dtype=np.float64),
            np.array([t.reward for t in transitions], dtype=np.float64),
            np.array([t.next_state for t in transitions], dtype=np.float64),
            np.array([float(t.terminal) for t in transitions]),
        )

    def transitions(self) -> list[Transition]:
        return [Transition(self.states[i], self.actions[i], float(self.rewards[i]),
                           self.next_states[i], bool(self.done[i])) for i in range(len(self))]

    def take(self, idx) -> "Batch":
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.done[idx])

    @staticmethod
    def concatenate(batches: Iterable["Batch"]) -> "Batch":
        bs = list(batches)
        return Batch(*(np.concatenate([getattr(b, f) for b in bs])
                       for f in ("states", "actions", "rewards", "next_states", "done")))


@dataclass
class SourcedBatch:
    batch: Batch
    source: str

    @property
    def transitions(self) -> list[Transition]:
        return self.batch.transitions()


def weight_for(source: str) -> float:
    """Penalty weight: zero for online-buffer batches, one otherwise."""
    if source == ONLINE:
        return 0.0
    if source == OFFLINE:
        return 1.0
    raise ValueError(f"unknown batch source {source!r}")


class RingBuffer:
    """Fixed-capacity FIFO storage over preallocated arrays."""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.obs_dim, self.act_dim, self.capacity = obs_dim, act_dim, capacity
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r, s2, done) -> None:
        i = self.ptr
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s2
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, batch: Batch) -> None:
        n = len(batch)
        start = self.ptr
        if n > self.capacity:
            # only the newest `capacity` rows survive; they land where repeated adds would put them
            start = (self.ptr + n - self.capacity) % self.capacity
            batch = batch.take(slice(n - self.capacity, n))
        idx = (start + np.arange(len(batch))) % self.capacity
        self.states[idx] = batch.states
        self.actions[idx] = batch.actions
        self.rewards[idx] = batch.rewards
        self.next_states[idx] = batch.next_states
        self.done[idx] = batch.done
        self.ptr = int((self.ptr + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Storage slots from oldest to newest."""
        start = (self.ptr - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def contents(self) -> Batch:
        return self.gather(self.ordered_indices())

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.done[idx])


@dataclass(frozen=True)
class OORBConfig:
    p: float = 0.5
    t_s: int = 1_000
    online_capacity: int = 2_000
    offline_capacity: int = 300_000
    batch_size: int = 256

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.t_s < 0:
            raise ValueError("t_s must be non-negative")
        if not 1 <= self.online_capacity <= self.offline_capacity:
            raise ValueError("need 1 <= online_capacity <= offline_capacity")
        if not 1 <= self.batch_size <= self.online_capacity:
            raise ValueError("need 1 <= batch_size <= online_capacity")


class OORB:
    def __init__(self, obs_dim: int, act_dim: int, config: OORBConfig = OORBConfig()):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.config = config
        self.online = RingBuffer(obs_dim, act_dim, config.online_capacity)
        self.offline = RingBuffer(obs_dim, act_dim, config.offline_capacity)

    def _check_dims(self, states, actions) -> None:
        if states.shape[-1] != self.obs_dim or actions.shape[-1] != self.act_dim:
            raise ValueError(
                f"transition dims (obs {states.shape[-1]}, act {actions.shape[-1]}) do not match "
                f"buffer dims (obs {self.obs_dim}, act {self.act_dim})")

    def load_offline(self, dataset: Batch | Sequence[Transition]) -> None:
        batch = dataset if isinstance(dataset, Batch) else Batch.from_transitions(dataset)
        if len(batch) == 0:
            raise ValueError("offline dataset is empty")
        self._check_dims(batch.states, batch.actions)
        self._check_dims(batch.next_states, batch.actions)
        if len(self.offline) + len(batch) > self.offline.capacity:
            raise OverflowError(
                f"offline dataset of {len(batch)} transitions does not fit: buffer holds "
                f"{len(self.offline)} of {self.offline.capacity}")
        self.offline.extend(batch)

    def push_online(self, t: Transition) -> None:
        s = np.asarray(t.state, dtype=np.float64)
        a = np.asarray(t.action, dtype=np.float64)
        self._check_dims(s, a)
        if not np.isfinite(t.reward):
            raise ValueError("reward must be finite")
        self.online.add(s, a, t.reward, t.next_state, t.terminal)
        self.offline.add(s, a, t.reward, t.next_state, t.terminal)

    def choose_source(self, s_on: int, rng: np.random.Generator) -> str:
        p_s = rng.random()
        cfg = self.config
        if p_s < cfg.p and s_on > cfg.t_s and len(self.online) >= cfg.batch_size:
            return ONLINE
        return OFFLINE

    def sample(self, s_on: int, rng: np.random.Generator, force_offline: bool = False) -> SourcedBatch:
        """Draw one source-homogeneous batch, uniformly with replacement.

        The coin and the indices are always drawn, so ``force_offline`` leaves the
        random stream aligned with an unforced call.
        """
        n = self.config.batch_size
        if len(self.offline) < n:
            raise RuntimeError(
                f"offline buffer has {len(self.offline)} transitions, fewer than batch size {n}")
        source = self.choose_source(s_on, rng)
        if force_offline:
            source = OFFLINE
        buf = self.online if source == ONLINE else self.offline
        # filled slots are always 0..size-1, wrapped or not
        idx = (rng.random(n) * buf.size).astype(np.int64)
        return SourcedBatch(buf.gather(idx), source)
