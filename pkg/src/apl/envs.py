"""Seedable toy continuous-control tasks and their scripted experts.

``pendulum`` is the classic torque-limited swing-up (theta = 0 is upright).
``pointmass`` is a 2-D double integrator that must reach a goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    max_episode_steps: int
    dt: float

    def __post_init__(self):
        if len(self.action_low) != self.act_dim or len(self.action_high) != self.act_dim:
            raise ValueError("action bounds must have act_dim entries")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action_low must be below action_high in every dimension")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be at least 1")

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.action_low, dtype=np.float64)

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.action_high, dtype=np.float64)

    @property
    def half_range(self) -> np.ndarray:
        return (self.high - self.low) / 2.0


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    terminal: bool
    truncated: bool


class EpisodeOver(RuntimeError):
    pass


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


class Env:
    spec: EnvSpec

    def __init__(self):
        self.elapsed_steps = 0
        self.state = np.zeros(0)
        self.rng = np.random.default_rng(0)
        self._done = True

    def reset(self, seed: int) -> np.ndarray:
        self.rng = np.random.default_rng(seed)
        self.elapsed_steps = 0
        self._done = False
        self.state = self._initial_state()
        return self.observation()

    def set_state(self, state) -> np.ndarray:
        """Place the system in an explicit physical state and start a fresh episode."""
        self.state = np.array(state, dtype=np.float64)
        self.elapsed_steps = 0
        self._done = False
        return self.observation()

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeOver("episode has finished; call reset() before stepping again")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.size != self.spec.act_dim:
            raise ValueError(f"action has {a.size} components, expected {self.spec.act_dim}")
        a = np.clip(a, self.spec.low, self.spec.high)
        reward, terminal = self._advance(a)
        self.elapsed_steps += 1
        truncated = not terminal and self.elapsed_steps >= self.spec.max_episode_steps
        self._done = terminal or truncated
        return StepResult(self.observation(), reward, terminal, truncated)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.spec.low, self.spec.high)

    def expert_action(self) -> np.ndarray:
        return scripted_expert_action(self.spec.name, self.state)

    def _initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, action: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError

    def observation(self) -> np.ndarray:
        raise NotImplementedError


class Pendulum(Env):
    """State ``(theta, theta_dot)``; observation ``(cos theta, sin theta, theta_dot)``."""

    g = 10.0
    m = 1.0
    l = 1.0
    max_speed = 8.0
    max_torque = 2.0

    spec = EnvSpec("pendulum", 3, 1, (-2.0,), (2.0,), 200, 0.05)

    def _initial_state(self) -> np.ndarray:
        return np.array([self.rng.uniform(-math.pi, math.pi), self.rng.uniform(-1.0, 1.0)])

    def _advance(self, action: np.ndarray) -> tuple[float, bool]:
        theta, theta_dot = float(self.state[0]), float(self.state[1])
        u = float(action[0])
        dt = self.spec.dt
        cost = wrap_angle(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2
        new_dot = theta_dot + (3.0 * self.g / (2.0 * self.l)) * math.sin(theta) * dt \
            + (3.0 / (self.m * self.l ** 2)) * u * dt
        new_dot = min(max(new_dot, -self.max_speed), self.max_speed)
        self.state = np.array([theta + new_dot * dt, new_dot])
        return -cost, False

    def observation(self) -> np.ndarray:
        theta, theta_dot = self.state
        return np.array([math.cos(theta), math.sin(theta), theta_dot])


class PointMass(Env):
    """State ``(x, y, vx, vy, goal_x, goal_y)``, observed directly.

    Actions are accelerations; velocity is clamped to +-2 per axis and position to
    the arena [-2, 2]^2.
    """

    max_speed = 2.0
    arena = 2.0
    goal_radius = 0.05

    spec = EnvSpec("pointmass", 6, 2, (-1.0, -1.0), (1.0, 1.0), 100, 0.1)

    def _initial_state(self) -> np.ndarray:
        pos = self.rng.uniform(-1.0, 1.0, size=2)
        goal = self.rng.uniform(-1.0, 1.0, size=2)
        return np.concatenate([pos, np.zeros(2), goal])

    def _advance(self, action: np.ndarray) -> tuple[float, bool]:
        dt = self.spec.dt
        pos, vel, goal = self.state[:2], self.state[2:4], self.state[4:]
        vel = np.clip(vel + action * dt, -self.max_speed, self.max_speed)
        pos = np.clip(pos + vel * dt, -self.arena, self.arena)
        self.state = np.concatenate([pos, vel, goal])
        dist = float(np.linalg.norm(pos - goal))
        reward = -dist - 0.01 * float(action @ action)
        return reward, dist < self.goal_radius

    def observation(self) -> np.ndarray:
        return self.state.copy()


ENVS = {"pendulum": Pendulum, "pointmass": PointMass}


def make_env(name: str) -> Env:
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None


def env_spec(name: str) -> EnvSpec:
    return make_env(name).spec


# Scripted experts

PENDULUM_SWITCH_ANGLE = 0.6
PENDULUM_GAINS = (10.0, 2.0)  # stabiliser (angle, rate)
PENDULUM_ENERGY_GAIN = 2.0
POINTMASS_GAINS = (4.0, 3.0)  # PD (position, velocity)


def _pendulum_expert(theta: float, theta_dot: float) -> float:
    th = wrap_angle(theta)
    if abs(th) < PENDULUM_SWITCH_ANGLE:
        k1, k2 = PENDULUM_GAINS
        u = -k1 * th - k2 * theta_dot
    else:
        # E = 0 at upright rest; dE/dt is proportional to u * theta_dot
        energy = 0.5 * theta_dot ** 2 + 15.0 * (math.cos(th) - 1.0)
        direction = theta_dot if theta_dot != 0.0 else 1.0
        u = -PENDULUM_ENERGY_GAIN * energy * math.copysign(1.0, direction)
    return min(max(u, -2.0), 2.0)


def scripted_expert_action(env_name: str, state) -> np.ndarray:
    """Hand-designed controller acting on the physical state of ``env_name``."""
    s = np.asarray(state, dtype=np.float64)
    if env_name == "pendulum":
        return np.array([_pendulum_expert(float(s[0]), float(s[1]))])
    if env_name == "pointmass":
        kp, kd = POINTMASS_GAINS
        u = kp * (s[4:6] - s[0:2]) - kd * s[2:4]
        return np.clip(u, -1.0, 1.0)
    raise ValueError(f"no scripted expert for environment {env_name!r}")
