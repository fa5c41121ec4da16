"""Greedy-conservative TD3+BC.

Twin critics with clipped double-Q targets and target-policy smoothing. The
deterministic actor maximises ``lambda * Q1(s, pi(s))`` and, on offline-buffer
batches only, also pays a behaviour-cloning cost ``||pi(s) - a||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (AdamState, MLPSpec, NonFiniteError, adam_step, backward, forward_with_cache,
                 init_params, mlp_forward, polyak_update)
from .oorb import Batch, SourcedBatch, weight_for


@dataclass(frozen=True)
class GCTD3BCConfig:
    gamma: float = 0.99
    # in units of the action half-range
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    tau: float = 0.005
    lambda_mode: str = "normalized"
    lambda_fixed: float = 1.0
    alpha_norm: float = 2.5
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    explore_noise: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.policy_noise < 0 or self.noise_clip < 0:
            raise ValueError("policy_noise and noise_clip must be non-negative")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be at least 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.lambda_mode not in ("fixed", "normalized"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.lambda_fixed <= 0 or self.alpha_norm <= 0:
            raise ValueError("lambda_fixed and alpha_norm must be positive")


@dataclass
class TwinCritics:
    critic_spec: MLPSpec
    actor_spec: MLPSpec
    critics: list[np.ndarray]
    critic_targets: list[np.ndarray]
    actor: np.ndarray
    actor_target: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray

    @classmethod
    def create(cls, obs_dim: int, action_low, action_high, hidden, rng: np.random.Generator) -> "TwinCritics":
        low = np.asarray(action_low, dtype=np.float64)
        high = np.asarray(action_high, dtype=np.float64)
        critic_spec = MLPSpec((obs_dim + low.size, *hidden, 1))
        actor_spec = MLPSpec((obs_dim, *hidden, low.size), output_activation="tanh")
        critics = [init_params(critic_spec, rng) for _ in range(2)]
        actor = init_params(actor_spec, rng)
        return cls(critic_spec, actor_spec, critics, [c.copy() for c in critics],
                   actor, actor.copy(), low, high)

    @property
    def scale(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0

    @property
    def offset(self) -> np.ndarray:
        return (self.action_high + self.action_low) / 2.0

    def policy(self, states, target: bool = False) -> np.ndarray:
        params = self.actor_target if target else self.actor
        return mlp_forward(self.actor_spec, params, states) * self.scale + self.offset

    def q(self, i: int, states, actions, target: bool = False) -> np.ndarray:
        params = self.critic_targets[i] if target else self.critics[i]
        return mlp_forward(self.critic_spec, params, np.concatenate([states, actions], axis=1))[:, 0]


def smoothed_next_actions(model: TwinCritics, next_states: np.ndarray, cfg: GCTD3BCConfig,
                          rng: np.random.Generator) -> np.ndarray:
    base = model.policy(next_states, target=True)
    eps = rng.standard_normal(base.shape) * (cfg.policy_noise * model.scale)
    clip = cfg.noise_clip * model.scale
    return np.clip(base + np.clip(eps, -clip, clip), model.action_low, model.action_high)


def td3_target(model: TwinCritics, batch: Batch, cfg: GCTD3BCConfig, rng: np.random.Generator) -> np.ndarray:
    a2 = smoothed_next_actions(model, batch.next_states, cfg, rng)
    q_min = np.minimum(model.q(0, batch.next_states, a2, target=True),
                       model.q(1, batch.next_states, a2, target=True))
    return batch.rewards + cfg.gamma * (1.0 - batch.done) * q_min


def td3_critic_update(model: TwinCritics, sbatch: SourcedBatch, cfg: GCTD3BCConfig,
                      opt_states: list[AdamState], rng: np.random.Generator
                      ) -> tuple[list[AdamState], list[float]]:
    """Mean-squared TD step for both critics against a shared target; updates ``model`` in place."""
    batch = sbatch.batch
    if len(batch) == 0:
        raise ValueError("critic update needs a non-empty batch")
    y = td3_target(model, batch, cfg, rng)
    x = np.concatenate([batch.states, batch.actions], axis=1)
    new_states, losses = [], []
    for i in range(2):
        out, cache = forward_with_cache(model.critic_spec, model.critics[i], x)
        residual = out[:, 0] - y
        loss = float(np.mean(residual * residual))
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite loss for critic {i}")
        grads, _ = backward(model.critic_spec, model.critics[i], cache, (2.0 * residual / len(y))[:, None])
        model.critics[i], st = adam_step(model.critics[i], grads, opt_states[i])
        new_states.append(st)
        losses.append(loss)
    model.critic_targets = [polyak_update(t, c, cfg.tau) for t, c in zip(model.critic_targets, model.critics)]
    return new_states, losses


def lambda_value(model: TwinCritics, batch: Batch, cfg: GCTD3BCConfig) -> float:
    if cfg.lambda_mode == "fixed":
        return cfg.lambda_fixed
    return cfg.alpha_norm / (float(np.mean(np.abs(model.q(0, batch.states, batch.actions)))) + 1e-8)


def actor_objective_and_grad(model: TwinCritics, batch: Batch, lam: float, weight: float
                             ) -> tuple[float, np.ndarray]:
    """``mean(lam * Q1(s, pi(s)) - weight * ||pi(s) - a||^2)`` and its ascent gradient.

    With ``weight == 0`` the cloning term is not evaluated at all.
    """
    n = len(batch)
    raw, a_cache = forward_with_cache(model.actor_spec, model.actor, batch.states)
    action = raw * model.scale + model.offset
    obs_dim = batch.states.shape[1]
    q_out, q_cache = forward_with_cache(model.critic_spec, model.critics[0],
                                        np.concatenate([batch.states, action], axis=1))
    _, g_in = backward(model.critic_spec, model.critics[0], q_cache, np.full((n, 1), lam / n),
                       need_input_grad=True)
    grad_action = g_in[:, obs_dim:]
    objective = lam * float(np.mean(q_out[:, 0]))
    if weight != 0.0:
        diff = action - batch.actions
        objective -= weight * float(np.mean(np.sum(diff * diff, axis=1)))
        grad_action = grad_action - weight * 2.0 * diff / n
    grads, _ = backward(model.actor_spec, model.actor, a_cache, grad_action * model.scale)
    return objective, grads


def gctd3bc_policy_update(model: TwinCritics, sbatch: SourcedBatch, cfg: GCTD3BCConfig,
                          opt_state: AdamState, step_index: int, weight: float | None = None
                          ) -> tuple[AdamState, float | None]:
    """Delayed actor ascent step; runs only when ``step_index % policy_delay == 0``.

    Returns the new optimizer state and the objective (``None`` when skipped).
    """
    if step_index % cfg.policy_delay != 0:
        return opt_state, None
    w = weight_for(sbatch.source) if weight is None else float(weight)
    lam = lambda_value(model, sbatch.batch, cfg)
    objective, grads = actor_objective_and_grad(model, sbatch.batch, lam, w)
    model.actor, opt_state = adam_step(model.actor, -grads, opt_state)
    model.actor_target = polyak_update(model.actor_target, model.actor, cfg.tau)
    return opt_state, objective


@dataclass
class GCTD3BCAgent:
    config: GCTD3BCConfig
    model: TwinCritics
    critic_opts: list[AdamState]
    actor_opt: AdamState
    critic_steps: int = 0
    actor_steps: int = 0
    last_info: dict = field(default_factory=dict)

    name = "gctd3bc"

    @classmethod
    def create(cls, obs_dim: int, action_low, action_high, config: GCTD3BCConfig,
               rng: np.random.Generator) -> "GCTD3BCAgent":
        model = TwinCritics.create(obs_dim, action_low, action_high, config.hidden, rng)
        critic_opts = [AdamState.zeros(model.critic_spec.n_params, config.critic_lr) for _ in range(2)]
        actor_opt = AdamState.zeros(model.actor_spec.n_params, config.actor_lr)
        return cls(config, model, critic_opts, actor_opt)

    def update(self, sbatch: SourcedBatch, weight: float, rng: np.random.Generator) -> dict:
        self.critic_opts, losses = td3_critic_update(self.model, sbatch, self.config, self.critic_opts, rng)
        self.critic_steps += 1
        self.actor_opt, objective = gctd3bc_policy_update(
            self.model, sbatch, self.config, self.actor_opt, self.critic_steps, weight)
        if objective is not None:
            self.actor_steps += 1
        self.last_info = {"critic_loss": float(np.mean(losses)), "penalty_value": None,
                          "policy_objective": objective}
        return self.last_info

    def explore(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        a = self.model.policy(obs[None, :])[0]
        a = a + rng.standard_normal(a.shape) * self.config.explore_noise * self.model.scale
        return np.clip(a, self.model.action_low, self.model.action_high)

    def act(self, obs: np.ndarray) -> np.ndarray:
        return self.model.policy(obs[None, :])[0]

    def act_batch(self, obs: np.ndarray) -> np.ndarray:
        return self.model.policy(obs)
