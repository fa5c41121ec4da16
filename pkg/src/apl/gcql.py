"""Greedy-conservative Q-ensemble learning.

Critics regress on a bootstrap target that takes the minimum over a random
subset of target critics. Batches from the offline buffer add a conservative
log-mean-exp penalty; batches from the online buffer do not. The policy is a
squashed Gaussian trained against the ensemble mean with an entropy bonus.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .nn import (AdamState, MLPSpec, NonFiniteError, SquashedGaussianPolicy, adam_step,
                 backward, forward_with_cache, init_params, log_mean_exp, mlp_forward,
                 policy_backward, policy_forward, polyak_update)
from .oorb import Batch, SourcedBatch, weight_for


@dataclass(frozen=True)
class GCQLConfig:
    gamma: float = 0.99
    alpha_cql: float = 1.0
    alpha_ent: float = 0.2
    n_penalty_samples: int = 10
    tau: float = 0.005
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    n_critics: int = 5
    subset_size: int = 2
    hidden: tuple[int, ...] = (64, 64)
    per_transition_subset: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.alpha_cql < 0 or self.alpha_ent < 0:
            raise ValueError("alpha_cql and alpha_ent must be non-negative")
        if self.n_penalty_samples < 1:
            raise ValueError("n_penalty_samples must be at least 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not 1 <= self.subset_size <= self.n_critics:
            raise ValueError("need 1 <= subset_size <= n_critics")


@dataclass
class QEnsemble:
    spec: MLPSpec
    critics: list[np.ndarray]
    targets: list[np.ndarray]
    subset_size: int = 2

    def __post_init__(self):
        if len(self.critics) != len(self.targets):
            raise ValueError("every critic needs a target copy")
        if not 1 <= self.subset_size <= len(self.critics):
            raise ValueError("subset_size must lie in [1, n_critics]")

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, n_critics: int, hidden, rng: np.random.Generator,
               subset_size: int = 2) -> "QEnsemble":
        spec = MLPSpec((obs_dim + act_dim, *hidden, 1))
        critics = [init_params(spec, rng) for _ in range(n_critics)]
        return cls(spec, critics, [c.copy() for c in critics], subset_size)

    @property
    def n_critics(self) -> int:
        return len(self.critics)

    def q(self, i: int, states, actions, target: bool = False) -> np.ndarray:
        params = self.targets[i] if target else self.critics[i]
        return mlp_forward(self.spec, params, np.concatenate([states, actions], axis=1))[:, 0]


def _sample_actions(policy: SquashedGaussianPolicy, states: np.ndarray, noise: np.ndarray) -> np.ndarray:
    return policy_forward(policy, states, noise).action


def draw_subset(n_critics: int, subset_size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(n_critics, size=subset_size, replace=False)


def redq_target(batch: Batch, ensemble: QEnsemble, policy: SquashedGaussianPolicy,
                cfg: GCQLConfig, rng: np.random.Generator) -> np.ndarray:
    """``r + gamma * (1 - done) * min_{i in M} Qtarget_i(s', a')`` with ``a' ~ pi(s')``.

    Random draws, in order: the subset ``M`` (one per batch, or one per row when
    ``cfg.per_transition_subset``), then the policy noise for ``a'``.
    """
    n = len(batch)
    if cfg.per_transition_subset:
        subsets = np.stack([draw_subset(ensemble.n_critics, ensemble.subset_size, rng) for _ in range(n)])
    else:
        subsets = np.broadcast_to(draw_subset(ensemble.n_critics, ensemble.subset_size, rng),
                                  (n, ensemble.subset_size))
    noise = rng.standard_normal((n, policy.act_dim))
    next_actions = _sample_actions(policy, batch.next_states, noise)
    used = np.unique(subsets)
    q_next = np.full((ensemble.n_critics, n), np.inf)
    for i in used:
        q_next[i] = ensemble.q(i, batch.next_states, next_actions, target=True)
    min_q = np.min(np.take_along_axis(q_next.T, subsets, axis=1), axis=1)
    return batch.rewards + cfg.gamma * (1.0 - batch.done) * min_q


def bellman_loss(ensemble: QEnsemble, i: int, batch: Batch, y: np.ndarray) -> float:
    residual = ensemble.q(i, batch.states, batch.actions) - y
    return float(np.mean(residual * residual))


def _penalty_inputs(batch: Batch, pen_actions: np.ndarray, k: int) -> np.ndarray:
    return np.concatenate([np.repeat(batch.states, k, axis=0), pen_actions], axis=1)


def cql_penalty(ensemble: QEnsemble, i: int, batch: Batch, policy: SquashedGaussianPolicy,
                cfg: GCQLConfig, rng: np.random.Generator) -> float:
    """``alpha_cql * mean_s [log-mean-exp_k Q_i(s, a'_k) - Q_i(s, a)]`` with ``a'_k ~ pi(s)``."""
    k = cfg.n_penalty_samples
    noise = rng.standard_normal((len(batch) * k, policy.act_dim))
    pen_actions = _sample_actions(policy, np.repeat(batch.states, k, axis=0), noise)
    return _penalty_value(ensemble, i, batch, pen_actions, cfg)


def _penalty_value(ensemble, i, batch, pen_actions, cfg) -> float:
    k = cfg.n_penalty_samples
    q_pen = mlp_forward(ensemble.spec, ensemble.critics[i], _penalty_inputs(batch, pen_actions, k))
    lme, _ = log_mean_exp(q_pen.reshape(len(batch), k), axis=1)
    q_data = ensemble.q(i, batch.states, batch.actions)
    return cfg.alpha_cql * float(np.mean(lme - q_data))


@dataclass
class CriticStepInfo:
    losses: list[float]
    bellman: list[float]
    penalties: list[float]  # empty when the penalty was skipped (zero weight)


def critic_loss_and_grad(ensemble: QEnsemble, i: int, batch: Batch, y: np.ndarray,
                         pen_actions: np.ndarray | None, coef: float, k: int) -> tuple[float, float, float | None, np.ndarray]:
    """Total loss ``bellman + coef * penalty`` for critic ``i`` and its parameter gradient.

    ``coef`` is ``weight * alpha_cql``. With ``pen_actions=None`` the penalty is omitted.
    """
    spec, params = ensemble.spec, ensemble.critics[i]
    n = len(batch)
    out, cache = forward_with_cache(spec, params, np.concatenate([batch.states, batch.actions], axis=1))
    q = out[:, 0]
    residual = q - y
    bell = float(np.mean(residual * residual))
    grad_q = 2.0 * residual / n
    pen = None
    if pen_actions is not None:
        pen_out, pen_cache = forward_with_cache(spec, params, _penalty_inputs(batch, pen_actions, k))
        lme, soft = log_mean_exp(pen_out[:, 0].reshape(n, k), axis=1)
        pen = float(np.mean(lme - q))
        grad_q = grad_q - coef / n
        pen_grads, _ = backward(spec, params, pen_cache, (coef / n * soft).reshape(n * k, 1))
    grads, _ = backward(spec, params, cache, grad_q[:, None])
    if pen_actions is not None:
        grads = grads + pen_grads
    total = bell if pen is None else bell + coef * pen
    if not np.isfinite(total):
        raise NonFiniteError(f"non-finite loss for critic {i}", layer=None)
    return total, bell, pen, grads


def q_update(ensemble: QEnsemble, sbatch: SourcedBatch, policy: SquashedGaussianPolicy,
             cfg: GCQLConfig, opt_states: list[AdamState], rng: np.random.Generator,
             weight: float | None = None) -> tuple[QEnsemble, list[AdamState], CriticStepInfo]:
    """One Adam step per critic on ``bellman + W * penalty``, then Polyak targets.

    ``weight`` defaults to the batch source's weight. Penalty noise is drawn even
    when the penalty is skipped so that the random stream does not depend on W.
    """
    batch = sbatch.batch
    w = weight_for(sbatch.source) if weight is None else float(weight)
    coef = w * cfg.alpha_cql
    k = cfg.n_penalty_samples
    y = redq_target(batch, ensemble, policy, cfg, rng)
    pen_noise = rng.standard_normal((len(batch) * k, policy.act_dim))
    pen_actions = None
    if coef != 0.0:
        pen_actions = _sample_actions(policy, np.repeat(batch.states, k, axis=0), pen_noise)

    critics, states = [], []
    info = CriticStepInfo([], [], [])
    for i in range(ensemble.n_critics):
        try:
            total, bell, pen, grads = critic_loss_and_grad(ensemble, i, batch, y, pen_actions, coef, k)
        except NonFiniteError as err:
            raise NonFiniteError(f"critic {i}: {err}", layer=err.layer) from err
        new_params, new_state = adam_step(ensemble.critics[i], grads, opt_states[i])
        critics.append(new_params)
        states.append(new_state)
        info.losses.append(total)
        info.bellman.append(bell)
        if pen is not None:
            info.penalties.append(cfg.alpha_cql * pen)
    targets = [polyak_update(t, c, cfg.tau) for t, c in zip(ensemble.targets, critics)]
    return replace(ensemble, critics=critics, targets=targets), states, info


def policy_objective_and_grad(policy: SquashedGaussianPolicy, ensemble: QEnsemble, states: np.ndarray,
                              noise: np.ndarray, alpha_ent: float) -> tuple[float, np.ndarray]:
    """Objective ``mean_s[ mean_i Q_i(s, a~) - alpha_ent * log pi(a~|s) ]`` and its
    gradient w.r.t. the policy parameters (ascent direction)."""
    n = states.shape[0]
    sample = policy_forward(policy, states, noise)
    x = np.concatenate([states, sample.action], axis=1)
    obs_dim = states.shape[1]
    q_sum = np.zeros(n)
    grad_action = np.zeros_like(sample.action)
    g_out = np.full((n, 1), 1.0 / (ensemble.n_critics * n))
    for params in ensemble.critics:
        out, cache = forward_with_cache(ensemble.spec, params, x)
        q_sum += out[:, 0]
        _, g_in = backward(ensemble.spec, params, cache, g_out, need_input_grad=True)
        grad_action += g_in[:, obs_dim:]
    objective = float(np.mean(q_sum / ensemble.n_critics - alpha_ent * sample.log_prob))
    grads = policy_backward(policy, sample, grad_action, np.full(n, -alpha_ent / n))
    return objective, grads


def gcql_policy_update(policy: SquashedGaussianPolicy, ensemble: QEnsemble, batch: Batch,
                       cfg: GCQLConfig, opt_state: AdamState, rng: np.random.Generator
                       ) -> tuple[SquashedGaussianPolicy, AdamState, float]:
    if len(batch) == 0:
        raise ValueError("policy update needs a non-empty batch")
    noise = rng.standard_normal((len(batch), policy.act_dim))
    objective, grads = policy_objective_and_grad(policy, ensemble, batch.states, noise, cfg.alpha_ent)
    new_params, new_state = adam_step(policy.params, -grads, opt_state)
    return policy.with_params(new_params), new_state, objective


@dataclass
class GCQLAgent:
    config: GCQLConfig
    policy: SquashedGaussianPolicy
    ensemble: QEnsemble
    critic_opts: list[AdamState]
    actor_opt: AdamState
    updates: int = 0
    last_info: dict = field(default_factory=dict)

    name = "gcql"

    @classmethod
    def create(cls, obs_dim: int, action_low, action_high, config: GCQLConfig,
               rng: np.random.Generator) -> "GCQLAgent":
        low = np.asarray(action_low, dtype=np.float64)
        policy = SquashedGaussianPolicy.create(obs_dim, low, action_high, config.hidden, rng)
        ensemble = QEnsemble.create(obs_dim, low.size, config.n_critics, config.hidden, rng,
                                    config.subset_size)
        critic_opts = [AdamState.zeros(ensemble.spec.n_params, config.critic_lr)
                       for _ in range(config.n_critics)]
        actor_opt = AdamState.zeros(policy.trunk.n_params, config.actor_lr)
        return cls(config, policy, ensemble, critic_opts, actor_opt)

    def update(self, sbatch: SourcedBatch, weight: float, rng: np.random.Generator) -> dict:
        """Critic step then policy step, as in one inner iteration of the training loop."""
        self.ensemble, self.critic_opts, info = q_update(
            self.ensemble, sbatch, self.policy, self.config, self.critic_opts, rng, weight)
        self.policy, self.actor_opt, objective = gcql_policy_update(
            self.policy, self.ensemble, sbatch.batch, self.config, self.actor_opt, rng)
        self.updates += 1
        self.last_info = {
            "critic_loss": float(np.mean(info.losses)),
            "penalty_value": float(np.mean(info.penalties)) if info.penalties else None,
            "policy_objective": objective,
        }
        return self.last_info

    def explore(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal((1, self.policy.act_dim))
        return policy_forward(self.policy, obs[None, :], noise).action[0]

    def act(self, obs: np.ndarray) -> np.ndarray:
        return policy_forward(self.policy, obs[None, :], None).action[0]

    def act_batch(self, obs: np.ndarray) -> np.ndarray:
        return policy_forward(self.policy, obs, None).action
