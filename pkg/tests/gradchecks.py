"""Finite-difference checks of every agent loss on tiny nets and 2-transition batches.

Each check returns the max relative error between the analytic gradient and a
central difference of an independently written scalar loss.
"""

import copy

import numpy as np

from apl.gcql import critic_loss_and_grad, policy_objective_and_grad
from apl.gctd3bc import actor_objective_and_grad
from apl.nn import policy_forward
from tests.builders import ACT, OBS, random_batch, tiny_gcql, tiny_td3
from tests.oracles import central_difference, max_relative_error, scalar_log_mean_exp

K = 3


def _critic_setup(seed):
    rng = np.random.default_rng(seed)
    cfg, ens, pol = tiny_gcql(rng, n_critics=2, hidden=(4, 3), n_penalty_samples=K)
    b = random_batch(rng, 2)
    return ens, b, rng.standard_normal(2), rng.uniform(-2.0, 2.0, (2 * K, ACT))


def _with_critic(ens, p):
    e = copy.copy(ens)
    e.critics = [p] + ens.critics[1:]
    return e


def bellman_mse(seed):
    ens, b, y, _ = _critic_setup(seed)
    _, _, _, grads = critic_loss_and_grad(ens, 0, b, y, None, 0.0, K)
    f = lambda p: float(np.mean((_with_critic(ens, p).q(0, b.states, b.actions) - y) ** 2))  # noqa: E731
    return max_relative_error(grads, central_difference(f, ens.critics[0]))


def cql_penalty(seed):
    """Penalty gradient isolated as (bellman + penalty) minus bellman."""
    ens, b, y, pen_actions = _critic_setup(seed)
    total = critic_loss_and_grad(ens, 0, b, y, pen_actions, 1.0, K)[3]
    bell = critic_loss_and_grad(ens, 0, b, y, None, 0.0, K)[3]

    def f(p):
        e = _with_critic(ens, p)
        q_data = e.q(0, b.states, b.actions)
        q_pen = e.q(0, np.repeat(b.states, K, axis=0), pen_actions).reshape(2, K)
        return float(np.mean([scalar_log_mean_exp(row) for row in q_pen] - q_data))

    return max_relative_error(total - bell, central_difference(f, ens.critics[0]))


def gcql_policy(seed):
    rng = np.random.default_rng(seed)
    _, ens, pol = tiny_gcql(rng, n_critics=3, hidden=(4, 3))
    s, noise = rng.standard_normal((2, OBS)), rng.standard_normal((2, ACT))
    _, grads = policy_objective_and_grad(pol, ens, s, noise, 0.2)

    def f(p):
        smp = policy_forward(pol.with_params(p), s, noise)
        q = np.mean([ens.q(i, s, smp.action) for i in range(3)], axis=0)
        return float(np.mean(q - 0.2 * smp.log_prob))

    return max_relative_error(grads, central_difference(f, pol.params))


def td3bc_actor(seed):
    rng = np.random.default_rng(seed)
    _, model = tiny_td3(rng, hidden=(4, 3))
    b = random_batch(rng, 2)
    lam, w = float(rng.uniform(0.1, 2.0)), float(seed % 2)
    _, grads = actor_objective_and_grad(model, b, lam, w)

    def f(p):
        m = copy.copy(model)
        m.actor = p
        a = m.policy(b.states)
        return float(np.mean(lam * m.q(0, b.states, a) - w * np.sum((a - b.actions) ** 2, axis=1)))

    return max_relative_error(grads, central_difference(f, model.actor))


CHECKS = {"bellman_mse": bellman_mse, "cql_penalty": cql_penalty,
          "gcql_policy": gcql_policy, "td3bc_actor": td3bc_actor}
