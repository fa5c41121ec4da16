"""The ``medium-replay`` tier: the full interaction log of an online learner
trained from scratch until it first evaluates at the medium tier's level."""

from __future__ import annotations

import logging
import math
from dataclasses import replace

from .config import RunConfig
from .dataio import behavior_episode_returns
from .envs import env_spec
from .oorb import OORB, Batch
from .training import Trainer

log = logging.getLogger(__name__)

REPLAY_DEFAULTS = dict(agent="gcql", t_initial=0, t_on=1_000, t_off=1_000, eval_episodes=5)


def medium_target(env_name: str, seed: int, episodes: int = 20) -> float:
    returns = behavior_episode_returns(env_name, "medium", episodes, seed)
    return math.fsum(returns) / episodes


def medium_replay_log(env_name: str, n: int, seed: int, cfg: RunConfig | None = None) -> Batch:
    """Chronological log (at most ``n`` transitions) of a GCQL learner started from scratch."""
    if cfg is None:
        cfg = RunConfig(env=env_name, seed=seed, **REPLAY_DEFAULTS)
    cfg = replace(cfg, env=env_name, seed=seed, s_t=max(n - 1, 1),
                  offline_capacity=max(cfg.offline_capacity, n + cfg.t_on))
    target = medium_target(env_name, seed)
    agent = cfg.build_agent()
    spec = env_spec(env_name)
    trainer = Trainer(agent, env_name, OORB(spec.obs_dim, spec.act_dim, cfg.oorb_config()),
                      cfg.schedule(), "full", seed)
    trainer.run(stop_when=lambda row: row.iteration > 0 and row.mean_return >= target)
    log.info("medium-replay log: %d transitions, target return %.1f", trainer.s_on, target)
    data = trainer.oorb.offline.contents()
    return data.take(slice(0, min(n, len(data))))

