"""One training run from a :class:`RunConfig`: load data, pre-train, fine-tune
online, and write metrics, config snapshot, references and the final policy."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataio import Dataset, read_dataset
from .envs import env_spec
from .gcql import GCQLAgent
from .nn import MLPSpec, SquashedGaussianPolicy, mlp_forward, policy_forward
from .oorb import OORB
from .training import References, RunRecord, Trainer, compute_references

log = logging.getLogger(__name__)


def load_references(path) -> References:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return References(float(d["random_ref"]), float(d["expert_ref"]),
                      int(d.get("episodes", 0)), int(d.get("seed", 0)))


def save_references(path, env_name: str, refs: References) -> None:
    Path(path).write_text(json.dumps({
        "env": env_name, "random_ref": refs.random_ref, "expert_ref": refs.expert_ref,
        "episodes": refs.episodes, "seed": refs.seed}, indent=2) + "\n", encoding="utf-8")


def resolve_references(cfg: RunConfig) -> References:
    if cfg.references:
        return load_references(cfg.references)
    return compute_references(cfg.env, cfg.seed, cfg.reference_episodes)


def build_trainer(cfg: RunConfig, dataset: Dataset | None = None,
                  references: References | None = None) -> Trainer:
    if dataset is None:
        if not cfg.dataset:
            raise FileNotFoundError("no dataset path configured (set dataset=PATH)")
        if not Path(cfg.dataset).is_file():
            raise FileNotFoundError(f"dataset not found: {cfg.dataset}")
        dataset = read_dataset(cfg.dataset)
    if dataset.env_name != cfg.env:
        raise ValueError(f"dataset was generated on {dataset.env_name!r} but the run uses {cfg.env!r}")
    spec = env_spec(cfg.env)
    oorb = OORB(spec.obs_dim, spec.act_dim, cfg.oorb_config())
    oorb.load_offline(dataset.data)
    refs = references if references is not None else resolve_references(cfg)
    config_dict = {k: getattr(cfg, k) for k in cfg.keys()}
    return Trainer(cfg.build_agent(), cfg.env, oorb, cfg.schedule(), cfg.variant, cfg.seed, refs, config_dict)


def train(cfg: RunConfig, dataset: Dataset | None = None, references: References | None = None,
          write: bool = True) -> RunRecord:
    out = cfg.output_dir()
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.snapshot(), encoding="utf-8")
    trainer = build_trainer(cfg, dataset, references)
    if write:
        save_references(out / "references.json", cfg.env, trainer.references)
    try:
        trainer.pretrain()
        trainer.run()
    finally:
        if write:
            (out / "metrics.csv").write_text(trainer.record.metrics_csv(), encoding="utf-8")
    if write:
        save_policy(out / "policy.npz", trainer.agent, cfg.env)
    return trainer.record


# Policy snapshots (deterministic action only)

def save_policy(path, agent, env_name: str) -> None:
    if isinstance(agent, GCQLAgent):
        pol = agent.policy
        np.savez(path, kind="gaussian", env=env_name, widths=np.array(pol.trunk.layer_widths),
                 params=pol.params, scale=pol.action_scale, offset=pol.action_offset,
                 log_std_bounds=np.array(pol.log_std_bounds))
    else:
        m = agent.model
        np.savez(path, kind="deterministic", env=env_name, widths=np.array(m.actor_spec.layer_widths),
                 params=m.actor, scale=m.scale, offset=m.offset)


def load_policy(path):
    """Returns ``(env_name, act)`` where ``act(obs) -> action`` is deterministic."""
    if not Path(path).is_file():
        raise FileNotFoundError(f"agent snapshot not found: {path}")
    z = np.load(path)
    kind, env_name = str(z["kind"]), str(z["env"])
    widths = tuple(int(w) for w in z["widths"])
    if kind == "gaussian":
        pol = SquashedGaussianPolicy(MLPSpec(widths), z["params"], z["scale"], z["offset"],
                                     tuple(float(b) for b in z["log_std_bounds"]))
        return env_name, lambda obs: policy_forward(pol, obs[None, :], None).action[0]
    if kind == "deterministic":
        spec = MLPSpec(widths, output_activation="tanh")
        params, scale, offset = z["params"], z["scale"], z["offset"]
        return env_name, lambda obs: mlp_forward(spec, params, obs) * scale + offset
    raise ValueError(f"unknown snapshot kind {kind!r}")
