import math

import numpy as np
import pytest

from apl.config import RunConfig
from apl.dataio import generate_dataset
from apl.envs import make_env
from apl.experiment import build_trainer
from apl.oorb import OFFLINE, ONLINE, OORB, OORBConfig
from apl.training import (EvalRow, RunRecord, Schedule, Trainer, behavior_returns, compute_references,
                          evaluate, normalized_score, rollout)

TINY = dict(hidden=(8,), batch_size=16, online_capacity=64, t_initial=7, t_on=50, t_off=3, s_t=120,
            eval_episodes=1, reference_episodes=2, t_s=60)


def tiny_trainer(variant="full", agent="gcql", seed=0, **kw):
    cfg = RunConfig(agent=agent, variant=variant, seed=seed, **{**TINY, **kw})
    return build_trainer(cfg, generate_dataset("pendulum", "random", 300, 1))


class TestScores:
    def test_normalized_score_anchors(self):
        assert normalized_score(-10.0, -10.0, 30.0) == 0.0
        assert normalized_score(30.0, -10.0, 30.0) == 100.0
        assert normalized_score(10.0, -10.0, 30.0) == 50.0

    @pytest.mark.parametrize("exp", [-10.0, -20.0])
    def test_degenerate_scale(self, exp):
        with pytest.raises(ValueError):
            normalized_score(0.0, -10.0, exp)

    def test_references(self):
        a, b = compute_references("pendulum", 3, 5), compute_references("pendulum", 3, 5)
        assert a == b and a.random_ref < 0 and a.expert_ref > a.random_ref

    def test_pointmass_references_ordered(self):
        r = compute_references("pointmass", 0, 20)
        assert r.expert_ref > r.random_ref


class TestEvaluate:
    def test_repeatable(self):
        pol = lambda o: np.array([-o[2]])  # noqa: E731
        assert evaluate(pol, "pendulum", 3, 4) == evaluate(pol, "pendulum", 3, 4)

    def test_single_episode_is_rollout(self):
        pol = lambda o: np.array([0.3])  # noqa: E731
        assert evaluate(pol, "pendulum", 1, 11) == rollout(make_env("pendulum"), lambda _e, o: pol(o), 11)

    def test_random_policy_negative(self):
        assert behavior_returns("pendulum", "random", 5, 0).mean() < 0

    def test_rejects_zero_episodes(self):
        with pytest.raises(ValueError):
            evaluate(lambda o: np.zeros(1), "pendulum", 0, 0)


class TestRunRecord:
    def row(self, it, s_on, score):
        return EvalRow(it, s_on, score, score, None, None, None)

    def test_final_score_uses_last_three_online(self):
        rec = RunRecord(0, {})
        for i, sc in enumerate([50.0, 1.0, 2.0, 3.0, 4.0]):
            rec.append(self.row(i, i * 10, sc))
        assert rec.final_score() == 3.0 and rec.pretrain_score() == 50.0

    def test_rows_ordered(self):
        rec = RunRecord(0, {})
        rec.append(self.row(1, 10, 0.0))
        with pytest.raises(ValueError):
            rec.append(self.row(2, 5, 0.0))

    def test_csv(self):
        rec = RunRecord(0, {})
        rec.append(EvalRow(0, 0, -1.5, 0.1, None, 2.0, None))
        assert rec.metrics_csv().splitlines() == [
            "iteration,s_on,mean_return,normalized_score,critic_loss,penalty_value,policy_objective",
            "0,0,-1.5,0.1,,2.0,"]


class TestTrainer:
    def test_pretrain_only_offline_no_env_steps(self):
        tr = tiny_trainer()
        tr.pretrain()
        assert tr.s_on == 0 and tr.update_steps == 7
        assert all(src == OFFLINE and w == 1.0 for _, src, w in tr.record.batch_log)

    def test_zero_pretrain_leaves_parameters(self):
        tr = tiny_trainer(t_initial=0)
        before = tr.agent.policy.params.copy()
        tr.pretrain()
        assert np.array_equal(before, tr.agent.policy.params)

    def test_pretrain_requires_data_and_empty_online(self):
        tr = tiny_trainer()
        tr.collect(5)
        with pytest.raises(RuntimeError):
            tr.pretrain()
        empty = Trainer(RunConfig(**TINY).build_agent(), "pendulum", OORB(3, 1, OORBConfig(batch_size=16, online_capacity=64)),
                        Schedule(), seed=0)
        with pytest.raises(RuntimeError):
            empty.pretrain()

    def test_counters(self):
        tr = tiny_trainer()
        tr.pretrain()
        rec = tr.run()
        k = tr.iteration
        assert k == 3  # 150 > 120 after the third iteration
        assert tr.s_on == k * 50 and tr.update_steps == 7 + k * 3
        assert [r.iteration for r in rec.rows] == [0, 1, 2, 3]
        assert [r.s_on for r in rec.rows] == [0, 50, 100, 150]

    def test_eval_every(self):
        tr = tiny_trainer(eval_every=2, s_t=200)
        tr.pretrain()
        assert [r.iteration for r in tr.run().rows] == [0, 2, 4]

    def test_full_uses_online_after_warmup(self):
        tr = tiny_trainer(p=1.0, t_s=60)
        tr.pretrain()
        tr.run()
        phases = [(ph, src, w) for ph, src, w in tr.record.batch_log if ph == "online"]
        # s_on = 50 at the first online phase (warm-up), 100 and 150 afterwards
        assert all(src == OFFLINE for _, src, _ in phases[:3])
        assert all(src == ONLINE and w == 0.0 for _, src, w in phases[3:])

    def test_wg_same_sources_weight_one(self):
        full, wg = tiny_trainer(p=0.5, t_s=0), tiny_trainer("WG", p=0.5, t_s=0)
        for tr in (full, wg):
            tr.pretrain()
            tr.run()
        assert [s for _, s, _ in full.record.batch_log] == [s for _, s, _ in wg.record.batch_log]
        assert ONLINE in [s for _, s, _ in wg.record.batch_log]
        assert all(w == 1.0 for _, _, w in wg.record.batch_log)

    def test_wgo_never_online(self):
        tr = tiny_trainer("WGO", p=1.0, t_s=0)
        tr.pretrain()
        tr.run()
        assert tr.online_source_count() == 0
        assert all(w == 1.0 for _, _, w in tr.record.batch_log)

    def test_collect_marks_only_true_terminals(self):
        tr = tiny_trainer()
        tr.collect(250)
        assert len(tr.oorb.online) == 64 and len(tr.oorb.offline) == 300 + 250
        assert not np.any(tr.oorb.offline.contents().done)

    @pytest.mark.parametrize("agent", ["gcql", "gctd3bc"])
    def test_reproducible(self, agent):
        recs = []
        for _ in range(2):
            tr = tiny_trainer(agent=agent, seed=5)
            tr.pretrain()
            recs.append(tr.run().metrics_csv())
        assert recs[0] == recs[1]

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            Trainer(None, "pendulum", None, Schedule(), variant="X")


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(t_initial=-1)
    with pytest.raises(ValueError):
        Schedule(t_on=0)
    assert math.isclose(Schedule().t_off / Schedule().t_on, 2.0)
