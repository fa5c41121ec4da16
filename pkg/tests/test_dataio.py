import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apl.config import RunConfig
from apl.dataio import (Dataset, DimensionMismatchError, RecordValueError, TruncatedFileError,
                        VersionMismatchError, behavior_episode_returns, episode_returns, generate_dataset,
                        read_dataset, write_dataset)
from apl.oorb import Batch


def small_dataset(rng, n=3):
    return Dataset("pendulum", "random", 7, Batch(rng.standard_normal((n, 3)), rng.standard_normal((n, 1)),
                                                  rng.standard_normal(n), rng.standard_normal((n, 3)),
                                                  np.array([0.0, 1.0, 0.0][:n] + [0.0] * max(0, n - 3))))


def assert_same(a: Dataset, b: Dataset):
    assert a.header() == b.header()
    for f in ("states", "actions", "rewards", "next_states", "done"):
        assert np.array_equal(getattr(a.data, f), getattr(b.data, f))


def test_round_trip(tmp_path, rng):
    ds = small_dataset(rng)
    write_dataset(tmp_path / "d.ndjson", ds)
    assert_same(ds, read_dataset(tmp_path / "d.ndjson"))


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=5))
def test_round_trip_is_lossless_for_any_finite_double(tmp_path_factory, rows):
    vals = np.array(rows)
    n = len(rows)
    ds = Dataset("pendulum", "random", 0, Batch(vals, vals[:, :1], vals[:, 2], vals[::-1].copy(), np.zeros(n)))
    path = tmp_path_factory.mktemp("rt") / "d.ndjson"
    write_dataset(path, ds)
    assert_same(ds, read_dataset(path))


def write_lines(path, header, records):
    path.write_text("\n".join([json.dumps(header)] + [json.dumps(r) for r in records]) + "\n")


HEADER = {"format_version": 1, "env_name": "pendulum", "obs_dim": 3, "act_dim": 1, "n_records": 5,
          "behavior_tag": "random", "generator_seed": 0}
RECORD = {"s": [1.0, 0.0, 0.0], "a": [0.5], "r": -1.0, "s2": [1.0, 0.0, 0.1], "done": 0}


def test_truncation_reports_line_6(tmp_path):
    write_lines(tmp_path / "d", HEADER, [RECORD] * 4)
    with pytest.raises(TruncatedFileError) as info:
        read_dataset(tmp_path / "d")
    assert info.value.line == 6 and "line 6" in str(info.value)


def test_version_mismatch(tmp_path):
    write_lines(tmp_path / "d", {**HEADER, "format_version": 2}, [RECORD] * 5)
    with pytest.raises(VersionMismatchError) as info:
        read_dataset(tmp_path / "d")
    assert info.value.line == 1


def test_dimension_mismatch_names_line(tmp_path):
    write_lines(tmp_path / "d", HEADER, [RECORD] * 2 + [{**RECORD, "s2": [1.0, 0.0]}] + [RECORD] * 2)
    with pytest.raises(DimensionMismatchError) as info:
        read_dataset(tmp_path / "d")
    assert info.value.line == 4


@pytest.mark.parametrize("done", [2, -1, 0.5, 1.0, True, "1", None])
def test_done_must_be_zero_or_one(tmp_path, done):
    write_lines(tmp_path / "d", HEADER, [RECORD] * 4 + [{**RECORD, "done": done}])
    with pytest.raises(RecordValueError) as info:
        read_dataset(tmp_path / "d")
    assert info.value.line == 6


def test_distinct_error_types():
    assert len({TruncatedFileError, VersionMismatchError, DimensionMismatchError, RecordValueError}) == 4
    assert not issubclass(TruncatedFileError, DimensionMismatchError)


def test_write_rejects_non_finite(tmp_path, rng):
    ds = small_dataset(rng)
    ds.data.rewards[1] = math.nan
    with pytest.raises(ValueError):
        write_dataset(tmp_path / "d", ds)


def test_generation_is_pure():
    a, b = generate_dataset("pendulum", "medium", 300, 4), generate_dataset("pendulum", "medium", 300, 4)
    assert_same(a, b)
    assert not np.array_equal(a.data.actions, generate_dataset("pendulum", "medium", 300, 5).data.actions)


def test_random_tier_action_mean():
    ds = generate_dataset("pendulum", "random", 10_000, 0)
    # box center 0, half range 2
    assert abs(ds.data.actions.mean()) <= 0.1 * 2.0
    assert np.all(np.abs(ds.data.actions) <= 2.0)


def test_expert_tier_noise_scale():
    ds = generate_dataset("pointmass", "expert", 2_000, 0)
    assert np.all(np.abs(ds.data.actions) <= 1.0)


def test_medium_expert_concatenation():
    ds = generate_dataset("pendulum", "medium-expert", 101, 3)
    assert ds.n_records == 2 * (101 // 2)
    assert ds.provenance == ["medium", "expert"]
    med = generate_dataset("pendulum", "medium", 50, 3)
    assert np.array_equal(ds.data.actions[:50], med.data.actions)


def test_unknown_tier():
    with pytest.raises(ValueError):
        generate_dataset("pendulum", "novice", 10, 0)


def test_episodes_are_truncated_by_env_rules():
    ds = generate_dataset("pendulum", "random", 1_000, 0)
    # 200-step pendulum episodes: successor chains break exactly every 200 records
    breaks = np.flatnonzero(np.any(ds.data.next_states[:-1] != ds.data.states[1:], axis=1))
    assert breaks.tolist() == [199, 399, 599, 799]
    assert len(episode_returns(ds.data)) == 4


def test_behavior_returns_match_generated_log():
    ds = generate_dataset("pendulum", "medium", 601, 9)
    np.testing.assert_allclose(episode_returns(ds.data), behavior_episode_returns("pendulum", "medium", 3, 9))


def test_medium_replay_log_is_chronological():
    quick = RunConfig(t_initial=0, t_on=200, t_off=20, eval_episodes=1, hidden=(16,), batch_size=32)
    ds = generate_dataset("pendulum", "medium-replay", 1_000, 0, replay_config=quick)
    assert 0 < ds.n_records <= 1_000
    assert ds.behavior_tag == "medium-replay"
    breaks = np.flatnonzero(np.any(ds.data.next_states[:-1] != ds.data.states[1:], axis=1))
    assert np.all((breaks + 1) % 200 == 0)
