import csv
from collections import Counter

import numpy as np
import pytest

import replay_buffer
from replay_buffer import ReplayBuffer


def _filled(n, threshold=0.0, **kwargs):
    buf = ReplayBuffer(threshold, **kwargs)
    for i in range(n):
        buf.push([float(i)], float(i + 1))
    return buf


def test_threshold_is_strict():
    buf = ReplayBuffer(1e-3)
    assert not buf.push([0.0], 1e-3)
    assert not buf.push([0.0], 0.0)
    assert buf.push([0.0], 2e-3)
    assert len(buf) == 1
    assert buf.rejected == 2


def test_capacity_evicts_oldest():
    buf = _filled(5, capacity=3)
    assert [e.order for e in buf.entries] == [2, 3, 4]


def test_push_batch_counts_admitted_and_keeps_states():
    buf = ReplayBuffer(0.5)
    states = np.arange(12, dtype=float).reshape(3, 4, 1)
    stored = buf.push_batch(np.array([[1.0], [2.0], [3.0]]), np.array([0.1, 0.9, 0.7]), states)
    assert stored == 2
    assert np.array_equal(buf.entries[0].states, states[1])


def test_strata_rank_by_reward_then_age():
    buf = ReplayBuffer(0.0)
    for x, r in [(0.0, 1.0), (1.0, 5.0), (2.0, 5.0), (3.0, 2.0)]:
        buf.push([x], r)
    upper, lower = buf.strata()
    assert [e.order for e in upper] == [1, 2]
    assert [e.order for e in lower] == [3, 0]


def test_stratified_sampling_frequencies():
    buf = _filled(10)
    upper, _ = buf.strata()
    rng = np.random.default_rng(0)
    counts = Counter()
    draws = 0
    for _ in range(1000):
        batch = buf.sample_biased(100, rng)
        counts.update(e.order for e in batch)
        draws += len(batch)
    for e in upper:
        assert counts[e.order] / draws == pytest.approx(1 / 6, abs=0.01)
    assert counts[0] / draws == pytest.approx(1 / 14, abs=0.01)


def test_odd_batch_favours_top_stratum():
    buf = _filled(10)
    top_orders = {e.order for e in buf.strata()[0]}
    batch = buf.sample_biased(5, np.random.default_rng(1))
    assert sum(e.order in top_orders for e in batch) == 3


def test_single_entry_buffer_samples_uniformly():
    buf = _filled(1)
    batch = buf.sample_biased(4, np.random.default_rng(2))
    assert [e.order for e in batch] == [0, 0, 0, 0]


def test_empty_buffer_cannot_be_sampled():
    with pytest.raises(ValueError):
        ReplayBuffer(0.0).sample_biased(4, np.random.default_rng(0))


def test_module_level_helpers():
    buf = replay_buffer.push(ReplayBuffer(0.0), [1.0, 2.0], 3.0)
    assert len(replay_buffer.sample_biased(buf, 2, np.random.default_rng(0))) == 2


def test_dump_writes_one_row_per_entry(tmp_path):
    buf = ReplayBuffer(0.0)
    buf.push([0.25, -1.5], 0.125)
    buf.push([1.0, 2.0], 3.0)
    path = tmp_path / "replay_buffer.csv"
    buf.dump(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["order", "x0", "x1", "reward"]
    assert rows[1] == ["0", "0.25", "-1.5", "0.125"]
    assert len(rows) == 3


def test_dump_of_empty_buffer(tmp_path):
    ReplayBuffer(0.0).dump(tmp_path / "empty.csv")
    assert (tmp_path / "empty.csv").read_text().strip() == "order,reward"
