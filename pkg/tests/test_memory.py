"""Ring-buffer semantics checked against a scripted list-based simulation."""

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from patchmoco.memory import FeatureQueue, new_queue


def _unit_batch(rng, n, dim=8):
    m = torch.from_numpy(rng.standard_normal((n, dim))).float()
    return F.normalize(m, dim=1)


class RingSimulation:
    """Independent reference: plain Python list with modular writes."""

    def __init__(self, initial_rows):
        self.rows = [r.copy() for r in initial_rows]
        self.ptr = 0
        self.k = len(initial_rows)

    def enqueue(self, batch):
        for row in batch:
            self.rows[self.ptr] = row.copy()
            self.ptr = (self.ptr + 1) % self.k

    def matrix(self):
        return np.stack(self.rows)


class TestInit:
    def test_full_capacity_unit_rows(self):
        q = new_queue(65536, seed=0)
        assert q.buffer.shape == (65536, 128)
        norms = q.buffer.norm(dim=1)
        assert float((norms - 1).abs().max()) < 1e-6
        assert q.write_ptr == 0

    def test_single_row_queue(self):
        q = new_queue(1, seed=0, dim=4)
        assert q.buffer.shape == (1, 4)

    def test_seed_determinism(self):
        a = new_queue(16, seed=7, dim=8)
        b = new_queue(16, seed=7, dim=8)
        assert torch.equal(a.buffer, b.buffer)
        c = new_queue(16, seed=8, dim=8)
        assert not torch.equal(a.buffer, c.buffer)

    def test_rejects_nonpositive_capacity(self):
        with pytest.raises(ValueError):
            new_queue(0)


class TestEnqueue:
    def test_wraparound_evicts_oldest(self):
        """K=8: two batches of 4, then a third overwrites rows 0..3."""
        rng = np.random.default_rng(0)
        q = new_queue(8, seed=0, dim=8)
        b1, b2, b3 = (_unit_batch(rng, 4) for _ in range(3))
        q.enqueue(b1); q.enqueue(b2)
        assert q.write_ptr == 0
        q.enqueue(b3)
        assert q.write_ptr == 4
        assert torch.equal(q.buffer[0:4], b3)
        assert torch.equal(q.buffer[4:8], b2)

    def test_full_batch_replaces_everything(self):
        rng = np.random.default_rng(1)
        q = new_queue(8, seed=0, dim=8)
        ptr_before = q.write_ptr
        batch = _unit_batch(rng, 8)
        q.enqueue(batch)
        assert torch.equal(q.buffer, batch)
        assert q.write_ptr == ptr_before

    def test_write_then_read_newest(self):
        rng = np.random.default_rng(2)
        q = new_queue(8, seed=0, dim=8)
        batch = _unit_batch(rng, 3)
        q.enqueue(batch)
        assert torch.equal(q.newest(3), batch)

    def test_oversized_batch_rejected(self):
        rng = np.random.default_rng(3)
        q = new_queue(4, seed=0, dim=8)
        with pytest.raises(ValueError):
            q.enqueue(_unit_batch(rng, 5))

    def test_non_unit_rows_rejected(self):
        q = new_queue(4, seed=0, dim=8)
        with pytest.raises(ValueError):
            q.enqueue(torch.full((2, 8), 0.5))

    def test_matches_simulation_on_randomized_sequences(self):
        rng = np.random.default_rng(4)
        for trial in range(200):
            k = int(rng.integers(1, 33))
            q = new_queue(k, seed=trial, dim=8)
            sim = RingSimulation(list(q.buffer.numpy()))
            for _ in range(int(rng.integers(1, 12))):
                b = int(rng.integers(1, k + 1))
                batch = _unit_batch(rng, b)
                q.enqueue(batch)
                sim.enqueue(batch.numpy())
            assert np.array_equal(q.buffer.numpy(), sim.matrix())
            assert q.write_ptr == sim.ptr

    @given(st.integers(2, 16), st.lists(st.integers(1, 16), min_size=1, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_fifo_property(self, k, batch_sizes):
        """After enough writes the buffer holds exactly the newest K rows."""
        rng = np.random.default_rng(5)
        q = new_queue(k, seed=0, dim=4)
        sim = RingSimulation(list(q.buffer.numpy()))
        rows = []
        for b in batch_sizes:
            b = min(b, k)
            batch = _unit_batch(rng, b, dim=4)
            rows.extend(batch.numpy())
            q.enqueue(batch)
            sim.enqueue(batch.numpy())
        assert np.array_equal(q.buffer.numpy(), sim.matrix())
        if len(rows) >= k:
            newest = np.stack(rows[-k:])
            assert np.array_equal(q.newest(k).numpy(), newest)


class TestSnapshot:
    def test_snapshot_is_isolated_from_enqueue(self):
        rng = np.random.default_rng(6)
        q = new_queue(8, seed=0, dim=8)
        snap = q.snapshot()
        before = snap.clone()
        q.enqueue(_unit_batch(rng, 4))
        assert torch.equal(snap, before)

    def test_snapshot_rows_unit_norm_after_init(self):
        snap = new_queue(32, seed=1, dim=16).snapshot()
        assert float((snap.norm(dim=1) - 1).abs().max()) < 1e-6

    def test_no_gradient_through_snapshot(self):
        q = new_queue(4, seed=0, dim=8)
        assert not q.snapshot().requires_grad

    def test_age_order_recoverable_from_ptr(self):
        """Replay an enqueue log; newest(k) returns rows in enqueue order."""
        rng = np.random.default_rng(7)
        q = new_queue(6, seed=0, dim=4)
        log = [_unit_batch(rng, 2, dim=4) for _ in range(5)]
        for batch in log:
            q.enqueue(batch)
        expected = torch.cat(log)[-6:]
        assert torch.equal(q.newest(6), expected)


class TestState:
    def test_state_round_trip(self):
        rng = np.random.default_rng(8)
        q = new_queue(8, seed=0, dim=8)
        q.enqueue(_unit_batch(rng, 5))
        state = q.state_dict()
        other = new_queue(8, seed=99, dim=8)
        other.load_state_dict(state)
        assert torch.equal(other.buffer, q.buffer)
        assert other.write_ptr == q.write_ptr
        assert other.fill_count == q.fill_count
