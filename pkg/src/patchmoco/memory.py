"""Fixed-capacity ring buffers of negative embeddings.

Two queues are maintained during pretraining, one per view family, holding
the most recent momentum-branch keys.  Entries are unit-norm rows; writes
wrap around FIFO-style and the batch size does not have to divide the
capacity.
"""

import numpy as np
import torch
import torch.nn.functional as F

_NORM_TOL = 1e-4


class FeatureQueue:
    """K x dim ring buffer of unit-norm feature rows."""

    def __init__(self, capacity: int, dim: int = 128, seed: int = 0):
        if capacity <= 0:
            raise ValueError("queue capacity must be positive")
        gen = torch.Generator().manual_seed(int(seed))
        buf = torch.randn(capacity, dim, generator=gen)
        self.buffer = F.normalize(buf, dim=1)
        self.capacity = capacity
        self.dim = dim
        self.write_ptr = 0
        self.fill_count = 0   # rows ever written, capped at capacity

    @torch.no_grad()
    def enqueue(self, batch: torch.Tensor) -> None:
        """Overwrite the oldest rows with a batch of new unit-norm keys."""
        batch = batch.detach()
        n = batch.shape[0]
        if n > self.capacity:
            raise ValueError(f"batch of {n} exceeds queue capacity {self.capacity}")
        if batch.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {batch.shape[1]}")
        norms = batch.norm(dim=1)
        if n and (norms - 1.0).abs().max().item() > _NORM_TOL:
            raise ValueError("enqueued rows must be unit-norm")
        end = self.write_ptr + n
        if end <= self.capacity:
            self.buffer[self.write_ptr:end] = batch
        else:
            first = self.capacity - self.write_ptr
            self.buffer[self.write_ptr:] = batch[:first]
            self.buffer[:end - self.capacity] = batch[first:]
        self.write_ptr = end % self.capacity
        self.fill_count = min(self.capacity, self.fill_count + n)

    def snapshot(self) -> torch.Tensor:
        """Detached copy of the buffer; later enqueues do not affect it."""
        return self.buffer.clone()

    def newest(self, n: int) -> torch.Tensor:
        """The n most recently written rows, oldest of them first."""
        idx = (self.write_ptr - n + torch.arange(n)) % self.capacity
        return self.buffer[idx].clone()

    def state_dict(self) -> dict:
        return {
            "buffer": self.buffer.numpy().copy(),
            "write_ptr": self.write_ptr,
            "fill_count": self.fill_count,
        }

    def load_state_dict(self, state: dict) -> None:
        buffer = np.asarray(state["buffer"])
        if buffer.shape != (self.capacity, self.dim):
            raise ValueError(
                f"state shape {buffer.shape} != ({self.capacity}, {self.dim})")
        self.buffer = torch.from_numpy(buffer.copy()).float()
        self.write_ptr = int(state["write_ptr"])
        self.fill_count = int(state["fill_count"])


def new_queue(capacity: int, seed: int = 0, dim: int = 128) -> FeatureQueue:
    """Fresh queue initialized with seeded random unit vectors."""
    return FeatureQueue(capacity, dim=dim, seed=seed)
