from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: object  # int index for the planner, float vector for locomotion
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO store with uniform sampling.

    Inserts are serialised by the caller; one writer per buffer.
    """

    def __init__(self, capacity, state_dim, action_dim=None):
        self.capacity = int(capacity)
        self.discrete = action_dim is None
        self.s = np.zeros((capacity, state_dim))
        self.s_next = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64) if self.discrete else np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done):
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push(self, t: Transition):
        self.add(t.s, t.a, t.r, t.s_next, t.done)

    def sample_indices(self, batch_size, rng):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng):
        idx = self.sample_indices(batch_size, rng)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]

    def oldest(self):
        """Index of the oldest stored item (the next to be evicted when full)."""
        return self._next if self.size == self.capacity else 0
