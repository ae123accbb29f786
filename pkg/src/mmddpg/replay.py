"""Fixed-capacity FIFO replay buffer with uniform sampling (with replacement)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NotReadyError, ShapeError


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    w: np.ndarray
    c: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class Batch:
    """Structure-of-arrays view of a set of transitions."""

    s: np.ndarray
    a: np.ndarray
    w: np.ndarray
    c: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return self.s.shape[0]

    def __getitem__(self, i):
        return Transition(self.s[i], self.a[i], self.w[i], float(self.c[i]),
                          self.s_next[i], bool(self.terminal[i]))

    @classmethod
    def from_transitions(cls, transitions):
        return cls(np.array([t.s for t in transitions], dtype=np.float64),
                   np.array([t.a for t in transitions], dtype=np.float64),
                   np.array([t.w for t in transitions], dtype=np.float64),
                   np.array([t.c for t in transitions], dtype=np.float64),
                   np.array([t.s_next for t in transitions], dtype=np.float64),
                   np.array([t.terminal for t in transitions], dtype=bool))


class ReplayBuffer:
    def __init__(self, capacity, state_dim, action_dim, disturbance_dim):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.dims = (state_dim, action_dim, disturbance_dim)
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._w = np.zeros((capacity, disturbance_dim))
        self._c = np.zeros(capacity)
        self._s2 = np.zeros((capacity, state_dim))
        self._term = np.zeros(capacity, dtype=bool)
        self.write_cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def store(self, t):
        n, m, d = self.dims
        s, a, w, s2 = (np.asarray(x, dtype=np.float64).reshape(-1) for x in (t.s, t.a, t.w, t.s_next))
        if s.size != n or s2.size != n or a.size != m or w.size != d:
            raise ShapeError("transition dimensions do not match the buffer")
        c = float(t.c)
        if not (np.isfinite(c) and c > 0.0):
            raise InputError(f"transition cost must be finite and > 0, got {c}")
        i = self.write_cursor
        self._s[i] = s
        self._a[i] = a
        self._w[i] = w
        self._c[i] = c
        self._s2[i] = s2
        self._term[i] = bool(t.terminal)
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _gather(self, idx):
        return Batch(self._s[idx], self._a[idx], self._w[idx], self._c[idx],
                     self._s2[idx], self._term[idx])

    def contents(self):
        """All stored transitions, oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.capacity) + self.write_cursor) % self.capacity
        return self._gather(idx)

    def sample_indices(self, batch_size, rng):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.size < batch_size:
            raise NotReadyError(f"buffer holds {self.size} < batch size {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample_uniform(self, batch_size, rng):
        """``batch_size`` transitions drawn i.i.d. uniformly with replacement."""
        return self._gather(self.sample_indices(batch_size, rng))
