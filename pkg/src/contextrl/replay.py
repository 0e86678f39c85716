"""Experience storage: FIFO ring buffer plus a deduplicating frame store.

The buffer is column oriented (one preallocated array per transition field)
so sampling a batch is a handful of fancy-indexing gathers. Pixel
observations are stored as vectors of frame ids against a FrameStore; vector
observations are stored directly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass
class Transition:
    s: np.ndarray
    w_s: int
    a: int
    r: float
    s_next: np.ndarray
    w_s_next: int
    done: bool


@dataclass
class Batch:
    """Column view of a set of transitions."""

    s: np.ndarray
    w_s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    w_s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.a)

    def take(self, idx) -> "Batch":
        return Batch(s=self.s[idx], w_s=self.w_s[idx], a=self.a[idx],
                     r=self.r[idx], s_next=self.s_next[idx],
                     w_s_next=self.w_s_next[idx], done=self.done[idx])


class ReplayBuffer:
    """Fixed-capacity FIFO store sampled uniformly with replacement.

    Sampling with replacement keeps a full batch well defined even when the
    buffer holds a single transition.
    """

    def __init__(self, capacity: int, state_shape, k: int,
                 state_dtype=np.float64):
        if capacity < 1:
            raise UsageError(f"capacity must be at least 1, got {capacity}")
        if k < 1:
            raise UsageError(f"context count must be at least 1, got {k}")
        self.capacity = capacity
        self.k = k
        state_shape = tuple(state_shape)
        self._s = np.zeros((capacity,) + state_shape, dtype=state_dtype)
        self._s2 = np.zeros((capacity,) + state_shape, dtype=state_dtype)
        self._w = np.zeros(capacity, dtype=np.int64)
        self._w2 = np.zeros(capacity, dtype=np.int64)
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity, dtype=np.float64)
        self._done = np.zeros(capacity, dtype=np.float64)
        self._pos = 0
        self._size = 0
        self.push_count = 0

    def __len__(self):
        return self._size

    def push(self, t: Transition) -> int:
        """Store one transition, evicting the oldest at capacity.

        Returns the slot index the transition went into.
        """
        if not (0 <= t.w_s < self.k and 0 <= t.w_s_next < self.k):
            raise UsageError(
                f"context ids ({t.w_s}, {t.w_s_next}) outside [0, {self.k})")
        slot = self._pos
        self._s[slot] = t.s
        self._s2[slot] = t.s_next
        self._w[slot] = t.w_s
        self._w2[slot] = t.w_s_next
        self._a[slot] = t.a
        self._r[slot] = t.r
        self._done[slot] = 1.0 if t.done else 0.0
        self._pos = (self._pos + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.push_count += 1
        return slot

    def sample(self, m: int, rng) -> Batch:
        if self._size == 0:
            raise UsageError("cannot sample from an empty buffer")
        if m < 1:
            raise UsageError(f"batch size must be at least 1, got {m}")
        idx = rng.integers(0, self._size, size=m)
        return self.gather(idx)

    def gather(self, idx) -> Batch:
        """Batch view of specific slots (no validity checking on idx)."""
        return Batch(
            s=self._s[idx], w_s=self._w[idx], a=self._a[idx], r=self._r[idx],
            s_next=self._s2[idx], w_s_next=self._w2[idx], done=self._done[idx])

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return np.concatenate(
            [np.arange(self._pos, self.capacity), np.arange(self._pos)])

    def contents(self) -> Batch:
        """Everything currently stored, oldest first."""
        return self.gather(self._order())

    def slots_with_context(self, w: int) -> np.ndarray:
        return np.nonzero(self._w[:self._size] == w)[0]

    def states(self) -> np.ndarray:
        """Stored first-state column, oldest first (for relabeling)."""
        return self._s[self._order()]

    def relabel(self, assign_batch):
        """Recompute every stored context label with a batch assignment fn."""
        if self._size == 0:
            return
        order = self._order()
        self._w[order] = assign_batch(self._s[order])
        self._w2[order] = assign_batch(self._s2[order])

    def set_labels(self, slot: int, w_s: int, w_s_next: int):
        if not (0 <= w_s < self.k and 0 <= w_s_next < self.k):
            raise UsageError(
                f"context ids ({w_s}, {w_s_next}) outside [0, {self.k})")
        self._w[slot] = w_s
        self._w2[slot] = w_s_next

    def state_dict(self) -> dict:
        return {
            "s": self._s, "s2": self._s2, "w": self._w, "w2": self._w2,
            "a": self._a, "r": self._r, "done": self._done,
            "pos": self._pos, "size": self._size, "push_count": self.push_count,
        }

    def load_state_dict(self, state: dict):
        for name, arr in (("s", self._s), ("s2", self._s2), ("w", self._w),
                          ("w2", self._w2), ("a", self._a), ("r", self._r),
                          ("done", self._done)):
            arr[...] = state[name]
        self._pos = int(state["pos"])
        self._size = int(state["size"])
        self.push_count = int(state["push_count"])


class RecentBuffer(ReplayBuffer):
    """FIFO of the most recent transitions under the current policy."""

    def __init__(self, state_shape, k: int, capacity: int = 10_000,
                 state_dtype=np.float64):
        super().__init__(capacity, state_shape, k, state_dtype)


class FrameStore:
    """Content-addressed store of 84x84 grayscale frames.

    Identical frames share one id, so repeated renders of the same scene
    cost eight bytes per reference instead of seven kilobytes.
    """

    SHAPE = (84, 84)

    def __init__(self):
        self._frames: list[np.ndarray] = []
        self._index: dict[bytes, int] = {}

    def __len__(self):
        return len(self._frames)

    def add(self, frame: np.ndarray) -> int:
        frame = np.ascontiguousarray(frame, dtype=np.uint8)
        if frame.shape != self.SHAPE:
            raise UsageError(f"frame must be {self.SHAPE}, got {frame.shape}")
        key = hashlib.blake2b(frame.tobytes(), digest_size=16).digest()
        hit = self._index.get(key)
        if hit is not None:
            return hit
        idx = len(self._frames)
        self._frames.append(frame.copy())
        self._index[key] = idx
        return idx

    def frame(self, idx: int) -> np.ndarray:
        return self._frames[idx]

    def stacks(self, ids: np.ndarray) -> np.ndarray:
        """Materialize id vectors (..., 4) into uint8 stacks (..., 84, 84, 4)."""
        ids = np.asarray(ids)
        if ids.shape[-1] != 4:
            raise UsageError(f"id vectors must have length 4, got {ids.shape}")
        bank = np.stack(self._frames) if self._frames else np.zeros(
            (1,) + self.SHAPE, dtype=np.uint8)
        picked = bank[ids]  # (..., 4, 84, 84)
        return np.moveaxis(picked, -3, -1)

    def state_dict(self) -> dict:
        bank = (np.stack(self._frames) if self._frames
                else np.zeros((0,) + self.SHAPE, dtype=np.uint8))
        return {"frames": bank}

    def load_state_dict(self, state: dict):
        self._frames = []
        self._index = {}
        for frame in state["frames"]:
            self.add(frame)
