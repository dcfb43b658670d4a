"""Experience replay on preallocated numpy storage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One stored step: observation, action taken, reward, successor, end flag."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO store with uniform minibatch sampling.

    Storage is a set of preallocated arrays indexed by a ring cursor; pushing
    beyond capacity overwrites the oldest entry.  Sampling is uniform with
    replacement and draws exactly one integer block from the generator.
    """

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1 or state_dim < 1:
            raise ValueError(f"bad buffer shape: capacity={capacity} state_dim={state_dim}")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(
        self,
        state: np.ndarray,
        action: int,
        reward: float,
        next_state: np.ndarray,
        terminal: bool,
    ) -> None:
        i = self._cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = terminal
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def entry(self, i: int) -> Transition:
        """Stored transition by age: entry(0) is the oldest surviving one."""
        if not 0 <= i < self._size:
            raise IndexError(f"entry {i} out of range for size {self._size}")
        if self._size < self.capacity:
            j = i
        else:
            j = (self._cursor + i) % self.capacity
        return Transition(
            state=self.states[j].copy(),
            action=int(self.actions[j]),
            reward=float(self.rewards[j]),
            next_state=self.next_states[j].copy(),
            terminal=bool(self.terminals[j]),
        )

    def sample(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Uniform minibatch with replacement over the stored entries."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminals[idx],
        )
