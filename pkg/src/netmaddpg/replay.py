"""Local replay buffers holding ``(own obs, joint action, own reward, next own obs)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class Transition:
    local_observation: np.ndarray
    joint_action: np.ndarray
    local_reward: float
    next_local_observation: np.ndarray


class Batch(NamedTuple):
    obs: np.ndarray  # (S, obs_dim)
    actions: np.ndarray  # (S, joint_action_dim)
    rewards: np.ndarray  # (S,)
    next_obs: np.ndarray  # (S, obs_dim)


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest record is overwritten first.

    Storage is allocated on the first push, which also fixes the observation
    and joint-action widths for the lifetime of the buffer.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.size = 0
        self.cursor = 0
        self._obs = self._act = self._rew = self._next = None

    def __len__(self) -> int:
        return self.size

    @property
    def dims(self) -> tuple[int, int] | None:
        return None if self._obs is None else (self._obs.shape[1], self._act.shape[1])

    def _allocate(self, obs_dim: int, act_dim: int) -> None:
        self._obs = np.zeros((self.capacity, obs_dim))
        self._act = np.zeros((self.capacity, act_dim))
        self._rew = np.zeros(self.capacity)
        self._next = np.zeros((self.capacity, obs_dim))

    def push(self, t: Transition) -> None:
        self.add(t.local_observation, t.joint_action, t.local_reward, t.next_local_observation)

    def add(self, obs, joint_action, reward: float, next_obs) -> None:
        obs = np.asarray(obs, dtype=np.float64)
        joint_action = np.asarray(joint_action, dtype=np.float64).ravel()
        next_obs = np.asarray(next_obs, dtype=np.float64)
        if self._obs is None:
            if obs.ndim != 1 or next_obs.shape != obs.shape:
                raise ValueError("observation and next observation must be equal-length vectors")
            self._allocate(obs.shape[0], joint_action.shape[0])
        if obs.shape != (self._obs.shape[1],) or next_obs.shape != obs.shape:
            raise ValueError(f"observation length {obs.shape} does not match buffer width {self._obs.shape[1]}")
        if joint_action.shape != (self._act.shape[1],):
            raise ValueError(f"joint action length {joint_action.shape} does not match buffer width {self._act.shape[1]}")
        k = self.cursor
        self._obs[k] = obs
        self._act[k] = joint_action
        self._rew[k] = reward
        self._next[k] = next_obs
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` uniform draws with replacement over the stored records."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if n < 1:
            raise ValueError("sample size must be positive")
        return rng.integers(0, self.size, size=n)

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(self._obs[idx], self._act[idx], self._rew[idx], self._next[idx])

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(n, rng))

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        return self._transitions(self.sample_indices(n, rng))

    def _transitions(self, idx) -> list[Transition]:
        return [
            Transition(self._obs[k].copy(), self._act[k].copy(), float(self._rew[k]), self._next[k].copy())
            for k in idx
        ]

    def contents(self) -> list[Transition]:
        """All stored records, oldest first."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self.cursor) % self.capacity
        return self._transitions(order)

    def state_arrays(self) -> dict:
        if self._obs is None:
            return {"size": np.array(0), "cursor": np.array(0)}
        n = self.size
        return {
            "size": np.array(n),
            "cursor": np.array(self.cursor),
            "obs": self._obs[:n],
            "act": self._act[:n],
            "rew": self._rew[:n],
            "next": self._next[:n],
        }

    def load_state_arrays(self, d) -> None:
        n = int(d["size"])
        self.size, self.cursor = n, int(d["cursor"])
        if n == 0:
            self._obs = self._act = self._rew = self._next = None
            return
        self._allocate(d["obs"].shape[1], d["act"].shape[1])
        self._obs[:n] = d["obs"]
        self._act[:n] = d["act"]
        self._rew[:n] = d["rew"]
        self._next[:n] = d["next"]
