"""Access accounting for the decentralization boundary.

Every read a trainer makes of per-agent data (observations, rewards, actor
or critic parameters) goes through :class:`AccessLog` with the reading agent
and the owning agent. Reads made by the environment itself use
``reader=None`` and are not attributed to any agent.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..comms import CommMatrix
from ..env import ParticleEnv, observe_all

KINDS = ("observation", "reward", "actor", "critic")


class AccessLog:
    def __init__(self):
        self.counts: Counter = Counter()

    def record(self, reader: int | None, kind: str, owner: int, n: int = 1) -> None:
        if reader is not None:
            self.counts[(int(reader), kind, int(owner))] += int(n)

    def foreign_reads(self, kinds=("observation", "reward", "actor")) -> dict:
        """Reads of another agent's data of the given kinds."""
        return {k: v for k, v in self.counts.items() if k[1] in kinds and k[0] != k[2]}

    def critic_reads_off_graph(self, comm: CommMatrix) -> dict:
        """Critic reads of agent ``j`` by agent ``i != j`` where ``C[i, j] == 0``."""
        return {
            k: v
            for k, v in self.counts.items()
            if k[1] == "critic" and k[0] != k[2] and not comm.entries[k[0], k[2]] > 0
        }

    def to_json(self) -> list:
        return [[r, kind, o, n] for (r, kind, o), n in sorted(self.counts.items())]

    @classmethod
    def from_json(cls, rows) -> "AccessLog":
        log = cls()
        for r, kind, o, n in rows:
            log.counts[(int(r), kind, int(o))] = int(n)
        return log


class AuditedEnv:
    """Wraps a :class:`ParticleEnv` so agents collect their own data through logged reads."""

    def __init__(self, env: ParticleEnv, log: AccessLog):
        self.env = env
        self.log = log
        self._obs: list[np.ndarray] = []
        self._rewards = np.zeros(env.config.n_agents)

    @property
    def config(self):
        return self.env.config

    def reset(self) -> None:
        self._obs = self.env.reset()

    def refresh(self) -> None:
        """Recompute observations from the wrapped env's current state."""
        self._obs = observe_all(self.env.state, self.env.config)

    def step(self, actions) -> bool:
        self._obs, self._rewards, done = self.env.step(actions)
        return done

    def observation(self, owner: int, reader: int | None) -> np.ndarray:
        self.log.record(reader, "observation", owner)
        return self._obs[owner]

    def reward(self, owner: int, reader: int | None) -> float:
        self.log.record(reader, "reward", owner)
        return float(self._rewards[owner])
