"""Particle worlds for the cooperative-navigation and keep-away scenarios.

Two scenarios share one point-mass physics model:

* ``spread``: N agents, N landmarks, one shared reward for covering the
  landmarks while avoiding collisions.
* ``adversary``: one adversary (agent index 0) and ``n_agents - 1`` good
  agents, with as many landmarks as good agents. One landmark is the target;
  only the good agents observe where it is.

Collisions only affect the reward; there are no contact forces and no walls.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

SCENARIOS = ("spread", "adversary")


@dataclass(frozen=True)
class EnvConfig:
    n_agents: int = 2
    scenario: str = "spread"
    world_half_width: float = 1.0
    dt: float = 0.1
    damping: float = 0.25
    max_speed: float = 1.0
    collision_threshold: float = 0.1
    max_episode_length: int = 25

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        min_agents = 2 if self.scenario == "adversary" else 1
        if self.n_agents < min_agents:
            raise ValueError(f"{self.scenario} needs at least {min_agents} agents")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_speed <= 0:
            raise ValueError("max_speed must be positive")
        if not 0.0 < self.collision_threshold < self.world_half_width:
            raise ValueError("collision threshold must lie in (0, world_half_width)")
        if self.max_episode_length < 1:
            raise ValueError("max_episode_length must be positive")

    @property
    def n_landmarks(self) -> int:
        return self.n_agents if self.scenario == "spread" else self.n_agents - 1

    @property
    def adversary_index(self) -> int | None:
        return 0 if self.scenario == "adversary" else None

    def is_adversary(self, i: int) -> bool:
        return self.scenario == "adversary" and i == 0

    def obs_dim(self, i: int) -> int:
        # own position, own velocity, landmarks, other agents, [target]
        d = 4 + 2 * self.n_landmarks + 2 * (self.n_agents - 1)
        if self.scenario == "adversary" and i != 0:
            d += 2
        return d

    @property
    def action_dim(self) -> int:
        return 2


@dataclass(frozen=True)
class WorldState:
    agent_positions: np.ndarray  # (n_agents, 2)
    agent_velocities: np.ndarray  # (n_agents, 2)
    landmark_positions: np.ndarray  # (n_landmarks, 2)
    target_index: int | None = None
    step_counter: int = 0

    def copy(self) -> "WorldState":
        return replace(
            self,
            agent_positions=self.agent_positions.copy(),
            agent_velocities=self.agent_velocities.copy(),
            landmark_positions=self.landmark_positions.copy(),
        )

    def to_arrays(self) -> dict:
        return {
            "agent_positions": self.agent_positions,
            "agent_velocities": self.agent_velocities,
            "landmark_positions": self.landmark_positions,
            "target_index": np.array(-1 if self.target_index is None else self.target_index),
            "step_counter": np.array(self.step_counter),
        }

    @classmethod
    def from_arrays(cls, d) -> "WorldState":
        target = int(d["target_index"])
        return cls(
            np.array(d["agent_positions"], dtype=np.float64),
            np.array(d["agent_velocities"], dtype=np.float64),
            np.array(d["landmark_positions"], dtype=np.float64),
            None if target < 0 else target,
            int(d["step_counter"]),
        )


@dataclass(frozen=True)
class AgentObservation:
    own_position: np.ndarray
    own_velocity: np.ndarray
    relative_landmark_positions: np.ndarray  # (n_landmarks, 2)
    relative_agent_positions: np.ndarray  # (n_agents - 1, 2)
    relative_target_position: np.ndarray | None = None

    def flatten(self) -> np.ndarray:
        parts = [
            self.own_position,
            self.own_velocity,
            self.relative_landmark_positions.ravel(),
            self.relative_agent_positions.ravel(),
        ]
        if self.relative_target_position is not None:
            parts.append(self.relative_target_position)
        return np.concatenate(parts)


def _check_state(state: WorldState, config: EnvConfig) -> None:
    if state.agent_positions.shape != (config.n_agents, 2) or state.landmark_positions.shape != (
        config.n_landmarks,
        2,
    ):
        raise ValueError("world state does not match the environment config")


def env_reset(config: EnvConfig, rng: np.random.Generator) -> tuple[WorldState, list[np.ndarray]]:
    """Sample a fresh world; returns the state and the flattened observations."""
    w = config.world_half_width
    agents = rng.uniform(-w, w, size=(config.n_agents, 2))
    landmarks = rng.uniform(-w, w, size=(config.n_landmarks, 2))
    target = int(rng.integers(config.n_landmarks)) if config.scenario == "adversary" else None
    state = WorldState(agents, np.zeros((config.n_agents, 2)), landmarks, target, 0)
    return state, observe_all(state, config)


def env_step(
    state: WorldState, actions, config: EnvConfig
) -> tuple[WorldState, list[np.ndarray], np.ndarray, bool]:
    """Advance one step. Rewards are ordered by agent index."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (config.n_agents, config.action_dim):
        raise ValueError(f"expected actions of shape ({config.n_agents}, 2), got {actions.shape}")
    acc = np.clip(actions, -1.0, 1.0)
    vel = state.agent_velocities * (1.0 - config.damping) + acc * config.dt
    speed = np.sqrt(np.sum(vel * vel, axis=1))
    over = speed > config.max_speed
    if np.any(over):
        vel[over] *= (config.max_speed / speed[over])[:, None]
    pos = state.agent_positions + vel * config.dt
    nxt = WorldState(pos, vel, state.landmark_positions, state.target_index, state.step_counter + 1)
    rewards = rewards_for(nxt, config)
    done = nxt.step_counter >= config.max_episode_length
    return nxt, observe_all(nxt, config), rewards, done


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def collision_count(positions: np.ndarray, threshold: float) -> int:
    d = _pairwise(positions, positions)
    iu = np.triu_indices(len(positions), k=1)
    return int(np.sum(d[iu] < threshold))


def spread_reward(state: WorldState, config: EnvConfig) -> float:
    """Negative coverage distance minus one per colliding pair; shared by every agent."""
    d = _pairwise(state.landmark_positions, state.agent_positions)
    coverage = float(np.sum(d.min(axis=1)))
    return -coverage - collision_count(state.agent_positions, config.collision_threshold)


def adversary_rewards(state: WorldState, config: EnvConfig) -> list[float]:
    """Rewards of the good agents (by index) followed by the adversary's."""
    target = state.landmark_positions[state.target_index]
    r_adv = -float(np.linalg.norm(target - state.agent_positions[0]))
    good = state.agent_positions[1:]
    best = float(np.min(np.sqrt(np.sum((good - target) ** 2, axis=1))))
    r_good = -best - r_adv
    return [r_good] * len(good) + [r_adv]


def rewards_for(state: WorldState, config: EnvConfig) -> np.ndarray:
    if config.scenario == "spread":
        return np.full(config.n_agents, spread_reward(state, config))
    r = adversary_rewards(state, config)
    # agent order puts the adversary first
    return np.array([r[-1], *r[:-1]])


def observe(state: WorldState, agent_index: int, config: EnvConfig) -> AgentObservation:
    if not 0 <= agent_index < config.n_agents:
        raise IndexError(f"agent index {agent_index} out of range")
    own = state.agent_positions[agent_index]
    others = np.delete(state.agent_positions, agent_index, axis=0)
    target = None
    if config.scenario == "adversary" and agent_index != 0:
        target = state.landmark_positions[state.target_index] - own
    return AgentObservation(
        own.copy(),
        state.agent_velocities[agent_index].copy(),
        state.landmark_positions - own,
        others - own,
        target,
    )


def observe_all(state: WorldState, config: EnvConfig) -> list[np.ndarray]:
    _check_state(state, config)
    return [observe(state, i, config).flatten() for i in range(config.n_agents)]


class ParticleEnv:
    """Stateful wrapper holding a world and its own random stream."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.state: WorldState | None = None

    def reset(self) -> list[np.ndarray]:
        self.state, obs = env_reset(self.config, self.rng)
        return obs

    def step(self, actions) -> tuple[list[np.ndarray], np.ndarray, bool]:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        self.state, obs, rewards, done = env_step(self.state, actions, self.config)
        return obs, rewards, done


def trajectory_header(config: EnvConfig) -> list[str]:
    cols = ["step"]
    for i in range(config.n_agents):
        cols += [f"agent{i}_px", f"agent{i}_py", f"agent{i}_vx", f"agent{i}_vy"]
    for i in range(config.n_agents):
        cols += [f"agent{i}_ax", f"agent{i}_ay"]
    cols += [f"agent{i}_reward" for i in range(config.n_agents)]
    return cols


def write_trajectory_csv(path, config: EnvConfig, records) -> None:
    """Write ``(step, state, actions, rewards)`` records, one row per step.

    ``state`` is the world after the step was applied.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trajectory_header(config))
        for step, state, actions, rewards in records:
            row = [step]
            for p, v in zip(state.agent_positions, state.agent_velocities):
                row += [repr(float(x)) for x in (*p, *v)]
            row += [repr(float(x)) for x in np.asarray(actions).ravel()]
            row += [repr(float(r)) for r in rewards]
            writer.writerow(row)
