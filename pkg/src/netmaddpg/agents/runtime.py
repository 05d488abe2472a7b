from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..comms import ConsensusConfig
from ..env import EnvConfig
from ..nn import AdamState, MLPSpec, actor_spec, critic_spec, mlp_init
from ..replay import ReplayBuffer

ALGORITHMS = ("maddpg", "decentralized", "hard_consensus", "soft_consensus")
SETTINGS = ("cooperative", "mixed")


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian exploration noise with a linearly annealed standard deviation."""

    kind: str = "gaussian"
    sigma_initial: float = 0.3
    sigma_final: float = 0.05
    decay_steps: int = 10_000

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not 0.0 <= self.sigma_final <= self.sigma_initial:
            raise ValueError("need 0 <= sigma_final <= sigma_initial")
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be positive")

    def sigma(self, step: int) -> float:
        frac = min(step / self.decay_steps, 1.0)
        return self.sigma_initial + frac * (self.sigma_final - self.sigma_initial)


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str = "decentralized"
    setting: str = "cooperative"
    gamma: float = 0.95
    tau: float = 0.01
    minibatch_size: int = 256
    learning_interval: int = 100
    total_steps: int = 20_000
    warmup: int = 1024
    buffer_capacity: int = 100_000
    # None means: anneal over the first half of training
    noise: NoiseSpec | None = None
    consensus: ConsensusConfig | None = None
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64)
    hidden_activation: str = "relu"
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    eval_interval: int = 1000
    eval_episodes: int = 100

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        for name in ("minibatch_size", "learning_interval", "buffer_capacity", "eval_interval", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.total_steps < 0 or self.warmup < 0:
            raise ValueError("total_steps and warmup must be non-negative")

    @property
    def exploration(self) -> NoiseSpec:
        if self.noise is not None:
            return self.noise
        return NoiseSpec(decay_steps=max(1, self.total_steps // 2))

    @property
    def consensus_config(self) -> ConsensusConfig:
        return self.consensus or ConsensusConfig()

    @property
    def centralized(self) -> bool:
        return self.algorithm == "maddpg"


@dataclass(frozen=True)
class TeamAssignment:
    team_of: tuple[int, ...]

    @classmethod
    def single(cls, n: int) -> "TeamAssignment":
        return cls((0,) * n)

    @classmethod
    def for_env(cls, config: EnvConfig) -> "TeamAssignment":
        if config.scenario == "adversary":
            return cls((0,) + (1,) * (config.n_agents - 1))
        return cls.single(config.n_agents)

    @property
    def n_agents(self) -> int:
        return len(self.team_of)

    def teammates(self, i: int) -> list[int]:
        """Members of ``i``'s team, ``i`` included."""
        return [k for k, t in enumerate(self.team_of) if t == self.team_of[i]]

    def adversaries(self, i: int) -> list[int]:
        return [k for k, t in enumerate(self.team_of) if t != self.team_of[i]]


def action_slices(config: EnvConfig) -> list[slice]:
    d = config.action_dim
    return [slice(k * d, (k + 1) * d) for k in range(config.n_agents)]


def slot_indices(slices: list[slice], agents) -> np.ndarray:
    if not agents:
        return np.zeros(0, dtype=np.intp)
    return np.concatenate([np.arange(slices[k].start, slices[k].stop) for k in agents])


@dataclass
class AgentRuntime:
    """Everything one agent owns during training."""

    index: int
    obs_dim: int
    slices: list[slice]
    actor_spec: MLPSpec
    critic_spec: MLPSpec
    actor: np.ndarray
    critic: np.ndarray
    actor_target: np.ndarray
    critic_target: np.ndarray
    actor_opt: AdamState
    critic_opt: AdamState
    buffer: ReplayBuffer
    centralized: bool = False
    # per-agent running statistics since the last evaluation
    stats: dict = field(default_factory=lambda: {"critic_loss": [], "actor_objective": [], "consensus_penalty": []})

    @property
    def own_slice(self) -> slice:
        return self.slices[self.index]

    @property
    def joint_action_dim(self) -> int:
        return self.slices[-1].stop

    def own_action(self, actor_output: np.ndarray) -> np.ndarray:
        return actor_output if self.centralized else actor_output[..., self.own_slice]

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "actor_target": self.actor_target,
            "critic_target": self.critic_target,
        }


def make_agent(i: int, env_config: EnvConfig, config: TrainerConfig, rng: np.random.Generator) -> AgentRuntime:
    """Build agent ``i``; the actor is initialised before the critic from ``rng``.

    Decentralized actors emit the whole joint action (the surrogate policy);
    the centralized actor emits only the agent's own action and its critic
    sees every agent's observation.
    """
    slices = action_slices(env_config)
    d_joint = slices[-1].stop
    obs_dim = env_config.obs_dim(i)
    if config.centralized:
        out_dim = env_config.action_dim
        critic_in = sum(env_config.obs_dim(k) for k in range(env_config.n_agents)) + d_joint
    else:
        out_dim = d_joint
        critic_in = obs_dim + d_joint
    a_spec = actor_spec(obs_dim, out_dim, config.actor_hidden, config.hidden_activation)
    c_spec = critic_spec(critic_in, config.critic_hidden, config.hidden_activation)
    actor = mlp_init(a_spec, rng)
    critic = mlp_init(c_spec, rng)
    return AgentRuntime(
        index=i,
        obs_dim=obs_dim,
        slices=slices,
        actor_spec=a_spec,
        critic_spec=c_spec,
        actor=actor,
        critic=critic,
        actor_target=actor.copy(),
        critic_target=critic.copy(),
        actor_opt=AdamState.zeros(a_spec.n_params, config.actor_lr),
        critic_opt=AdamState.zeros(c_spec.n_params, config.critic_lr),
        buffer=ReplayBuffer(config.buffer_capacity),
        centralized=config.centralized,
    )
