"""Experiment configuration and its flat ``key=value`` file format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from ..agents import ALGORITHMS, TrainerConfig
from ..comms import CommMatrix, build_cooperative, build_one_vs_n, build_ring, identity, load_matrix
from ..comms import ConsensusConfig
from ..env import EnvConfig

TOPOLOGIES = ("full", "one_vs_n", "ring", "identity", "file")
SCENARIOS = ("spread", "adversary")


class ConfigError(ValueError):
    """An invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "spread"
    n_agents: int = 2
    algorithm: str = "decentralized"
    # None picks "full" for spread, "one_vs_n" for adversary runs with a team of 2+
    comm_topology: str | None = None
    comm_file: str | None = None
    eta: float = 0.001
    zeta: float = 0.1
    total_steps: int = 20_000
    eval_interval: int = 1000
    eval_episodes: int = 100
    seed: int = 0
    output_dir: str | None = None
    learning_interval: int = 100
    minibatch_size: int = 256
    warmup: int = 1024
    buffer_capacity: int = 100_000
    gamma: float = 0.95
    tau: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    max_episode_length: int = 25

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.comm_topology is not None and self.comm_topology not in TOPOLOGIES:
            raise ConfigError(f"unknown communication topology {self.comm_topology!r}")
        if self.topology == "one_vs_n":
            if self.scenario != "adversary":
                raise ConfigError("the one_vs_n topology needs the adversary scenario")
            if self.n_agents < 3:
                raise ConfigError("the one_vs_n topology needs at least 3 agents")
        if self.topology == "file" and not self.comm_file:
            raise ConfigError("topology 'file' needs comm_file")
        if self.n_agents < 1 or (self.scenario == "adversary" and self.n_agents < 2):
            raise ConfigError("not enough agents for the scenario")
        if self.topology in ("full", "ring") and self.n_agents < 2 and self.uses_comm:
            raise ConfigError(f"the {self.topology} topology needs at least 2 agents")
        try:
            self.env_config()
            self.trainer_config()
            ConsensusConfig(self.zeta, self.eta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def topology(self) -> str:
        if self.comm_topology is not None:
            return self.comm_topology
        if self.scenario == "adversary":
            return "one_vs_n" if self.n_agents >= 3 else "identity"
        return "full" if self.n_agents >= 2 else "identity"

    @property
    def uses_comm(self) -> bool:
        return self.algorithm in ("hard_consensus", "soft_consensus")

    @property
    def setting(self) -> str:
        return "mixed" if self.scenario == "adversary" else "cooperative"

    def env_config(self) -> EnvConfig:
        return EnvConfig(n_agents=self.n_agents, scenario=self.scenario, max_episode_length=self.max_episode_length)

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            algorithm=self.algorithm,
            setting=self.setting,
            gamma=self.gamma,
            tau=self.tau,
            minibatch_size=self.minibatch_size,
            learning_interval=self.learning_interval,
            total_steps=self.total_steps,
            warmup=self.warmup,
            buffer_capacity=self.buffer_capacity,
            consensus=ConsensusConfig(zeta=self.zeta, eta=self.eta),
            actor_hidden=self.hidden,
            critic_hidden=self.hidden,
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes,
        )

    def comm_matrix(self) -> CommMatrix | None:
        """The communication matrix for consensus runs, ``None`` otherwise."""
        if not self.uses_comm:
            return None
        n, eta = self.n_agents, self.eta
        topo = self.topology
        if topo == "full":
            return build_cooperative(n, eta)
        if topo == "one_vs_n":
            return build_one_vs_n(n, eta)
        if topo == "ring":
            return build_ring(n, eta)
        if topo == "identity":
            return identity(n)
        c = load_matrix(self.comm_file)
        if c.n_agents != n:
            raise ConfigError(f"{self.comm_file} describes {c.n_agents} agents, config has {n}")
        return c

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- text form ------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        """Git-style blob hash of the config text, excluding the output location."""
        body = self.replace(output_dir=None).to_text().encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    @classmethod
    def from_mapping(cls, values: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Build from string or typed values layered over ``base``."""
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, raw)
        try:
            return dataclasses.replace(base or cls(), **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


_INT_KEYS = {
    "n_agents", "total_steps", "eval_interval", "eval_episodes", "seed", "learning_interval",
    "minibatch_size", "warmup", "buffer_capacity", "max_episode_length",
}
_FLOAT_KEYS = {"eta", "zeta", "gamma", "tau", "actor_lr", "critic_lr"}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return tuple(raw) if key == "hidden" else raw
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "hidden":
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_mapping(parse_config_text(path.read_text(), str(path)), base)


def save_config(path, config: ExperimentConfig) -> None:
    Path(path).write_text(config.to_text())
