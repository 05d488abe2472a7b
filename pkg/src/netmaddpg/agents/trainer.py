"""Training loop shared by all algorithm variants.

Random streams: one root ``SeedSequence(seed)`` is split into
``[env, eval, agents]``; the agents stream is split once per agent, and
each agent's stream into ``[init, noise, sampling]``. The layout is the same
for every algorithm, so variants that differ only in how they update see
exactly the same random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ..comms import CommMatrix, CommSchedule, constant_schedule, hard_consensus, identity, soft_penalty
from ..env import EnvConfig, ParticleEnv, WorldState, env_reset, env_step
from ..nn import NonFiniteError, soft_update
from .audit import AccessLog, AuditedEnv
from .runtime import AgentRuntime, TeamAssignment, TrainerConfig, make_agent
from .updates import (
    actor_update_centralized,
    actor_update_mixed,
    actor_update_surrogate,
    critic_target_centralized,
    critic_target_decentralized,
    critic_update,
    select_action,
)

STAT_KEYS = ("critic_loss", "actor_objective", "consensus_penalty")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"training diverged at step {step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass(frozen=True)
class MetricsRow:
    step: int
    algorithm: str
    agent_or_team: str
    mean_eval_score: float
    critic_loss: float
    actor_objective: float
    consensus_penalty: float


def score_groups(config: EnvConfig) -> list[tuple[str, list[int]]]:
    """Reporting groups: the whole team for spread, adversary and good agents otherwise."""
    if config.scenario == "adversary":
        return [("adversary", [0]), ("good", list(range(1, config.n_agents)))]
    return [("team", list(range(config.n_agents)))]


# -- evaluation -----------------------------------------------------------

Policy = Callable[[list], np.ndarray]


def greedy_policy(agents: list[AgentRuntime]) -> Policy:
    def act(obs):
        return np.stack([select_action(a, o) for a, o in zip(agents, obs)])

    return act


def random_policy(rng: np.random.Generator, n_agents: int, action_dim: int = 2) -> Policy:
    def act(obs):
        return rng.uniform(-1.0, 1.0, size=(n_agents, action_dim))

    return act


@dataclass
class EvalResult:
    returns: np.ndarray  # (n_episodes, n_agents), undiscounted
    groups: list[tuple[str, list[int]]]

    def group_scores(self) -> dict[str, np.ndarray]:
        return {name: self.returns[:, idx].mean(axis=1) for name, idx in self.groups}

    def mean_scores(self) -> dict[str, float]:
        return {name: float(s.mean()) for name, s in self.group_scores().items()}

    @property
    def mean_score(self) -> float:
        """Score of the first group (the team in spread, the adversary otherwise)."""
        return self.mean_scores()[self.groups[0][0]]


def evaluate(policy: Policy, env_config: EnvConfig, n_episodes: int, rng: np.random.Generator) -> EvalResult:
    """Run noise-free episodes; ``rng`` only drives the initial states."""
    returns = np.zeros((n_episodes, env_config.n_agents))
    for ep in range(n_episodes):
        state, obs = env_reset(env_config, rng)
        done = False
        while not done:
            state, obs, rewards, done = env_step(state, policy(obs), env_config)
            returns[ep] += rewards
    return EvalResult(returns, score_groups(env_config))


# -- training -------------------------------------------------------------


def _mean(xs) -> float:
    return float(np.mean(xs)) if xs else float("nan")


class Trainer:
    """Runs one algorithm variant on one environment.

    ``comm`` may be a :class:`CommMatrix` or a schedule ``step -> CommMatrix``;
    it is required by the consensus variants and ignored by the others.
    """

    def __init__(
        self,
        config: TrainerConfig,
        env_config: EnvConfig,
        seed: int,
        comm: CommMatrix | CommSchedule | None = None,
        teams: TeamAssignment | None = None,
        log: AccessLog | None = None,
    ):
        self.config = config
        self.env_config = env_config
        self.seed = seed
        n = env_config.n_agents
        if config.algorithm in ("hard_consensus", "soft_consensus"):
            if comm is None:
                raise ValueError(f"{config.algorithm} needs a communication matrix")
        else:
            comm = comm if comm is not None else identity(n)
        self.schedule: CommSchedule = constant_schedule(comm) if isinstance(comm, CommMatrix) else comm
        if self.schedule(0).n_agents != n:
            raise ValueError("communication matrix size does not match the number of agents")
        self.teams = teams or TeamAssignment.for_env(env_config)
        if self.teams.n_agents != n:
            raise ValueError("team assignment size does not match the number of agents")
        self.log = log if log is not None else AccessLog()

        root = np.random.SeedSequence(seed)
        env_seq, self._eval_seq, agents_seq = root.spawn(3)
        streams = [s.spawn(3) for s in agents_seq.spawn(n)]
        self.agents = [make_agent(i, env_config, config, np.random.default_rng(streams[i][0])) for i in range(n)]
        self.noise_rngs = [np.random.default_rng(s[1]) for s in streams]
        self.sample_rngs = [np.random.default_rng(s[2]) for s in streams]
        self.env = AuditedEnv(ParticleEnv(env_config, np.random.default_rng(env_seq)), self.log)
        self.env.reset()
        self.step = 0
        self.updates = 0

    # -- acting ---------------------------------------------------------

    def _env_step(self) -> None:
        n = self.env_config.n_agents
        sigma = self.config.exploration.sigma(self.step)
        obs = [self.env.observation(i, reader=i) for i in range(n)]
        actions = np.stack(
            [
                select_action(a, obs[i], self.noise_rngs[i].normal(0.0, sigma, size=self.env_config.action_dim))
                for i, a in enumerate(self.agents)
            ]
        )
        done = self.env.step(actions)
        joint = actions.ravel()
        for i, agent in enumerate(self.agents):
            agent.buffer.add(obs[i], joint, self.env.reward(i, reader=i), self.env.observation(i, reader=i))
        if done:
            self.env.reset()
        self.step += 1

    # -- learning -------------------------------------------------------

    def _sample(self):
        s = self.config.minibatch_size
        n = len(self.agents)
        if not self.config.centralized:
            return [a.buffer.sample_batch(s, self.sample_rngs[i]) for i, a in enumerate(self.agents)]
        # the centralized critic gathers every agent's records at shared indices
        out = []
        for i, a in enumerate(self.agents):
            idx = a.buffer.sample_indices(s, self.sample_rngs[i])
            for k in range(n):
                self.log.record(i, "observation", k, s)
            out.append([b.buffer.gather(idx) for b in self.agents])
        return out

    def _learn(self) -> None:
        cfg = self.config
        agents = self.agents
        n = len(agents)
        comm = self.schedule(self.step)
        batches = self._sample()

        if cfg.algorithm == "soft_consensus":
            cons = cfg.consensus_config
            snapshot = [a.critic for a in agents]
            penalties = []
            for i in range(n):
                for j in comm.neighbors(i):
                    self.log.record(i, "critic", j)
                penalties.append(
                    soft_penalty(agents[i].critic, snapshot, comm.row(i), cons.zeta, cons.denom_floor, self_index=i)
                )
        else:
            penalties = [None] * n

        for i, agent in enumerate(agents):
            if cfg.centralized:
                for k in range(n):
                    self.log.record(i, "actor", k)
                joint = batches[i]
                y = critic_target_centralized(agents, joint, i, cfg.gamma)
                obs_part = np.concatenate([b.obs for b in joint], axis=1)
                actions = joint[i].actions
            else:
                y = critic_target_decentralized(agent, batches[i], cfg.gamma)
                obs_part, actions = batches[i].obs, batches[i].actions
            loss = critic_update(agent, obs_part, actions, y, penalties[i])
            agent.stats["critic_loss"].append(loss)
            if penalties[i] is not None:
                agent.stats["consensus_penalty"].append(penalties[i][0])

        for i, agent in enumerate(agents):
            if cfg.centralized:
                obj = actor_update_centralized(agent, batches[i])
            elif cfg.setting == "mixed":
                obj, _ = actor_update_mixed(agent, batches[i], self.teams)
            else:
                obj = actor_update_surrogate(agent, batches[i])
            agent.stats["actor_objective"].append(obj)

        for agent in agents:
            agent.actor_target = soft_update(agent.actor_target, agent.actor, cfg.tau)
            agent.critic_target = soft_update(agent.critic_target, agent.critic, cfg.tau)

        if cfg.algorithm == "hard_consensus":
            for i in range(n):
                for j in comm.neighbors(i):
                    self.log.record(i, "critic", j)
            for agent, mixed in zip(agents, hard_consensus([a.critic for a in agents], comm)):
                agent.critic = mixed
        self.updates += 1

    def _check_finite(self) -> None:
        for agent in self.agents:
            for name, p in agent.param_arrays().items():
                if not np.all(np.isfinite(p)):
                    raise TrainingDiverged(self.step, f"non-finite {name} parameters of agent {agent.index}")

    def advance(self) -> None:
        """One environment step, plus a learning step when one is due."""
        self._env_step()
        cfg = self.config
        if self.step % cfg.learning_interval == 0 and len(self.agents[0].buffer) >= max(cfg.warmup, 1):
            try:
                self._learn()
            except NonFiniteError as exc:
                raise TrainingDiverged(self.step, str(exc)) from exc
            self._check_finite()

    # -- evaluation -----------------------------------------------------

    def evaluate(self, n_episodes: int | None = None) -> EvalResult:
        n_episodes = n_episodes or self.config.eval_episodes
        # same initial states at every evaluation point
        rng = np.random.default_rng(self._eval_seq)
        return evaluate(greedy_policy(self.agents), self.env_config, n_episodes, rng)

    def metrics_rows(self, result: EvalResult) -> list[MetricsRow]:
        rows = []
        scores = result.mean_scores()
        for name, idx in result.groups:
            stats = {k: [x for i in idx for x in self.agents[i].stats[k]] for k in STAT_KEYS}
            rows.append(
                MetricsRow(
                    self.step,
                    self.config.algorithm,
                    name,
                    scores[name],
                    _mean(stats["critic_loss"]),
                    _mean(stats["actor_objective"]),
                    _mean(stats["consensus_penalty"]),
                )
            )
        for agent in self.agents:
            for k in STAT_KEYS:
                agent.stats[k].clear()
        return rows

    def is_eval_step(self) -> bool:
        return self.step % self.config.eval_interval == 0 or self.step == self.config.total_steps

    def run(self) -> Iterator[list[MetricsRow]]:
        """Train to ``total_steps``, yielding metrics rows at every evaluation point.

        A fresh trainer yields the initial evaluation first; a restored one
        resumes after its last evaluation point.
        """
        if self.step == 0:
            yield self.metrics_rows(self.evaluate())
        while self.step < self.config.total_steps:
            self.advance()
            if self.is_eval_step():
                yield self.metrics_rows(self.evaluate())

    # -- checkpointing --------------------------------------------------

    def state_dict(self) -> tuple[dict[str, np.ndarray], dict]:
        """Arrays and JSON-able metadata sufficient to resume bit-exactly."""
        arrays: dict[str, np.ndarray] = {}
        for k, v in self.env.env.state.to_arrays().items():
            arrays[f"env/{k}"] = v
        for agent in self.agents:
            p = f"agent{agent.index}/"
            for name, arr in agent.param_arrays().items():
                arrays[p + name] = arr
            for name, opt in (("actor_opt", agent.actor_opt), ("critic_opt", agent.critic_opt)):
                arrays[p + name + "/m"] = opt.first_moment
                arrays[p + name + "/v"] = opt.second_moment
            for name, arr in agent.buffer.state_arrays().items():
                arrays[p + "buffer/" + name] = arr
        meta = {
            "step": self.step,
            "updates": self.updates,
            "env_rng": self.env.env.rng.bit_generator.state,
            "noise_rngs": [r.bit_generator.state for r in self.noise_rngs],
            "sample_rngs": [r.bit_generator.state for r in self.sample_rngs],
            "opt_steps": [[a.actor_opt.step_count, a.critic_opt.step_count] for a in self.agents],
            "stats": [{k: list(a.stats[k]) for k in STAT_KEYS} for a in self.agents],
            "access_log": self.log.to_json(),
        }
        return arrays, meta

    def load_state_dict(self, arrays, meta: dict) -> None:
        env_state = WorldState.from_arrays({k[4:]: arrays[k] for k in arrays if k.startswith("env/")})
        self.env.env.state = env_state
        self.env.env.rng.bit_generator.state = meta["env_rng"]
        self.env.refresh()
        for r, s in zip(self.noise_rngs, meta["noise_rngs"]):
            r.bit_generator.state = s
        for r, s in zip(self.sample_rngs, meta["sample_rngs"]):
            r.bit_generator.state = s
        for agent, steps, stats in zip(self.agents, meta["opt_steps"], meta["stats"]):
            p = f"agent{agent.index}/"
            agent.actor = np.array(arrays[p + "actor"])
            agent.critic = np.array(arrays[p + "critic"])
            agent.actor_target = np.array(arrays[p + "actor_target"])
            agent.critic_target = np.array(arrays[p + "critic_target"])
            for name, count in zip(("actor_opt", "critic_opt"), steps):
                opt = getattr(agent, name)
                opt.first_moment = np.array(arrays[p + name + "/m"])
                opt.second_moment = np.array(arrays[p + name + "/v"])
                opt.step_count = int(count)
            prefix = p + "buffer/"
            agent.buffer.load_state_arrays({k[len(prefix):]: arrays[k] for k in arrays if k.startswith(prefix)})
            agent.stats = {k: list(stats[k]) for k in STAT_KEYS}
        self.step = int(meta["step"])
        self.updates = int(meta["updates"])
        self.log.counts.clear()
        self.log.counts.update(AccessLog.from_json(meta["access_log"]).counts)


@dataclass
class TrainResult:
    rows: list[MetricsRow]
    trainer: Trainer

    @property
    def agents(self) -> list[AgentRuntime]:
        return self.trainer.agents


def train(
    config: TrainerConfig,
    env_config: EnvConfig,
    comm: CommMatrix | CommSchedule | None = None,
    seed: int = 0,
    teams: TeamAssignment | None = None,
) -> TrainResult:
    trainer = Trainer(config, env_config, seed, comm, teams)
    rows = [row for batch in trainer.run() for row in batch]
    return TrainResult(rows, trainer)
