"""Per-agent learning steps.

Critics take ``[observation part, joint action]`` as input. For the
decentralized variants the observation part is the agent's own observation;
for centralized MADDPG it is every agent's observation concatenated in index
order.
"""

from __future__ import annotations

import numpy as np

from ..nn import NonFiniteError, adam_step, backward_cached, forward_cached, mlp_forward
from ..replay import Batch
from .runtime import AgentRuntime, TeamAssignment, slot_indices


def select_action(agent: AgentRuntime, obs: np.ndarray, noise: np.ndarray | float = 0.0) -> np.ndarray:
    """Own action from the agent's policy plus noise, clipped to [-1, 1]."""
    out = mlp_forward(agent.actor, agent.actor_spec, obs)
    return np.clip(agent.own_action(out) + noise, -1.0, 1.0)


def _critic_input(obs_part: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.concatenate([obs_part, actions], axis=1)


def bootstrap_targets(agent: AgentRuntime, rewards, next_obs_part, next_actions, gamma: float) -> np.ndarray:
    q_next = mlp_forward(agent.critic_target, agent.critic_spec, _critic_input(next_obs_part, next_actions))
    return rewards + gamma * q_next[:, 0]


def critic_target_decentralized(agent: AgentRuntime, batch: Batch, gamma: float) -> np.ndarray:
    """Bootstrap targets where the whole next joint action comes from the agent's target surrogate policy."""
    next_actions = mlp_forward(agent.actor_target, agent.actor_spec, batch.next_obs)
    return bootstrap_targets(agent, batch.rewards, batch.next_obs, next_actions, gamma)


def critic_target_centralized(agents: list[AgentRuntime], batches: list[Batch], i: int, gamma: float) -> np.ndarray:
    """MADDPG targets for agent ``i``: each agent's next action from its own target actor.

    ``batches[k]`` must be agent ``k``'s records at the same buffer indices.
    """
    next_actions = np.concatenate(
        [mlp_forward(a.actor_target, a.actor_spec, b.next_obs) for a, b in zip(agents, batches)], axis=1
    )
    joint_next_obs = np.concatenate([b.next_obs for b in batches], axis=1)
    return bootstrap_targets(agents[i], batches[i].rewards, joint_next_obs, next_actions, gamma)


def critic_loss_and_grad(params, spec, inputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared TD error and its gradient; targets are constants."""
    q, acts = forward_cached(params, spec, inputs)
    err = q[:, 0] - targets
    with np.errstate(over="ignore"):
        loss = float(np.mean(err * err))
    cot = (2.0 / len(err)) * err[:, None]
    grad, _ = backward_cached(params, spec, acts, cot, need_input_grad=False)
    return loss, grad


def critic_update(
    agent: AgentRuntime,
    obs_part: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    consensus_penalty: tuple[float, np.ndarray] | None = None,
) -> float:
    """One Adam step on the critic. Returns the pre-step TD loss (penalty excluded)."""
    loss, grad = critic_loss_and_grad(agent.critic, agent.critic_spec, _critic_input(obs_part, actions), targets)
    if not np.isfinite(loss):
        raise NonFiniteError(f"critic loss of agent {agent.index} is {loss}")
    if consensus_penalty is not None:
        grad = grad + consensus_penalty[1]
    agent.critic, agent.critic_opt = adam_step(agent.critic, grad, agent.critic_opt)
    return loss


def policy_objective_and_grad(
    actor,
    actor_spec,
    critic,
    critic_spec,
    actor_obs: np.ndarray,
    critic_obs: np.ndarray,
    observed_actions: np.ndarray,
    out_index: np.ndarray,
    slot_index: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean critic value when joint-action slots ``slot_index`` are taken from
    actor outputs ``out_index``, and its gradient w.r.t. the actor.

    All other slots keep their observed values and contribute no gradient.
    """
    out, actor_acts = forward_cached(actor, actor_spec, actor_obs)
    joint = observed_actions.copy()
    joint[:, slot_index] = out[:, out_index]
    n_obs = critic_obs.shape[1]
    q, critic_acts = forward_cached(critic, critic_spec, _critic_input(critic_obs, joint))
    s = q.shape[0]
    objective = float(np.mean(q))
    _, dx = backward_cached(critic, critic_spec, critic_acts, np.full((s, 1), 1.0 / s), need_param_grad=False)
    actor_cot = np.zeros_like(out)
    actor_cot[:, out_index] = dx[:, n_obs + slot_index]
    grad, _ = backward_cached(actor, actor_spec, actor_acts, actor_cot, need_input_grad=False)
    return objective, grad


def _step_actor(agent: AgentRuntime, batch: Batch, slots: np.ndarray, ascend: bool) -> float:
    j, g = policy_objective_and_grad(
        agent.actor, agent.actor_spec, agent.critic, agent.critic_spec,
        batch.obs, batch.obs, batch.actions, slots, slots,
    )
    agent.actor, agent.actor_opt = adam_step(agent.actor, -g if ascend else g, agent.actor_opt)
    return j


def actor_update_surrogate(agent: AgentRuntime, batch: Batch) -> float:
    """Ascent on the critic value with the whole joint action from the surrogate policy."""
    return _step_actor(agent, batch, np.arange(agent.joint_action_dim), ascend=True)


def actor_update_mixed(agent: AgentRuntime, batch: Batch, teams: TeamAssignment) -> tuple[float, float | None]:
    """Two-phase update for mixed settings.

    First an ascent step with the team's slots from the surrogate policy and
    adversary slots pinned to the observed actions, then a descent step with
    the roles swapped. Without adversaries only the first phase runs.
    """
    team = slot_indices(agent.slices, teams.teammates(agent.index))
    rivals = teams.adversaries(agent.index)
    team_obj = _step_actor(agent, batch, team, ascend=True)
    if not rivals:
        return team_obj, None
    adv_obj = _step_actor(agent, batch, slot_indices(agent.slices, rivals), ascend=False)
    return team_obj, adv_obj


def actor_update_centralized(agent: AgentRuntime, batches: list[Batch]) -> float:
    """MADDPG actor step: only the agent's own slot comes from its policy."""
    own = np.arange(agent.own_slice.start, agent.own_slice.stop)
    joint_obs = np.concatenate([b.obs for b in batches], axis=1)
    mine = batches[agent.index]
    j, g = policy_objective_and_grad(
        agent.actor, agent.actor_spec, agent.critic, agent.critic_spec,
        mine.obs, joint_obs, mine.actions, np.arange(len(own)), own,
    )
    agent.actor, agent.actor_opt = adam_step(agent.actor, -g, agent.actor_opt)
    return j
