"""Desk-scale experiment presets.

The learning interval and actor learning rate differ from the
``TrainerConfig`` defaults: with one update per 100 environment steps the
N=2 spread agents do not improve on a random policy within 2e4 steps.

Full-scale runs (256-unit hidden layers x5, 1e5 to 5e5 steps, N up to 10)
can be requested by overriding ``hidden`` and ``total_steps``.
"""

from __future__ import annotations

from .config import ExperimentConfig

_DESK = dict(learning_interval=1, actor_lr=1e-3, critic_lr=1e-3, hidden=(64, 64))

PRESETS: dict[str, dict] = {
    "spread2": dict(scenario="spread", n_agents=2, total_steps=20_000, **_DESK),
    "spread3": dict(scenario="spread", n_agents=3, total_steps=50_000, **_DESK),
    "adv1v1": dict(scenario="adversary", n_agents=2, total_steps=20_000, **_DESK),
    "adv1v2": dict(scenario="adversary", n_agents=3, total_steps=20_000, **_DESK),
}

FULL_SCALE = dict(hidden=(256,) * 5, total_steps=500_000)


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})
