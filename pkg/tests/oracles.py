"""Brute-force reward formulas written with plain Python loops."""

import math


def spread_reward_bruteforce(agents, landmarks, eps):
    total = 0.0
    for lx, ly in landmarks:
        total -= min(math.hypot(lx - px, ly - py) for px, py in agents)
    n = len(agents)
    for i in range(n):
        for j in range(i + 1, n):
            if math.hypot(agents[i][0] - agents[j][0], agents[i][1] - agents[j][1]) < eps:
                total -= 1.0
    return total


def adversary_rewards_bruteforce(adversary, good, target):
    r_adv = -math.hypot(target[0] - adversary[0], target[1] - adversary[1])
    best = min(math.hypot(target[0] - x, target[1] - y) for x, y in good)
    return -best - r_adv, r_adv


def mlp_forward_reference(params, sizes, hidden_act, out_act, x):
    """Forward pass for one input vector, slicing the flat parameter list by hand."""
    fns = {"relu": lambda v: max(v, 0.0), "tanh": math.tanh, "identity": lambda v: v}
    h = [float(v) for v in x]
    pos = 0
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = params[pos : pos + fan_in * fan_out]
        pos += fan_in * fan_out
        b = params[pos : pos + fan_out]
        pos += fan_out
        f = fns[out_act if layer == len(sizes) - 2 else hidden_act]
        h = [f(sum(h[r] * w[r * fan_out + c] for r in range(fan_in)) + b[c]) for c in range(fan_out)]
    return h
