"""Central finite differences, independent of the reverse-mode code paths."""

import numpy as np

H = 1e-5


def central_grad(f, x, h=H):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        old = x.flat[k]
        x.flat[k] = old + h
        fp = f(x)
        x.flat[k] = old - h
        fm = f(x)
        x.flat[k] = old
        g.flat[k] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def random_params(spec, rng, scale=0.5):
    """Dense random parameters; nonzero biases keep ReLU pre-activations off the kink at 0."""
    return rng.normal(scale=scale, size=spec.n_params)


def min_relu_margin(params, spec, x):
    """Smallest |pre-activation| of any ReLU unit over the batch ``x``; inf for tanh nets.

    Central differences straddling a ReLU kink are meaningless, so oracles
    redraw their inputs when this margin is tiny.
    """
    if spec.hidden_activation != "relu":
        return np.inf
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    margin = np.inf
    layers = spec.unflatten(np.asarray(params))
    for w, b in layers[:-1]:
        z = h @ w + b
        margin = min(margin, float(np.min(np.abs(z))))
        h = np.maximum(z, 0.0)
    return margin
