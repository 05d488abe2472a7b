"""Feed-forward networks on flat float64 parameter vectors.

Parameters of an MLP live in a single 1-D array. The canonical layout is
layer by layer, each layer contributing its weight matrix (shape
``(fan_in, fan_out)``, row-major) followed by its bias vector, so a layer
computes ``x @ W + b``. Everything that consensus touches (averaging,
penalties, target tracking) therefore works on plain vectors.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh")

CHECKPOINT_MAGIC = b"NNPV"
CHECKPOINT_VERSION = 1


class NonFiniteError(FloatingPointError):
    """Raised when a gradient or loss contains NaN or inf."""


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_dims)

    def unflatten(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` per layer into ``params``; no copies are made."""
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        layers = []
        offset = 0
        for fan_in, fan_out in self.layer_dims:
            w = params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = params[offset : offset + fan_out]
            offset += fan_out
            layers.append((w, b))
        return layers

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MLPSpec":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_dims=tuple(d["hidden_dims"]),
            output_dim=int(d["output_dim"]),
            hidden_activation=d.get("hidden_activation", "relu"),
            output_activation=d.get("output_activation", "identity"),
        )


# Network size of the full-scale experiments; desk-scale runs use smaller specs.
FULL_SCALE_HIDDEN = (256, 256, 256, 256, 256)


def actor_spec(input_dim: int, output_dim: int, hidden=(64, 64), activation="relu") -> MLPSpec:
    return MLPSpec(input_dim, tuple(hidden), output_dim, activation, "tanh")


def critic_spec(input_dim: int, hidden=(64, 64), activation="relu") -> MLPSpec:
    return MLPSpec(input_dim, tuple(hidden), 1, activation, "identity")


def mlp_init(spec: MLPSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases."""
    params = np.zeros(spec.n_params)
    for w, _ in spec.unflatten(params):
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{what} must have trailing dimension {dim}, got shape {x.shape}")
    return x, single


def forward_cached(params: np.ndarray, spec: MLPSpec, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Batched forward pass. Returns the output and the activations needed by backward."""
    layers = spec.unflatten(params)
    acts = [x]
    h = x
    last = len(layers) - 1
    for k, (w, b) in enumerate(layers):
        # in-place updates: allocation dominates at these sizes
        h = h @ w
        h += b
        if k < last:
            if spec.hidden_activation == "relu":
                np.maximum(h, 0.0, out=h)
            else:
                np.tanh(h, out=h)
        elif spec.output_activation == "tanh":
            np.tanh(h, out=h)
        acts.append(h)
    return h, acts


def _scale_by_derivative(delta: np.ndarray, out: np.ndarray, kind: str) -> None:
    if kind == "relu":
        np.multiply(delta, out > 0.0, out=delta)
    elif kind == "tanh":
        d = out * out
        np.subtract(1.0, d, out=d)
        delta *= d


def backward_cached(
    params: np.ndarray,
    spec: MLPSpec,
    acts: list,
    cotangent: np.ndarray,
    need_input_grad: bool = True,
    need_param_grad: bool = True,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Reverse pass given the activations from :func:`forward_cached`.

    Gradients are of ``sum(cotangent * output)``, summed over the batch.
    """
    layers = spec.unflatten(params)
    grad = np.empty_like(params) if need_param_grad else None
    grad_layers = spec.unflatten(grad) if need_param_grad else None
    last = len(layers) - 1
    delta = np.array(cotangent, dtype=np.float64)
    for k in range(last, -1, -1):
        kind = spec.output_activation if k == last else spec.hidden_activation
        _scale_by_derivative(delta, acts[k + 1], kind)
        if need_param_grad:
            gw, gb = grad_layers[k]
            np.matmul(acts[k].T, delta, out=gw)
            np.sum(delta, axis=0, out=gb)
        if k > 0 or need_input_grad:
            delta = delta @ layers[k][0].T
    return grad, (delta if need_input_grad else None)


def mlp_forward(params: np.ndarray, spec: MLPSpec, x) -> np.ndarray:
    """Evaluate the network on one input vector or a ``(batch, input_dim)`` array."""
    xb, single = _as_batch(x, spec.input_dim, "input")
    out, _ = forward_cached(params, spec, xb)
    return out[0] if single else out


def mlp_backward(params: np.ndarray, spec: MLPSpec, x, output_cotangent) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of ``cotangent . output`` w.r.t. parameters and input."""
    xb, single = _as_batch(x, spec.input_dim, "input")
    cot = np.asarray(output_cotangent, dtype=np.float64)
    if single:
        cot = cot[None, :] if cot.ndim == 1 else cot
    if cot.shape != (xb.shape[0], spec.output_dim):
        raise ValueError(f"cotangent shape {cot.shape} does not match output ({xb.shape[0]}, {spec.output_dim})")
    _, acts = forward_cached(params, spec, xb)
    grad, in_grad = backward_cached(params, spec, acts, cot)
    return grad, (in_grad[0] if single else in_grad)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.first_moment.shape != self.second_moment.shape:
            raise ValueError("moment arrays differ in shape")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def zeros(cls, n: int, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, learning_rate, **kw)

    def copy(self) -> "AdamState":
        return replace(self, first_moment=self.first_moment.copy(), second_moment=self.second_moment.copy())


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step. Inputs are not modified."""
    if grads.shape != params.shape or state.first_moment.shape != params.shape:
        raise ValueError("params, grads and optimizer state must have matching shapes")
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        raise NonFiniteError(f"non-finite gradient in {bad.size} entries (first at index {bad[0]})")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    with np.errstate(over="ignore"):
        m = b1 * state.first_moment + (1.0 - b1) * grads
        v = b2 * state.second_moment + (1.0 - b2) * (grads * grads)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
        # squared gradients beyond the float range would silently freeze the step
        raise NonFiniteError("optimizer moments overflowed")
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


def soft_update(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    """``tau * online + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if target.shape != online.shape:
        raise ValueError("target and online parameter vectors differ in length")
    return param_weighted_sum((tau, 1.0 - tau), [online, target])


def param_weighted_sum(weights, params_list) -> np.ndarray:
    """Elementwise ``sum_j weights[j] * params_list[j]``."""
    weights = list(weights)
    if len(weights) != len(params_list) or not params_list:
        raise ValueError("need one weight per parameter vector")
    n = params_list[0].shape
    if any(p.shape != n for p in params_list):
        raise ValueError("parameter vectors differ in length")
    out = weights[0] * params_list[0]
    for w, p in zip(weights[1:], params_list[1:]):
        out = out + w * p
    return out


# -- checkpoint container -------------------------------------------------
#
# layout: magic (4 bytes) | header length (uint32, little endian) |
#         UTF-8 JSON header | float64 little-endian payload


def dumps_params(params: np.ndarray, spec: MLPSpec, extra: dict | None = None) -> bytes:
    if params.shape != (spec.n_params,):
        raise ValueError("parameter vector does not match spec")
    header = {
        "format_version": CHECKPOINT_VERSION,
        "endianness": "little",
        "dtype": "float64",
        "count": spec.n_params,
        "spec": spec.to_dict(),
    }
    if extra:
        header["extra"] = extra
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)
    buf.write(np.asarray(params, dtype="<f8").tobytes())
    return buf.getvalue()


def loads_params(data: bytes) -> tuple[np.ndarray, MLPSpec, dict]:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a parameter container")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported container version {header.get('format_version')}")
    if header.get("dtype") != "float64" or header.get("endianness") not in ("little", "big"):
        raise ValueError("unsupported payload encoding")
    dtype = "<f8" if header["endianness"] == "little" else ">f8"
    spec = MLPSpec.from_dict(header["spec"])
    payload = np.frombuffer(data[8 + hlen :], dtype=dtype)
    if payload.size != header["count"] or payload.size != spec.n_params:
        raise ValueError("payload length does not match header")
    return payload.astype(np.float64), spec, header.get("extra", {})


def save_params(path, params: np.ndarray, spec: MLPSpec, extra: dict | None = None) -> None:
    Path(path).write_bytes(dumps_params(params, spec, extra))


def load_params(path) -> tuple[np.ndarray, MLPSpec, dict]:
    return loads_params(Path(path).read_bytes())
