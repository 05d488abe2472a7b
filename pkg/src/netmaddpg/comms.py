"""Communication matrices and critic consensus.

A communication matrix ``C`` is right-stochastic: row ``i`` holds the weights
agent ``i`` assigns to the critics it receives, and ``C[i, j] > 0`` means
agent ``i`` receives from agent ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

ROW_SUM_TOL = 1e-12


class CommMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class ConsensusConfig:
    zeta: float = 0.1
    eta: float = 0.001
    denom_floor: float = 1e-8

    def __post_init__(self):
        if self.zeta < 0:
            raise ValueError("zeta must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.denom_floor <= 0:
            raise ValueError("denom_floor must be positive")


class CommMatrix:
    def __init__(self, entries):
        entries = np.array(entries, dtype=np.float64)
        validate_stochastic(entries)
        entries.setflags(write=False)
        self.entries = entries

    @property
    def n_agents(self) -> int:
        return self.entries.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.entries[i]

    def neighbors(self, i: int) -> list[int]:
        """Agents ``j != i`` that ``i`` receives from."""
        return [int(j) for j in np.flatnonzero(self.entries[i] > 0) if j != i]

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.entries, np.eye(self.n_agents)))

    def __repr__(self) -> str:
        return f"CommMatrix({self.entries.tolist()})"


def validate_stochastic(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise CommMatrixError(f"communication matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise CommMatrixError("communication matrix has non-finite entries")
    if np.any(m < 0):
        raise CommMatrixError("communication matrix has negative entries")
    err = np.abs(m.sum(axis=1) - 1.0)
    if np.any(err > ROW_SUM_TOL):
        i = int(np.argmax(err))
        raise CommMatrixError(f"row {i} sums to {m[i].sum()!r}, not 1")


def identity(n: int) -> CommMatrix:
    return CommMatrix(np.eye(n))


def _cooperative_block(n: int, eta: float) -> np.ndarray:
    m = np.full((n, n), eta / (n - 1))
    np.fill_diagonal(m, 1.0 - eta)
    return m


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta <= 1.0:
        raise CommMatrixError(f"eta must lie in [0, 1], got {eta}")


def build_cooperative(n: int, eta: float) -> CommMatrix:
    """``1 - eta`` on the diagonal, ``eta / (n - 1)`` everywhere else."""
    if n < 2:
        raise CommMatrixError("cooperative matrix needs at least 2 agents")
    _check_eta(eta)
    return CommMatrix(_cooperative_block(n, eta))


def build_one_vs_n(n_total: int, eta: float) -> CommMatrix:
    """Agent 0 (the lone adversary) is isolated; the rest form a cooperative block."""
    if n_total < 3:
        raise CommMatrixError("1-vs-N matrix needs the adversary plus at least 2 team members")
    _check_eta(eta)
    m = np.zeros((n_total, n_total))
    m[0, 0] = 1.0
    m[1:, 1:] = _cooperative_block(n_total - 1, eta)
    return CommMatrix(m)


def build_ring(n: int, eta: float) -> CommMatrix:
    """Each agent keeps ``1 - eta`` and receives ``eta`` from its successor (cyclically)."""
    if n < 2:
        raise CommMatrixError("ring matrix needs at least 2 agents")
    _check_eta(eta)
    m = np.eye(n) * (1.0 - eta)
    for i in range(n):
        m[i, (i + 1) % n] += eta
    return CommMatrix(m)


def load_matrix(path) -> CommMatrix:
    """Read ``N`` on the first line followed by ``N`` rows of ``N`` numbers."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise CommMatrixError(f"{path}: empty file")
    try:
        n = int(lines[0])
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise CommMatrixError(f"{path}: {exc}") from None
    if len(rows) != n or any(len(r) != n for r in rows):
        raise CommMatrixError(f"{path}: expected {n} rows of {n} values")
    return CommMatrix(rows)


def save_matrix(path, c: CommMatrix) -> None:
    rows = [" ".join(repr(float(x)) for x in row) for row in c.entries]
    Path(path).write_text("\n".join([str(c.n_agents), *rows]) + "\n")


# A schedule maps the environment step to the matrix in force at that step.
CommSchedule = Callable[[int], CommMatrix]


def constant_schedule(c: CommMatrix) -> CommSchedule:
    return lambda step: c


def hard_consensus(critic_params: list[np.ndarray], c: CommMatrix) -> list[np.ndarray]:
    """Replace every critic by the ``C``-weighted combination of the old critics.

    Only entries with positive weight are read, so an agent never touches a
    critic it does not receive from.
    """
    n = len(critic_params)
    if c.n_agents != n:
        raise ValueError(f"matrix is {c.n_agents}x{c.n_agents} but {n} critics were given")
    shape = critic_params[0].shape
    if any(p.shape != shape for p in critic_params):
        raise ValueError("critic parameter vectors differ in length")
    snapshot = list(critic_params)
    out = []
    for i in range(n):
        row = c.entries[i]
        acc = None
        for j in np.flatnonzero(row > 0):
            term = row[j] * snapshot[j]
            acc = term if acc is None else acc + term
        out.append(acc)
    return out


def soft_penalty(
    own: np.ndarray,
    all_params: list[np.ndarray],
    row,
    zeta: float,
    denom_floor: float,
    self_index: int | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted squared relative distance from ``own`` to the received critics.

    ``penalty = zeta * sum_j row[j] * |own - p_j|^2 / (|p_j|^2 + denom_floor)``;
    the gradient treats the neighbours' parameters as constants. The
    ``self_index`` term and zero-weight terms are skipped.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (len(all_params),):
        raise ValueError("need one weight per parameter vector")
    if np.any(row < 0):
        raise ValueError("weights must be non-negative")
    grad = np.zeros_like(own)
    penalty = 0.0
    if zeta == 0.0:
        return penalty, grad
    for j, p in enumerate(all_params):
        if j == self_index or row[j] == 0.0:
            continue
        if p.shape != own.shape:
            raise ValueError("parameter vectors differ in length")
        diff = own - p
        denom = float(p @ p) + denom_floor
        penalty += row[j] * float(diff @ diff) / denom
        grad += (2.0 * zeta * row[j] / denom) * diff
    return zeta * penalty, grad
