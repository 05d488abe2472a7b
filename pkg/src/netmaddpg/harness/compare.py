"""Aligning several runs into one score table."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agents import ALGORITHMS
from .run import RunRecord, read_metrics


class GridMismatch(ValueError):
    """Runs that cannot be placed in one table."""


@dataclass
class Comparison:
    columns: list[str]  # algorithms, in the fixed order of ALGORITHMS
    keys: list[tuple[int, str]]  # (step, agent_or_team)
    scores: np.ndarray  # (len(keys), len(columns)), mean over runs of each algorithm
    n_runs: dict[str, int]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "agent_or_team", *self.columns])
            for (step, group), row in zip(self.keys, self.scores):
                w.writerow([step, group, *(repr(float(x)) for x in row)])


def compare_runs(records: list[RunRecord], output=None) -> Comparison:
    """One column per algorithm, rows keyed by evaluation step and score group.

    Runs of the same algorithm (different seeds) are averaged. All runs must
    share scenario, agent count and evaluation grid.
    """
    if not records:
        raise GridMismatch("no runs to compare")
    ref = records[0].config
    per_algo: dict[str, list[dict]] = {}
    grid = None
    for rec in records:
        cfg = rec.config
        if (cfg["scenario"], cfg["n_agents"]) != (ref["scenario"], ref["n_agents"]):
            raise GridMismatch(
                f"{rec.output_dir}: {cfg['scenario']} with {cfg['n_agents']} agents, "
                f"expected {ref['scenario']} with {ref['n_agents']}"
            )
        table = {(int(r["step"]), r["agent_or_team"]): float(r["mean_eval_score"]) for r in read_metrics(rec.metrics_path)}
        keys = sorted(table)
        if grid is None:
            grid = keys
        elif keys != grid:
            raise GridMismatch(f"{rec.output_dir}: evaluation steps differ from {records[0].output_dir}")
        per_algo.setdefault(cfg["algorithm"], []).append(table)
    columns = [a for a in ALGORITHMS if a in per_algo]
    scores = np.array([[np.mean([t[k] for t in per_algo[a]]) for a in columns] for k in grid])
    result = Comparison(columns, grid, scores.reshape(len(grid), len(columns)), {a: len(per_algo[a]) for a in columns})
    if output is not None:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        result.write_csv(output)
    return result
