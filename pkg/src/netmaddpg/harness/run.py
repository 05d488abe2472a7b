"""Running experiments and recording what they produce."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..agents import EvalResult, MetricsRow, Trainer, TrainingDiverged, evaluate, random_policy
from ..env import EnvConfig
from ..nn import save_params
from .config import ExperimentConfig, load_config, save_config

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "NETMADDPG_OUTPUT_ROOT"
CHECKPOINT_FORMAT = 1
METRICS_COLUMNS = (
    "step", "algorithm", "agent_or_team", "mean_eval_score", "critic_loss", "actor_objective", "consensus_penalty",
)
CONFIG_FILE = "config.txt"
METRICS_FILE = "metrics.csv"
RECORD_FILE = "run.json"
CKPT_DIR = "checkpoint"


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    output_dir: str
    config_path: str
    metrics_path: str
    checkpoint_paths: list[str] = field(default_factory=list)
    duration_s: float = 0.0
    status: str = "running"
    final_step: int = 0
    failed_step: int | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.status == "failed"

    def save(self) -> None:
        Path(self.output_dir, RECORD_FILE).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def load(cls, run_dir) -> "RunRecord":
        return cls(**json.loads(Path(run_dir, RECORD_FILE).read_text()))


def default_output_dir(config: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    name = f"{config.scenario}{config.n_agents}-{config.algorithm}-seed{config.seed}-{config.content_hash()[:10]}"
    return root / name


def format_row(row: MetricsRow) -> list[str]:
    return [
        str(row.step), row.algorithm, row.agent_or_team,
        repr(row.mean_eval_score), repr(row.critic_loss), repr(row.actor_objective), repr(row.consensus_penalty),
    ]


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _csv_line(values) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(values)
    return buf.getvalue()


# -- checkpoints ----------------------------------------------------------


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_checkpoint(trainer: Trainer, ckpt_dir: Path, config_hash: str) -> list[Path]:
    """Write per-agent network containers plus the resumable state; the manifest goes last."""
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for agent in trainer.agents:
        for name, spec, params in (("actor", agent.actor_spec, agent.actor), ("critic", agent.critic_spec, agent.critic)):
            p = ckpt_dir / f"agent{agent.index}_{name}.nnp"
            save_params(p, params, spec, extra={"agent": agent.index, "step": trainer.step})
            paths.append(p)
    arrays, meta = trainer.state_dict()
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    state_path = ckpt_dir / "state.npz"
    _atomic_write_bytes(state_path, buf.getvalue())
    paths.append(state_path)
    manifest = {
        "format_version": CHECKPOINT_FORMAT,
        "config_hash": config_hash,
        "step": trainer.step,
        "files": [p.name for p in paths],
        "trainer": meta,
    }
    manifest_path = ckpt_dir / "manifest.json"
    _atomic_write_bytes(manifest_path, json.dumps(manifest).encode())
    paths.append(manifest_path)
    return paths


def load_checkpoint(trainer: Trainer, ckpt_dir: Path, config_hash: str | None = None) -> int:
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    if manifest["format_version"] != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {manifest['format_version']}")
    if config_hash is not None and manifest["config_hash"] != config_hash:
        raise ValueError("checkpoint was written by a different configuration")
    with np.load(ckpt_dir / "state.npz") as data:
        arrays = {k: data[k] for k in data.files}
    trainer.load_state_dict(arrays, manifest["trainer"])
    return int(manifest["step"])


def make_trainer(config: ExperimentConfig) -> Trainer:
    return Trainer(config.trainer_config(), config.env_config(), config.seed, config.comm_matrix())


# -- running --------------------------------------------------------------


def run_experiment(config: ExperimentConfig, resume: bool = False) -> RunRecord:
    """Train one configuration, writing metrics, checkpoints and ``run.json``.

    Metrics rows are appended as each evaluation point completes and a
    checkpoint follows every evaluation point after the first, so an
    interrupted run can be resumed with ``resume=True``. A diverging run is
    recorded as failed with the step index; its partial CSV is kept.
    """
    out = Path(config.output_dir) if config.output_dir else default_output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.content_hash()
    config_path, metrics_path, ckpt_dir = out / CONFIG_FILE, out / METRICS_FILE, out / CKPT_DIR
    trainer = make_trainer(config)
    resumed_from = 0
    if resume and (ckpt_dir / "manifest.json").exists():
        resumed_from = load_checkpoint(trainer, ckpt_dir, digest)
        rows = [r for r in read_metrics(metrics_path) if int(r["step"]) <= resumed_from]
        lines = [_csv_line(METRICS_COLUMNS)] + [_csv_line([r[c] for c in METRICS_COLUMNS]) for r in rows]
        metrics_path.write_text("".join(lines))
        log.info("resuming %s from step %d", out, resumed_from)
    else:
        metrics_path.write_text(_csv_line(METRICS_COLUMNS))
    save_config(config_path, config)

    record = RunRecord(
        config=json.loads(json.dumps(asdict(config))),
        config_hash=digest,
        output_dir=str(out),
        config_path=str(config_path),
        metrics_path=str(metrics_path),
    )
    if resumed_from and Path(out, RECORD_FILE).exists():
        record.duration_s = RunRecord.load(out).duration_s
    start = time.perf_counter()
    ckpt_paths: list[Path] = []
    try:
        with open(metrics_path, "a", newline="") as fh:
            for rows in trainer.run():
                fh.writelines(_csv_line(format_row(r)) for r in rows)
                fh.flush()
                log.info("step %d: %s", trainer.step, ", ".join(f"{r.agent_or_team}={r.mean_eval_score:.3f}" for r in rows))
                if trainer.step > 0:
                    ckpt_paths = write_checkpoint(trainer, ckpt_dir, digest)
        record.status = "ok"
    except TrainingDiverged as exc:
        record.status = "failed"
        record.failed_step = exc.step
        record.error = str(exc)
        log.error("%s", exc)
    if not ckpt_paths and (ckpt_dir / "manifest.json").exists():
        manifest = json.loads((ckpt_dir / "manifest.json").read_text())
        ckpt_paths = [ckpt_dir / f for f in manifest["files"]] + [ckpt_dir / "manifest.json"]
    record.checkpoint_paths = [str(p) for p in ckpt_paths]
    record.final_step = trainer.step
    record.duration_s += time.perf_counter() - start
    record.save()
    return record


def load_run(run_dir) -> tuple[ExperimentConfig, Trainer]:
    """The configuration and trained state stored in ``run_dir``."""
    run_dir = Path(run_dir)
    config = load_config(run_dir / CONFIG_FILE)
    trainer = make_trainer(config)
    ckpt = run_dir / CKPT_DIR
    if (ckpt / "manifest.json").exists():
        load_checkpoint(trainer, ckpt, config.content_hash())
    return config, trainer


def evaluate_run(run_dir, n_episodes: int | None = None) -> EvalResult:
    _, trainer = load_run(run_dir)
    return trainer.evaluate(n_episodes)


def random_baseline(env_config: EnvConfig, n_episodes: int = 1000, seed: int = 0) -> EvalResult:
    """Uniform random actions; episode starts and actions come from separate streams of ``seed``."""
    starts, actions = np.random.SeedSequence(seed).spawn(2)
    policy = random_policy(np.random.default_rng(actions), env_config.n_agents, env_config.action_dim)
    return evaluate(policy, env_config, n_episodes, np.random.default_rng(starts))


BASELINE_FILE = Path(__file__).with_name("baselines.json")


def stored_baseline(scenario: str, n_agents: int) -> dict[str, float]:
    """Random-policy scores measured over 1000 episodes and shipped with the package."""
    data = json.loads(BASELINE_FILE.read_text())
    key = f"{scenario}{n_agents}"
    if key not in data["scores"]:
        raise KeyError(f"no stored baseline for {key}; measure one with `netmaddpg evaluate --random`")
    return data["scores"][key]
