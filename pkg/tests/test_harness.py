import json
import os
from pathlib import Path

import numpy as np
import pytest

from netmaddpg.agents import Trainer
from netmaddpg.comms import build_ring, save_matrix
from netmaddpg.env import EnvConfig
from netmaddpg.harness import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    GridMismatch,
    RunRecord,
    compare_runs,
    load_config,
    preset,
    random_baseline,
    read_metrics,
    run_experiment,
    stored_baseline,
)
from netmaddpg.harness.cli import build_parser, config_from_args, main

TINY = dict(
    total_steps=300, eval_interval=100, eval_episodes=2, warmup=50, minibatch_size=16, hidden=(16,), learning_interval=5
)
TINY_FLAGS = [
    "--steps", "300", "--eval-interval", "100", "--eval-episodes", "2", "--warmup", "50",
    "--minibatch", "16", "--hidden", "16", "--learning-interval", "5",
]


def tiny(tmp_path, name="run", **kw) -> ExperimentConfig:
    return ExperimentConfig(**{**TINY, "output_dir": str(tmp_path / name), **kw})


def parse(argv) -> ExperimentConfig:
    return config_from_args(build_parser().parse_args(argv))


# -- configuration ------------------------------------------------------


def test_cli_parse_example():
    cfg = parse("train --scenario spread --agents 3 --algo soft_consensus --eta 0.001 --seed 7".split())
    assert (cfg.scenario, cfg.n_agents, cfg.algorithm, cfg.eta, cfg.seed) == ("spread", 3, "soft_consensus", 0.001, 7)
    assert cfg.comm_matrix().row(0).tolist() == pytest.approx([0.999, 0.0005, 0.0005])


def test_cli_rejects_incompatible_topology(capsys):
    assert main("train --scenario spread --comm one_vs_n".split()) == 1
    assert "adversary" in capsys.readouterr().err


def test_cli_rejects_unknown_flag():
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 1


def test_layering_preset_file_flags(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# overrides\nseed=5\neta = 0.02\nhidden=32,32\n")
    cfg = parse(["train", "--preset", "spread3", "--config", str(path), "--seed", "9"])
    assert cfg.n_agents == 3 and cfg.total_steps == 50_000
    assert cfg.eta == 0.02 and cfg.hidden == (32, 32)
    assert cfg.seed == 9


def test_config_text_round_trip(tmp_path):
    cfg = ExperimentConfig(scenario="adversary", n_agents=3, algorithm="hard_consensus", eta=0.05, hidden=(8, 4))
    path = tmp_path / "c.txt"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg
    assert load_config(path).content_hash() == cfg.content_hash()


def test_config_hash():
    a = ExperimentConfig()
    assert a.content_hash() == ExperimentConfig(output_dir="/elsewhere").content_hash()
    assert a.content_hash() != ExperimentConfig(seed=1).content_hash()
    assert len(a.content_hash()) == 40


@pytest.mark.parametrize(
    "text", ["nonsense_key=1\n", "seed\n", "seed=1\nseed=2\n", "n_agents=two\n", "algorithm=ppo\n", "tau=0\n"]
)
def test_bad_config_files(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_default_topologies():
    assert ExperimentConfig(algorithm="hard_consensus").topology == "full"
    assert ExperimentConfig(scenario="adversary", n_agents=3).topology == "one_vs_n"
    assert ExperimentConfig(scenario="adversary", n_agents=2, algorithm="soft_consensus").comm_matrix().is_identity()
    assert ExperimentConfig(algorithm="decentralized").comm_matrix() is None
    with pytest.raises(ConfigError):
        ExperimentConfig(comm_topology="file")


def test_presets():
    assert set(PRESETS) == {"spread2", "spread3", "adv1v1", "adv1v2"}
    assert preset("spread2").total_steps == 20_000
    assert preset("spread3").total_steps == 50_000
    assert preset("adv1v2").setting == "mixed"
    assert preset("adv1v1", algorithm="soft_consensus").comm_matrix().n_agents == 2


def test_stored_baseline_reproduces():
    measured = random_baseline(EnvConfig(n_agents=2), 1000, 0).mean_score
    assert measured == stored_baseline("spread", 2)["team"]
    with pytest.raises(KeyError):
        stored_baseline("spread", 9)


# -- running ------------------------------------------------------------


def test_run_writes_referenced_files(tmp_path):
    rec = run_experiment(tiny(tmp_path))
    assert rec.status == "ok" and rec.final_step == 300
    out = Path(rec.output_dir)
    emitted = {p for p in out.rglob("*") if p.is_file()}
    referenced = [Path(rec.config_path), Path(rec.metrics_path), *map(Path, rec.checkpoint_paths), out / "run.json"]
    assert len(referenced) == len(set(referenced))
    assert emitted == set(referenced)
    assert RunRecord.load(out) == rec
    rows = read_metrics(rec.metrics_path)
    assert [r["step"] for r in rows] == ["0", "100", "200", "300"]
    assert list(rows[0]) == [
        "step", "algorithm", "agent_or_team", "mean_eval_score", "critic_loss", "actor_objective", "consensus_penalty",
    ]


def test_same_config_same_csv_bytes(tmp_path):
    a = run_experiment(tiny(tmp_path, "a", algorithm="soft_consensus"))
    b = run_experiment(tiny(tmp_path, "b", algorithm="soft_consensus"))
    assert Path(a.metrics_path).read_bytes() == Path(b.metrics_path).read_bytes()


def test_snapshot_reproduces_csv(tmp_path):
    a = run_experiment(tiny(tmp_path, "a", seed=4))
    again = load_config(a.config_path).replace(output_dir=str(tmp_path / "again"))
    b = run_experiment(again)
    assert Path(a.metrics_path).read_bytes() == Path(b.metrics_path).read_bytes()


def test_eval_interval_beyond_total_steps(tmp_path):
    rec = run_experiment(tiny(tmp_path, eval_interval=1000))
    assert [r["step"] for r in read_metrics(rec.metrics_path)] == ["0", "300"]


def test_hard_identity_matches_decentralized(tmp_path):
    a = run_experiment(parse(["train", *TINY_FLAGS, "--output-dir", str(tmp_path / "dec")]))
    cfg = parse(["train", *TINY_FLAGS, "--algo", "hard_consensus", "--comm", "identity", "--output-dir", str(tmp_path / "hard")])
    b = run_experiment(cfg)
    ra, rb = read_metrics(a.metrics_path), read_metrics(b.metrics_path)
    for x, y in zip(ra, rb, strict=True):
        assert x.pop("algorithm") == "decentralized" and y.pop("algorithm") == "hard_consensus"
        assert x == y


def test_failed_run_keeps_partial_metrics(tmp_path):
    rec = run_experiment(tiny(tmp_path, algorithm="hard_consensus", eta=0.5, critic_lr=1e100))
    assert rec.failed and rec.failed_step is not None
    assert 50 <= rec.failed_step < 300
    rows = read_metrics(rec.metrics_path)
    assert rows and rows[0]["step"] == "0"
    assert RunRecord.load(rec.output_dir).failed_step == rec.failed_step


def test_cli_exit_code_on_divergence(tmp_path):
    argv = ["train", *TINY_FLAGS, "--algo", "hard_consensus", "--eta", "0.5", "--critic-lr", "1e100",
            "--output-dir", str(tmp_path / "bad")]
    assert main(argv) == 2


def test_resume_continues_csv(tmp_path, monkeypatch):
    full = run_experiment(tiny(tmp_path, "full", total_steps=400))
    original = Trainer.advance

    def interrupted(self):
        if self.step == 250:
            raise KeyboardInterrupt
        original(self)

    cfg = tiny(tmp_path, "cut", total_steps=400)
    monkeypatch.setattr(Trainer, "advance", interrupted)
    with pytest.raises(KeyboardInterrupt):
        run_experiment(cfg)
    monkeypatch.setattr(Trainer, "advance", original)
    # the CSV already holds rows up to 200 and the checkpoint is at step 200
    assert read_metrics(Path(cfg.output_dir) / "metrics.csv")[-1]["step"] == "200"
    resumed = run_experiment(cfg, resume=True)
    assert resumed.status == "ok"
    assert Path(resumed.metrics_path).read_bytes() == Path(full.metrics_path).read_bytes()


def test_resume_rejects_other_config(tmp_path):
    run_experiment(tiny(tmp_path))
    with pytest.raises(ValueError, match="different configuration"):
        run_experiment(tiny(tmp_path, seed=3), resume=True)


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NETMADDPG_OUTPUT_ROOT", str(tmp_path / "root"))
    rec = run_experiment(ExperimentConfig(**{**TINY, "total_steps": 100}))
    assert Path(rec.output_dir).parent == tmp_path / "root"


# -- comparison ---------------------------------------------------------


def test_compare_single_run(tmp_path):
    rec = run_experiment(tiny(tmp_path))
    table = compare_runs([rec], tmp_path / "cmp.csv")
    assert table.columns == ["decentralized"]
    own = read_metrics(rec.metrics_path)
    assert [k[0] for k in table.keys] == [int(r["step"]) for r in own]
    assert table.scores[:, 0].tolist() == [float(r["mean_eval_score"]) for r in own]


def test_compare_column_order_and_averaging(tmp_path):
    recs = [
        run_experiment(tiny(tmp_path, "s", algorithm="soft_consensus")),
        run_experiment(tiny(tmp_path, "m", algorithm="maddpg")),
        run_experiment(tiny(tmp_path, "d0", seed=0)),
        run_experiment(tiny(tmp_path, "d1", seed=1)),
    ]
    a = compare_runs(recs, tmp_path / "a.csv")
    b = compare_runs(recs[::-1], tmp_path / "b.csv")
    assert a.columns == ["maddpg", "decentralized", "soft_consensus"]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    d = [read_metrics(r.metrics_path) for r in recs[2:]]
    expected = [(float(x["mean_eval_score"]) + float(y["mean_eval_score"])) / 2 for x, y in zip(*d)]
    assert np.allclose(a.scores[:, 1], expected, rtol=1e-15)


def test_compare_rejects_mismatch(tmp_path):
    a = run_experiment(tiny(tmp_path, "a"))
    b = run_experiment(tiny(tmp_path, "b", eval_interval=150))
    c = run_experiment(tiny(tmp_path, "c", n_agents=3))
    with pytest.raises(GridMismatch):
        compare_runs([a, b])
    with pytest.raises(GridMismatch):
        compare_runs([a, c])


# -- other subcommands --------------------------------------------------


def test_cli_train_evaluate_compare(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["train", *TINY_FLAGS, "--output-dir", str(out)]) == 0
    assert main(["evaluate", str(out), "--episodes", "2"]) == 0
    assert "team:" in capsys.readouterr().out
    assert main(["compare", str(out), "--output", str(tmp_path / "cmp.csv")]) == 0
    assert (tmp_path / "cmp.csv").read_text().startswith("step,agent_or_team,decentralized\n")


def test_cli_evaluate_random(capsys):
    assert main(["evaluate", "--random", "--episodes", "10"]) == 0
    assert "over 10 episodes" in capsys.readouterr().out
    assert main(["evaluate"]) == 1


def test_cli_sweep(tmp_path):
    argv = ["sweep", *TINY_FLAGS, "--seeds", "0", "1", "--algos", "decentralized", "maddpg",
            "--output-dir", str(tmp_path / "sw"), "--compare-output", str(tmp_path / "sw.csv")]
    assert main(argv) == 0
    assert len(list((tmp_path / "sw").iterdir())) == 4
    assert (tmp_path / "sw.csv").read_text().splitlines()[0] == "step,agent_or_team,maddpg,decentralized"


def test_cli_validate_comm(tmp_path):
    good = tmp_path / "ring.txt"
    save_matrix(good, build_ring(4, 0.2))
    assert main(["validate-comm", str(good)]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n0.5 0.6\n0 1\n")
    assert main(["validate-comm", str(bad)]) == 1
    assert main(["validate-comm", str(tmp_path / "missing.txt")]) == 1


def test_comm_file_topology(tmp_path):
    path = tmp_path / "m.txt"
    save_matrix(path, build_ring(3, 0.25))
    cfg = tiny(tmp_path, n_agents=3, algorithm="hard_consensus", comm_topology="file", comm_file=str(path))
    assert cfg.comm_matrix().row(2).tolist() == [0.25, 0.0, 0.75]
    with pytest.raises(ConfigError):
        tiny(tmp_path, n_agents=4, algorithm="hard_consensus", comm_topology="file", comm_file=str(path)).comm_matrix()
