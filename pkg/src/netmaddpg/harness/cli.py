"""Command line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..agents import ALGORITHMS
from ..comms import CommMatrixError, load_matrix
from .compare import GridMismatch, compare_runs
from .config import TOPOLOGIES, ConfigError, ExperimentConfig, load_config
from .presets import PRESETS
from .run import RunRecord, default_output_dir, evaluate_run, random_baseline, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag -> config key; every flag defaults to None so that unset flags do not override
_CONFIG_FLAGS = {
    "scenario": ("--scenario", dict(choices=("spread", "adversary"))),
    "n_agents": ("--agents", dict(type=int)),
    "algorithm": ("--algo", dict(choices=ALGORITHMS)),
    "comm_topology": ("--comm", dict(choices=TOPOLOGIES)),
    "comm_file": ("--comm-file", dict()),
    "eta": ("--eta", dict(type=float)),
    "zeta": ("--zeta", dict(type=float)),
    "total_steps": ("--steps", dict(type=int)),
    "eval_interval": ("--eval-interval", dict(type=int)),
    "eval_episodes": ("--eval-episodes", dict(type=int)),
    "seed": ("--seed", dict(type=int)),
    "output_dir": ("--output-dir", dict()),
    "learning_interval": ("--learning-interval", dict(type=int)),
    "minibatch_size": ("--minibatch", dict(type=int)),
    "warmup": ("--warmup", dict(type=int)),
    "buffer_capacity": ("--buffer", dict(type=int)),
    "gamma": ("--gamma", dict(type=float)),
    "tau": ("--tau", dict(type=float)),
    "actor_lr": ("--actor-lr", dict(type=float)),
    "critic_lr": ("--critic-lr", dict(type=float)),
    "hidden": ("--hidden", dict(help="comma-separated hidden layer widths")),
    "max_episode_length": ("--episode-length", dict(type=int)),
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--preset", choices=sorted(PRESETS), help="desk-scale starting point")
    g.add_argument("--config", type=Path, help="key=value config file (overrides the preset)")
    for key, (flag, kw) in _CONFIG_FLAGS.items():
        g.add_argument(flag, dest=key, default=None, **kw)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then preset, then config file, then explicit flags."""
    base = ExperimentConfig(**PRESETS[args.preset]) if args.preset else ExperimentConfig()
    if args.config is not None:
        base = load_config(args.config, base)
    flags = {k: getattr(args, k) for k in _CONFIG_FLAGS if getattr(args, k) is not None}
    return ExperimentConfig.from_mapping(flags, base)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netmaddpg", description="Decentralized multi-agent actor-critic experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one configuration")
    _add_config_flags(p)
    p.add_argument("--resume", action="store_true", help="continue from the run's last checkpoint")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    p = sub.add_parser("evaluate", help="evaluate a finished run, or the random-policy baseline")
    p.add_argument("run_dir", nargs="?", type=Path)
    p.add_argument("--episodes", type=int)
    p.add_argument("--random", action="store_true", help="evaluate uniform random actions instead")
    p.add_argument("--scenario", choices=("spread", "adversary"), default="spread")
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="align several runs into one score table")
    p.add_argument("run_dirs", nargs="+", type=Path)
    p.add_argument("--output", type=Path, required=True, help="comparison CSV to write")

    p = sub.add_parser("sweep", help="run seeds x algorithms in parallel processes")
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--algos", nargs="+", choices=ALGORITHMS)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--compare-output", type=Path, help="also write a comparison CSV")

    p = sub.add_parser("validate-comm", help="check a communication matrix file")
    p.add_argument("path", type=Path)
    return parser


def _cmd_train(args) -> int:
    config = config_from_args(args)
    if args.print_config:
        print(config.to_text(), end="")
        return EXIT_OK
    record = run_experiment(config, resume=args.resume)
    print(f"{record.status}: {record.output_dir} ({record.final_step} steps, {record.duration_s:.1f}s)")
    if record.failed:
        print(f"numerical failure at step {record.failed_step}: {record.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    if args.random:
        cfg = ExperimentConfig(scenario=args.scenario, n_agents=args.agents)
        result = random_baseline(cfg.env_config(), args.episodes or 1000, args.seed)
    elif args.run_dir is None:
        raise UsageError("evaluate needs a run directory or --random")
    else:
        result = evaluate_run(args.run_dir, args.episodes)
    for name, score in result.mean_scores().items():
        print(f"{name}: {score!r} over {len(result.returns)} episodes")
    return EXIT_OK


def _cmd_compare(args) -> int:
    table = compare_runs([RunRecord.load(d) for d in args.run_dirs], args.output)
    print(",".join(["step", "agent_or_team", *table.columns]))
    for (step, group), row in zip(table.keys, table.scores):
        print(",".join([str(step), group, *(f"{x:.3f}" for x in row)]))
    return EXIT_OK


def _run_one(config: ExperimentConfig) -> RunRecord:
    return run_experiment(config)


def _cmd_sweep(args) -> int:
    base = config_from_args(args)
    algos = args.algos or [base.algorithm]
    configs = []
    for algo in algos:
        for seed in args.seeds:
            cfg = base.replace(algorithm=algo, seed=seed, output_dir=None)
            root = Path(base.output_dir) if base.output_dir else None
            out = root / default_output_dir(cfg).name if root else default_output_dir(cfg)
            configs.append(cfg.replace(output_dir=str(out)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_run_one, configs))
    else:
        records = [_run_one(c) for c in configs]
    for rec in records:
        print(f"{rec.status}: {rec.output_dir}")
    if args.compare_output is not None:
        compare_runs([r for r in records if not r.failed], args.compare_output)
    return EXIT_NUMERICAL if any(r.failed for r in records) else EXIT_OK


def _cmd_validate_comm(args) -> int:
    c = load_matrix(args.path)
    print(f"ok: {c.n_agents}x{c.n_agents} right-stochastic matrix")
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "validate-comm": _cmd_validate_comm,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, CommMatrixError, GridMismatch, FileNotFoundError) as exc:
        print(f"netmaddpg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
