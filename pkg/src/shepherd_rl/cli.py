"""Command-line entry point.

One subcommand per scenario.  Options layer on top of the scenario preset in
this order: ``--config`` file (flat key=value text or an emitted
``manifest.json``), then the dedicated flags, then generic ``--set
KEY=VALUE`` overrides.  Exit status 0 on success, 2 on configuration or
checkpoint problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# The networks are small: single-threaded BLAS beats threading overhead, and
# it keeps results independent of the host's core count.  Must happen before
# numpy loads, which is why the heavy imports live inside main().
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

_SCENARIO_HELP = {
    "train-driving": "train the low-level target-driving policy",
    "train-selection": "train single-herder target selection on a frozen driver",
    "train-multi": "train parameter-shared multi-herder target selection",
    "validate": "evaluate frozen policies over a seeded episode campaign",
    "robustness": "validation campaign with per-episode model perturbations",
    "scale-demo": "large-population rollout with per-step radius curves",
    "compare": "evaluate every available selector on matched seeds",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shepherd-rl",
        description="Two-layer reinforcement-learned shepherding experiments.",
    )
    subparsers = parser.add_subparsers(dest="scenario", required=True)
    for name, help_text in _SCENARIO_HELP.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument(
            "--config",
            type=Path,
            default=None,
            help="flat key=value config file, or a manifest.json to re-run",
        )
        sub.add_argument("--seed", type=int, default=None, help="base random seed")
        sub.add_argument("--out", type=Path, default=None, help="output directory")
        sub.add_argument(
            "--checkpoint",
            action="append",
            type=Path,
            default=None,
            metavar="PATH",
            help="policy checkpoint; repeat for several",
        )
        sub.add_argument(
            "--episodes", type=int, default=None, help="episodes to train or evaluate"
        )
        sub.add_argument(
            "--selector",
            choices=("learned", "independent", "p2p"),
            default=None,
            help="target-selection strategy for evaluation scenarios",
        )
        sub.add_argument(
            "--workers", type=int, default=None, help="parallel evaluation processes"
        )
        sub.add_argument(
            "--set",
            action="append",
            default=None,
            dest="assignments",
            metavar="KEY=VALUE",
            help="override any config key, e.g. --set trainer.batch_size=16",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    from .config import ConfigError
    from .configio import build_config, load_config_file
    from .experiments import run_scenario
    from .network import CheckpointError

    try:
        values = dict(load_config_file(args.config)) if args.config else {}
        if args.seed is not None:
            values["seed"] = str(args.seed)
        if args.out is not None:
            values["out"] = str(args.out)
        if args.episodes is not None:
            values["episodes"] = str(args.episodes)
        if args.selector is not None:
            values["selector"] = args.selector
        if args.checkpoint:
            values["checkpoints"] = ",".join(str(p) for p in args.checkpoint)
        if args.workers is not None:
            values["workers"] = str(args.workers)
        for item in args.assignments or ():
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            values[key.strip()] = value.strip()
        cfg = build_config(args.scenario, values)
        artifacts = run_scenario(cfg)
    except (ConfigError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for name in sorted(artifacts):
        print(f"{name}: {artifacts[name]}")
    summary_path = artifacts.get("summary")
    if summary_path is not None:
        summary = json.loads(Path(summary_path).read_text())
        rate = summary.get("success_rate")
        tau = summary.get("tau_mean")
        print(
            f"success_rate={rate if rate is None else round(rate, 2)}% "
            f"tau_mean={tau if tau is None else round(tau, 2)}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
