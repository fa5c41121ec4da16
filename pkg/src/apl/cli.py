"""Command-line entry point: ``apl {gen-data,baselines,train,eval}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from ._alloc import tune_allocator
from .config import ConfigError, RunConfig
from .dataio import TIERS, DatasetFormatError, generate_dataset, write_dataset
from .envs import ENVS
from .experiment import load_policy, save_references, train
from .training import compute_references, evaluate


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apl", description="Offline-to-online RL: generate datasets, train, evaluate.")
    p.add_argument("--version", action="version", version=f"apl {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset file")
    g.add_argument("--env", required=True, choices=sorted(ENVS))
    g.add_argument("--tier", required=True, choices=TIERS)
    g.add_argument("--n", required=True, type=int, help="number of transitions")
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--out", required=True)

    b = sub.add_parser("baselines", help="compute random/expert reference returns")
    b.add_argument("--env", required=True, choices=sorted(ENVS))
    b.add_argument("--episodes", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)

    t = sub.add_parser("train", help="pre-train on a dataset, then fine-tune online")
    t.add_argument("--config", required=True, help="key = value config file")
    t.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    e = sub.add_parser("eval", help="evaluate a saved policy snapshot")
    e.add_argument("--env", required=True, choices=sorted(ENVS))
    e.add_argument("--agent-snapshot", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    return p


def _run(args) -> None:
    if args.command == "gen-data":
        ds = generate_dataset(args.env, args.tier, args.n, args.seed)
        write_dataset(args.out, ds)
        print(f"wrote {ds.n_records} {args.tier} transitions to {args.out}")
    elif args.command == "baselines":
        if args.episodes < 1:
            raise ValueError("--episodes must be at least 1")
        refs = compute_references(args.env, args.seed, args.episodes)
        save_references(args.out, args.env, refs)
        print(f"random_ref {refs.random_ref!r}  expert_ref {refs.expert_ref!r}")
    elif args.command == "train":
        cfg = RunConfig.from_file(args.config, args.override)
        record = train(cfg)
        print(f"final score {record.final_score():.2f} (pretrain {record.pretrain_score():.2f}); "
              f"outputs in {cfg.output_dir()}")
    elif args.command == "eval":
        env_name, act = load_policy(args.agent_snapshot)
        if env_name != args.env:
            raise ValueError(f"snapshot was trained on {env_name!r}, not {args.env!r}")
        print(repr(evaluate(act, args.env, args.episodes, args.seed)))


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)  # exits with usage text on malformed flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    tune_allocator()
    try:
        _run(args)
    except (ConfigError, DatasetFormatError, FileNotFoundError, ValueError, OverflowError,
            RuntimeError, OSError) as err:
        print(f"apl {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
