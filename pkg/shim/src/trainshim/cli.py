"""CLI: emit a mock trajectory, optionally handing it to the selector.

``trainshim emit`` writes the JSONL; ``trainshim emit --select`` then spawns
``ctsynth select-checkpoint`` on the result and relays its output and exit
code, proving the wire contract end to end.
"""
from __future__ import annotations

import argparse
import subprocess
import sys

from .shim import ShimConfig, ShimError, emit_trajectory


def run_selector(trajectory: str, metric: str) -> int:
    proc = subprocess.run(
        ["ctsynth", "select-checkpoint", trajectory, "--metric", metric],
        capture_output=True,
        text=True,
    )
    sys.stdout.write(proc.stdout)
    sys.stderr.write(proc.stderr)
    return proc.returncode


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trainshim")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("emit", help="simulate a run and write trajectory JSONL")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run", type=int, default=0)
    p.add_argument("--metric", default="dsc")
    p.add_argument("--epoch-start", type=int, default=100)
    p.add_argument("--epoch-step", type=int, default=100)
    p.add_argument("--checkpoints", type=int, default=60)
    p.add_argument("--select", action="store_true", help="run ctsynth select-checkpoint")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    epochs = tuple(
        args.epoch_start + i * args.epoch_step for i in range(args.checkpoints)
    )
    try:
        config = ShimConfig(
            manifest_path=args.manifest,
            out_path=args.out,
            epochs=epochs,
            seed=args.seed,
            run=args.run,
            metric=args.metric,
        )
        out = emit_trajectory(config)
    except ShimError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    print(out)
    if args.select:
        return run_selector(str(out), args.metric)
    return 0


if __name__ == "__main__":
    sys.exit(main())
