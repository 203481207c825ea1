"""``veg`` command line: demo | cost | train | eval | shape.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Set ``VEG_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import harness
from .demos import load_catalog
from .errors import ConfigError, VegError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="veg", description="Visual entity graph imitation experiments.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, task_default="push-straight"):
        sp.add_argument("--task", default=None, help=f"task name (default {task_default})")
        sp.add_argument("--seed", type=int, default=None, help="random seed (first seed for train/eval)")
        sp.add_argument("--config", type=Path, default=None, help="JSON experiment config")
        sp.add_argument("--out", type=Path, default=None, help="output file or directory")

    sp = sub.add_parser("demo", help="record a scripted demonstration trace")
    common(sp)
    sp = sub.add_parser("cost", help="per-frame graph cost of an imitation against a demo")
    common(sp)
    sp.add_argument("demo_file", type=Path)
    sp.add_argument("imit_file", type=Path)
    sp = sub.add_parser("train", help="train one policy per seed")
    common(sp)
    sp.add_argument("--demo", type=Path, default=None, help="demo trace (default: generate it)")
    sp.add_argument("--iters", type=int, default=None, help="training iterations")
    sp.add_argument("--trials", type=int, default=None, help="number of seeds, starting at --seed")
    sp = sub.add_parser("eval", help="run a saved policy from perturbed starts")
    common(sp)
    sp.add_argument("policy_file", type=Path)
    sp.add_argument("--demo", type=Path, default=None)
    sp.add_argument("--trials", type=int, default=None, help="number of starts, beginning at --seed")
    sp = sub.add_parser("shape", help="cost-shaping comparison on the stacking task")
    common(sp, "stack")
    return p


def _config(args, default_task="push-straight") -> harness.ExperimentConfig:
    seeds = None
    if args.seed is not None or getattr(args, "trials", None) is not None:
        first = args.seed if args.seed is not None else 0
        seeds = [first + i for i in range(getattr(args, "trials", None) or 1)]
    over = {"task": args.task, "seeds": seeds}
    if args.config is not None:
        return harness.ExperimentConfig.load(args.config, **over)
    return harness.ExperimentConfig.from_dict({"task": default_task}, **over)


def _unknown_task(name: str) -> int:
    print(f"veg: unknown task {name!r}; available: {', '.join(sorted(load_catalog()))}", file=sys.stderr)
    return EXIT_USAGE


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("VEG_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.task is not None and args.task not in load_catalog():
        return _unknown_task(args.task)
    try:
        if args.verb == "demo":
            cfg = _config(args)
            seed = cfg.seeds[0] if args.seed is not None else 0
            out = args.out or Path(f"{cfg.task}_demo_seed{seed}.jsonl")
            trace = harness.cmd_demo(cfg.task, seed, out)
            print(f"wrote {out} ({len(trace.frames)} frames)")
        elif args.verb == "cost":
            cfg = _config(args) if (args.config or args.task) else None
            out = args.out or Path("cost.csv")
            raw = harness.cmd_cost(args.demo_file, args.imit_file, cfg, out)
            print(f"wrote {out} (total raw cost {raw.sum():.6g})")
        elif args.verb == "train":
            cfg = _config(args)
            rows = harness.cmd_train(cfg, args.demo, args.out, args.iters)
            wins = sum(r.solved for r in rows)
            print(f"{cfg.task}: {wins}/{len(rows)} seeds solved")
            for r in rows:
                print(f"  seed {r.seed}: solved={int(r.solved)} error={r.error:.4g} best_iteration={r.best_iteration}")
        elif args.verb == "eval":
            cfg = _config(args)
            out = args.out or Path(cfg.out) / "eval.csv"
            rows = harness.cmd_eval(cfg, args.policy_file, args.demo, out)
            print(f"{cfg.task}: {sum(r[1] for r in rows)}/{len(rows)} starts solved; wrote {out}")
        elif args.verb == "shape":
            task = args.task or "stack"
            seed = args.seed or 0
            out = args.out or Path("shape")
            curves = harness.cmd_shape(out, task, seed)
            for name, (_, norm) in curves.items():
                print(f"  {name:16s} final normalized cost {norm[-1]:.4f}")
            print(f"wrote {out}/")
    except ConfigError as exc:
        print(f"veg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VegError, OSError, ValueError, KeyError) as exc:
        print(f"veg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
