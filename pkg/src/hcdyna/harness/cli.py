"""Command-line entry point.

    hcdyna run --config exp.cfg [--seeds N] [--out DIR]
    hcdyna sweep --grid sweep.cfg [--out DIR]
    hcdyna snapshot --config exp.cfg [--seed N] [--out DIR] [--samples N]
    hcdyna surface --config exp.cfg [--seed N] [--out DIR] [--checkpoints 0,14000,20000]
    hcdyna negate-recovery --config exp.cfg [--seed N] [--out DIR] [--recovery-steps N]

Worker count for seed/sweep parallelism comes from HCDYNA_WORKERS (defaults
to the CPU count).
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import replace

from .. import tabular
from ..errors import ConfigurationError
from .config import load_config
from .runner import default_workers, run_experiment
from .scenarios import scenario_negated_recovery, scenario_queue_snapshot, scenario_value_surface


def _cmd_run(args):
    config = load_config(args.config)
    if args.seeds is not None:
        config = replace(config, seeds=args.seeds)
    out = args.out or config.out
    results = run_experiment(config, out_root=out)
    ok = sum(r.status == "ok" for r in results)
    print(f"{config.name}: {ok}/{len(results)} seeds ok -> {out}/{config.name}")
    return 0 if ok else 1


def _cmd_sweep(args):
    parser = configparser.ConfigParser()
    if not parser.read(args.grid) or "sweep" not in parser:
        raise ConfigurationError(f"cannot read sweep grid {args.grid} (needs a [sweep] section)")
    section = parser["sweep"]
    algorithms = tuple(a.strip() for a in section.get("algorithms", "er,hc-dyna,gibbs").split(","))
    lrs = section.get("learning_rates", "")
    learning_rates = tuple(float(x) for x in lrs.split(",")) if lrs else tabular.LEARNING_RATES
    out = args.out or section.get("out", "results/tabular-sweep")
    best = tabular.tabular_sweep(
        algorithms=algorithms,
        learning_rates=learning_rates,
        seeds=section.getint("seeds", 30),
        total_steps=section.getint("total_steps", 10_000),
        eval_every=section.getint("eval_every", 100),
        rho=section.getfloat("rho", 0.5),
        out_dir=out,
        workers=default_workers(),
    )
    for alg, (lr, score, _) in best.items():
        print(f"{alg}: best lr {lr:.5f} (final-20% mean return {score:.1f})")
    return 0


def _cmd_snapshot(args):
    config = load_config(args.config)
    fractions, _ = scenario_queue_snapshot(
        config, seed=args.seed, out_dir=args.out or "results/snapshot", n_samples=args.samples
    )
    print(
        f"fraction of sampled states in the dilated goal region: "
        f"queue {fractions['sc_fraction']:.3f} vs buffer {fractions['er_fraction']:.3f}"
    )
    return 0


def _cmd_surface(args):
    config = load_config(args.config)
    checkpoints = tuple(int(x) for x in args.checkpoints.split(","))
    written, _ = scenario_value_surface(
        config, seed=args.seed, out_dir=args.out or "results/surface", checkpoints=checkpoints
    )
    for count, paths in written.items():
        print(f"updates {count}: {paths['grid']}")
    return 0


def _cmd_negate_recovery(args):
    config = load_config(args.config)
    curves, ckpt = scenario_negated_recovery(
        config,
        seed=args.seed,
        out_dir=args.out or "results/negated",
        recovery_steps=args.recovery_steps,
    )
    print(f"corrupted checkpoint: {ckpt}")
    for alg, rows in curves.items():
        tail = rows[-1][1] if rows else float("nan")
        print(f"{alg}: final eval return {tail}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hcdyna", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config over its seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--seeds", type=int, default=None)
    run.add_argument("--out", default=None)
    run.set_defaults(fn=_cmd_run)

    sweep = sub.add_parser("sweep", help="tabular learning-rate sweep")
    sweep.add_argument("--grid", required=True)
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(fn=_cmd_sweep)

    snap = sub.add_parser("snapshot", help="buffer/queue state snapshot")
    snap.add_argument("--config", required=True)
    snap.add_argument("--seed", type=int, default=0)
    snap.add_argument("--samples", type=int, default=2000)
    snap.add_argument("--out", default=None)
    snap.set_defaults(fn=_cmd_snapshot)

    surf = sub.add_parser("surface", help="value-surface and trajectory dumps")
    surf.add_argument("--config", required=True)
    surf.add_argument("--seed", type=int, default=0)
    surf.add_argument("--checkpoints", default="0,14000,20000")
    surf.add_argument("--out", default=None)
    surf.set_defaults(fn=_cmd_surface)

    neg = sub.add_parser("negate-recovery", help="recovery from a sign-flipped value network")
    neg.add_argument("--config", required=True)
    neg.add_argument("--seed", type=int, default=0)
    neg.add_argument("--recovery-steps", type=int, default=10_000)
    neg.add_argument("--out", default=None)
    neg.set_defaults(fn=_cmd_negate_recovery)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
