"""Command line entry point: ``seeopt run | trace | oracle-check``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .baselines import SchemeId, run_scheme
from .beamforming import build_beamformers, effective_gains
from .channels import draw_channel_set, draw_eavesdropper_samples
from .config import ConfigError
from .experiment import (FIGURES, emit_trace, figure_spec, parse_config, run_experiment,
                         self_check)
from .solver import grid_oracle


def _spec_from_args(args):
    if args.config:
        spec = parse_config(args.config)
    else:
        spec = figure_spec(args.figure or "fig3", seed=args.seed or 0, full_scale=args.full_scale)
    changes = {}
    if args.seed is not None:
        changes["base"] = spec.base.with_updates(seed=args.seed)
    if args.trials is not None:
        changes["trials"] = args.trials
    if getattr(args, "out", None):
        changes["out"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if getattr(args, "trace_dir", None):
        changes["trace_dir"] = args.trace_dir
    return replace(spec, **changes)


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    rows, summary = run_experiment(spec)
    print(f"wrote {len(rows)} rows to {spec.out}")
    for (scheme, value), (mean, se, n) in sorted(summary.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        print(f"{spec.sweep_var}={value:g}  {scheme:<11s} mean SEE {mean:.6g} +/- {se:.2g} (n={n})")
    if args.self_check:
        problems = self_check(rows)
        failed = [r for r in rows if r[10] != "1"]
        for p in problems:
            print(f"self-check: {p}", file=sys.stderr)
        if failed:
            print(f"self-check: {len(failed)} rows did not converge", file=sys.stderr)
        if problems or failed:
            return 1
        print("self-check: ok")
    return 0


def cmd_trace(args) -> int:
    spec = _spec_from_args(args)
    cfg = spec.base
    scheme = SchemeId.parse(args.scheme)
    channels = draw_channel_set(cfg, args.trial)
    samples = draw_eavesdropper_samples(cfg, args.trial) if scheme is SchemeId.SCSI_SEEM else None
    res = run_scheme(scheme, channels, cfg, samples=samples, trial=args.trial)
    emit_trace(res.trace, args.out)
    print(f"{scheme.value}: SEE {res.see:.6g} after {res.outer_iters} outer / "
          f"{res.inner_iters} inner iterations, trace in {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    spec = _spec_from_args(args)
    cfg = spec.base.with_updates(n_sub=1)
    worst = 0.0
    for t in range(args.trials or 5):
        channels = draw_channel_set(cfg, t)
        gains = effective_gains(channels, build_beamformers(channels, "icsi"))
        _, s_oracle = grid_oracle(gains, cfg, args.resolution)
        s_opt = run_scheme(SchemeId.ICSI_SEEM, channels, cfg).see
        gap = abs(s_opt - s_oracle) / s_oracle if s_oracle > 0 else abs(s_opt - s_oracle)
        worst = max(worst, gap)
        print(f"trial {t}: optimizer {s_opt:.6g}  oracle {s_oracle:.6g}  rel gap {gap:.3%}")
    ok = worst <= args.tolerance
    print(f"worst gap {worst:.3%} ({'ok' if ok else 'above tolerance'})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seeopt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", help="key=value experiment file")
        src.add_argument("--figure", choices=sorted(FIGURES), help="built-in sweep preset")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--full-scale", action="store_true",
                        help="I=8, N_E=3 and 100 trials instead of the desk-scale defaults")

    r = sub.add_parser("run", help="run a Monte Carlo sweep and write a results CSV")
    common(r)
    r.add_argument("--out", default=None, help="results CSV path")
    r.add_argument("--workers", type=int, default=None, help="worker processes")
    r.add_argument("--trace-dir", default=None, help="also write one trace CSV per optimizer run")
    r.add_argument("--self-check", action="store_true",
                   help="exit nonzero if a CSV-level invariant fails")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("trace", help="write the convergence trace of one run")
    common(t)
    t.add_argument("--scheme", default="icsi_seem")
    t.add_argument("--trial", type=int, default=0)
    t.add_argument("--out", default="trace.csv")
    t.set_defaults(func=cmd_trace)

    o = sub.add_parser("oracle-check", help="compare the optimizer to the grid oracle at I=1")
    common(o)
    o.add_argument("--resolution", type=int, default=200)
    o.add_argument("--tolerance", type=float, default=0.02)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
