"""Command-line interface: platforms, sweep, optimize, simulate, validate.

Exit codes: 0 success, 1 oracle mismatch (validate), 2 usage or config
error, 3 step budget exceeded.
"""
from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import math
import os
import sys
from pathlib import Path

from . import __version__
from .cutoff import fixed_cutoff_over_range, optimal_cutoff_for_skr
from .montecarlo import (
    DEFAULT_GRID as VALIDATION_GRID,
    DEFAULT_STEP_BUDGET,
    BudgetExceeded,
    compare_with_analytic,
    simulate_cell,
)
from .params import (
    ChannelParams,
    ConfigError,
    Era,
    ProtocolKind,
    ProtocolSpec,
    builtin_platforms,
    find_platform,
    parse_config,
    resolve_context,
    _slug,
)
from .rates import UNBOUNDED, dephasing_expectation, effective_fidelity, raw_rate
from .sweep import csv_lines, sweep_rr, sweep_skr

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _cutoff_arg(text: str):
    text = text.strip().lower()
    if text in ("fixed", "optimal"):
        return text
    if text in ("unbounded", "inf"):
        return UNBOUNDED
    try:
        m = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected fixed, optimal, unbounded or a non-negative integer, got {text!r}"
        ) from None
    if m < 0:
        raise argparse.ArgumentTypeError("cutoff must be non-negative")
    return m


def _fmt_m(m) -> str:
    if m is None:
        return "none"
    return "unbounded" if m == UNBOUNDED else str(int(m))


def _manifest(command: str, params: dict, seed=None, timestamp=True) -> list[str]:
    lines = [f"# command: {command}", f"# tool: qrlink {__version__}"]
    if timestamp:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
               else _dt.datetime.now(_dt.timezone.utc))
        lines.append(f"# timestamp: {now.strftime('%Y-%m-%dT%H:%M:%SZ')}")
    if seed is not None:
        lines.append(f"# seed: {seed}")
    lines += [f"# {k}: {v}" for k, v in params.items()]
    return lines


def _add_platform_args(parser, protocol=True):
    parser.add_argument("--era", choices=[e.value for e in Era], default="current")
    parser.add_argument("--config", type=Path, help="platform config file")
    parser.add_argument("--platform", action="append", default=None,
                        help="platform name (repeatable; default all)")
    if protocol:
        parser.add_argument("--protocol", choices=[k.value for k in ProtocolKind],
                            default=ProtocolKind.NSP_CELL.value)
    parser.add_argument("--latt", type=float, default=None, help="attenuation length, km")
    parser.add_argument("--signal-speed", type=float, default=None,
                        help="signal speed in fibre, km/ms")


def _add_grid_args(parser):
    parser.add_argument("--lmin", type=float, default=0.0)
    parser.add_argument("--lmax", type=float, default=400.0)
    parser.add_argument("--lstep", type=float, default=2.0)
    parser.add_argument("--workers", type=int, default=1,
                        help="threads used for per-distance work")


def _load(args):
    """Resolve platforms and channel from --era/--config/--platform/--latt."""
    channel = ChannelParams()
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        platforms, channel = parse_config(text)
    else:
        platforms = builtin_platforms(args.era)
    if args.latt is not None or args.signal_speed is not None:
        channel = ChannelParams(
            l_att=channel.l_att if args.latt is None else args.latt,
            signal_speed=(channel.signal_speed if args.signal_speed is None
                          else args.signal_speed),
        )
    if args.platform:
        try:
            platforms = [find_platform(platforms, name) for name in args.platform]
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    return platforms, channel


def _grid(args):
    if args.lstep <= 0 or args.lmin < 0 or args.lmax < args.lmin:
        raise UsageError("need 0 <= --lmin <= --lmax and --lstep > 0")
    n = int(math.floor((args.lmax - args.lmin) / args.lstep + 1e-9)) + 1
    return [round(args.lmin + i * args.lstep, 9) for i in range(n)]


def cmd_platforms(args, out) -> int:
    platforms, channel = _load(args)
    out.write(f"{'platform':<14} {'p_link':>8} {'clock_MHz':>10} {'tau_coh_ms':>11}\n")
    for p in platforms:
        out.write(f"{p.name:<14} {p.p_link:>8.4g} {p.clock_rate:>10.6g} {p.tau_coh:>11.6g}\n")
    out.write(f"# l_att={channel.l_att:g} km, signal speed={channel.signal_speed:g} km/ms\n")
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    if args.mode == "rr" and args.cutoff is not None:
        raise UsageError("--cutoff applies to --mode skr only")
    if args.mode == "skr" and args.fmin is not None:
        raise UsageError("--fmin applies to --mode rr only")
    fmin = 0.95 if args.fmin is None else args.fmin
    if args.mode == "rr" and not (0.5 < fmin < 1.0):
        raise UsageError("--fmin must lie in (0.5, 1)")
    cutoff = "fixed" if args.cutoff is None else args.cutoff
    platforms, channel = _load(args)
    grid = _grid(args)
    protocol = ProtocolSpec(ProtocolKind(args.protocol))

    results = []
    for platform in platforms:
        if args.mode == "skr":
            res = sweep_skr(platform, protocol, channel, grid, cutoff,
                            objective=args.objective, workers=args.workers)
        else:
            res = sweep_rr(platform, protocol, channel, grid, fmin, workers=args.workers)
        results.append((platform, res))

    era_dir = args.era if args.config is None else "config"
    target = Path(args.out) / era_dir / args.protocol
    target.mkdir(parents=True, exist_ok=True)
    params = {
        "era": args.era, "protocol": args.protocol, "mode": args.mode,
        "cutoff": _fmt_m(cutoff) if not isinstance(cutoff, str) else cutoff,
        "fmin": fmin if args.mode == "rr" else "n/a",
        "grid_km": f"{args.lmin:g}:{args.lmax:g}:{args.lstep:g}",
        "l_att_km": channel.l_att, "signal_speed_km_per_ms": channel.signal_speed,
        "objective": args.objective,
    }
    combined = []
    for platform, res in results:
        header = _manifest("sweep", {"platform": platform.name, **params})
        path = target / f"{_slug(platform.name)}.csv"
        path.write_text("\n".join(header + csv_lines(res)) + "\n")
        body = csv_lines(res, with_platform=True)
        combined.extend(body if not combined else body[1:])
        x = res.regime_crossings
        out.write(
            f"{path}  cutoff={_fmt_m(res.rows[0].cutoff_m) if args.mode == 'skr' and cutoff != 'optimal' else 'per-distance'}"
            f"  beats_ideal_at={_fmt_km(x.ideal_crossing_km)}"
            f"  beats_ppl_at={_fmt_km(x.realistic_crossing_km)}\n"
        )
    path = target / "combined.csv"
    path.write_text("\n".join(_manifest("sweep", params) + combined) + "\n")
    out.write(f"{path}\n")
    return EXIT_OK


def _fmt_km(x) -> str:
    return "never" if x is None else f"{x:.1f}km"


def cmd_optimize(args, out) -> int:
    platforms, channel = _load(args)
    grid = _grid(args)
    protocol = ProtocolSpec(ProtocolKind(args.protocol))
    for platform in platforms:
        def ctx_at(d, platform=platform):
            return resolve_context(platform, protocol, channel, d)

        out.write(f"== {platform.name} ({args.protocol})\n")
        out.write(f"{'distance_km':>11} {'optimal_m':>10} {'skr':>12}\n")
        for d in grid:
            choice = optimal_cutoff_for_skr(ctx_at(d))
            out.write(f"{d:>11g} {_fmt_m(choice.m):>10} {choice.achieved_value:>12.6g}\n")
        fixed = fixed_cutoff_over_range(ctx_at, grid, args.objective, workers=args.workers)
        out.write(f"fixed cutoff over range: m={_fmt_m(fixed.m)} "
                  f"{args.objective}-case ratio={fixed.achieved_value:.4f}\n")
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    m = args.cutoff if args.cutoff is not None else UNBOUNDED
    if isinstance(m, str):
        raise UsageError("simulate needs an integer or unbounded --cutoff")
    if args.p is not None:
        if args.ratio is None:
            raise UsageError("--p needs --ratio (T0/tau_coh)")
        p, t0, tau, extra = args.p, args.ratio, 1.0, args.extra_units
    else:
        if args.distance is None:
            raise UsageError("give either --p/--ratio or --distance with a platform")
        platforms, channel = _load(args)
        if len(platforms) != 1:
            raise UsageError("simulate needs exactly one --platform")
        ctx = resolve_context(platforms[0], ProtocolSpec(ProtocolKind(args.protocol)),
                              channel, args.distance)
        p, t0, tau, extra = ctx.p, ctx.t0, ctx.tau_coh, ctx.extra_units
    if not (0.0 < p <= 1.0):
        raise UsageError("p must lie in (0, 1]")
    est = simulate_cell(p, m, t0, tau, extra, args.trials, args.seed,
                        step_budget=args.step_budget, workers=args.workers)
    analytic = (raw_rate(p, m), dephasing_expectation(p, m, t0, tau),
                effective_fidelity(p, m, t0, tau, extra), 1.0 / raw_rate(p, m))
    for line in _manifest("simulate", {"p": p, "cutoff": _fmt_m(m),
                                       "t0_over_tau_coh": t0 / tau,
                                       "extra_units": extra, "trials": args.trials},
                          seed=args.seed, timestamp=False):
        out.write(line + "\n")
    out.write(f"{'quantity':<14} {'estimate':>14} {'stderr':>12} {'analytic':>14} {'z':>8}\n")
    for name, e, a in zip(("raw_rate", "expectation", "fidelity", "mean_attempts"),
                          (est.raw_rate, est.expectation, est.fidelity, est.mean_attempts),
                          analytic):
        out.write(f"{name:<14} {e.value:>14.8g} {e.stderr:>12.4g} {float(a):>14.8g}"
                  f" {e.z(float(a)):>8.2f}\n")
    return EXIT_OK


def _parse_grid(text: str):
    grid = []
    for item in text.split(","):
        try:
            p, m, r = item.split(":")
            m = UNBOUNDED if m.strip().lower() in ("unbounded", "inf") else int(m)
            grid.append((float(p), m, float(r)))
        except ValueError:
            raise UsageError(f"bad grid point {item!r}; expected p:m:ratio") from None
    return grid


def cmd_validate(args, out) -> int:
    grid = VALIDATION_GRID if args.grid is None else _parse_grid(args.grid)
    report = compare_with_analytic(grid, args.trials, args.seed, args.extra_units,
                                   step_budget=args.step_budget, workers=args.workers)
    header = _manifest("validate", {"trials": args.trials, "extra_units": args.extra_units,
                                    "grid_points": len(grid)},
                       seed=args.seed, timestamp=False)
    text = "\n".join(header) + "\n" + report.to_text()
    out.write(text)
    if args.out is not None:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    return EXIT_OK if report.passed else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrlink",
        description="Rates, cutoffs and Monte Carlo checks for single-node quantum repeater cells.",
    )
    parser.add_argument("--version", action="version", version=f"qrlink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("platforms", help="list platform parameters")
    _add_platform_args(p, protocol=False)
    p.set_defaults(func=cmd_platforms)

    p = sub.add_parser("sweep", help="rate-vs-distance CSVs")
    _add_platform_args(p)
    _add_grid_args(p)
    p.add_argument("--mode", choices=["skr", "rr"], default="skr")
    p.add_argument("--cutoff", type=_cutoff_arg, default=None,
                   help="fixed | optimal | INT | unbounded (skr mode; default fixed)")
    p.add_argument("--fmin", type=float, default=None, help="fidelity floor (rr mode; default 0.95)")
    p.add_argument("--objective", choices=["worst", "mean"], default="worst",
                   help="score for the fixed cutoff over the grid")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="per-distance and fixed optimal cutoffs")
    _add_platform_args(p)
    _add_grid_args(p)
    p.add_argument("--objective", choices=["worst", "mean"], default="worst")
    p.set_defaults(func=cmd_optimize)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "Monte Carlo estimate at one operating point"),
        ("validate", cmd_validate, "compare Monte Carlo with the closed forms"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--trials", type=int, default=10**6)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--extra-units", type=int, choices=[0, 2], default=0)
        p.add_argument("--step-budget", type=int, default=DEFAULT_STEP_BUDGET)
        p.add_argument("--workers", type=int, default=1)
        p.set_defaults(func=func)
        if name == "simulate":
            _add_platform_args(p)
            p.add_argument("--p", type=float, help="half-link success probability")
            p.add_argument("--ratio", type=float, help="T0 / tau_coh")
            p.add_argument("--distance", type=float, help="km, with --platform")
            p.add_argument("--cutoff", type=_cutoff_arg, default=None,
                           help="INT or unbounded (default unbounded)")
        else:
            p.add_argument("--grid", help="comma-separated p:m:ratio points")
            p.add_argument("--out", help="also write the report to this file")
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        with contextlib.redirect_stderr(err):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "trials", 1) < 1:
        err.write("qrlink: --trials must be at least 1\n")
        return EXIT_USAGE
    try:
        return args.func(args, out)
    except (UsageError, ConfigError) as exc:
        if isinstance(exc, UsageError):
            err.write(parser.subcommands[args.command].format_usage())
        err.write(f"qrlink {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except BudgetExceeded as exc:
        err.write(f"qrlink {args.command}: {exc}\n")
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
