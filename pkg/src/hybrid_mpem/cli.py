"""Command-line entry point ``mpem``.

Subcommands::

    simulate     one closed-loop run, tick CSV and summary CSV
    sweep-gamma  one run per battery weight gamma
    campaign     randomized multi-run capacity-fade campaign
    verify       oracle suites (regressor identity, QP, distributed vs centralized)

Exit codes: 0 success, 1 usage, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .coordinator import CentralizedInfeasible, NodeSolveError
from .harness.cycles import BUNDLED_CYCLES, CycleFormatError, bundled_cycle, load_cycle
from .harness.output import write_campaign_csv, write_summary_csv, write_tick_csv
from .harness.run import SimulationError, campaign, gamma_sweep, run_scenario
from .harness.scenario import BUNDLED_SCENARIOS, ScenarioError, bundled_scenario, load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("hybrid_mpem.cli")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scenario(arg, seed=None):
    path = Path(arg)
    try:
        if path.exists():
            scn = load_scenario(path)
        elif arg in BUNDLED_SCENARIOS:
            scn = bundled_scenario(arg)
        else:
            raise InputError(f"scenario {arg!r} is neither a file nor one of {', '.join(BUNDLED_SCENARIOS)}")
        return scn if seed is None else scn.with_sim(seed=int(seed))
    except (ScenarioError, ValueError, OSError) as exc:
        raise InputError(str(exc)) from None


def _cycle(arg):
    path = Path(arg)
    try:
        if path.exists():
            return load_cycle(path)
        if arg in BUNDLED_CYCLES:
            return bundled_cycle(arg)
    except (CycleFormatError, OSError) as exc:
        raise InputError(str(exc)) from None
    raise InputError(f"cycle {arg!r} is neither a file nor one of {', '.join(BUNDLED_CYCLES)}")


def _cycle_dir(arg):
    path = Path(arg)
    if not path.is_dir():
        raise InputError(f"{arg} is not a directory")
    files = sorted(path.glob("*.csv"))
    if not files:
        raise InputError(f"no .csv cycle files in {arg}")
    try:
        return [load_cycle(f) for f in files]
    except CycleFormatError as exc:
        raise InputError(str(exc)) from None


def _gammas(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--gammas must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--gammas is empty")
    if any(not np.isfinite(g) or g < 0 for g in vals):
        raise UsageError("gamma values must be finite and non-negative")
    return vals


def _outdir(arg):
    out = Path(arg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc}") from None
    return out


def _print_metrics(m, label=""):
    print(
        f"{label}gamma={m.gamma:g}  duration={m.duration_s:.0f} s  "
        f"rms_gap={m.rms_tracking_error_W:.1f} W  rms_speed_err={m.rms_speed_error:.4f} m/s  "
        f"soc=[{m.soc_min:.4f}, {m.soc_max:.4f}] final {m.soc_final:.4f}  "
        f"loss={m.capacity_loss_pct:.6g} %  admm iters mean {m.admm_iters_mean:.1f} max {m.admm_iters_max}"
    )


def cmd_simulate(args):
    scn = _scenario(args.scenario, args.seed)
    if args.gamma is not None:
        if not (np.isfinite(args.gamma) and args.gamma >= 0):
            raise UsageError("--gamma must be finite and non-negative")
        scn = scn.with_gamma(args.gamma)
    trace = _cycle(args.cycle)
    m, tl = run_scenario(scn, trace)
    _print_metrics(m)
    if args.out:
        out = _outdir(args.out)
        write_tick_csv(tl, out / "ticks.csv")
        write_summary_csv([(scn.name, trace.name, m)], out / "summary.csv")
        print(f"wrote {out / 'ticks.csv'} and {out / 'summary.csv'}")
    return EXIT_OK


def cmd_sweep(args):
    gammas = _gammas(args.gammas)
    scn = _scenario(args.scenario)
    trace = _cycle(args.cycle)
    out = _outdir(args.out)
    rows = gamma_sweep(scn, trace, gammas)
    for g, m, tl in rows:
        _print_metrics(m)
        write_tick_csv(tl, out / f"ticks_gamma_{g:g}.csv")
    write_summary_csv([(scn.name, trace.name, m) for _, m, _ in rows], out / "summary.csv")
    print(f"wrote {len(rows)} tick logs and summary.csv to {out}")
    return EXIT_OK


def cmd_campaign(args):
    gammas = _gammas(args.gammas)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    if not args.hours > 0 or abs(args.hours - round(args.hours)) > 1e-9:
        raise UsageError("--hours must be a positive whole number")
    scn = _scenario(args.scenario, args.seed)
    cycles = _cycle_dir(args.cycles)
    out = _outdir(args.out)
    t0 = time.perf_counter()
    res = campaign(scn, cycles, args.runs, args.hours, gammas, seed=args.seed, workers=args.workers)
    write_campaign_csv(res, out / "soh.csv")
    rows = [
        (scn.name, name, m) for g in sorted(res.runs) for name, m in zip(res.sequences, res.runs[g])
    ]
    write_summary_csv(rows, out / "summary.csv")
    for g in sorted(res.remaining_pct):
        print(f"gamma={g:g}  remaining capacity after {res.hours[-1]:.0f} h: {res.remaining_pct[g][-1]:.6f} %")
    print(f"wrote soh.csv and summary.csv to {out} ({time.perf_counter() - t0:.0f} s)")
    return EXIT_OK


def cmd_verify(args):
    from .oracles import admm_oracle_gap, qp_oracle_gap, random_admm_instance, regressor_identity_gap

    rng = np.random.default_rng(args.seed)
    ok = True

    gap = regressor_identity_gap(rng, count=1000)
    ok &= _report("regressor identity (1000 triples x 3 models)", gap, 1e-10)

    gap = qp_oracle_gap(rng, count=200)
    ok &= _report("QP vs projected-gradient oracle (200 instances)", gap, 1e-6)

    worst, worst_it, conv = 0.0, 0, True
    for h, n in ((5, 100), (3, 20), (10, 20)):
        for _ in range(n):
            g, res = admm_oracle_gap(random_admm_instance(rng, h))
            worst = max(worst, g)
            worst_it = max(worst_it, res.iterations)
            conv &= res.converged
    ok &= _report(f"distributed vs centralized (140 instances, max {worst_it} iterations)", worst, 1e-4, conv)
    return EXIT_OK if ok else EXIT_NUMERICAL


def _report(label, value, tol, extra=True):
    passed = bool(value <= tol and extra)
    print(f"{'PASS' if passed else 'FAIL'}  {label}: {value:.3e} (tolerance {tol:g})")
    return passed


def build_parser():
    p = _Parser(prog="mpem", description="Distributed MPC energy management for hybrid power trains.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and solver diagnostics")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario on one cycle")
    s.add_argument("--scenario", required=True, help="scenario TOML file or bundled name (hev, dps, hea)")
    s.add_argument("--cycle", required=True, help="cycle CSV file or bundled name")
    s.add_argument("--gamma", type=float, help="override the battery weight")
    s.add_argument("--out", help="directory for ticks.csv and summary.csv")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep-gamma", help="one run per gamma value")
    s.add_argument("--scenario", required=True)
    s.add_argument("--cycle", required=True)
    s.add_argument("--gammas", required=True, help="comma-separated list, e.g. 0,1,10,100,1000")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("campaign", help="randomized multi-run capacity-fade campaign")
    s.add_argument("--scenario", required=True)
    s.add_argument("--cycles", required=True, help="directory of cycle CSV files")
    s.add_argument("--runs", type=int, required=True)
    s.add_argument("--hours", type=float, required=True, help="driving hours per run (whole number)")
    s.add_argument("--gammas", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--workers", type=int, default=1, help="processes, one gamma each")
    s.set_defaults(func=cmd_campaign)

    s = sub.add_parser("verify", help="run the oracle suites")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mpem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"mpem: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationError, NodeSolveError, CentralizedInfeasible, FloatingPointError) as exc:
        print(f"mpem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
