"""Command-line front end.

Every command that writes a file also writes ``<file>.manifest.json`` holding
the normalised argument vector; ``pscdp replay <manifest>`` re-runs it and
reproduces the output byte for byte.

Exit codes: 0 success, 2 invalid arguments, 3 infeasible or degenerate model.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .attack import (
    DEFAULT_PROBE_LEN,
    Finite,
    Ideal,
    dp_check,
    output_distributions,
    simulate_outcomes,
    success_curve,
)
from .counters import CounterConfig, CounterState, Direction
from .errors import ConfigError, DegenerateModelError, PscError, UnreachableOutputError
from .markov import (
    build_attack_chain,
    build_stationary_chain,
    misprediction_rate_closed_form,
    stationary_distribution,
    steadiness_check,
)
from .rational import as_fraction, format_fraction, to_decimal
from .synthesis import SynthesisQuery, synthesize_p
from .workload import TABLE2_CONFIGS, format_row, table2

OUTPUT_DIR_ENV = "PSCDP_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def rational(text):
    try:
        return as_fraction(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc).split(": ", 1)[-1]) from None


def config_pair(text):
    try:
        m, p = text.split(",")
        return CounterConfig(m, p)
    except (ValueError, ConfigError) as exc:
        raise argparse.ArgumentTypeError(f"expected 'm,p' with both in [0,1]: {exc}") from None


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _opt_fraction(x):
    return ("", "") if x is None else (format_fraction(x), to_decimal(x))


# -- commands: each returns (text, extension, exit_code) --------------------


def cmd_attack_dist(args):
    cfg = CounterConfig(args.m, args.p)
    dist_t, dist_nt = output_distributions(cfg, args.c_max)
    rows = []
    for c in range(dist_t.c_max + 1):
        pt, pnt = dist_t[c], dist_nt[c]
        rows.append([c, format_fraction(pt), format_fraction(pnt), to_decimal(pt), to_decimal(pnt)])
    header = ["c", "prob_T", "prob_NT", "prob_T_decimal", "prob_NT_decimal"]
    return _csv_text(header, rows), "csv", EXIT_OK


def cmd_attack_success(args):
    cfg = CounterConfig(args.m, args.p)
    rows = []
    for c, prob in success_curve(cfg, args.c_max, args.prior):
        rows.append([c, *_opt_fraction(prob)])
    header = ["c", "success_prob", "success_prob_decimal"]
    return _csv_text(header, rows), "csv", EXIT_OK


def _linspace(lo, hi, steps):
    if steps < 1:
        raise ConfigError("steps", "need at least one grid point")
    if steps == 1:
        return [lo]
    return [lo + (hi - lo) * Fraction(k, steps - 1) for k in range(steps)]


def cmd_surface(args):
    if not 0 <= args.s_min <= args.s_max <= 1:
        raise ConfigError("s-range", "need 0 <= s_min <= s_max <= 1")
    rows = []
    for p in _linspace(Fraction(0), Fraction(1), args.p_steps):
        for s in _linspace(args.s_min, args.s_max, args.s_steps):
            try:
                r = misprediction_rate_closed_form(s, p)
            except DegenerateModelError:
                r = None
            rows.append([format_fraction(p), format_fraction(s), *_opt_fraction(r)])
    header = ["p", "s", "r", "r_decimal"]
    return _csv_text(header, rows), "csv", EXIT_OK


def cmd_table2(args):
    configs = tuple(args.cfg) if args.cfg else TABLE2_CONFIGS
    initial = CounterState[args.initial_state]
    rows = [format_row(kind, res) for kind, res in table2(args.n, args.seed, configs, initial)]
    header = [
        "data_kind", "branch", "s_hat", "s_hat_decimal", "m", "p",
        "p_exp", "p_exp_decimal", "p_theo", "p_theo_decimal", "trace_length",
    ]
    return _csv_text(header, rows), "csv", EXIT_OK


def cmd_dp_check(args):
    cfg = CounterConfig(args.m, args.p)
    report = dp_check(cfg, args.eps, args.delta, args.c_max)
    data = report.to_dict()
    data["cfg"] = cfg.to_dict()
    return _json_text(data), "json", EXIT_OK


def cmd_synthesize(args):
    query = SynthesisQuery(args.m, args.eps, args.delta, args.resolution, args.c_max)
    result = synthesize_p(query)
    if args.grid_csv:
        grid = _csv_text(["p", "p_decimal", "pass", "worst_margin"], result.grid_rows())
        Path(args.grid_csv).write_text(grid, newline="\n")
    code = EXIT_OK if result.feasible_intervals else EXIT_INFEASIBLE
    return _json_text(result.to_dict()), "json", code


def cmd_simulate(args):
    cfg = CounterConfig(args.m, args.p)
    victim = Direction.parse(args.victim)
    if args.prime == "ideal":
        prime = Ideal()
    else:
        prime = Finite(args.prime_steps, CounterState[args.initial_state])
    counts = simulate_outcomes(cfg, victim, args.trials, args.seed, prime, args.probe_len)
    exact = None
    if isinstance(prime, Ideal) and cfg.m > 0:
        dist_t, dist_nt = output_distributions(cfg)
        exact = dist_t if victim is Direction.T else dist_nt
    observed = {}
    exhausted = 0
    for outcome, k in counts.items():
        if outcome.exhausted:
            exhausted += k
        else:
            observed[outcome.c] = k
    top = max(observed, default=0)
    rows = []
    for c in range(top + 1):
        k = observed.get(c, 0)
        exact_p = exact[c] if exact is not None and c <= exact.c_max else None
        rows.append([c, k, to_decimal(Fraction(k, args.trials), 6), *_opt_fraction(exact_p)])
    if exhausted:
        rows.append(["exhausted", exhausted, to_decimal(Fraction(exhausted, args.trials), 6), "", ""])
    header = ["c", "count", "freq", "exact_prob", "exact_prob_decimal"]
    return _csv_text(header, rows), "csv", EXIT_OK


def cmd_steady_state(args):
    cfg = CounterConfig(args.m, args.p)
    steady = steadiness_check(cfg, args.s)
    result = stationary_distribution(cfg, args.s)
    data = {
        "cfg": cfg.to_dict(),
        "s": format_fraction(args.s),
        "order": ["ST", "WT", "WN", "SN"],
        "mu": [format_fraction(x) for x in result.mu],
        "mu_decimal": [to_decimal(x) for x in result.mu],
        "misprediction_rate": format_fraction(result.misprediction_rate),
        "misprediction_rate_decimal": to_decimal(result.misprediction_rate),
        "unique_stationary": steady.unique_stationary,
        "aperiodic": steady.aperiodic,
    }
    return _json_text(data), "json", EXIT_OK


def cmd_dump_chain(args):
    cfg = CounterConfig(args.m, args.p)
    if args.kind == "attack":
        model = build_attack_chain(cfg, Direction.parse(args.victim))
    else:
        if args.s is None:
            raise ConfigError("s", "the stationary chain needs --s")
        model = build_stationary_chain(cfg, args.s)
    return _json_text(model.to_dict()), "json", EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_cfg(sp, p_required=True):
    sp.add_argument("--m", type=rational, required=True, help="update probability, e.g. 1/2")
    if p_required:
        sp.add_argument("--p", type=rational, required=True, help="strong-state reversal probability")


def _add_out(sp):
    sp.add_argument("--out", help=f"output file ('-' for stdout; default ${OUTPUT_DIR_ENV}/<command>.<ext>)")


def build_parser():
    parser = argparse.ArgumentParser(prog="pscdp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("attack-dist", help="Pr[out=c | victim] for both victims (CSV)")
    _add_cfg(sp)
    sp.add_argument("--c-max", type=int)
    _add_out(sp)
    sp.set_defaults(func=cmd_attack_dist)

    sp = sub.add_parser("attack-success", help="success probability of the optimal guess per c (CSV)")
    _add_cfg(sp)
    sp.add_argument("--c-max", type=int)
    sp.add_argument("--prior", type=rational, default=Fraction(1, 2))
    _add_out(sp)
    sp.set_defaults(func=cmd_attack_success)

    sp = sub.add_parser("misprediction-surface", help="steady-state misprediction rate over (p, s) (CSV)")
    sp.add_argument("--p-steps", type=int, default=101)
    sp.add_argument("--s-min", type=rational, default=Fraction(1, 1000))
    sp.add_argument("--s-max", type=rational, default=Fraction(999, 1000))
    sp.add_argument("--s-steps", type=int, default=999)
    _add_out(sp)
    sp.set_defaults(func=cmd_surface)

    sp = sub.add_parser("table2", help="MergeSort misprediction rates, experimental vs theoretical (CSV)")
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cfg", type=config_pair, action="append", help="'m,p'; repeatable")
    sp.add_argument("--initial-state", choices=[s.name for s in CounterState], default="WT")
    _add_out(sp)
    sp.set_defaults(func=cmd_table2)

    sp = sub.add_parser("dp-check", help="pointwise (eps, delta) privacy check (JSON)")
    _add_cfg(sp)
    sp.add_argument("--eps", type=rational, required=True)
    sp.add_argument("--delta", type=rational, required=True)
    sp.add_argument("--c-max", type=int)
    _add_out(sp)
    sp.set_defaults(func=cmd_dp_check)

    sp = sub.add_parser("synthesize", help="feasible p intervals for a privacy target (JSON)")
    _add_cfg(sp, p_required=False)
    sp.add_argument("--eps", type=rational, required=True)
    sp.add_argument("--delta", type=rational, required=True)
    sp.add_argument("--resolution", type=rational, default=Fraction(1, 1000))
    sp.add_argument("--c-max", type=int)
    sp.add_argument("--grid-csv", help="also write (p, pass, worst_margin) rows here")
    _add_out(sp)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("simulate", help="Monte Carlo runs of the cut-off attack (CSV)")
    _add_cfg(sp)
    sp.add_argument("--victim", required=True, choices=["T", "NT"])
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--prime", choices=["ideal", "finite"], default="ideal")
    sp.add_argument("--prime-steps", type=int, default=16)
    sp.add_argument("--initial-state", choices=[s.name for s in CounterState], default="SN")
    sp.add_argument("--probe-len", type=int, default=DEFAULT_PROBE_LEN)
    _add_out(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("steady-state", help="stationary distribution and misprediction rate (JSON)")
    _add_cfg(sp)
    sp.add_argument("--s", type=rational, required=True, help="probability the branch is taken")
    _add_out(sp)
    sp.set_defaults(func=cmd_steady_state)

    sp = sub.add_parser("dump-chain", help="print a constructed Markov chain (JSON)")
    sp.add_argument("--kind", choices=["attack", "stationary"], required=True)
    _add_cfg(sp)
    sp.add_argument("--victim", choices=["T", "NT"], default="T")
    sp.add_argument("--s", type=rational)
    _add_out(sp)
    sp.set_defaults(func=cmd_dump_chain)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=None)

    return parser


def _normalised_argv(args, parser):
    """Rebuild an argv with every option explicit, so defaults cannot drift."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    argv = [args.command]
    params = {}
    for action in sp._actions:
        if not action.option_strings or action.dest in ("help", "out"):
            continue
        value = getattr(args, action.dest)
        if value is None:
            continue
        flag = action.option_strings[0]
        values = value if isinstance(action, argparse._AppendAction) else [value]
        rendered = []
        for v in values:
            if isinstance(v, Fraction):
                text = format_fraction(v)
            elif isinstance(v, CounterConfig):
                text = f"{format_fraction(v.m)},{format_fraction(v.p)}"
            else:
                text = str(v)
            argv += [flag, text]
            rendered.append(text)
        params[action.dest] = rendered if isinstance(action, argparse._AppendAction) else rendered[0]
    return argv, params


def _resolve_out(args, ext):
    if args.out:
        return None if args.out == "-" else Path(args.out)
    outdir = os.environ.get(OUTPUT_DIR_ENV)
    if outdir:
        return Path(outdir) / f"{args.command}.{ext}"
    return None


def _replay(path):
    manifest = json.loads(Path(path).read_text())
    argv = list(manifest["argv"])
    outputs = manifest.get("outputs") or []
    if outputs:
        argv += ["--out", outputs[0]]
    return main(argv)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        return _replay(args.manifest)
    try:
        text, ext, code = args.func(args)
    except ConfigError as exc:
        print(f"pscdp {args.command}: invalid argument {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateModelError, UnreachableOutputError) as exc:
        print(f"pscdp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PscError as exc:  # pragma: no cover - future error kinds
        print(f"pscdp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    out = _resolve_out(args, ext)
    if out is None:
        sys.stdout.write(text)
        return code
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, newline="\n")
    norm_argv, params = _normalised_argv(args, parser)
    outputs = [str(out)]
    if getattr(args, "grid_csv", None):
        outputs.append(str(args.grid_csv))
    manifest = {
        "command": args.command,
        "argv": norm_argv,
        "params": params,
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "outputs": outputs,
    }
    Path(f"{out}.manifest.json").write_text(_json_text(manifest), newline="\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
