"""Command-line front end: ``simulate``, ``index`` and ``validate``.

Exit codes: 0 success, 1 validation property failure, 2 bad arguments or
configuration, 3 runtime error during simulation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .belief import ChannelParams
from .config import PAPER_BOUND, ExperimentFile, load_experiment, preset_experiment
from .exceptions import AwiError, ConfigError
from .index import _approx_whittle, _check_beta, _check_n, beta_bound, system_beta_bound
from .policy import PolicyKind, PolicySpec
from .presets import PRESET_NAMES, preset_channels
from .sim import run_episode, run_experiment
from .validation import SUITES, run_suite

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

RESULT_COLUMNS = ("system", "policy", "n_iter", "beta", "runs", "horizon", "mean_return", "std_err", "seed")
INDEX_COLUMNS = ("omega", "index_value", "kind")
CURVE_COLUMNS = ("system", "policy", "n_iter", "beta", "t", "mean_return")


def fmt(x: float) -> str:
    """Locale-independent, round-trip exact real formatting."""
    return format(float(x), ".17g")


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        write_atomic(out, text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class _UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _parse_betas(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == PAPER_BOUND:
            out.append(PAPER_BOUND)
            continue
        try:
            out.append(_check_beta(float(tok)))
        except ValueError:
            raise _UsageError(f"--beta: expected a number in (0, 1) or {PAPER_BOUND!r}, got {tok!r}") from None
    return out


def _parse_policies(text: str, tie_break):
    try:
        return [PolicySpec.parse(t, tie_break) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise _UsageError(f"--policy: {exc}") from None


def _experiment_from_args(args) -> ExperimentFile:
    if args.config:
        exp = load_experiment(args.config)
    else:
        names = args.systems.split(",") if args.systems else list(PRESET_NAMES)
        unknown = [n for n in names if n not in PRESET_NAMES]
        if unknown:
            raise _UsageError(f"--systems: unknown preset(s) {', '.join(unknown)}")
        exp = preset_experiment(names, [PolicySpec.parse("myopic"), PolicySpec.parse("awi2")], [PAPER_BOUND])
    changes = {}
    if args.policy:
        changes["policies"] = tuple(_parse_policies(args.policy, exp.tie_break))
    if args.beta:
        changes["betas"] = tuple(_parse_betas(args.beta))
    if args.runs is not None:
        if args.runs < 1:
            raise _UsageError("--runs must be positive")
        changes["runs"] = args.runs
    if args.horizon is not None:
        if args.horizon < 1:
            raise _UsageError("--horizon must be positive")
        changes["horizon"] = args.horizon
    if args.config and args.systems:
        keep = args.systems.split(",")
        missing = [n for n in keep if n not in {s.name for s in exp.systems}]
        if missing:
            raise _UsageError(f"--systems: not in config: {', '.join(missing)}")
        changes["systems"] = tuple(s for s in exp.systems if s.name in keep)
    if changes:
        exp = dataclasses.replace(exp, **changes)
    return exp


def _trace_record(system, beta, policy, trace) -> dict:
    return {
        "system": system,
        "beta": beta,
        "policy": policy.label,
        "run_id": 0,
        "states": trace.states.astype(int).tolist(),
        "actions": trace.actions.astype(int).tolist(),
        "observations": trace.observations.astype(int).tolist(),
        "rewards": trace.rewards.tolist(),
        "beliefs": trace.beliefs.tolist(),
    }


def cmd_simulate(args) -> int:
    exp = _experiment_from_args(args)
    out = args.out or exp.output.path
    emit_trace = args.emit_trace or exp.output.emit_trace
    seed = args.seed
    rows, curve_rows, traces = [], [], []
    for system in exp.systems:
        for b in exp.betas:
            beta = exp.resolve_beta(b, system)
            cfg = system.system_config(beta, exp.horizon, exp.runs, seed)
            stats = run_experiment(cfg, exp.policies, threads=args.threads, keep_returns=False)
            for st in stats:
                pol = st.policy
                key = (system.name, pol.kind.value, str(pol.n) if pol.kind is PolicyKind.AWI else "", fmt(beta))
                curve_rows.extend(key + (str(t), fmt(g)) for t, g in enumerate(st.mean_curve, start=1))
                rows.append(key + (
                    str(st.runs),
                    str(exp.horizon),
                    fmt(st.mean_return),
                    fmt(st.std_err),
                    str(seed),
                ))
                if emit_trace:
                    _, tr = run_episode(cfg, pol, 0, want_trace=True)
                    traces.append(_trace_record(system.name, beta, pol, tr))
    _emit(_csv_text(RESULT_COLUMNS, rows), out)
    if out is not None and out != "-":
        write_atomic(Path(str(out) + ".curve.csv"), _csv_text(CURVE_COLUMNS, curve_rows))
    if emit_trace:
        text = json.dumps(traces) + "\n"
        if out is None or out == "-":
            sys.stderr.write(text)
        else:
            write_atomic(Path(str(out) + ".trace.json"), text)
    return EXIT_OK


# --------------------------------------------------------------------------
# index
# --------------------------------------------------------------------------


def _parse_obs(text: str):
    try:
        rows = [[float(x) for x in r.split(",")] for r in text.split(";")]
    except ValueError:
        raise _UsageError(f"--obs: cannot parse {text!r}; expected rows like 'p10,p11;p20,p21'") from None
    return rows


def _index_channel(args):
    if args.preset:
        if args.preset not in PRESET_NAMES:
            raise _UsageError(f"--preset: unknown preset {args.preset!r}")
        chans = preset_channels(args.preset)
        if args.channel is None or not (1 <= args.channel <= len(chans)):
            raise _UsageError(f"--channel must be in 1..{len(chans)} with --preset")
        return chans[args.channel - 1], chans
    if args.p01 is None or args.p11 is None:
        raise _UsageError("give --preset/--channel or both --p01 and --p11")
    obs = _parse_obs(args.obs) if args.obs else [[0.9, 0.1], [0.1, 0.9]]
    try:
        ch = ChannelParams(args.p01, args.p11, obs, args.throughput)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    return ch, [ch]


def cmd_index(args) -> int:
    ch, system = _index_channel(args)
    if args.beta == PAPER_BOUND:
        beta = system_beta_bound(system) if args.preset else beta_bound(ch)
    else:
        (beta,) = _parse_betas(args.beta)
    try:
        n = _check_n(args.iters)
    except ValueError as exc:
        raise _UsageError(f"--iters: {exc}") from None
    if args.grid < 2:
        raise _UsageError("--grid needs at least 2 points")
    grid = np.linspace(0.0, 1.0, args.grid)
    vals, ok = _approx_whittle(ch, beta, grid, n)
    rows = [
        (fmt(w), fmt(v), "approx_whittle" if o else "fallback_myopic")
        for w, v, o in zip(grid, vals, ok)
    ]
    _emit(_csv_text(INDEX_COLUMNS, rows), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    if not args.budget > 0:
        raise _UsageError("--budget must be positive")
    names = SUITES if args.suite == "all" else (args.suite,)
    reports = [run_suite(name, seed=args.seed, budget=args.budget) for name in names]
    doc = reports[0].to_dict() if len(reports) == 1 else {
        "passed": all(r.passed for r in reports),
        "suites": [r.to_dict() for r in reports],
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


# --------------------------------------------------------------------------


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="awi-dsa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte-Carlo comparison of channel-selection policies")
    s.add_argument("--config", help="experiment file (JSON); defaults to the built-in presets")
    s.add_argument("--systems", help="comma-separated preset or system names to run")
    s.add_argument("--out", help="results CSV (stdout if omitted); the per-horizon curve goes to <out>.curve.csv")
    s.add_argument("--seed", type=_seed, required=True, help="master seed (required)")
    s.add_argument("--runs", type=int)
    s.add_argument("--horizon", type=int)
    s.add_argument("--beta", help=f"discount factor(s), comma-separated; number or {PAPER_BOUND!r}")
    s.add_argument("--policy", help="comma-separated policies, e.g. myopic,awi0,awi2")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--emit-trace", action="store_true", help="also write a per-slot trace of run 0")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("index", help="tabulate the approximated index over a belief grid")
    i.add_argument("--preset", help="built-in system name")
    i.add_argument("--channel", type=int, help="1-based channel number within --preset")
    i.add_argument("--p01", type=float)
    i.add_argument("--p11", type=float)
    i.add_argument("--obs", help="CQI likelihoods, one 'P(i|poor),P(i|good)' row per level, rows separated by ';'")
    i.add_argument("--throughput", type=float, default=1.0)
    i.add_argument("--beta", default=PAPER_BOUND)
    i.add_argument("--iters", type=int, default=2)
    i.add_argument("--grid", type=int, default=101)
    i.add_argument("--out")
    i.set_defaults(func=cmd_index)

    v = sub.add_parser("validate", help="run a randomised property suite")
    v.add_argument("--suite", choices=SUITES + ("all",), required=True)
    v.add_argument("--seed", type=_seed, default=0)
    v.add_argument("--budget", type=float, default=1.0, help="scale factor on the number of random instances")
    v.add_argument("--out", help="JSON report (stdout if omitted)")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"awi-dsa: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _UsageError as exc:
        print(f"awi-dsa {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AwiError, ValueError, ArithmeticError, OSError) as exc:
        print(f"awi-dsa {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
