"""Command-line entry point: ``geomatch <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines whose
keys are flag names (``trace-every`` or ``trace_every``). Flags given on the
command line override the file. ``--assert`` turns the run into a check: the
exit code is 0 when every tolerance is met and 1 otherwise.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeomatchError
from .experiments import (
    COMPARISON_COLUMNS,
    ExperimentConfig,
    add_vertex_probe,
    comparison_rows,
    mean_std,
    offline_sweep,
    online_traces,
    rounding_error_probe,
    run_sweep,
    write_csv,
)
from .fluid import (
    Mode,
    init_fluid,
    matched_fraction,
    metric_total_length,
    solve,
)
from .offline import theoretical_offline_fraction


def _c_value(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity", "unbounded"):
        return math.inf
    return float(text)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _common(p: argparse.ArgumentParser, reps: int) -> None:
    p.add_argument("--config", help="flat key=value file; command-line flags win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--out", help="CSV output path (a .meta.json sidecar is written next to it)")
    p.add_argument("--json", action="store_true", help="print a JSON summary to stdout")
    p.add_argument("--assert", dest="check", action="store_true", help="exit 1 if a tolerance fails")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="geomatch", description=__doc__.splitlines()[0], allow_abbrev=False
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("offline", allow_abbrev=False, help="SMALL-FIRST maximum matching on random line instances")
    _common(p, reps=32)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=0.02)
    subs["offline"] = p

    p = sub.add_parser("online", allow_abbrev=False, help="CLOSEST traces on random instances")
    _common(p, reps=1)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--c", type=_c_value, default=1.0, help="radius factor or 'inf'")
    p.add_argument("--mode", choices=["cardinality", "metric"])
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--k", type=int, default=0, help="rounding grid factor (0 = unrounded)")
    p.add_argument("--topology", choices=["line", "circle"], default="circle")
    p.add_argument("--trace-every", type=int, default=0)
    p.add_argument("--dt", type=float, default=1e-3)
    subs["online"] = p

    p = sub.add_parser("fluid", allow_abbrev=False, help="integrate the gap-size fluid system")
    _common(p, reps=1)
    p.add_argument("--mode", choices=["cardinality", "metric"], default="cardinality")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--lmax", type=int)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float)
    p.add_argument("--points", type=int, default=10, help="number of checkpoint intervals")
    p.add_argument("--law", choices=["rounded", "shifted", "unit"])
    subs["fluid"] = p

    p = sub.add_parser("compare", allow_abbrev=False, help="simulation vs fluid vs closed form on a time grid")
    _common(p, reps=16)
    p.add_argument("--mode", choices=["offline", "cardinality", "metric"], default="cardinality")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-grid", type=_float_list, default=[])
    p.add_argument("--tol", type=float, help="absolute (cardinality/offline) or relative (metric)")
    subs["compare"] = p

    p = sub.add_parser("round-probe", allow_abbrev=False, help="effect of rounding and of one extra vertex on CLOSEST")
    _common(p, reps=100)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--trials", type=int, default=1000, help="single-insertion trials")
    p.add_argument("--add-n", type=int, default=100, help="instance size for insertion trials")
    subs["round-probe"] = p

    p = sub.add_parser("sweep-c", allow_abbrev=False, help="offline optimum, CLOSEST and fluid ratio across c")
    _common(p, reps=0)
    p.add_argument("--cs", type=_float_list, default=[0.25, 0.5, 1.0, 2.0, 5.0])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--dt", type=float, default=1e-3)
    subs["sweep-c"] = p
    return parser, subs


# -- config files -----------------------------------------------------------------


def read_config(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


def _config_tokens(sub: argparse.ArgumentParser, entries: dict[str, str]) -> list[str]:
    flags = {}
    for action in sub._actions:
        for opt in action.option_strings:
            flags[opt] = action
    tokens = []
    for key, value in entries.items():
        opt = "--" + key
        if key == "check":
            opt = "--assert"
        action = flags.get(opt)
        if action is None or key == "config":
            raise ConfigError(key, "unknown option for this subcommand")
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(opt)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(key, f"expected a boolean, got {value!r}")
        else:
            tokens += [opt, value]
    return tokens


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    ns, _ = pre.parse_known_args(argv)
    if ns.config and argv and argv[0] in subs:
        tokens = _config_tokens(subs[argv[0]], read_config(ns.config))
        argv = [argv[0], *tokens, *argv[1:]]
    return parser.parse_args(argv)


# -- subcommands ------------------------------------------------------------------


def _meta(args: argparse.Namespace) -> dict:
    cfg = {}
    for key, value in sorted(vars(args).items()):
        if key in ("json", "check", "config", "command"):
            continue
        if isinstance(value, float) and math.isinf(value):
            value = "inf"
        cfg[key] = value
    return {"command": args.command, "config": cfg}


def cmd_offline(args) -> tuple[dict, bool]:
    if args.reps < 1:
        raise ConfigError("reps", "must be >= 1")
    kappas = offline_sweep(args.n, args.c, args.reps, args.seed, args.workers)
    theory = theoretical_offline_fraction(args.c)
    rows = [[r, k, k / args.n, theory, abs(k / args.n - theory)] for r, k in enumerate(kappas)]
    if args.out:
        cols = ["replicate", "kappa", "fraction", "theory_fraction", "abs_error"]
        write_csv(args.out, cols, rows, _meta(args))
    mean, std = mean_std([r[2] for r in rows])
    summary = {"mean_fraction": mean, "std_fraction": std, "theory_fraction": theory,
               "abs_error": abs(mean - theory), "tol": args.tol}
    return summary, summary["abs_error"] <= args.tol


def cmd_online(args) -> tuple[dict, bool]:
    mode = args.mode or ("metric" if math.isinf(args.c) else "cardinality")
    if mode == "metric":
        args.c = math.inf
        if not args.eps > 0:
            raise ConfigError("eps", "must be positive in metric mode")
    elif math.isinf(args.c):
        raise ConfigError("c", "cardinality mode needs a finite c")
    if args.reps < 1:
        raise ConfigError("reps", "must be >= 1")
    args.mode = mode
    every = args.trace_every or max(1, args.n // 10)
    traces = online_traces(
        args.n, args.c, mode, eps=args.eps, k=args.k, topology=args.topology,
        trace_every=every, reps=args.reps, seed=args.seed, workers=args.workers,
    )
    rows = [[r, p.t_arrivals, p.kappa, p.rho, p.free_count] for r, tr in enumerate(traces) for p in tr]
    if args.out:
        write_csv(args.out, ["replicate", "t_arrivals", "kappa", "rho", "free_count"], rows, _meta(args))
    finals = [tr[-1] for tr in traces]
    kappa_mean, _ = mean_std([p.kappa / args.n for p in finals])
    rho_mean, rho_std = mean_std([p.rho for p in finals])
    summary = {"mode": mode, "mean_kappa_fraction": kappa_mean, "mean_rho": rho_mean, "std_rho": rho_std}
    if mode == "metric":
        t_end = finals[0].t_arrivals / args.n
        theory = metric_total_length(t_end)
        summary.update(t=t_end, theory_rho=theory, rel_error=abs(rho_mean - theory) / theory)
        ok = summary["rel_error"] <= 0.10
    elif args.k:
        fluid = matched_fraction(solve(init_fluid(args.k, args.c), [1.0], args.dt)[-1])
        summary.update(fluid_fraction=fluid, abs_gap=abs(kappa_mean - fluid))
        ok = summary["abs_gap"] <= 0.02
    else:
        bound = theoretical_offline_fraction(args.c)
        summary.update(offline_fraction=bound)
        ok = kappa_mean <= bound + 0.02
    return summary, ok


def cmd_fluid(args) -> tuple[dict, bool]:
    mode = Mode(args.mode)
    metric = mode is Mode.METRIC
    t_end = args.t_end if args.t_end is not None else (0.9 if metric else 1.0)
    if args.points < 1:
        raise ConfigError("points", "must be >= 1")
    state = init_fluid(args.k, math.inf if metric else args.c, args.lmax, mode=mode, law=args.law)
    times = np.linspace(0.0, t_end, args.points + 1)
    states = solve(state, times, args.dt)
    rows = []
    ok = True
    z_band = (0.49 * 0.98, 0.51 * 1.02)
    for s in states:
        if metric:
            z = s.second_moment()
            rows.append([s.t, s.mass(), s.length(), z, s.cum_length, s.tail_mass])
            ok &= abs(s.mass() - (1.0 - s.t)) <= 1e-4
            ok &= z_band[0] <= z * (1.0 - s.t) ** 2 <= z_band[1]
        else:
            rows.append([s.t, s.mass(), s.length(), matched_fraction(s), s.tail_mass])
            ok &= math.exp(-4.0 * args.c) <= s.mass() <= 1.0 + 1e-6
    final = states[-1]
    if not metric:
        ok &= final.max_length_drift <= 1e-6
    if args.out:
        tail = ["second_moment", "cum_length"] if metric else ["matched_fraction"]
        write_csv(args.out, ["t", "sum_f", "length_invariant", *tail, "tail_mass"], rows, _meta(args))
    summary = {
        "mode": mode.value, "t": final.t, "sum_f": final.mass(), "length_invariant": final.length(),
        "max_length_drift": final.max_length_drift, "tail_mass": final.tail_mass,
    }
    if metric:
        summary.update(second_moment=final.second_moment(), cum_length=final.cum_length,
                       theory_length=metric_total_length(final.t))
    else:
        summary.update(matched_fraction=matched_fraction(final),
                       competitive_ratio=matched_fraction(final) / theoretical_offline_fraction(args.c))
    return summary, bool(ok)


def cmd_compare(args) -> tuple[dict, bool]:
    cfg = ExperimentConfig(
        mode=args.mode, n=args.n, c=args.c, k=args.k, eps=args.eps, reps=args.reps,
        seed=args.seed, dt=args.dt, t_grid=tuple(args.t_grid), out=args.out, workers=args.workers,
    )
    rows = run_sweep(cfg)
    if args.out:
        write_csv(args.out, COMPARISON_COLUMNS, comparison_rows(rows), _meta(args))
    if cfg.mode == "metric":
        tol = 0.10 if args.tol is None else args.tol
        errs = [abs(r.empirical_mean - r.theory_value) / r.theory_value for r in rows]
    else:
        tol = 0.02 if args.tol is None else args.tol
        errs = [r.abs_gap for r in rows]
    summary = {"mode": cfg.mode, "rows": [vars(r) for r in rows], "max_error": max(errs), "tol": tol}
    return summary, max(errs) <= tol


def cmd_round_probe(args) -> tuple[dict, bool]:
    if args.reps < 1:
        raise ConfigError("reps", "must be >= 1")
    probe = rounding_error_probe(args.n, args.c, args.k, args.reps, args.seed, workers=args.workers)
    adds = add_vertex_probe(args.add_n, args.c, args.trials, args.seed, workers=args.workers)
    rows = [["rounding", r, d, probe.bound] for r, d in enumerate(probe.deltas)]
    rows += [["add_vertex", r, d, 1] for r, d in enumerate(adds)]
    if args.out:
        write_csv(args.out, ["probe", "replicate", "delta", "bound"], rows, _meta(args))
    max_add = max(abs(d) for d in adds) if adds else 0
    summary = {
        "rounding_bound": probe.bound, "rounding_mean_delta": probe.mean_delta,
        "rounding_max_delta": max(probe.deltas), "rounding_within_fraction": probe.within_fraction,
        "add_vertex_max_change": max_add, "add_vertex_trials": len(adds),
    }
    return summary, probe.within_fraction >= 0.95 and max_add <= 1


def cmd_sweep_c(args) -> tuple[dict, bool]:
    rows = []
    ok = True
    for c in args.cs:
        theory = theoretical_offline_fraction(c)
        fluid = matched_fraction(solve(init_fluid(args.k, c), [1.0], args.dt)[-1])
        off_mean = on_mean = None
        if args.reps > 0:
            kappas = offline_sweep(args.n, c, args.reps, args.seed, args.workers)
            off_mean = float(np.mean(kappas)) / args.n
            cfg = ExperimentConfig(mode="cardinality", n=args.n, c=c, k=args.k, reps=args.reps,
                                   seed=args.seed, dt=args.dt, t_grid=(1.0,), workers=args.workers)
            on_mean = run_sweep(cfg)[0].empirical_mean
        ratio = fluid / theory
        ok &= 0.0 < ratio <= 1.0
        rows.append([c, off_mean, theory, on_mean, fluid, ratio])
    cols = ["c", "offline_mean", "offline_theory", "online_mean", "fluid_matched", "competitive_ratio"]
    if args.out:
        write_csv(args.out, cols, rows, _meta(args))
    summary = {"rows": [dict(zip(cols, r)) for r in rows]}
    return summary, bool(ok)


COMMANDS = {
    "offline": cmd_offline,
    "online": cmd_online,
    "fluid": cmd_fluid,
    "compare": cmd_compare,
    "round-probe": cmd_round_probe,
    "sweep-c": cmd_sweep_c,
}


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        summary, ok = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"geomatch: config error: {exc}", file=sys.stderr)
        return 2
    except (GeomatchError, ValueError) as exc:
        print(f"geomatch: {exc}", file=sys.stderr)
        return 2
    summary = _jsonable(summary)
    if args.check:
        summary["passed"] = bool(ok)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for key, value in summary.items():
            if key != "rows":
                print(f"{key}: {value}")
        for row in summary.get("rows", []):
            print("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
    if args.check:
        return 0 if ok else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
