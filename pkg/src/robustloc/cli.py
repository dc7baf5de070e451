"""Command-line front end.

    robustloc simulate --out DIR --seed S [--config scenario.json]
    robustloc solve    --nodes F --measurements F --method M --seed S --out DIR
    robustloc eval     --methods a,b,c --seed S --out DIR [--config scenario.json]
    robustloc dataset  (--bundle DIR | --surrogate) --debias MODE --method M --seed S --out DIR
    robustloc check    --nodes F --measurements F --estimates F

Exit codes: 0 success, 1 usage/config/input error, 2 solver failure or failed check.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .evaluation import (METHODS, ScenarioConfig, default_grid, empirical_cdf, make_instance,
                         network_error, run_monte_carlo, run_reinit_trials)
from .measurement import nlos_ratio
from .solver import DivergenceError, Schedule, centroid_init, gaussian_init

log = logging.getLogger("robustloc")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _scenario(args) -> ScenarioConfig:
    cfg = dataio.load_scenario(args.config) if getattr(args, "config", None) else ScenarioConfig()
    changes = {}
    if getattr(args, "mc_runs", None) is not None:
        changes["mc_runs"] = args.mc_runs
    if getattr(args, "schedule", None) is not None:
        changes["schedule"] = args.schedule
    if getattr(args, "init_std", None) is not None:
        changes["init_std"] = args.init_std
    if getattr(args, "nlos_prob", None) is not None:
        changes["noise"] = dataclasses.replace(cfg.noise, nlos_prob=args.nlos_prob)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _echo(**kw) -> list[str]:
    return [f"{k}: {json.dumps(v, default=str)}" for k, v in kw.items()]


def _methods(text) -> list[str]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise UsageError(f"unknown method(s) {bad}; choose from {sorted(METHODS)}")
    return names


def _write_trace(path, traces, names):
    with open(path, "w") as fh:
        for name, t in zip(names, traces):
            for k, (c, d) in enumerate(zip(t.costs, t.displacements), start=1):
                fh.write(json.dumps({"stage": name, "round": k, "cost": c, "max_displacement": d}) + "\n")
            fh.write(json.dumps({"stage": name, "rounds": t.rounds, "termination": t.reason.value,
                                 "warnings": t.warnings}) + "\n")


def _infeasible(net, ms, X, tol):
    P = np.vstack([X, net.anchor_positions])
    e = ms.edges
    d = np.hypot(*(P[e[:, 0]] - P[e[:, 1]]).T)
    over = d - ms.ranges
    return [(int(a), int(b), float(v)) for (a, b), v in zip(e.tolist(), over) if v > tol]


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = _scenario(args)
    net, ms, _ = make_instance(sc, args.seed, 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = _echo(command="simulate", seed=args.seed, scenario=sc.to_dict())
    dataio.write_nodes(out / "nodes.csv", net, comments=echo)
    dataio.write_measurements(out / "measurements.csv", ms, comments=echo)
    dataio.save_scenario(sc, out / "scenario.json")
    ratio = nlos_ratio(ms) if len(ms) else 0.0
    print(f"nodes: {net.num_nodes} ({net.num_sensors} sensors, {net.num_anchors} anchors)  "
          f"links: {len(ms)}  NLOS ratio: {ratio:.4f}")
    return EXIT_OK


def _solve_with(method, net, ms, init, sc):
    state, traces = METHODS[method](net, ms, init, sc)
    names = ["stage1", "stage2"] if method == "two_stage" else [method]
    return state, traces, names


def cmd_solve(args) -> int:
    net, ms, ids = dataio.load_network_files(args.nodes, args.measurements)
    if args.method == "oracle_los" and ms.nlos is None:
        raise UsageError("labels required: oracle_los needs an 'nlos' column in the measurements file")
    sc = _scenario(args)
    if args.sigma_n is not None:
        sc = dataclasses.replace(sc, noise=dataclasses.replace(sc.noise, sigma_n=args.sigma_n))
    if args.init == "gaussian":
        if net.true_sensor_positions is None:
            raise UsageError("gaussian init needs true sensor positions; use --init centroid")
        init = gaussian_init(net, sc.init_std, np.random.SeedSequence([args.seed, 0, 2]))
    else:
        init = centroid_init(net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = _echo(command="solve", method=args.method, seed=args.seed, init=args.init,
                 nodes=str(args.nodes), measurements=str(args.measurements), scenario=sc.to_dict())
    try:
        state, traces, names = _solve_with(args.method, net, ms, init, sc)
    except DivergenceError as exc:
        _write_trace(out / "trace.jsonl", [exc.trace], [args.method])
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_trace(out / "trace.jsonl", traces, names)
    rows = [[ids[i], float(x), float(y)] for i, (x, y) in enumerate(state.positions)]
    dataio.write_table(out / "estimates.csv", ["id", "x_m", "y_m"], rows, echo)
    for t, name in zip(traces, names):
        print(f"{name}: {t.rounds} rounds, {t.reason.value}")
        for w in t.warnings:
            print(f"warning: {w}", file=sys.stderr)
    if net.true_sensor_positions is not None:
        print(f"network error: {network_error(state.positions, net.true_sensor_positions):.6f} m")
    if args.check:
        bad = _infeasible(net, ms, state.positions, args.tol)
        print(f"check: {len(bad)} link(s) outside their measured range")
        if bad:
            return EXIT_RUNTIME
    return EXIT_OK


def _write_reports(out: Path, reports, echo, grid_points):
    reps = list(reports.values())
    summaries = [r.summary() for r in reps]
    cols = ["method", "runs", "failures", "mean", "median", "q10", "q25", "q75", "q90", "max"]
    dataio.write_table(out / "summary.csv", cols, [[s.get(c, "") for c in cols] for s in summaries], echo)
    for r in reps:
        e = r.errors
        if e.size:
            cdf = empirical_cdf(e, e)
            dataio.write_table(out / f"cdf_{r.method}.csv", ["error_m", "cdf"], cdf, echo)
        dataio.save_report(r, out / f"report_{r.method}.jsonl")
    ok = [r for r in reps if r.errors.size]
    if ok:
        grid = default_grid(ok, grid_points)
        cols = {r.method: [f for _, f in empirical_cdf(r.errors, grid)] for r in ok}
        rows = [[float(g)] + [cols[m][k] for m in cols] for k, g in enumerate(grid)]
        dataio.write_table(out / "cdf_grid.csv", ["error_m"] + list(cols), rows, echo)
    for s in summaries:
        med = f"{s['median']:.4f}" if "median" in s else "n/a"
        print(f"{s['method']:>12}: median {med} m  runs {s['runs']}  failures {s['failures']}")


def cmd_eval(args) -> int:
    sc = _scenario(args)
    methods = _methods(args.methods)
    reports = run_monte_carlo(sc, methods, args.seed, parallel=args.parallel)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = _echo(command="eval", seed=args.seed, methods=methods, scenario=sc.to_dict())
    _write_reports(out, reports, echo, args.grid_points)
    return EXIT_OK


def cmd_dataset(args) -> int:
    if args.surrogate:
        bundle = dataio.make_surrogate_bundle(args.seed)
        source = "surrogate"
    elif args.bundle:
        bundle = dataio.load_dataset(args.bundle)
        source = str(args.bundle) + (" (surrogate)" if bundle.surrogate else "")
    else:
        raise UsageError("give --bundle DIR or --surrogate")
    for w in bundle.warnings:
        print(f"warning: {w}", file=sys.stderr)
    sigma = args.sigma_n if args.sigma_n is not None else bundle.sigma_n
    sc = _scenario(args)
    sc = dataclasses.replace(sc, noise=dataclasses.replace(sc.noise, sigma_n=sigma))
    net, ms = dataio.apply_debias(bundle, args.debias, args.avg_bias,
                                  np.random.SeedSequence([args.seed, 1]))
    methods = _methods(args.method)
    if "oracle_los" in methods:
        raise UsageError("labels required: real-data bundles carry no LOS/NLOS labels")
    label = "surrogate" if (args.surrogate or bundle.surrogate) else "real"
    reports = run_reinit_trials(net, ms, sc, methods, args.seed, args.trials, label)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = _echo(command="dataset", source=source, data=label, debias=args.debias,
                 avg_bias=args.avg_bias if args.avg_bias is not None else bundle.avg_bias,
                 seed=args.seed, trials=args.trials, scenario=sc.to_dict())
    _write_reports(out, reports, echo, args.grid_points)
    for m, r in reports.items():
        ok = [run for run in r.runs if not run.failed]
        if not ok:
            continue
        per = np.mean([run.sensor_errors for run in ok], axis=0)
        rows = [[bundle.ids[i], float(per[i])] for i in range(net.num_sensors)]
        dataio.write_table(out / f"sensor_errors_{m}.csv", ["id", "mean_error_m"], rows, echo)
    print(f"data: {label}  debias: {args.debias}  sensors: {net.num_sensors}  links: {len(ms)}")
    return EXIT_OK


def cmd_check(args) -> int:
    net, ms, ids = dataio.load_network_files(args.nodes, args.measurements)
    rows = dataio._rows(args.estimates, ["id", "x_m", "y_m"])
    est = {row["id"]: (float(row["x_m"]), float(row["y_m"])) for _, row in rows}
    missing = [ids[i] for i in range(net.num_sensors) if ids[i] not in est]
    if missing:
        raise UsageError(f"estimates file lacks sensor(s) {missing}")
    X = np.array([est[ids[i]] for i in range(net.num_sensors)], dtype=float)
    bad = _infeasible(net, ms, X, args.tol)
    worst = max((v for *_, v in bad), default=0.0)
    print(f"links: {len(ms)}  outside measured range: {len(bad)}  worst excess: {worst:.3g} m")
    if net.true_sensor_positions is not None:
        print(f"network error: {network_error(X, net.true_sensor_positions):.6f} m")
    return EXIT_RUNTIME if bad else EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustloc", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="scenario JSON (defaults: 50 sensors, 4 corner anchors, 10 m square)")
        if seed:
            sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("simulate", help="synthesize a network and range measurements")
    common(sp)
    sp.add_argument("--nlos-prob", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve", help="run one method on network + measurement files")
    common(sp)
    sp.add_argument("--nodes", required=True)
    sp.add_argument("--measurements", required=True)
    sp.add_argument("--method", choices=sorted(METHODS), default="two_stage")
    sp.add_argument("--init", choices=["gaussian", "centroid"], default="gaussian")
    sp.add_argument("--init-std", type=float)
    sp.add_argument("--sigma-n", type=float)
    sp.add_argument("--schedule", choices=[s.value for s in Schedule])
    sp.add_argument("--check", action="store_true", help="verify estimates lie inside all measured ranges")
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("eval", help="Monte-Carlo comparison with CDF tables")
    common(sp)
    sp.add_argument("--methods", default="stage1,two_stage,relaxed_nls,raw_huber,pocs,oracle_los")
    sp.add_argument("--mc-runs", type=int)
    sp.add_argument("--nlos-prob", type=float)
    sp.add_argument("--schedule", choices=[s.value for s in Schedule])
    sp.add_argument("--parallel", type=int, default=1)
    sp.add_argument("--grid-points", type=int, default=101)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("dataset", help="real-data protocol with debiasing scenarios")
    common(sp)
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--bundle")
    src.add_argument("--surrogate", action="store_true", help="use the synthetic 44-node stand-in")
    sp.add_argument("--debias", choices=[m.value for m in dataio.DebiasMode], default="raw")
    sp.add_argument("--method", default="two_stage", help="method or comma-separated methods")
    sp.add_argument("--avg-bias", type=float)
    sp.add_argument("--sigma-n", type=float)
    sp.add_argument("--trials", type=int, default=500)
    sp.add_argument("--init-std", type=float)
    sp.add_argument("--schedule", choices=[s.value for s in Schedule])
    sp.add_argument("--grid-points", type=int, default=101)
    sp.set_defaults(func=cmd_dataset)

    sp = sub.add_parser("check", help="feasibility of estimates against measured ranges")
    sp.add_argument("--nodes", required=True)
    sp.add_argument("--measurements", required=True)
    sp.add_argument("--estimates", required=True)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
