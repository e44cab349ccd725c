"""Command-line front end: ``rendezvous-cmdp <command> [options]``.

Exit codes: 0 ok, 2 invalid input, 3 infeasible, 4 file I/O.
Every output file carries the tool version, mission hash and seed, and
is written atomically; repeated runs with the same inputs produce the
same bytes whatever ``--jobs`` is.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
import time

from . import __version__
from .cmdp import InfeasibleMission, build_cmdp, export_model
from .fileio import atomic_write
from .lp import Infeasible, build_lp, extract_policy, load_policy, save_policy, solve_cmdp, write_lp_file
from .mission import MissionError, benchmark_mission, parse_mission
from .sim import Simulator, evaluate, greedy_compare, pareto_sweep, rows_to_csv

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

DEFAULT_TRIALS = 2000


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _provenance(mission, seed, **extra):
    out = {"tool_version": __version__, "mission_hash": mission.digest(), "seed": seed}
    out.update(extra)
    return out


def _header(prov):
    return "\n".join(f"{k}={v}" for k, v in prov.items())


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def _load(args):
    mission = parse_mission(args.mission)
    if getattr(args, "delta", None) is not None:
        mission = mission.with_(delta=args.delta).validate()
    return mission


def cmd_plan(args):
    mission = _load(args)
    t0 = time.perf_counter()
    model = build_cmdp(mission, args.jobs)
    t_build = time.perf_counter() - t0
    sol = solve_cmdp(model, mission.delta)
    policy = extract_policy(sol, model, args.seed)
    save_policy(args.out, policy, model, mission.digest())
    summary = {
        "states": model.n_states, "state_action_pairs": model.n_pairs,
        "delta": mission.delta, "lp_objective_s": sol.objective, "risk": sol.risk,
        "pivots": sol.iterations, "randomized_states": int(policy.randomized_states(model).size),
        "build_seconds": round(t_build, 3), "solve_seconds": round(sol.solve_seconds, 3),
    }
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_simulate(args):
    mission = _load(args)
    model = build_cmdp(mission, args.jobs)
    policy = load_policy(args.policy, model)
    rep = evaluate(Simulator(mission, policy, model, lookup=args.lookup), args.trials, args.seed, args.jobs)
    doc = _provenance(mission, args.seed, trials=args.trials, lookup=args.lookup)
    doc["report"] = rep.to_json_dict()
    doc["binning_gap"] = rep.binning_gap
    text = json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n"
    atomic_write(args.out, text)
    print(f"failure rate {rep.failure_rate:.4f} (model risk {rep.model_risk:.4f}), "
          f"mean time {rep.mean_time:.1f} s over {rep.trials - rep.failures} successful trials")
    return EXIT_OK


def cmd_pareto(args):
    mission = _load_plain(args)
    deltas = args.delta or [0.01, 0.05, 0.1, 0.2, 0.5]
    rows = pareto_sweep(mission, deltas, args.trials, args.seed, jobs=args.jobs)
    prov = _provenance(mission, args.seed, trials=args.trials)
    atomic_write(args.out, rows_to_csv(rows, _header(prov)))
    print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


def cmd_baseline(args):
    mission = _load(args)
    rows = greedy_compare(mission, args.thresholds, args.trials, args.seed, jobs=args.jobs)
    prov = _provenance(mission, args.seed, trials=args.trials, delta=mission.delta)
    atomic_write(args.out, rows_to_csv(rows, _header(prov), label_column=True))
    print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


def cmd_export_lp(args):
    mission = _load(args)
    model = build_cmdp(mission, args.jobs)
    lp = build_lp(model, mission.delta)
    names = [f"y_{model.states[model.sa_state[p]].label()}_{int(model.sa_action[p])}"
             .replace(",", "_").replace("-", "m") for p in lp.var_index]
    buf = io.StringIO()
    buf.write(f"\\ {_header(_provenance(mission, args.seed))}".replace("\n", "\n\\ ") + "\n")
    write_lp_file(lp, buf, names)
    atomic_write(args.out, buf.getvalue())
    if args.model_dump:
        buf = io.StringIO()
        export_model(model, buf)
        atomic_write(args.model_dump, buf.getvalue())
    print(f"LP with {lp.n_vars} variables and {lp.A_eq.shape[0] + lp.A_ub.shape[0]} rows written to {args.out}")
    return EXIT_OK


def cmd_gen_benchmark(args):
    mission = benchmark_mission(n_uav_nodes=args.nodes, seed=args.seed, bins=args.bins,
                                delta=args.delta if args.delta is not None else 0.1)
    atomic_write(args.out, f"# generated by rendezvous-cmdp {__version__} (seed {args.seed})\n" + mission.to_toml())
    print(f"benchmark mission written to {args.out} (hash {mission.digest()})")
    return EXIT_OK


def _load_plain(args):
    # pareto takes a list of deltas, so the mission's own bound is left alone
    return parse_mission(args.mission)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rendezvous-cmdp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mission=True, delta=True, trials=False):
        if mission:
            sp.add_argument("--mission", required=True, help="mission TOML file")
        if delta:
            sp.add_argument("--delta", type=float, help="override the mission's risk bound")
        if trials:
            sp.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="Monte-Carlo trials")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes/threads")
        sp.add_argument("--out", required=True, help="output file")

    sp = sub.add_parser("plan", help="build the CMDP, solve the LP and write a policy file")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("simulate", help="Monte-Carlo evaluation of a policy file")
    common(sp, trials=True)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--lookup", choices=["tracked", "gauge"], default="tracked",
                    help="how the controller maps its charge to a model state")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("pareto", help="risk bound sweep to CSV")
    common(sp, delta=False, trials=True)
    sp.add_argument("--delta", type=_floats, help="comma-separated risk bounds")
    sp.set_defaults(func=cmd_pareto)

    sp = sub.add_parser("baseline", help="greedy baselines next to the CMDP policy, to CSV")
    common(sp, trials=True)
    sp.add_argument("--thresholds", type=_floats, default=[40.0, 50.0, 60.0, 70.0])
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("export-lp", help="write the occupancy LP in CPLEX LP format")
    common(sp)
    sp.add_argument("--model-dump", help="also write the CMDP as a plain-text transition list")
    sp.set_defaults(func=cmd_export_lp)

    sp = sub.add_parser("gen-benchmark", help="write the synthetic benchmark mission")
    common(sp, mission=False)
    sp.add_argument("--nodes", type=int, default=12)
    sp.add_argument("--bins", type=int, default=101)
    sp.set_defaults(func=cmd_gen_benchmark, seed=7)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("trials", "jobs"):
        if getattr(args, name, 1) < 1:
            parser.error(f"--{name} must be >= 1")
    try:
        return args.func(args)
    except (MissionError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InfeasibleMission as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
