"""Command line entry point: ``edgesim {predict,validate,place,simulate,experiment}``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from typing import Sequence

from edgesim import analytic as an
from edgesim import experiments as ex
from edgesim.placement import (
    ApplicationSpec,
    ClusterState,
    commit,
    place,
    place_baseline_knapsack,
    place_grouped,
    place_heterogeneous,
)
from edgesim.profiles import BatchProfile
from edgesim.scenario import Scenario, ScenarioError, load_scenario
from edgesim.sim.engine import simulate
from edgesim.dynamics import cluster_to_scenario

log = logging.getLogger("edgesim")

PREDICT_COLUMNS = ("model", "rho", "lambda_rps", "mean_wait_ms", "mean_response_ms")
PLACE_COLUMNS = ("seq", "app_id", "outcome", "node", "device", "predicted_ms", "reason")
SIM_COLUMNS = ("app_id", "node", "device", "lambda_rps", "tau_ms", "requests", "completions", "drops",
               "mean_response_ms", "p95_response_ms", "windows", "violations", "max_window_mean_ms")
DEFAULT_TRIALS = {"success_rate": 1000, "capacity": 100, "heterogeneous": 100, "aiaas": 20, "migration": 1}


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


# --- predict ----------------------------------------------------------------------

def predict_rows(model: str, mu: float, rhos: Sequence[float] | None = None, lams: Sequence[float] | None = None,
                 c: float = 1.0, cv2: float = 1.0, k1: float = 5.0, k2: float = 20.0) -> list[dict]:
    """Closed-form sweep over utilization or arrival rate (req/s)."""
    if model == "batch":
        bp = BatchProfile(k1, k2)
        rows = []
        for b in (1, 2, 4, 8, 16, 32):
            s = an.batch_service_time(bp, b)
            rows.append({"model": "batch", "batch_size": b, "service_ms": s, "throughput_rps": b * 1000.0 / s})
        return rows
    if mu <= 0:
        raise ValueError("mu must be > 0")
    cap = c * mu if model == "mgc" else mu
    if lams is None:
        lams = [r * cap for r in (rhos if rhos is not None else [i / 10 for i in range(1, 10)])]
    rows = []
    for lam in lams:
        rho = lam / cap
        if model == "md1":
            w = an.md1_fcfs_wait(lam, mu)
            r = w + 1000.0 / mu
        elif model == "mg1":
            w = an.mg1_fcfs_wait(lam, mu, cv2 / mu ** 2)
            r = w + 1000.0 / mu
        elif model == "ps":
            r, w = an.mg1_ps_response(lam, mu)
        elif model == "mgc":
            r = an.mgc_ps_response(lam, mu, c)
            w = r - 1000.0 / mu
        else:
            raise ValueError(f"unknown model {model!r}")
        rows.append({"model": model, "rho": rho, "lambda_rps": lam, "mean_wait_ms": w, "mean_response_ms": r})
    return rows


def cmd_predict(args) -> int:
    rows = predict_rows(args.model, args.mu, _floats(args.rho) if args.rho else None,
                        _floats(args.lam) if args.lam else None, args.c, args.cv2, args.k1, args.k2)
    cols = ("model", "batch_size", "service_ms", "throughput_rps") if args.model == "batch" else PREDICT_COLUMNS
    _emit(ex.rows_to_csv(rows, cols), args.out)
    return 0


# --- validate ---------------------------------------------------------------------

def cmd_validate(args) -> int:
    if args.scenario:
        sc = load_scenario(args.scenario)
        cases, rhos, arrivals = sc.validate_cases, sc.validate_rhos, sc.validate_arrivals
        seed = args.seed if args.seed is not None else sc.seed
    else:
        cases, rhos, arrivals = ex.STANDARD_CASES + ex.GPU_CASES, (0.3, 0.5, 0.7, 0.9), 200_000
        seed = args.seed if args.seed is not None else 0
    if not cases:
        raise ScenarioError("validate: the scenario lists no cases")
    if args.arrivals:
        arrivals = args.arrivals
    rows = []
    for case in cases:
        rows += ex.validate_case(case, rhos, seed, arrivals)
    _emit(ex.rows_to_csv(rows, ex.VALIDATE_COLUMNS), args.out)
    bad = [r for r in rows if not r["rel_err"] <= args.tolerance]
    for r in bad:
        log.error("%s rho=%s %s: rel_err %.4f exceeds %.4f", r["case"], r["rho"], r["app_id"], r["rel_err"],
                  args.tolerance)
    return 1 if bad else 0


# --- place / simulate -------------------------------------------------------------

def placer_for(sc: Scenario):
    pol = sc.policy
    return {
        "aware": lambda a, c: place(a, c, pol),
        "grouped": lambda a, c: place_grouped(a, c, pol),
        "heterogeneous": lambda a, c: place_heterogeneous(a, c, pol),
        "baseline": lambda a, c: place_baseline_knapsack(a, c, pol),
    }[sc.placement]


def place_trace(sc: Scenario, apps: Sequence[ApplicationSpec]) -> tuple[ClusterState, list[dict]]:
    cluster = sc.cluster.build(sc.profiles)
    placer = placer_for(sc)
    rows = []
    for i, a in enumerate(apps):
        d = placer(a, cluster)
        if d.placed:
            commit(cluster, a, d)
        rows.append({"seq": i, "app_id": a.app_id, "outcome": d.outcome, "node": d.node_id or "",
                     "device": d.device_id or "", "predicted_ms": d.predicted_ms if d.placed else math.nan,
                     "reason": d.reason or ""})
    return cluster, rows


def _checked(sc: Scenario) -> list[ApplicationSpec]:
    problems = sc.validate()
    if problems:
        raise ScenarioError("; ".join(problems))
    return sc.apps()


def _scenario_with_seed(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
        if sc.trace_spec is not None:
            sc.trace_spec = replace(sc.trace_spec, seed=args.seed)
    return sc


def cmd_place(args) -> int:
    sc = _scenario_with_seed(args)
    _, rows = place_trace(sc, _checked(sc))
    _emit(ex.rows_to_csv(rows, PLACE_COLUMNS), args.out)
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario_with_seed(args)
    apps = _checked(sc)
    cluster, _ = place_trace(sc, apps)
    placed = cluster.placed_apps()
    rows = []
    if placed:
        bridge = replace(sc.bridge, load_factor=sc.sim.load_factor)
        rep = simulate(cluster_to_scenario(cluster, bridge), sc.seed, sc.sim.horizon, sc.sim.warmup)
        for a in sorted(placed, key=lambda a: a.app_id):
            node, dev, _ = cluster.locate(a.app_id)
            s = rep.apps[a.app_id]
            rows.append({"app_id": a.app_id, "node": node.node_id, "device": dev.device_id, "lambda_rps": a.lam,
                         "tau_ms": a.tau_ms, "requests": s.requests, "completions": s.completions,
                         "drops": s.drops, "mean_response_ms": s.mean_response_ms,
                         "p95_response_ms": s.p95_response_ms, "windows": s.windows,
                         "violations": s.violations, "max_window_mean_ms": s.max_window_mean_ms})
    _emit(ex.rows_to_csv(rows, SIM_COLUMNS), args.out)
    return 0


# --- experiment -------------------------------------------------------------------

def _study(name: str, sc: Scenario | None, seed: int | None) -> ex.PlacementStudy:
    study = {"heterogeneous": ex.HETERO_STUDY, "aiaas": ex.AIAAS_STUDY}.get(name, ex.PlacementStudy())
    if sc is not None:
        trace = sc.trace_spec if sc.trace_spec is not None else study.trace
        study = replace(study, cluster=sc.cluster, trace=replace(trace, n_apps=0), policy=sc.policy,
                        base_seed=sc.experiment.get("base_seed", study.base_seed))
    if seed is not None:
        study = replace(study, base_seed=seed)
    return study


def _combined(per_trial: list[dict], agg: list[dict], detail: str = "trial") -> str:
    rows = [{"row": detail, **r} for r in per_trial] + [{"row": "aggregate", **r} for r in agg]
    cols = ["row"]
    for r in rows:
        cols += [k for k in r if k not in cols]
    return ex.rows_to_csv(rows, cols)


def run_experiment(name: str, sc: Scenario | None = None, trials: int | None = None,
                   seed: int | None = None) -> str:
    """Run a named experiment and return its CSV (per-trial rows, then aggregate rows)."""
    if name not in ex.EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; expected one of {ex.EXPERIMENTS}")
    knobs = sc.experiment if sc is not None else {}
    if trials is None:
        trials = int(knobs.get("trials", DEFAULT_TRIALS[name]))
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sc is not None:
        ex.set_profiles(sc.profiles)
    if name == "migration":
        setup = ex.MigrationSetup()
        if sc is not None:
            setup = replace(setup, dynamics=sc.dynamics, seed=sc.seed)
        if seed is not None:
            setup = replace(setup, seed=seed)
        per, agg = [], []
        for t in range(trials):
            s = replace(setup, seed=ex.trial_seed(setup.seed, t))
            tl, summ = ex.migration(s)
            per += [{"trial": t, **r} for r in tl]
            agg += [{"trial": t, **r} for r in summ]
        return _combined(per, agg, "timeline")
    study = _study(name, sc, seed)
    if name == "success_rate":
        levels = tuple(knobs.get("levels", range(10, 71, 10)))
        per, agg = ex.success_rate(study, levels, trials)
    elif name == "capacity":
        levels = tuple(knobs.get("levels", (60,)))
        sim = sc.sim if sc is not None else ex.SimSettings()
        per, agg = ex.capacity(study, levels, trials, sim)
    elif name == "heterogeneous":
        per, agg = ex.heterogeneous(study, int(knobs.get("n_apps", 30)), trials)
    else:
        per, agg = ex.aiaas(study, int(knobs.get("n_apps", 100)), trials)
    return _combined(per, agg)


def cmd_experiment(args) -> int:
    sc = load_scenario(args.scenario) if args.scenario else None
    _emit(run_experiment(args.name, sc, args.trials, args.seed), args.out)
    return 0


# --- wiring -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgesim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required: bool):
        sp.add_argument("--scenario", required=scenario_required, help="YAML scenario file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="CSV path (default: stdout)")

    sp = sub.add_parser("predict", help="closed-form mean wait/response over a rho or lambda sweep")
    sp.add_argument("--model", required=True, choices=("md1", "mg1", "ps", "mgc", "batch"))
    sp.add_argument("--mu", type=float, default=100.0, help="service rate per server, req/s")
    sp.add_argument("--c", type=float, default=1.0, help="parallelism for mgc")
    sp.add_argument("--cv2", type=float, default=1.0, help="squared coefficient of variation of service, mg1")
    sp.add_argument("--rho", default=None, help="comma-separated utilizations")
    sp.add_argument("--lam", default=None, help="comma-separated arrival rates, req/s")
    sp.add_argument("--k1", type=float, default=5.0, help="batch: per-request ms")
    sp.add_argument("--k2", type=float, default=20.0, help="batch: per-batch ms")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("validate", help="simulate against the closed forms; nonzero exit on disagreement")
    common(sp, False)
    sp.add_argument("--tolerance", type=float, default=0.05)
    sp.add_argument("--arrivals", type=int, default=None, help="measured arrivals per sweep point")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("place", help="place a trace and emit one decision per app")
    common(sp, True)
    sp.set_defaults(func=cmd_place)

    sp = sub.add_parser("simulate", help="place a trace, then simulate the placed cluster")
    common(sp, True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("experiment", help="run a seeded multi-trial experiment")
    sp.add_argument("name", choices=ex.EXPERIMENTS)
    common(sp, False)
    sp.add_argument("--trials", type=int, default=None)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
