"""Seeded experiments: model validation sweeps, placement studies and migration.

Every experiment returns rows (dicts) in a fixed order; ``rows_to_csv``
turns them into byte-stable CSV.
"""
from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from edgesim import analytic as an
from edgesim.dynamics import BridgeConfig, DynamicsConfig, MigrationController, cluster_to_scenario
from edgesim.placement import (
    AppKind,
    ApplicationSpec,
    ClusterState,
    DeviceState,
    Heuristic,
    NodeState,
    Policy,
    commit,
    current_predictions,
    place,
    place_baseline_knapsack,
    place_grouped,
    place_heterogeneous,
)
from edgesim.profiles import (
    GTX_1080_MPS,
    JETSON_NANO,
    USB_EDGE_TPU,
    AcceleratorModel,
    DeviceKind,
)
from edgesim.sim.engine import SimApp, SimScenario, Simulation, simulate
from edgesim.sim.stations import FcfsNonPreemptive, MultiServerPs, TimeShared
from edgesim.workload import ArrivalSpec, TraceSpec, gen_app_trace

EXPERIMENTS = ("capacity", "success_rate", "heterogeneous", "aiaas", "migration")


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "unstable"
        return repr(round(v, 6))
    return str(v)


# --- clusters ------------------------------------------------------------------

@dataclass(frozen=True)
class NodeConfig:
    devices: tuple[AcceleratorModel, ...]
    cpu_cores: float
    mem_mib: float


@dataclass(frozen=True)
class ClusterConfig:
    nodes: tuple[NodeConfig, ...]

    def build(self, profiles) -> ClusterState:
        nodes = []
        for i, nc in enumerate(self.nodes):
            devs = [DeviceState(f"d{j}", m) for j, m in enumerate(nc.devices)]
            nodes.append(NodeState(f"n{i:02d}", nc.cpu_cores, nc.mem_mib, devs))
        return ClusterState(nodes, profiles)

    @property
    def kinds(self) -> set[DeviceKind]:
        return {m.kind for n in self.nodes for m in n.devices}


def homogeneous(n: int, model: AcceleratorModel, cpu_cores: float, mem_mib: float) -> ClusterConfig:
    return ClusterConfig(tuple(NodeConfig((model,), cpu_cores, mem_mib) for _ in range(n)))


# Discrete-GPU servers: one GTX-1080 (MPS) each, 8 cores, 16 GiB host RAM.
MPS_CLUSTER = homogeneous(10, GTX_1080_MPS, 8.0, 16384.0)
# Jetson Nano boards: GPU and CPU share 4 GiB.
NANO_CLUSTER = homogeneous(10, JETSON_NANO, 4.0, 4096.0)
# Half Nano GPU boards, half Nano-class hosts with a USB edgeTPU.
MIXED_CLUSTER = ClusterConfig(
    tuple(NodeConfig((JETSON_NANO,), 4.0, 4096.0) for _ in range(5))
    + tuple(NodeConfig((USB_EDGE_TPU,), 4.0, 4096.0) for _ in range(5))
)


def trial_seed(base: int, trial: int) -> int:
    return base + trial


# --- validation sweeps -----------------------------------------------------------

DISCIPLINES = ("md1", "mg1", "ps", "mgc", "tpu", "gpu", "gpu_sequential", "gpu_synchronized")


@dataclass(frozen=True)
class ValidationCase:
    """One analytic model and the simulated queue it describes.

    ``weights`` split the aggregate rate across apps; the aggregate is chosen
    so the device utilization hits each target rho.
    """

    name: str
    discipline: str
    exec_ms: tuple[float, ...]
    switch_ms: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    c: float = 1.0
    service: str = "deterministic"
    quantum_ms: float = 1.0

    def __post_init__(self):
        if self.discipline not in DISCIPLINES:
            raise ValueError(f"unknown discipline {self.discipline!r}")
        if not self.exec_ms:
            raise ValueError(f"{self.name}: no apps")
        for seq in (self.switch_ms, self.weights):
            if seq and len(seq) != len(self.exec_ms):
                raise ValueError(f"{self.name}: per-app lists differ in length")

    @property
    def app_ids(self) -> list[str]:
        return [f"a{i}" for i in range(len(self.exec_ms))]

    def _weights(self) -> list[float]:
        w = list(self.weights) or [1.0] * len(self.exec_ms)
        s = sum(w)
        return [x / s for x in w]

    def _switch(self) -> list[float]:
        return list(self.switch_ms) or [0.0] * len(self.exec_ms)

    def mix_at(self, total_lambda: float) -> an.WorkloadMix:
        return an.WorkloadMix.of(
            an.ClassLoad(k, total_lambda * w, e, o)
            for k, w, e, o in zip(self.app_ids, self._weights(), self.exec_ms, self._switch())
        )

    def lambda_for(self, rho: float) -> float:
        # mean service does not depend on the aggregate rate, only on the split
        s_ms = self.mix_at(1.0).mean_service_ms
        return rho * self.c * 1000.0 / s_ms

    def predict(self, rho: float) -> dict[str, tuple[float, float, float, float]]:
        """Per app: (predicted response, low, high, predicted wait), all ms."""
        lam = self.lambda_for(rho)
        mix = self.mix_at(lam)
        d = self.discipline
        out = {}
        if d == "mg1":
            # exponential service: variance is the squared mean
            mu = mix.service_rate
            w = an.mg1_fcfs_wait(lam, mu, (1.0 / mu) ** 2)
            for k, s in mix.class_service_ms.items():
                out[k] = (w + s, w + s, w + s, w)
            return out
        if d in ("md1", "tpu", "gpu_sequential"):
            p = an.fcfs_prediction(mix)
            return {k: (p[k], p[k], p[k], p.mean_wait_ms) for k in self.app_ids}
        if d in ("ps", "gpu_synchronized"):
            p = an.ps_prediction(mix)
            return {k: (p[k], p[k], p[k], p.mean_wait_ms) for k in self.app_ids}
        if d == "mgc":
            p = an.mps_response(mix, self.c)
            return {k: (p[k], p[k], p[k], p.mean_wait_ms) for k in self.app_ids}
        fcfs, ps = an.gpu_response_bounds(mix)
        for k in self.app_ids:
            lo, hi = sorted((fcfs[k], ps[k]))
            out[k] = (max(fcfs[k], ps[k]), lo, hi, math.nan)
        return out

    def scenario(self, rho: float) -> SimScenario:
        lam = self.lambda_for(rho)
        d = self.discipline
        if d in ("md1", "mg1", "tpu"):
            disc = FcfsNonPreemptive()
        elif d in ("ps", "mgc"):
            disc = MultiServerPs(self.c)
        else:
            ctx = {"gpu": "app", "gpu_sequential": "shared", "gpu_synchronized": "request"}[d]
            disc = TimeShared(quantum_ms=self.quantum_ms, context=ctx)
        service = "exponential" if d == "mg1" else self.service
        apps = [
            SimApp(k, lam * w, "dev", e, switch_ms=o, service=service)
            for k, w, e, o in zip(self.app_ids, self._weights(), self.exec_ms, self._switch())
        ]
        return SimScenario(apps, {"dev": disc})


STANDARD_CASES = (
    ValidationCase("md1", "md1", (10.0,)),
    ValidationCase("mg1_exp", "mg1", (10.0,)),
    ValidationCase("ps_exp", "ps", (10.0,), service="exponential"),
    ValidationCase("mgc2_exp", "mgc", (10.0,), c=2.0, service="exponential"),
    ValidationCase("tpu_switch", "tpu", (10.0, 15.0, 25.0), switch_ms=(17.0, 17.0, 17.0), weights=(3.0, 2.0, 1.0)),
)
GPU_CASES = (
    ValidationCase("gpu2", "gpu", (26.03, 41.32)),
    ValidationCase("gpu3", "gpu", (13.02, 29.2, 41.32), weights=(2.0, 1.0, 1.0)),
)


def validate_case(case: ValidationCase, rhos: Iterable[float], seed: int, arrivals: int,
                  warmup_frac: float = 0.05) -> list[dict]:
    """Simulate ``case`` at each rho long enough for ~``arrivals`` measured requests."""
    rows = []
    for i, rho in enumerate(rhos):
        lam = case.lambda_for(rho)
        measured = arrivals / lam
        warmup = warmup_frac * measured
        rep = simulate(case.scenario(rho), seed + i, warmup + measured, warmup)
        pred = case.predict(rho)
        for k in case.app_ids:
            p, lo, hi, pw = pred[k]
            st = rep.apps[k]
            sim_r = st.mean_response_ms
            if case.discipline == "gpu":
                if sim_r < lo:
                    err = (lo - sim_r) / lo
                elif sim_r > hi:
                    err = (sim_r - hi) / hi
                else:
                    err = 0.0
            else:
                err = abs(sim_r - p) / p
            rows.append({
                "case": case.name,
                "discipline": case.discipline,
                "rho": rho,
                "app_id": k,
                "predicted_ms": p,
                "low_ms": lo,
                "high_ms": hi,
                "simulated_ms": sim_r,
                "rel_err": err,
                "predicted_wait_ms": pw,
                "simulated_wait_ms": st.mean_wait_ms,
                "wait_rel_err": abs(st.mean_wait_ms - pw) / pw if pw and math.isfinite(pw) else math.nan,
                "completions": st.completions,
            })
    return rows


VALIDATE_COLUMNS = ("case", "discipline", "rho", "app_id", "predicted_ms", "low_ms", "high_ms", "simulated_ms",
                    "rel_err", "predicted_wait_ms", "simulated_wait_ms", "wait_rel_err", "completions")


# --- placement studies -------------------------------------------------------------

@dataclass(frozen=True)
class PlacementStudy:
    """Shared knobs of the trace-driven placement experiments."""

    cluster: ClusterConfig = MPS_CLUSTER
    trace: TraceSpec = field(default_factory=lambda: TraceSpec(0, reference_device=DeviceKind.DISCRETE_GPU_MPS))
    policy: Policy = Policy(heuristic=Heuristic.HIGHEST_UTIL)
    base_seed: int = 0

    def apps(self, n: int, trial: int) -> list[ApplicationSpec]:
        return gen_app_trace(replace(self.trace, n_apps=n, seed=trial_seed(self.base_seed, trial)), _profiles())


_PROFILES: dict | None = None


def _profiles():
    global _PROFILES
    if _PROFILES is None:
        from edgesim.profiles import bundled_profiles

        _PROFILES = bundled_profiles()
    return _PROFILES


def set_profiles(profiles) -> None:
    """Use a specific profile table for subsequent experiments."""
    global _PROFILES
    _PROFILES = dict(profiles)


Placer = Callable[[ApplicationSpec, ClusterState], "object"]


def _run_placement(apps: Sequence[ApplicationSpec], cluster: ClusterState, placer: Placer,
                   check_violations: bool = False) -> tuple[list[bool], list[bool]]:
    """Place apps in order; per prefix length, report (all placed so far, no predicted violations so far)."""
    all_placed, clean = [], []
    ok_place = ok_clean = True
    for a in apps:
        d = placer(a, cluster)
        if d.placed:
            commit(cluster, a, d)
        else:
            ok_place = False
        if check_violations and ok_clean:
            dev_apps = _device_peers(cluster, a.app_id) if d.placed else []
            if dev_apps and _any_violation(cluster, dev_apps):
                ok_clean = False
        all_placed.append(ok_place)
        clean.append(ok_clean)
    return all_placed, clean


def _device_peers(cluster: ClusterState, app_id: str) -> list[ApplicationSpec]:
    _, dev, _ = cluster.locate(app_id)
    return [a for _, a in dev.apps()]


def _any_violation(cluster: ClusterState, peers: Sequence[ApplicationSpec]) -> bool:
    pred = current_predictions(cluster)
    return any(not pred[a.app_id] <= a.tau_ms for a in peers)


def _aware(policy: Policy) -> Placer:
    return lambda a, c: place(a, c, policy)


def _baseline(policy: Policy) -> Placer:
    return lambda a, c: place_baseline_knapsack(a, c, policy)


def success_rate(study: PlacementStudy = PlacementStudy(), levels: Sequence[int] = tuple(range(10, 71, 10)),
                 trials: int = 1000, heuristics: Sequence[Heuristic] | None = None) -> tuple[list[dict], list[dict]]:
    """Fraction of traces placed in full without (predicted) violations, per load level.

    Traces are prefixes of one long trace per trial, so each trial is placed
    once and every level is read off the prefix.
    """
    heuristics = list(heuristics) if heuristics is not None else [study.policy.heuristic]
    n_max = max(levels) if levels else 0
    per_trial, agg = [], []
    for h in heuristics:
        pol = replace(study.policy, heuristic=h)
        succ = {("latency_aware", n): 0 for n in levels} | {("baseline", n): 0 for n in levels}
        for t in range(trials):
            apps = study.apps(n_max, t)
            la_placed, _ = _run_placement(apps, study.cluster.build(_profiles()), _aware(pol))
            bl_placed, bl_clean = _run_placement(apps, study.cluster.build(_profiles()), _baseline(pol), True)
            for n in levels:
                la = n == 0 or la_placed[n - 1]
                bl = n == 0 or (bl_placed[n - 1] and bl_clean[n - 1])
                succ[("latency_aware", n)] += la
                succ[("baseline", n)] += bl
                per_trial.append({"heuristic": h.value, "trial": t, "seed": trial_seed(study.base_seed, t),
                                  "n_apps": n, "latency_aware": la, "baseline": bl})
        caps = {}
        for pname in ("latency_aware", "baseline"):
            cap = 0
            for n in sorted(levels):
                frac = succ[(pname, n)] / trials if trials else math.nan
                agg.append({"heuristic": h.value, "policy": pname, "n_apps": n, "success_fraction": frac,
                            "capacity_90": "", "capacity_ratio": ""})
                if frac >= 0.9:
                    cap = n
            caps[pname] = cap
        ratio = caps["latency_aware"] / caps["baseline"] if caps["baseline"] else math.inf
        for pname in ("latency_aware", "baseline"):
            agg.append({"heuristic": h.value, "policy": pname, "n_apps": "", "success_fraction": "",
                        "capacity_90": caps[pname], "capacity_ratio": ratio})
    return per_trial, agg


@dataclass(frozen=True)
class SimSettings:
    horizon: float = 70.0
    warmup: float = 10.0
    load_factor: float = 1.0


def simulate_cluster(cluster: ClusterState, seed: int, sim: SimSettings = SimSettings(),
                     bridge: BridgeConfig = BridgeConfig()) -> dict:
    """Simulate a placed cluster at the declared rates; summarize window violations."""
    apps = cluster.placed_apps()
    if not apps:
        return {"violating_apps": 0, "violation_windows": 0, "windows": 0, "worst_ratio": math.nan}
    bridge = replace(bridge, load_factor=sim.load_factor)
    rep = simulate(cluster_to_scenario(cluster, bridge), seed, sim.horizon, sim.warmup)
    taus = {a.app_id: a.tau_ms for a in apps}
    viol_apps = sum(1 for s in rep.apps.values() if s.violations > 0)
    worst = max(s.max_window_mean_ms / taus[k] for k, s in rep.apps.items() if s.windows)
    return {
        "violating_apps": viol_apps,
        "violation_windows": sum(s.violations for s in rep.apps.values()),
        "windows": sum(s.windows for s in rep.apps.values()),
        "worst_ratio": worst,
    }


def capacity(study: PlacementStudy = PlacementStudy(), levels: Sequence[int] = (60,), trials: int = 100,
             sim: SimSettings = SimSettings()) -> tuple[list[dict], list[dict]]:
    """Place each trace with both policies, then simulate every placed configuration."""
    per_trial, agg = [], []
    for n in levels:
        stats = {p: {"placed": 0, "violated": 0, "viol_apps": 0} for p in ("latency_aware", "baseline")}
        for t in range(trials):
            seed = trial_seed(study.base_seed, t)
            apps = study.apps(n, t)
            for pname, placer in (("latency_aware", _aware(study.policy)), ("baseline", _baseline(study.policy))):
                cl = study.cluster.build(_profiles())
                placed, _ = _run_placement(apps, cl, placer)
                n_placed = len(cl.placed_apps())
                pred = current_predictions(cl)
                pred_viol = sum(1 for a in cl.placed_apps() if not pred[a.app_id] <= a.tau_ms)
                res = simulate_cluster(cl, seed, sim)
                per_trial.append({"n_apps": n, "trial": t, "seed": seed, "policy": pname, "placed": n_placed,
                                  "predicted_violations": pred_viol, **res})
                s = stats[pname]
                s["placed"] += n_placed
                s["violated"] += res["violating_apps"] > 0
                s["viol_apps"] += res["violating_apps"]
        for pname, s in stats.items():
            agg.append({"n_apps": n, "policy": pname, "trials": trials,
                        "mean_placed": s["placed"] / trials if trials else math.nan,
                        "traces_with_violations": s["violated"],
                        "violation_fraction": s["violated"] / trials if trials else math.nan,
                        "mean_violating_apps": s["viol_apps"] / trials if trials else math.nan})
    return per_trial, agg


def _coin_flip_placer(policy: Policy, seed: int, kinds: Sequence[DeviceKind]) -> Placer:
    def placer(a: ApplicationSpec, cluster: ClusterState):
        rng = np.random.default_rng([seed, zlib.crc32(a.app_id.encode()), zlib.crc32(b"kind")])
        kind = kinds[int(rng.integers(len(kinds)))]
        return place(a, cluster, policy, kinds=[kind])

    return placer


HETERO_STUDY = PlacementStudy(
    cluster=MIXED_CLUSTER,
    trace=TraceSpec(0, reference_device=DeviceKind.EDGE_GPU, aias_fraction=0.0),
    policy=Policy(),
)


def heterogeneous(study: PlacementStudy = HETERO_STUDY, n_apps: int = 30, trials: int = 100) -> tuple[list[dict], list[dict]]:
    """Heterogeneity-aware placement against a per-app coin flip of device kind."""
    kinds = sorted(study.cluster.kinds, key=lambda k: list(DeviceKind).index(k))
    per_trial = []
    wins = 0
    gains = []
    for t in range(trials):
        seed = trial_seed(study.base_seed, t)
        apps = study.apps(n_apps, t)
        cl_h = study.cluster.build(_profiles())
        _run_placement(apps, cl_h, lambda a, c: place_heterogeneous(a, c, study.policy))
        cl_r = study.cluster.build(_profiles())
        _run_placement(apps, cl_r, _coin_flip_placer(study.policy, seed, kinds))
        h, r = len(cl_h.placed_apps()), len(cl_r.placed_apps())
        wins += h > r
        gain = (h - r) / r if r else math.inf
        gains.append(gain)
        per_trial.append({"trial": t, "seed": seed, "n_apps": n_apps, "heterogeneous_placed": h,
                          "random_kind_placed": r, "gain": gain})
    agg = [{"n_apps": n_apps, "trials": trials, "strictly_more_fraction": wins / trials if trials else math.nan,
            "mean_gain": float(np.mean(gains)) if gains else math.nan}]
    return per_trial, agg


AIAAS_STUDY = PlacementStudy(
    cluster=NANO_CLUSTER,
    trace=TraceSpec(0, reference_device=DeviceKind.EDGE_GPU, aias_fraction=1.0, rate_range=(0.5, 2.0),
                    cpu_cores=0.5),
    policy=Policy(),
)


def aiaas(study: PlacementStudy = AIAAS_STUDY, n_apps: int = 100, trials: int = 20) -> tuple[list[dict], list[dict]]:
    """Grouped AIaaS placement against placing every app as its own user-trained backend."""
    per_trial, ratios = [], []
    for t in range(trials):
        apps = study.apps(n_apps, t)
        cl_g = study.cluster.build(_profiles())
        _run_placement(apps, cl_g, lambda a, c: place_grouped(a, c, study.policy))
        solo = [replace(a, kind=AppKind.USER_TRAINED) for a in apps]
        cl_u = study.cluster.build(_profiles())
        _run_placement(solo, cl_u, _aware(study.policy))
        g, u = len(cl_g.placed_apps()), len(cl_u.placed_apps())
        backends = sum(len(d.backends) for n in cl_g.nodes for d in n.devices)
        ratio = g / u if u else math.inf
        ratios.append(ratio)
        per_trial.append({"trial": t, "seed": trial_seed(study.base_seed, t), "n_apps": n_apps, "grouped_placed": g,
                          "user_trained_placed": u, "grouped_backends": backends, "ratio": ratio})
    agg = [{"n_apps": n_apps, "trials": trials, "mean_ratio": float(np.mean(ratios)) if ratios else math.nan,
            "min_ratio": float(np.min(ratios)) if ratios else math.nan}]
    return per_trial, agg


# --- migration -----------------------------------------------------------------------

@dataclass(frozen=True)
class MigrationSetup:
    """Two tenants share one accelerator; one of them later exceeds its declared rate."""

    seed: int = 1
    horizon: float = 200.0
    warmup: float = 0.0
    step_at: float = 60.0
    step_factor: float = 2.5
    load_factor: float = 0.8
    burst_s: float = 5.0
    n_nodes: int = 3
    device: AcceleratorModel = JETSON_NANO
    hot: ApplicationSpec = ApplicationSpec("effnet", "EfficientNet-b0", 2.0, 150.0)
    calm: ApplicationSpec = ApplicationSpec("mobilenet", "MobileNetV2", 15.0, 80.0)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)


def _migration_run(setup: MigrationSetup, spike: bool):
    cluster = homogeneous(setup.n_nodes, setup.device, 4.0, 4096.0).build(_profiles())
    for a in (setup.hot, setup.calm):
        d = place(a, cluster, replace(setup.dynamics.policy, heuristic=Heuristic.HIGHEST_UTIL))
        if not d.placed or d.node_id != "n00":
            raise RuntimeError(f"migration setup could not co-locate {a.app_id}: {d}")
        commit(cluster, a, d)
    bridge = BridgeConfig(police=True, burst_s=setup.burst_s, load_factor=setup.load_factor)
    arrivals = {setup.hot.app_id: ArrivalSpec(step_at=setup.step_at, step_factor=setup.step_factor)} if spike else {}
    scen = cluster_to_scenario(cluster, bridge, arrivals, all_devices=True)
    sim = Simulation(scen, setup.seed, setup.horizon, setup.warmup)
    ctl = MigrationController(sim, cluster, setup.dynamics, bridge)
    if spike:
        sim.at(setup.step_at, lambda now, _: ctl.log(now, setup.hot.app_id, "spike"))
    rep = sim.run()
    return rep, ctl


def _mean_response_between(rep, app_id: str, t0: float, t1: float) -> float:
    t_done, resp = rep.samples[app_id]
    # samples are keyed by completion; recover arrival times
    arrivals = t_done - resp / 1000.0
    sel = (arrivals >= t0) & (arrivals < t1)
    return float(resp[sel].mean()) if sel.any() else math.nan


def migration(setup: MigrationSetup = MigrationSetup()) -> tuple[list[dict], list[dict]]:
    """Timeline of the step-load run plus a summary against a paired no-spike run."""
    rep, ctl = _migration_run(setup, spike=True)
    base, base_ctl = _migration_run(setup, spike=False)
    hot = setup.hot.app_id
    events = sorted(ctl.timeline, key=lambda r: r[0])
    after = [e for e in events if e[0] >= setup.step_at and e[1] == hot]
    t_flag = next((e[0] for e in after if e[2] == "flag"), math.nan)
    t_start = next((e[0] for e in after if e[2] == "migrate_start"), math.nan)
    t_done = next((e[0] for e in after if e[2] == "migrate_done"), math.nan)
    calm = setup.calm.app_id
    end = t_start if math.isfinite(t_start) else setup.horizon
    r_spike = _mean_response_between(rep, calm, setup.step_at, end)
    r_base = _mean_response_between(base, calm, setup.step_at, end)
    ts, wm = rep.window_means(hot)
    post = [(t, m) for t, m in zip(ts, wm) if math.isfinite(t_done) and t >= t_done]
    below = next((t for t, m in post if m < setup.hot.tau_ms), math.nan)
    # first window made up only of completions after the move
    post_window = next((m for t, m in post if t >= t_done + setup.dynamics.window_s), math.nan)
    timeline = [{"t": t, "app_id": a, "event": e, "window_mean_ms": m} for t, a, e, m in events]
    summary = [{
        "seed": setup.seed,
        "step_at": setup.step_at,
        "t_flag": t_flag,
        "t_migrate_start": t_start,
        "t_migrate_done": t_done,
        "flag_delay_s": t_flag - setup.step_at,
        "calm_mean_ms_spike": r_spike,
        "calm_mean_ms_baseline": r_base,
        "calm_rel_change": abs(r_spike - r_base) / r_base if r_base else math.nan,
        "t_below_tau": below,
        "post_window_mean_ms": float(post_window),
        "final_window_mean_ms": float(wm[-1]) if len(wm) else math.nan,
        "tau_ms": setup.hot.tau_ms,
        "migrations": len(ctl.events),
        "baseline_migrations": len(base_ctl.events),
    }]
    return timeline, summary
