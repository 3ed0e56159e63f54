"""YAML scenario files.

Durations are milliseconds and rates are requests/second. Unknown keys are
rejected so a typo never silently falls back to a default. Minimal example::

    schema_version: 1
    cluster:
      nodes:
        - {count: 10, cpu_cores: 8, mem_mib: 16384, devices: [mps]}
    trace:
      spec: {n_apps: 40, seed: 3, reference_device: mps}
    policy: {placement: aware, heuristic: least}
    simulation: {seed: 1, horizon_ms: 60000, warmup_ms: 10000}
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from edgesim.dynamics import BridgeConfig, DynamicsConfig
from edgesim.experiments import ClusterConfig, NodeConfig, SimSettings, ValidationCase
from edgesim.placement import ApplicationSpec, Heuristic, Policy
from edgesim.profiles import (
    GTX_1080_MPS,
    JETSON_NANO,
    USB_EDGE_TPU,
    AcceleratorModel,
    DeviceKind,
    DnnProfile,
    Scale,
    bundled_profiles,
    load_profile_table,
)
from edgesim.workload import TraceSpec, gen_app_trace, read_trace

SCHEMA_VERSION = 1
DEVICE_PRESETS = {"edgegpu": JETSON_NANO, "edgetpu": USB_EDGE_TPU, "mps": GTX_1080_MPS}
PLACEMENTS = ("aware", "grouped", "heterogeneous", "baseline")


class ScenarioError(ValueError):
    pass


def _check_keys(d: Any, allowed: set[str], where: str, required: set[str] = frozenset()) -> dict:
    if not isinstance(d, Mapping):
        raise ScenarioError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    return dict(d)


@dataclass
class Scenario:
    cluster: ClusterConfig
    profiles: dict[str, DnnProfile]
    trace_spec: TraceSpec | None = None
    trace_path: Path | None = None
    policy: Policy = field(default_factory=Policy)
    placement: str = "aware"
    seed: int = 0
    sim: SimSettings = field(default_factory=SimSettings)
    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    validate_cases: tuple[ValidationCase, ...] = ()
    validate_rhos: tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    validate_arrivals: int = 200_000
    experiment: dict = field(default_factory=dict)

    def apps(self) -> list[ApplicationSpec]:
        if self.trace_path is not None:
            return read_trace(self.trace_path)
        if self.trace_spec is not None:
            return gen_app_trace(self.trace_spec, self.profiles)
        return []

    def validate(self) -> list[str]:
        """Problems a run would hit: unknown DNNs, or DNNs no device in the cluster can run."""
        problems = []
        kinds = self.cluster.kinds
        for a in self.apps():
            p = self.profiles.get(a.dnn)
            if p is None:
                problems.append(f"{a.app_id}: unknown DNN {a.dnn!r}")
            elif not any(p.supports(k) for k in kinds):
                problems.append(f"{a.app_id}: no device in the cluster supports {a.dnn}")
        return problems


def _device(d: Any, where: str) -> AcceleratorModel:
    if isinstance(d, str):
        if d not in DEVICE_PRESETS:
            raise ScenarioError(f"{where}: unknown device preset {d!r}; expected one of {sorted(DEVICE_PRESETS)}")
        return DEVICE_PRESETS[d]
    d = _check_keys(d, {"kind", "memory_mib", "c", "switch_alpha_ms", "switch_beta_ms_per_mib"}, where, {"kind"})
    base = DEVICE_PRESETS.get(d["kind"])
    if base is None:
        raise ScenarioError(f"{where}: unknown device kind {d['kind']!r}")
    try:
        return AcceleratorModel(
            DeviceKind(d["kind"]),
            float(d.get("memory_mib", base.memory_capacity)),
            float(d.get("c", base.parallelism_c)),
            float(d.get("switch_alpha_ms", base.switch_alpha)),
            float(d.get("switch_beta_ms_per_mib", base.switch_beta)),
        )
    except ValueError as e:
        raise ScenarioError(f"{where}: {e}") from e


def _cluster(d: Any) -> ClusterConfig:
    d = _check_keys(d, {"nodes"}, "cluster", {"nodes"})
    nodes = []
    for i, n in enumerate(d["nodes"]):
        where = f"cluster.nodes[{i}]"
        n = _check_keys(n, {"count", "cpu_cores", "mem_mib", "devices"}, where, {"cpu_cores", "mem_mib", "devices"})
        devs = tuple(_device(x, f"{where}.devices") for x in n["devices"])
        if not devs:
            raise ScenarioError(f"{where}: a node needs at least one device")
        nodes += [NodeConfig(devs, float(n["cpu_cores"]), float(n["mem_mib"]))] * int(n.get("count", 1))
    if not nodes:
        raise ScenarioError("cluster: no nodes")
    return ClusterConfig(tuple(nodes))


_TRACE_KEYS = {"n_apps", "seed", "proportions", "rate_range", "tau_range", "aias_fraction", "reference_device",
               "max_standalone_rho", "cpu_cores", "cpu_service_ms", "frontend_mib"}


def _trace_spec(d: Any) -> TraceSpec:
    d = _check_keys(d, _TRACE_KEYS, "trace.spec", {"n_apps"})
    kw = dict(d)
    if "reference_device" in kw:
        kw["reference_device"] = DeviceKind(kw["reference_device"])
    for k in ("rate_range", "tau_range"):
        if k in kw:
            v = kw[k]
            if isinstance(v, Mapping):
                kw[k] = {Scale(c): tuple(r) for c, r in v.items()}
            else:
                kw[k] = tuple(v)
    if "proportions" in kw:
        kw["proportions"] = tuple(kw["proportions"])
    try:
        return TraceSpec(**kw)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"trace.spec: {e}") from e


def _validation_case(d: Any, i: int) -> ValidationCase:
    where = f"validate.cases[{i}]"
    d = _check_keys(d, {"name", "discipline", "exec_ms", "switch_ms", "weights", "c", "service", "quantum_ms"},
                    where, {"name", "discipline", "exec_ms"})
    for k in ("exec_ms", "switch_ms", "weights"):
        if k in d:
            d[k] = tuple(float(x) for x in d[k])
    try:
        return ValidationCase(**d)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: {e}") from e


def parse_scenario(doc: Any, base_dir: Path = Path(".")) -> Scenario:
    doc = _check_keys(doc, {"schema_version", "profiles", "cluster", "trace", "policy", "simulation", "dynamics",
                            "validate", "experiment"}, "scenario", {"schema_version"})
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {doc['schema_version']!r}; expected {SCHEMA_VERSION}")
    if "profiles" in doc:
        profiles = {p.name: p for p in load_profile_table(base_dir / doc["profiles"])}
    else:
        profiles = bundled_profiles()
    cluster = _cluster(doc["cluster"]) if "cluster" in doc else ClusterConfig(
        tuple(NodeConfig((GTX_1080_MPS,), 8.0, 16384.0) for _ in range(10)))
    sc = Scenario(cluster=cluster, profiles=profiles)

    if "trace" in doc:
        t = _check_keys(doc["trace"], {"path", "spec"}, "trace")
        if ("path" in t) == ("spec" in t):
            raise ScenarioError("trace: give exactly one of path or spec")
        if "path" in t:
            sc.trace_path = base_dir / t["path"]
        else:
            sc.trace_spec = _trace_spec(t["spec"])

    if "policy" in doc:
        p = _check_keys(doc["policy"], {"placement", "heuristic", "max_rho", "gpu_policy", "grouping"}, "policy")
        placement = p.get("placement", "aware")
        if placement not in PLACEMENTS:
            raise ScenarioError(f"policy.placement: expected one of {PLACEMENTS}, got {placement!r}")
        sc.placement = placement
        try:
            sc.policy = Policy(
                heuristic=Heuristic(p.get("heuristic", "least")),
                max_rho=float(p.get("max_rho", 0.95)),
                gpu_policy=p.get("gpu_policy", "max"),
                grouping=bool(p.get("grouping", False)),
            )
        except ValueError as e:
            raise ScenarioError(f"policy: {e}") from e

    if "simulation" in doc:
        s = _check_keys(doc["simulation"], {"seed", "horizon_ms", "warmup_ms", "gpu_quantum_ms", "load_factor"},
                        "simulation")
        sc.seed = int(s.get("seed", 0))
        sc.sim = SimSettings(
            horizon=float(s.get("horizon_ms", 70_000)) / 1000.0,
            warmup=float(s.get("warmup_ms", 10_000)) / 1000.0,
            load_factor=float(s.get("load_factor", 1.0)),
        )
        if not sc.sim.horizon > sc.sim.warmup >= 0:
            raise ScenarioError("simulation: need horizon_ms > warmup_ms >= 0")
        sc.bridge = BridgeConfig(gpu_quantum_ms=float(s.get("gpu_quantum_ms", 0.0)))

    if "dynamics" in doc:
        d = _check_keys(doc["dynamics"], {"window_ms", "cadence_ms", "headroom", "migration_delay_ms", "burst_ms"},
                        "dynamics")
        sc.dynamics = DynamicsConfig(
            window_s=float(d.get("window_ms", 10_000)) / 1000.0,
            cadence_s=float(d.get("cadence_ms", 1_000)) / 1000.0,
            headroom=float(d.get("headroom", 1.2)),
            migration_delay_s=float(d.get("migration_delay_ms", 2_000)) / 1000.0,
            policy=sc.policy,
        )
        sc.bridge = BridgeConfig(gpu_quantum_ms=sc.bridge.gpu_quantum_ms, police=True,
                                 burst_s=float(d.get("burst_ms", 2_000)) / 1000.0)

    if "validate" in doc:
        v = _check_keys(doc["validate"], {"cases", "rhos", "arrivals"}, "validate")
        sc.validate_cases = tuple(_validation_case(c, i) for i, c in enumerate(v.get("cases", [])))
        sc.validate_rhos = tuple(float(r) for r in v.get("rhos", sc.validate_rhos))
        sc.validate_arrivals = int(v.get("arrivals", sc.validate_arrivals))

    if "experiment" in doc:
        sc.experiment = _check_keys(doc["experiment"], {"levels", "n_apps", "trials", "base_seed"}, "experiment")
    return sc


def load_scenario(path: str | os.PathLike) -> Scenario:
    path = Path(path)
    with open(path) as f:
        doc = yaml.safe_load(f)
    return parse_scenario(doc, path.parent)
