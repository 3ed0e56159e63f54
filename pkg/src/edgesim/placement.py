"""Cluster state and online placement with latency constraints.

Every placement routine evaluates each (node, device) candidate on three
checks, in this order:

* resources: memory (node and device) and CPU cores fit,
* latency: every resident app and the newcomer keep E[R_total] <= tau,
* utilization: the device's post-placement rho stays below ``max_rho``.

The knapsack baseline skips the latency check and uses an additive
utilization estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from edgesim.analytic import (
    ClassLoad,
    ResponsePrediction,
    WorkloadMix,
    cpu_response,
    end_to_end_response,
    fcfs_prediction,
    gpu_response,
    mps_response,
)
from edgesim.profiles import AcceleratorModel, DeviceKind, DnnProfile, switch_overhead

MEM = "mem"
LATENCY = "latency"
UTILIZATION = "utilization"
NONE_SUPPORT = "none-support"
REASON_PRIORITY = (MEM, LATENCY, UTILIZATION)


class AppKind(str, Enum):
    AIAAS = "AIaaS"
    USER_TRAINED = "UserTrained"


class Heuristic(str, Enum):
    LEAST_UTIL = "least"
    HIGHEST_UTIL = "highest"


@dataclass(frozen=True)
class ApplicationSpec:
    app_id: str
    dnn: str
    lam: float
    tau_ms: float
    kind: AppKind = AppKind.USER_TRAINED
    cpu_cores: float = 1.0
    cpu_service_ms: float = 2.0
    frontend_mib: float = 100.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"{self.app_id}: lambda must be > 0")
        if not self.tau_ms > 0:
            raise ValueError(f"{self.app_id}: tau must be > 0")
        if not self.cpu_cores > 0:
            raise ValueError(f"{self.app_id}: cpu_cores must be > 0")


@dataclass(frozen=True)
class Policy:
    heuristic: Heuristic = Heuristic.LEAST_UTIL
    max_rho: float = 0.95
    gpu_policy: str = "max"
    grouping: bool = False


@dataclass
class Backend:
    """One DNN container on a device; AIaaS groups share one backend."""

    backend_id: str
    dnn: DnnProfile
    apps: list[ApplicationSpec]
    shared: bool = False

    @property
    def lam(self) -> float:
        return sum(a.lam for a in self.apps)


@dataclass
class DeviceState:
    device_id: str
    model: AcceleratorModel
    backends: dict[str, Backend] = field(default_factory=dict)

    @property
    def mem_used(self) -> float:
        return sum(b.dnn.runtime_mib for b in self.backends.values())

    @property
    def mem_free(self) -> float:
        return self.model.memory_capacity - self.mem_used

    def class_loads(self) -> list[ClassLoad]:
        return [_class_load(b.backend_id, b.dnn, b.lam, self.model) for b in self.backends.values()]

    def mix(self) -> WorkloadMix:
        return WorkloadMix.of(self.class_loads())

    def utilization(self) -> float:
        mix = self.mix()
        return mix.utilization(self.model.parallelism_c) if mix.classes else 0.0

    def apps(self) -> Iterable[tuple[Backend, ApplicationSpec]]:
        for b in self.backends.values():
            for a in b.apps:
                yield b, a


@dataclass
class NodeState:
    node_id: str
    cpu_cores_total: float
    mem_total: float
    devices: list[DeviceState]

    @property
    def cpu_used(self) -> float:
        return sum(a.cpu_cores for d in self.devices for _, a in d.apps())

    @property
    def mem_used(self) -> float:
        return sum(d.mem_used for d in self.devices) + sum(a.frontend_mib for d in self.devices for _, a in d.apps())

    @property
    def cpu_free(self) -> float:
        return self.cpu_cores_total - self.cpu_used

    @property
    def mem_free(self) -> float:
        return self.mem_total - self.mem_used


@dataclass
class ClusterState:
    nodes: list[NodeState]
    profiles: Mapping[str, DnnProfile]
    _backend_seq: int = 0

    def new_backend_id(self, dnn: str) -> str:
        self._backend_seq += 1
        return f"{dnn}#{self._backend_seq}"

    def node(self, node_id: str) -> NodeState:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def locate(self, app_id: str) -> tuple[NodeState, DeviceState, Backend]:
        for n in self.nodes:
            for d in n.devices:
                for b in d.backends.values():
                    if any(a.app_id == app_id for a in b.apps):
                        return n, d, b
        raise KeyError(app_id)

    def placed_apps(self) -> list[ApplicationSpec]:
        return [a for n in self.nodes for d in n.devices for _, a in d.apps()]

    def device_kinds(self) -> set[DeviceKind]:
        return {d.model.kind for n in self.nodes for d in n.devices}


@dataclass(frozen=True)
class PlacementDecision:
    app_id: str
    placed: bool
    node_id: str | None = None
    device_id: str | None = None
    backend_id: str | None = None
    joined_group: bool = False
    reason: str | None = None
    predicted: Mapping[str, float] = field(default_factory=dict, hash=False)
    utilization: float = math.nan

    @property
    def outcome(self) -> str:
        return "placed" if self.placed else "rejected"

    @property
    def predicted_ms(self) -> float:
        return self.predicted.get(self.app_id, math.nan)


def _class_load(class_id: str, dnn: DnnProfile, lam: float, model: AcceleratorModel) -> ClassLoad:
    return ClassLoad(class_id, lam, dnn.exec_time(model.kind), switch_overhead(dnn, model))


def device_prediction(model: AcceleratorModel, mix: WorkloadMix, gpu_policy: str = "max") -> ResponsePrediction:
    """Per-backend device response for the accelerator's multiplexing behavior."""
    if model.kind is DeviceKind.EDGE_TPU:
        return fcfs_prediction(mix)
    if model.kind is DeviceKind.EDGE_GPU:
        return gpu_response(mix, gpu_policy)
    return mps_response(mix, model.parallelism_c)


def find_group(app: ApplicationSpec, device: DeviceState) -> Backend | None:
    """The shared AIaaS backend for ``app.dnn`` on this device, if any."""
    if app.kind is not AppKind.AIAAS:
        return None
    for b in device.backends.values():
        if b.shared and b.dnn.name == app.dnn:
            return b
    return None


def compute_mem_need(app: ApplicationSpec, node: NodeState, profiles: Mapping[str, DnnProfile],
                     device: DeviceState | None = None) -> float:
    """Memory (MiB) the app adds to ``node``; a joined AIaaS group only adds the frontend."""
    dnn = profiles[app.dnn]
    devices = [device] if device is not None else node.devices
    if not any(dnn.supports(d.model.kind) for d in devices):
        raise ValueError(f"{app.dnn} is not supported by any device on {node.node_id}")
    if any(find_group(app, d) is not None for d in devices):
        return app.frontend_mib
    return dnn.runtime_mib + app.frontend_mib


def _with_app(device: DeviceState, app: ApplicationSpec, dnn: DnnProfile, join: Backend | None) -> list[tuple[str, DnnProfile, list[ApplicationSpec]]]:
    groups = [(b.backend_id, b.dnn, list(b.apps)) for b in device.backends.values()]
    if join is not None:
        for bid, _, apps in groups:
            if bid == join.backend_id:
                apps.append(app)
    else:
        groups.append((f"+{app.app_id}", dnn, [app]))
    return groups


def predict_after_placement(app: ApplicationSpec, node: NodeState, device: DeviceState,
                            profiles: Mapping[str, DnnProfile], gpu_policy: str = "max",
                            join: Backend | None = None) -> dict[str, float]:
    """E[R_total] (ms) of every app on ``device`` if ``app`` were added; inf when unstable."""
    dnn = profiles[app.dnn]
    if not dnn.supports(device.model.kind):
        raise ValueError(f"{app.dnn} is not supported on {device.model.kind.value}")
    groups = _with_app(device, app, dnn, join)
    mix = WorkloadMix.of(_class_load(bid, d, sum(a.lam for a in apps), device.model) for bid, d, apps in groups)
    pred = device_prediction(device.model, mix, gpu_policy)
    out = {}
    for bid, _, apps in groups:
        dev_ms = pred[bid]
        for a in apps:
            out[a.app_id] = end_to_end_response(cpu_response(a.lam, a.cpu_service_ms, a.cpu_cores), dev_ms)
    return out


def _utilization_after(device: DeviceState, app: ApplicationSpec, dnn: DnnProfile, join: Backend | None) -> float:
    groups = _with_app(device, app, dnn, join)
    mix = WorkloadMix.of(_class_load(bid, d, sum(a.lam for a in apps), device.model) for bid, d, apps in groups)
    return mix.utilization(device.model.parallelism_c)


def _additive_utilization_after(device: DeviceState, app: ApplicationSpec, dnn: DnnProfile) -> float:
    kind = device.model.kind
    work = sum(a.lam * b.dnn.exec_time(kind) for b, a in device.apps()) + app.lam * dnn.exec_time(kind)
    return work / 1000.0 / device.model.parallelism_c


@dataclass
class Candidate:
    node_idx: int
    dev_idx: int
    node: NodeState
    device: DeviceState
    join: Backend | None
    utilization: float
    predicted: dict[str, float]
    failure: str | None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def newcomer_ms(self, app_id: str) -> float:
        return self.predicted.get(app_id, math.inf)


def _resources_fit(app: ApplicationSpec, node: NodeState, device: DeviceState, dnn: DnnProfile, join: Backend | None) -> bool:
    backend_mem = 0.0 if join is not None else dnn.runtime_mib
    return (
        node.mem_free >= backend_mem + app.frontend_mib
        and device.mem_free >= backend_mem
        and node.cpu_free >= app.cpu_cores - 1e-9
    )


def evaluate_candidates(app: ApplicationSpec, cluster: ClusterState, policy: Policy, *,
                        kinds: Iterable[DeviceKind] | None = None, join_groups: bool = False,
                        latency_aware: bool = True, exclude: tuple[str, str] | None = None) -> list[Candidate]:
    """Score every (node, device) able to run ``app``.

    With ``join_groups`` only devices hosting a shared backend for the same
    DNN are considered, and the app is evaluated as a member of that group.
    """
    dnn = cluster.profiles[app.dnn]
    allowed = set(kinds) if kinds is not None else None
    out = []
    for ni, node in enumerate(cluster.nodes):
        for di, dev in enumerate(node.devices):
            kind = dev.model.kind
            if not dnn.supports(kind) or (allowed is not None and kind not in allowed):
                continue
            if exclude is not None and (node.node_id, dev.device_id) == exclude:
                continue
            join = find_group(app, dev) if join_groups else None
            if join_groups and join is None:
                continue
            failure = None
            predicted: dict[str, float] = {}
            if latency_aware:
                util = _utilization_after(dev, app, dnn, join)
            else:
                util = _additive_utilization_after(dev, app, dnn)
            if not _resources_fit(app, node, dev, dnn, join):
                failure = MEM
            if latency_aware:
                predicted = predict_after_placement(app, node, dev, cluster.profiles, policy.gpu_policy, join)
                if failure is None:
                    taus = {a.app_id: a.tau_ms for _, a in dev.apps()}
                    taus[app.app_id] = app.tau_ms
                    if any(not predicted[k] <= taus[k] for k in taus):
                        failure = LATENCY
            if failure is None and not util < policy.max_rho:
                failure = UTILIZATION
            out.append(Candidate(ni, di, node, dev, join, util, predicted, failure))
    return out


def _select(feasible: Sequence[Candidate], heuristic: Heuristic) -> Candidate:
    if heuristic is Heuristic.LEAST_UTIL:
        return min(feasible, key=lambda c: (c.utilization, c.node_idx, c.dev_idx))
    return min(feasible, key=lambda c: (-c.utilization, c.node_idx, c.dev_idx))


def _rejection(app: ApplicationSpec, cands: Sequence[Candidate]) -> PlacementDecision:
    if not cands:
        return PlacementDecision(app.app_id, False, reason=NONE_SUPPORT)
    seen = {c.failure for c in cands}
    reason = next(r for r in REASON_PRIORITY if r in seen)
    return PlacementDecision(app.app_id, False, reason=reason)


def _decision(app: ApplicationSpec, c: Candidate) -> PlacementDecision:
    return PlacementDecision(
        app.app_id,
        True,
        node_id=c.node.node_id,
        device_id=c.device.device_id,
        backend_id=c.join.backend_id if c.join is not None else None,
        joined_group=c.join is not None,
        predicted=c.predicted,
        utilization=c.utilization,
    )


def place(app: ApplicationSpec, cluster: ClusterState, policy: Policy = Policy(), *,
          kinds: Iterable[DeviceKind] | None = None, exclude: tuple[str, str] | None = None) -> PlacementDecision:
    """Latency-aware online knapsack placement; the app gets its own backend."""
    cands = evaluate_candidates(app, cluster, policy, kinds=kinds, exclude=exclude)
    feasible = [c for c in cands if c.ok]
    if not feasible:
        return _rejection(app, cands)
    return _decision(app, _select(feasible, policy.heuristic))


def _group_choice(app: ApplicationSpec, cluster: ClusterState, policy: Policy, kinds, exclude) -> Candidate | None:
    if app.kind is not AppKind.AIAAS:
        return None
    groups = [c for c in evaluate_candidates(app, cluster, policy, kinds=kinds, join_groups=True, exclude=exclude) if c.ok]
    if not groups:
        return None
    return _select(groups, Heuristic.LEAST_UTIL)


def place_grouped(app: ApplicationSpec, cluster: ClusterState, policy: Policy = Policy(), *,
                  kinds: Iterable[DeviceKind] | None = None, exclude: tuple[str, str] | None = None) -> PlacementDecision:
    """AIaaS placement: join a feasible group for the same DNN, else start a new one."""
    hit = _group_choice(app, cluster, policy, kinds, exclude)
    if hit is not None:
        return _decision(app, hit)
    return place(app, cluster, policy, kinds=kinds, exclude=exclude)


def place_heterogeneous(app: ApplicationSpec, cluster: ClusterState, policy: Policy = Policy(), *,
                        exclude: tuple[str, str] | None = None) -> PlacementDecision:
    """Pick the accelerator kind whose best feasible candidate gives the newcomer the lowest latency."""
    if policy.grouping:
        hit = _group_choice(app, cluster, policy, None, exclude)
        if hit is not None:
            return _decision(app, hit)
    cands = evaluate_candidates(app, cluster, policy, exclude=exclude)
    feasible = [c for c in cands if c.ok]
    if not feasible:
        return _rejection(app, cands)
    best_by_kind: dict[DeviceKind, float] = {}
    for c in feasible:
        kind = c.device.model.kind
        best_by_kind[kind] = min(best_by_kind.get(kind, math.inf), c.newcomer_ms(app.app_id))
    # ties resolve in enum order
    kind = min(best_by_kind, key=lambda k: (best_by_kind[k], list(DeviceKind).index(k)))
    return _decision(app, _select([c for c in feasible if c.device.model.kind is kind], policy.heuristic))


def place_baseline_knapsack(app: ApplicationSpec, cluster: ClusterState, policy: Policy = Policy(), *,
                            kinds: Iterable[DeviceKind] | None = None) -> PlacementDecision:
    """Latency-oblivious control: resources plus additive utilization only."""
    cands = evaluate_candidates(app, cluster, policy, kinds=kinds, latency_aware=False)
    feasible = [c for c in cands if c.ok]
    if not feasible:
        return _rejection(app, cands)
    return _decision(app, _select(feasible, policy.heuristic))


def commit(cluster: ClusterState, app: ApplicationSpec, decision: PlacementDecision) -> None:
    """Apply a Placed decision to the cluster state."""
    if not decision.placed:
        raise ValueError(f"cannot commit a rejected placement for {app.app_id}")
    node = cluster.node(decision.node_id)
    dev = next(d for d in node.devices if d.device_id == decision.device_id)
    if decision.backend_id is not None:
        dev.backends[decision.backend_id].apps.append(app)
        return
    bid = cluster.new_backend_id(app.dnn)
    dev.backends[bid] = Backend(bid, cluster.profiles[app.dnn], [app], shared=app.kind is AppKind.AIAAS)


def remove_app(cluster: ClusterState, app_id: str) -> ApplicationSpec:
    """Take an app off the cluster; its backend goes away with its last member."""
    _, dev, backend = cluster.locate(app_id)
    app = next(a for a in backend.apps if a.app_id == app_id)
    backend.apps.remove(app)
    if not backend.apps:
        del dev.backends[backend.backend_id]
    return app


def current_predictions(cluster: ClusterState, gpu_policy: str = "max") -> dict[str, float]:
    """E[R_total] (ms) of every placed app under the current state."""
    out = {}
    for node in cluster.nodes:
        for dev in node.devices:
            if not dev.backends:
                continue
            pred = device_prediction(dev.model, dev.mix(), gpu_policy)
            for b, a in dev.apps():
                out[a.app_id] = end_to_end_response(cpu_response(a.lam, a.cpu_service_ms, a.cpu_cores), pred[b.backend_id])
    return out


def violating_apps(cluster: ClusterState, gpu_policy: str = "max") -> list[str]:
    """Apps whose predicted E[R_total] exceeds their bound."""
    taus = {a.app_id: a.tau_ms for a in cluster.placed_apps()}
    return sorted(k for k, v in current_predictions(cluster, gpu_policy).items() if not v <= taus[k])


def make_cluster(n_nodes: int, model: AcceleratorModel | Sequence[AcceleratorModel], profiles: Mapping[str, DnnProfile],
                 *, cpu_cores: float = 4.0, mem_mib: float | None = None) -> ClusterState:
    """Homogeneous helper: ``n_nodes`` nodes each carrying the given device(s)."""
    models = [model] if isinstance(model, AcceleratorModel) else list(model)
    nodes = []
    for i in range(n_nodes):
        devs = [DeviceState(f"d{j}", m) for j, m in enumerate(models)]
        mem = mem_mib if mem_mib is not None else max(m.memory_capacity for m in models)
        nodes.append(NodeState(f"n{i:02d}", cpu_cores, mem, devs))
    return ClusterState(nodes, profiles)
