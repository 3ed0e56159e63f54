"""Police-and-migrate: token-bucket policing, hotspot detection and migration.

Also holds the bridge from a placed ``ClusterState`` to a simulator
scenario, since the controller drives both.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from edgesim.placement import (
    ApplicationSpec,
    ClusterState,
    PlacementDecision,
    Policy,
    commit,
    place_heterogeneous,
    remove_app,
)
from edgesim.profiles import DeviceKind, switch_overhead
from edgesim.sim.engine import SimApp, SimScenario, Simulation
from edgesim.sim.stations import Discipline, FcfsNonPreemptive, MultiServerPs, TimeShared
from edgesim.workload import ArrivalSpec

TIMELINE_COLUMNS = ("t", "app_id", "event", "window_mean_ms")


@dataclass(frozen=True)
class BridgeConfig:
    """How placed devices and apps become simulator stations and sources."""

    gpu_quantum_ms: float = 0.0
    gpu_context: str = "app"
    police: bool = False
    burst_s: float = 2.0
    # offered rate as a fraction of the declared worst-case rate
    load_factor: float = 1.0


def device_name(node_id: str, device_id: str) -> str:
    return f"{node_id}/{device_id}"


def discipline_for(kind: DeviceKind, c: float, cfg: BridgeConfig = BridgeConfig()) -> Discipline:
    if kind is DeviceKind.EDGE_TPU:
        return FcfsNonPreemptive()
    if kind is DeviceKind.EDGE_GPU:
        return TimeShared(quantum_ms=cfg.gpu_quantum_ms, context=cfg.gpu_context)
    return MultiServerPs(c)


def cluster_to_scenario(cluster: ClusterState, cfg: BridgeConfig = BridgeConfig(),
                        arrivals: Mapping[str, ArrivalSpec] | None = None,
                        all_devices: bool = False) -> SimScenario:
    """One station per used device (or every device), one source per placed app."""
    arrivals = arrivals or {}
    apps: list[SimApp] = []
    devices: dict[str, Discipline] = {}
    for node in cluster.nodes:
        for dev in node.devices:
            name = device_name(node.node_id, dev.device_id)
            if dev.backends or all_devices:
                devices[name] = discipline_for(dev.model.kind, dev.model.parallelism_c, cfg)
            for b, a in dev.apps():
                apps.append(SimApp(
                    app_id=a.app_id,
                    lam=a.lam * cfg.load_factor,
                    device=name,
                    exec_ms=b.dnn.exec_time(dev.model.kind),
                    backend=b.backend_id,
                    switch_ms=switch_overhead(b.dnn, dev.model),
                    tau_ms=a.tau_ms,
                    cpu_cores=a.cpu_cores,
                    cpu_service_ms=a.cpu_service_ms,
                    police=cfg.police,
                    bucket_rate=a.lam,
                    bucket_burst=max(1.0, a.lam * cfg.burst_s),
                    arrival=arrivals.get(a.app_id, ArrivalSpec()),
                ))
    apps.sort(key=lambda s: s.app_id)
    return SimScenario(apps, devices)


class MonitorWindow:
    """Recent completions and offered arrivals of one app."""

    def __init__(self, window_len: float = 10.0):
        if window_len <= 0:
            raise ValueError("window_len must be > 0")
        self.window_len = window_len
        self.done: deque[tuple[float, float]] = deque()
        self.arrivals: deque[float] = deque()
        self._sum = 0.0
        self.drop_marks: deque[tuple[float, int]] = deque()
        self.drops = 0

    def add_response(self, t: float, response_ms: float) -> None:
        self.done.append((t, response_ms))
        self._sum += response_ms

    def add_arrival(self, t: float) -> None:
        self.arrivals.append(t)

    def trim(self, now: float) -> None:
        lo = now - self.window_len
        while self.done and self.done[0][0] <= lo:
            self._sum -= self.done.popleft()[1]
        while self.arrivals and self.arrivals[0] <= lo:
            self.arrivals.popleft()
        if not self.done:
            self._sum = 0.0

    def record_drops(self, now: float, total: int) -> None:
        """Update ``drops`` to the number dropped within the window, given a running total."""
        self.drop_marks.append((now, total))
        while len(self.drop_marks) > 1 and self.drop_marks[1][0] <= now - self.window_len:
            self.drop_marks.popleft()
        self.drops = total - self.drop_marks[0][1]

    def mean_response(self) -> float:
        return self._sum / len(self.done) if self.done else math.nan

    def observed_lambda(self, now: float, since: float = 0.0) -> float:
        span = min(self.window_len, now - since)
        return len(self.arrivals) / span if span > 0 else 0.0


@dataclass(frozen=True)
class MigrationEvent:
    app_id: str
    t_trigger: float
    t_complete: float
    source: tuple[str, str]
    target: tuple[str, str]
    new_lambda: float
    downtime: float

    def __post_init__(self):
        if self.t_complete < self.t_trigger:
            raise ValueError("migration completes before it starts")


def detect_hotspot(windows: Mapping[str, MonitorWindow], specs: Mapping[str, ApplicationSpec],
                   now: float, since: float = 0.0) -> list[str]:
    """Apps over their bound (or dropping) whose observed rate exceeds the declared one.

    Ordered by largest observed/declared rate ratio first.
    """
    hits = []
    for app_id in sorted(windows):
        w = windows[app_id]
        spec = specs[app_id]
        m = w.mean_response()
        over = (not math.isnan(m) and m > spec.tau_ms) or w.drops > 0
        lam_hat = w.observed_lambda(now, since)
        if over and lam_hat > spec.lam:
            hits.append((-lam_hat / spec.lam, app_id))
    return [a for _, a in sorted(hits)]


def plan_migration(app_id: str, cluster: ClusterState, new_lambda: float, policy: Policy = Policy(),
                   placer: Callable[..., PlacementDecision] = place_heterogeneous) -> PlacementDecision:
    """Re-run placement for the app at ``new_lambda``, excluding its current device.

    The app is evaluated as if it had already left its source, so the
    cluster is restored exactly afterwards.
    """
    node, dev, backend = cluster.locate(app_id)
    app = next(a for a in backend.apps if a.app_id == app_id)
    idx = backend.apps.index(app)
    order = list(dev.backends.items())
    backend.apps.remove(app)
    if not backend.apps:
        del dev.backends[backend.backend_id]
    try:
        return placer(replace(app, lam=new_lambda), cluster, policy, exclude=(node.node_id, dev.device_id))
    finally:
        backend.apps.insert(idx, app)
        dev.backends.clear()
        dev.backends.update(order)


@dataclass
class DynamicsConfig:
    window_s: float = 10.0
    cadence_s: float = 1.0
    headroom: float = 1.2
    migration_delay_s: float = 2.0
    policy: Policy = field(default_factory=Policy)


class MigrationController:
    """Runs inside a ``Simulation``: watches windows every cadence and migrates hotspots."""

    def __init__(self, sim: Simulation, cluster: ClusterState, cfg: DynamicsConfig = DynamicsConfig(),
                 bridge: BridgeConfig = BridgeConfig(police=True), enabled: bool = True):
        self.sim = sim
        self.cluster = cluster
        self.cfg = cfg
        self.bridge = bridge
        self.enabled = enabled
        self.specs = {a.app_id: a for a in cluster.placed_apps()}
        self.windows = {k: MonitorWindow(cfg.window_s) for k in self.specs}
        self.timeline: list[tuple[float, str, str, float]] = []
        self.events: list[MigrationEvent] = []
        self.flagged: set[str] = set()
        self.migrating: set[str] = set()
        self.quiet_until: dict[str, float] = {}
        self.since: dict[str, float] = {}
        for app_id, rt in sim.apps.items():
            if app_id in self.windows:
                rt.listeners.append(self.windows[app_id].add_arrival)
        sim.add_completion_hook(self._on_complete)
        sim.every(cfg.cadence_s, self._tick)

    def log(self, t: float, app_id: str, event: str, window_mean_ms: float = math.nan) -> None:
        self.timeline.append((t, app_id, event, window_mean_ms))

    def _on_complete(self, now: float, req) -> None:
        w = self.windows.get(req.app.spec.app_id)
        if w is not None:
            w.add_response(now, (now - req.t_arrival) * 1000.0)

    def _tick(self, now: float) -> None:
        for app_id, w in self.windows.items():
            w.trim(now)
            w.record_drops(now, self.sim.apps[app_id].dropped)
        if not self.enabled or now < self.cfg.window_s:
            return
        candidates = {k: w for k, w in self.windows.items()
                      if k not in self.migrating and now >= self.quiet_until.get(k, 0.0)}
        hot = detect_hotspot(candidates, self.specs, now)
        for app_id in hot:
            if app_id not in self.flagged:
                self.flagged.add(app_id)
                self.log(now, app_id, "flag", self.windows[app_id].mean_response())
        for app_id in list(self.flagged):
            if app_id not in hot:
                self.flagged.discard(app_id)
        for app_id in hot:
            if self._try_migrate(app_id, now):
                break

    def _try_migrate(self, app_id: str, now: float) -> bool:
        lam_hat = self.windows[app_id].observed_lambda(now)
        new_lam = self.cfg.headroom * lam_hat
        decision = plan_migration(app_id, self.cluster, new_lam, self.cfg.policy)
        if not decision.placed:
            return False
        node, dev, _ = self.cluster.locate(app_id)
        source = (node.node_id, dev.device_id)
        target = (decision.node_id, decision.device_id)
        delay = self.cfg.migration_delay_s
        self.migrating.add(app_id)
        self.flagged.discard(app_id)
        self.log(now, app_id, "migrate_start", self.windows[app_id].mean_response())
        self.sim.hold_admissions(app_id, now + delay)
        ev = MigrationEvent(app_id, now, now + delay, source, target, new_lam, delay)
        self.sim.at(now + delay, self._finish, (ev, decision))
        return True

    def _finish(self, now: float, arg) -> None:
        ev, decision = arg
        app = remove_app(self.cluster, ev.app_id)
        moved = replace(app, lam=ev.new_lambda)
        commit(self.cluster, moved, decision)
        self.specs[ev.app_id] = moved
        _, dev, backend = self.cluster.locate(ev.app_id)
        name = device_name(*ev.target)
        if name not in self.sim.stations:
            self.sim.add_station(name, discipline_for(dev.model.kind, dev.model.parallelism_c, self.bridge))
        self.sim.move_app(ev.app_id, name, backend.dnn.exec_time(dev.model.kind), switch_overhead(backend.dnn, dev.model))
        self.sim.set_bucket_rate(ev.app_id, ev.new_lambda, now)
        self.migrating.discard(ev.app_id)
        self.quiet_until[ev.app_id] = now + self.cfg.window_s
        self.events.append(ev)
        self.log(now, ev.app_id, "migrate_done", self.windows[ev.app_id].mean_response())

    def timeline_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMELINE_COLUMNS)
        for t, app_id, event, m in sorted(self.timeline, key=lambda r: r[0]):
            w.writerow([repr(round(t, 9)), app_id, event, "" if math.isnan(m) else repr(round(m, 6))])
        return buf.getvalue()


def apply_migration(event: MigrationEvent, cluster: ClusterState, sim: Simulation | None = None,
                    bridge: BridgeConfig = BridgeConfig(police=True)) -> PlacementDecision:
    """Move an app immediately (outside a controller); re-plans if the target is no longer feasible."""
    decision = plan_migration(event.app_id, cluster, event.new_lambda)
    if not decision.placed:
        return decision
    app = remove_app(cluster, event.app_id)
    commit(cluster, replace(app, lam=event.new_lambda), decision)
    if sim is not None:
        _, dev, backend = cluster.locate(event.app_id)
        name = device_name(decision.node_id, decision.device_id)
        if name not in sim.stations:
            sim.add_station(name, discipline_for(dev.model.kind, dev.model.parallelism_c, bridge))
        sim.hold_admissions(event.app_id, sim.now + event.downtime)
        sim.move_app(event.app_id, name, backend.dnn.exec_time(dev.model.kind), switch_overhead(backend.dnn, dev.model))
        sim.set_bucket_rate(event.app_id, event.new_lambda, sim.now)
    return decision
