"""Seeded discrete-event simulation of per-app CPU queues feeding shared accelerators.

Each application's requests go: Poisson arrivals -> token bucket (optional)
-> the app's own CPU queue -> the shared device queue of its accelerator.
"""
from __future__ import annotations

import csv
import heapq
import io
import math
from array import array
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from edgesim.sim.bucket import TokenBucket
from edgesim.sim.events import EventQueue
from edgesim.sim.stations import Discipline, MultiServerPs, Request, Station, make_station
from edgesim.workload import ArrivalSpec, app_rng, arrival_stream

DEFAULT_WINDOW_S = 10.0
DEFAULT_CADENCE_S = 1.0
TRACE_COLUMNS = ("app_id", "t_arrival", "t_cpu_start", "t_dev_start", "t_complete", "class_switch_flag")


@dataclass
class SimApp:
    """One application as the simulator sees it (times in ms, rates in req/s)."""

    app_id: str
    lam: float
    device: str
    exec_ms: float
    backend: str | None = None
    switch_ms: float = 0.0
    tau_ms: float = math.inf
    cpu_cores: float = 1.0
    cpu_service_ms: float = 0.0
    police: bool = False
    bucket_rate: float | None = None
    bucket_burst: float = 1.0
    max_backlog: int | None = None
    arrival: ArrivalSpec = field(default_factory=ArrivalSpec)
    service: str = "deterministic"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"{self.app_id}: negative arrival rate")
        if self.exec_ms <= 0:
            raise ValueError(f"{self.app_id}: exec_ms must be > 0")
        if self.service not in ("deterministic", "exponential"):
            raise ValueError(f"{self.app_id}: unknown service distribution {self.service!r}")
        if self.backend is None:
            self.backend = self.app_id


@dataclass
class SimScenario:
    apps: list[SimApp]
    devices: dict[str, Discipline]

    def validate(self) -> None:
        ids = [a.app_id for a in self.apps]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate app ids in scenario")
        for a in self.apps:
            if a.device not in self.devices:
                raise ValueError(f"{a.app_id}: unknown device {a.device!r}")


@dataclass
class AppStats:
    app_id: str
    requests: int
    completions: int
    mean_response_ms: float
    p50_response_ms: float
    p95_response_ms: float
    p99_response_ms: float
    mean_wait_ms: float
    mean_device_ms: float
    mean_cpu_ms: float
    mean_bucket_ms: float
    violations: int
    windows: int
    max_window_mean_ms: float
    drops: int
    switches: int


@dataclass
class DeviceStats:
    device: str
    utilization: float
    mean_in_system: float
    throughput: float


@dataclass
class SimReport:
    apps: dict[str, AppStats]
    devices: dict[str, DeviceStats]
    horizon: float
    warmup: float
    seed: int
    events: int
    arrivals: int
    completions: int
    in_flight: int
    queued: int
    dropped: int
    samples: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def app_rows(self) -> list[dict]:
        return [vars(self.apps[k]).copy() for k in sorted(self.apps)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.app_rows()
        cols = list(AppStats.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed"] + cols)
        for r in rows:
            w.writerow([self.seed] + [_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def window_means(self, app_id: str, window: float = DEFAULT_WINDOW_S, cadence: float = DEFAULT_CADENCE_S):
        """(evaluation times, window-mean response ms) for one app."""
        t_done, resp = self.samples[app_id]
        return sliding_window_means(t_done, resp, self.warmup, self.horizon, window, cadence)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def sliding_window_means(t_done: np.ndarray, resp_ms: np.ndarray, start: float, end: float,
                         window: float, cadence: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean of responses completing in (t - window, t] at t = start+window, +cadence, ... <= end.

    Windows without completions are dropped.
    """
    n_eval = int(math.floor((end - start - window) / cadence + 1e-9)) + 1
    if n_eval <= 0 or len(t_done) == 0:
        return np.empty(0), np.empty(0)
    ts = start + window + cadence * np.arange(n_eval)
    csum = np.concatenate(([0.0], np.cumsum(resp_ms)))
    hi = np.searchsorted(t_done, ts, side="right")
    lo = np.searchsorted(t_done, ts - window, side="right")
    cnt = hi - lo
    keep = cnt > 0
    means = (csum[hi[keep]] - csum[lo[keep]]) / cnt[keep]
    return ts[keep], means


class _AppRuntime:
    __slots__ = ("spec", "stream", "svc", "cpu", "device", "bucket", "pending", "arrivals", "completed",
                 "dropped", "in_system", "t_done", "resp", "sum_wait", "sum_dev", "sum_cpu", "sum_bucket",
                 "n_meas", "arr_meas", "switches", "exec_s", "switch_s", "cpu_s", "hold_until", "listeners")

    def __init__(self, spec: SimApp):
        self.spec = spec
        self.arrivals = 0
        self.completed = 0
        self.dropped = 0
        self.in_system = 0
        self.pending = 0
        self.t_done = array("d")
        self.resp = array("d")
        self.sum_wait = self.sum_dev = self.sum_cpu = self.sum_bucket = 0.0
        self.n_meas = 0
        self.arr_meas = 0
        self.switches = 0
        self.exec_s = spec.exec_ms / 1000.0
        self.switch_s = spec.switch_ms / 1000.0
        self.cpu_s = spec.cpu_service_ms / 1000.0
        self.hold_until = 0.0


class _ExpDraws:
    """Chunked standard-exponential draws from one generator."""

    __slots__ = ("rng", "buf", "i")

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = rng.standard_exponential(4096)
        self.i = 0

    def next(self) -> float:
        if self.i >= len(self.buf):
            self.buf = self.rng.standard_exponential(4096)
            self.i = 0
        x = self.buf[self.i]
        self.i += 1
        return float(x)


class Simulation:
    """One run. Build, optionally attach controllers, then ``run()``."""

    def __init__(self, scenario: SimScenario, seed: int, horizon: float, warmup: float | None = None,
                 trace: io.TextIOBase | None = None):
        scenario.validate()
        if warmup is None:
            warmup = 0.1 * horizon
        if not horizon > warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        self.scenario = scenario
        self.seed = seed
        self.horizon = float(horizon)
        self.warmup = float(warmup)
        self.events = EventQueue()
        self.n_events = 0
        self.now = 0.0
        self._seq = 0
        self.stations: dict[str, Station] = {}
        for name in sorted(scenario.devices):
            st = make_station(self, name, scenario.devices[name])
            st.measure_from = self.warmup
            st.on_done = self._device_done
            self.stations[name] = st
        self.apps: dict[str, _AppRuntime] = {}
        for spec in scenario.apps:
            self._add_app(spec)
        self._trace = csv.writer(trace, lineterminator="\n") if trace is not None else None
        if self._trace is not None:
            self._trace.writerow(TRACE_COLUMNS)

    def _add_app(self, spec: SimApp) -> _AppRuntime:
        rt = _AppRuntime(spec)
        rt.stream = arrival_stream(spec.lam, app_rng(self.seed, spec.app_id), spec.arrival, horizon=self.horizon)
        rt.svc = _ExpDraws(app_rng(self.seed, spec.app_id, "service")) if spec.service == "exponential" else None
        rt.cpu = None
        if spec.cpu_service_ms > 0:
            cpu = make_station(self, f"cpu:{spec.app_id}", MultiServerPs(spec.cpu_cores))
            cpu.measure_from = self.warmup
            cpu.on_done = self._cpu_done
            rt.cpu = cpu
        rt.device = self.stations[spec.device]
        rt.bucket = None
        if spec.police:
            rt.bucket = TokenBucket(spec.bucket_rate or spec.lam, spec.bucket_burst)
        rt.listeners = []
        self.apps[spec.app_id] = rt
        self._schedule_next_arrival(rt)
        return rt

    # --- scheduling helpers -------------------------------------------------
    def at(self, t: float, fn: Callable[[float, object], None], arg=None) -> None:
        self.events.push(t, fn, arg)

    def every(self, period: float, fn: Callable[[float], None], start: float | None = None) -> None:
        def tick(now, _):
            fn(now)
            if now + period <= self.horizon:
                self.events.push(now + period, tick, None)

        self.events.push(period if start is None else start, tick, None)

    def _schedule_next_arrival(self, rt: _AppRuntime) -> None:
        t = next(rt.stream, None)
        if t is not None and t < self.horizon:
            self.events.push(t, self._arrive, rt)

    # --- request path -------------------------------------------------------
    def _arrive(self, now, rt: _AppRuntime):
        self._schedule_next_arrival(rt)
        rt.arrivals += 1
        if now >= self.warmup:
            rt.arr_meas += 1
        for fn in rt.listeners:
            fn(now)
        self._seq += 1
        exec_s = rt.exec_s * rt.svc.next() if rt.svc is not None else rt.exec_s
        req = Request(rt, rt.spec.backend, self._seq, now, exec_s, rt.switch_s, rt.cpu_s)
        if rt.bucket is not None:
            if rt.spec.max_backlog is not None and rt.pending >= rt.spec.max_backlog:
                rt.dropped += 1
                return
            d = rt.bucket.release_time(now)
        else:
            d = now if now >= rt.hold_until else rt.hold_until
        rt.in_system += 1
        if d > now:
            rt.pending += 1
            self.events.push(d, self._released, req)
        else:
            self._admit(now, req)

    def _released(self, now, req: Request):
        req.app.pending -= 1
        self._admit(now, req)

    def _admit(self, now, req: Request):
        req.t_admit = now
        rt = req.app
        if rt.cpu is not None:
            req.t_cpu_start = now
            rt.cpu.arrive(now, _CpuJob(req))
        else:
            req.t_cpu_start = now
            rt.device.arrive(now, req)

    def _cpu_done(self, now, job):
        req = job.req
        req.app.device.arrive(now, req)

    def _device_done(self, now, req: Request):
        req.t_complete = now
        rt = req.app
        rt.completed += 1
        rt.in_system -= 1
        if req.switched:
            rt.switches += 1
        if req.t_arrival >= self.warmup:
            r = now - req.t_arrival
            dev = now - req.t_dev_arrival
            rt.t_done.append(now)
            rt.resp.append(r * 1000.0)
            rt.sum_dev += dev
            rt.sum_wait += dev - req.demand_s
            rt.sum_cpu += req.t_dev_arrival - req.t_admit
            rt.sum_bucket += req.t_admit - req.t_arrival
            rt.n_meas += 1
        if self._trace is not None:
            self._trace.writerow((rt.spec.app_id, repr(req.t_arrival), repr(req.t_cpu_start), repr(req.t_dev_start),
                                  repr(now), int(req.switched)))
        for hook in self.completion_hooks:
            hook(now, req)

    completion_hooks: Sequence[Callable[[float, Request], None]] = ()

    def add_completion_hook(self, fn: Callable[[float, Request], None]) -> None:
        self.completion_hooks = (*self.completion_hooks, fn)

    # --- migration support --------------------------------------------------
    def add_station(self, name: str, disc: Discipline) -> Station:
        if name in self.stations:
            raise ValueError(f"station {name!r} already exists")
        st = make_station(self, name, disc)
        st.measure_from = self.warmup
        st._t_last = self.now
        st.on_done = self._device_done
        self.stations[name] = st
        return st

    def move_app(self, app_id: str, device: str, exec_ms: float, switch_ms: float = 0.0) -> None:
        """Route the app's future device arrivals to ``device``; in-flight work drains where it is."""
        rt = self.apps[app_id]
        rt.device = self.stations[device]
        rt.exec_s = exec_ms / 1000.0
        rt.switch_s = switch_ms / 1000.0
        rt.spec = replace(rt.spec, device=device, exec_ms=exec_ms, switch_ms=switch_ms)

    def hold_admissions(self, app_id: str, until: float) -> None:
        rt = self.apps[app_id]
        rt.hold_until = max(rt.hold_until, until)
        if rt.bucket is not None:
            rt.bucket.hold_until = max(rt.bucket.hold_until, until)

    def set_bucket_rate(self, app_id: str, rate: float, now: float) -> None:
        rt = self.apps[app_id]
        if rt.bucket is not None:
            rt.bucket.set_rate(rate, now)

    # --- main loop ----------------------------------------------------------
    def run(self) -> SimReport:
        heap = self.events._heap
        pop = heapq.heappop
        horizon = self.horizon
        n = 0
        while heap and heap[0][0] <= horizon:
            t, _, fn, arg = pop(heap)
            self.now = t
            fn(t, arg)
            n += 1
        self.n_events = n
        self.now = horizon
        return self._report()

    def _report(self) -> SimReport:
        measured = self.horizon - self.warmup
        apps: dict[str, AppStats] = {}
        samples = {}
        tot_arr = tot_done = tot_q = tot_drop = tot_flight = 0
        for app_id in sorted(self.apps):
            rt = self.apps[app_id]
            t_done = np.frombuffer(rt.t_done, dtype=float).copy() if len(rt.t_done) else np.empty(0)
            resp = np.frombuffer(rt.resp, dtype=float).copy() if len(rt.resp) else np.empty(0)
            samples[app_id] = (t_done, resp)
            k = rt.n_meas
            tau = rt.spec.tau_ms
            _, wm = sliding_window_means(t_done, resp, self.warmup, self.horizon, DEFAULT_WINDOW_S, DEFAULT_CADENCE_S)
            if k:
                p50, p95, p99 = (float(x) for x in np.percentile(resp, [50, 95, 99]))
            else:
                p50 = p95 = p99 = math.nan
            apps[app_id] = AppStats(
                app_id=app_id,
                requests=rt.arr_meas,
                completions=k,
                mean_response_ms=float(resp.mean()) if k else math.nan,
                p50_response_ms=p50,
                p95_response_ms=p95,
                p99_response_ms=p99,
                mean_wait_ms=1000.0 * rt.sum_wait / k if k else math.nan,
                mean_device_ms=1000.0 * rt.sum_dev / k if k else math.nan,
                mean_cpu_ms=1000.0 * rt.sum_cpu / k if k else math.nan,
                mean_bucket_ms=1000.0 * rt.sum_bucket / k if k else math.nan,
                violations=int(np.count_nonzero(wm > tau)),
                windows=int(len(wm)),
                max_window_mean_ms=float(wm.max()) if len(wm) else math.nan,
                drops=rt.dropped,
                switches=rt.switches,
            )
            tot_arr += rt.arrivals
            tot_done += rt.completed
            tot_q += rt.pending
            tot_drop += rt.dropped
            tot_flight += rt.in_system - rt.pending
        devices = {}
        for name, st in self.stations.items():
            st._account(self.horizon)
            devices[name] = DeviceStats(
                device=name,
                utilization=st.area_load / measured,
                mean_in_system=st.area_n / measured,
                throughput=st.completions / measured,
            )
        return SimReport(apps, devices, self.horizon, self.warmup, self.seed, self.n_events, tot_arr, tot_done,
                         tot_flight, tot_q, tot_drop, samples)


class _CpuJob:
    """Wraps a request for its stay in the CPU queue (station fields are per-visit)."""

    __slots__ = ("req", "app", "cls", "seq", "t_dev_arrival", "t_dev_start", "exec_s", "demand_s", "remaining",
                 "switched", "switch_s")

    def __init__(self, req: Request):
        self.req = req
        self.app = req.app
        self.cls = req.cls
        self.seq = req.seq
        self.exec_s = req.cpu_s
        self.switch_s = 0.0
        self.switched = False


def simulate(scenario: SimScenario, seed: int, horizon: float, warmup: float | None = None,
             trace: io.TextIOBase | None = None) -> SimReport:
    return Simulation(scenario, seed, horizon, warmup, trace=trace).run()
