"""Service disciplines of the simulated CPU and accelerator queues.

All station times are seconds. A station calls ``on_done(now, req)`` once
per request, when the request leaves it.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

from edgesim.profiles import BatchProfile

_EPS = 1e-12


@dataclass(frozen=True)
class FcfsNonPreemptive:
    """One request at a time, in arrival order, never preempted.

    A request pays its class switch overhead when the previously served
    request belonged to a different class. ``switch_ms`` overrides the
    per-request overhead for selected classes.
    """

    switch_ms: Mapping[str, float] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class TimeShared:
    """Round-robin time slicing across contexts, FIFO within a context.

    ``context`` picks what owns a context: ``"app"`` (one per backend
    process, the normal GPU case), ``"shared"`` (one for everybody, which
    forces FCFS) or ``"request"`` (one per request, which forces PS).
    ``quantum_ms == 0`` runs the processor-sharing limit exactly.
    """

    quantum_ms: float = 1.0
    context: str = "app"

    def __post_init__(self):
        if self.context not in ("app", "shared", "request"):
            raise ValueError(f"unknown context mode {self.context!r}")
        if self.quantum_ms < 0:
            raise ValueError("quantum must be >= 0")

    @property
    def per_app_fifo(self) -> bool:
        return self.context == "app"


@dataclass(frozen=True)
class MultiServerPs:
    """Processor sharing with parallel speedup up to ``c``.

    With n requests present each is served at speed c / (n + c - 1): a lone
    request runs at full speed and aggregate throughput approaches c as the
    queue grows. This service-rate law makes the mean response exactly
    c / (c*mu - lam) for any service distribution.
    """

    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be > 0")


@dataclass(frozen=True)
class Batched:
    max_batch: int
    batch_profile: BatchProfile

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


Discipline = Union[FcfsNonPreemptive, TimeShared, MultiServerPs, Batched]


class Request:
    __slots__ = (
        "app",
        "cls",
        "seq",
        "t_arrival",
        "t_admit",
        "t_cpu_start",
        "t_dev_arrival",
        "t_dev_start",
        "t_complete",
        "cpu_s",
        "exec_s",
        "switch_s",
        "demand_s",
        "remaining",
        "switched",
    )

    def __init__(self, app, cls: str, seq: int, t_arrival: float, exec_s: float, switch_s: float = 0.0, cpu_s: float = 0.0):
        self.app = app
        self.cls = cls
        self.seq = seq
        self.t_arrival = t_arrival
        self.t_admit = t_arrival
        self.t_cpu_start = t_arrival
        self.t_dev_arrival = t_arrival
        self.t_dev_start = t_arrival
        self.t_complete = -1.0
        self.cpu_s = cpu_s
        self.exec_s = exec_s
        self.switch_s = switch_s
        self.demand_s = exec_s
        self.remaining = 0.0
        self.switched = False


class Station:
    """Bookkeeping shared by all disciplines: occupancy and capacity use."""

    def __init__(self, sim, name: str):
        self.sim = sim
        self.name = name
        self.on_done: Callable[[float, Request], None] = lambda now, req: None
        self.n = 0
        self._load = 0.0  # fraction of capacity in use right now
        self._t_last = 0.0
        self.area_n = 0.0
        self.area_load = 0.0
        self.completions = 0
        self.measure_from = 0.0

    def _account(self, now: float) -> None:
        start = self._t_last if self._t_last > self.measure_from else self.measure_from
        if now > start:
            dt = now - start
            self.area_n += self.n * dt
            self.area_load += self._load * dt
        self._t_last = now

    def _leave(self, now: float, req: Request) -> None:
        self.n -= 1
        if now >= self.measure_from:
            self.completions += 1
        self.on_done(now, req)

    def arrive(self, now: float, req: Request) -> None:  # pragma: no cover - abstract
        raise NotImplementedError


class FcfsStation(Station):
    def __init__(self, sim, name: str, disc: FcfsNonPreemptive):
        super().__init__(sim, name)
        self.switch_override = {k: v / 1000.0 for k, v in disc.switch_ms.items()}
        self.queue: deque[Request] = deque()
        self.busy = False
        self.last_cls: str | None = None

    def arrive(self, now, req):
        self._account(now)
        self.n += 1
        req.t_dev_arrival = now
        if self.busy:
            self.queue.append(req)
        else:
            self._start(now, req)

    def _start(self, now, req):
        o = 0.0
        if self.last_cls is not None and req.cls != self.last_cls:
            o = self.switch_override.get(req.cls, req.switch_s)
            req.switched = True
        self.last_cls = req.cls
        req.t_dev_start = now
        req.demand_s = req.exec_s + o
        self.busy = True
        self._load = 1.0
        self.sim.events.push(now + req.demand_s, self._finish, req)

    def _finish(self, now, req):
        self._account(now)
        self.busy = False
        self._load = 0.0
        self._leave(now, req)
        if self.queue and not self.busy:
            self._start(now, self.queue.popleft())


class _VirtualTimePs(Station):
    """Equal-share service via virtual time; subclasses set the per-item speed."""

    def __init__(self, sim, name):
        super().__init__(sim, name)
        self.vt = 0.0
        self.items: list[tuple[float, int, object]] = []
        self._token = 0
        self._seq = 0

    def _speed(self, k: int) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def _advance(self, now):
        k = len(self.items)
        if k:
            self.vt += (now - self._t_last) * self._speed(k)
        self._account(now)

    def _push(self, now, work: float, payload) -> None:
        self._seq += 1
        heapq.heappush(self.items, (self.vt + work, self._seq, payload))
        self._reschedule(now)

    def _reschedule(self, now):
        self._token += 1
        k = len(self.items)
        self._load = self._capacity_share(k)
        if k:
            finish_vt = self.items[0][0]
            dt = max(finish_vt - self.vt, 0.0) / self._speed(k)
            self.sim.events.push(now + dt, self._on_finish, self._token)

    def _capacity_share(self, k: int) -> float:
        return 1.0 if k else 0.0

    def _on_finish(self, now, token):
        if token != self._token:
            return
        self._advance(now)
        fvt, _, payload = heapq.heappop(self.items)
        self.vt = fvt
        self._item_done(now, payload)
        self._reschedule(now)

    def _item_done(self, now, payload):  # pragma: no cover - abstract
        raise NotImplementedError


class PsStation(_VirtualTimePs):
    def __init__(self, sim, name: str, disc: MultiServerPs):
        super().__init__(sim, name)
        self.c = disc.c

    def _speed(self, k):
        return self.c / (k + self.c - 1.0)

    def _capacity_share(self, k):
        return k / (k + self.c - 1.0) if k else 0.0

    def arrive(self, now, req):
        self._advance(now)
        self.n += 1
        req.t_dev_arrival = now
        req.t_dev_start = now
        req.demand_s = req.exec_s
        self._push(now, req.exec_s, req)

    def _item_done(self, now, req):
        self._leave(now, req)


class _Contexts:
    """Per-context FIFO queues keyed by the context mode."""

    def __init__(self, mode: str):
        self.mode = mode
        self.fifo: dict[object, deque[Request]] = {}

    def key(self, req: Request):
        if self.mode == "app":
            return req.cls
        if self.mode == "shared":
            return None
        return req

    def push(self, req: Request) -> tuple[object, bool]:
        """Queue ``req``; report its context and whether the context just became active."""
        k = self.key(req)
        q = self.fifo.get(k)
        if q is None:
            self.fifo[k] = deque((req,))
            return k, True
        q.append(req)
        return k, False

    def head(self, k) -> Request:
        return self.fifo[k][0]

    def pop_head(self, k) -> bool:
        """Remove the head of context ``k``; True if more requests remain."""
        q = self.fifo[k]
        q.popleft()
        if q:
            return True
        del self.fifo[k]
        return False


class TimeSharedPsStation(_VirtualTimePs):
    """Quantum -> 0 limit: active contexts share the device equally."""

    def __init__(self, sim, name: str, disc: TimeShared):
        super().__init__(sim, name)
        self.ctx = _Contexts(disc.context)

    def _speed(self, k):
        return 1.0 / k

    def arrive(self, now, req):
        self._advance(now)
        self.n += 1
        req.t_dev_arrival = now
        req.demand_s = req.exec_s
        k, activated = self.ctx.push(req)
        if activated:
            req.t_dev_start = now
            self._push(now, req.exec_s, k)

    def _item_done(self, now, k):
        req = self.ctx.head(k)
        more = self.ctx.pop_head(k)
        self._leave(now, req)
        if more:
            nxt = self.ctx.head(k)
            nxt.t_dev_start = now
            self._seq += 1
            heapq.heappush(self.items, (self.vt + nxt.exec_s, self._seq, k))


class RoundRobinStation(Station):
    """Fixed-quantum round robin over active contexts."""

    def __init__(self, sim, name: str, disc: TimeShared):
        super().__init__(sim, name)
        self.q = disc.quantum_ms / 1000.0
        self.ctx = _Contexts(disc.context)
        self.rotation: deque = deque()
        self.serving = False

    def arrive(self, now, req):
        self._account(now)
        self.n += 1
        req.t_dev_arrival = now
        req.demand_s = req.exec_s
        req.remaining = req.exec_s
        k, activated = self.ctx.push(req)
        if activated:
            req.t_dev_start = now
            self.rotation.append(k)
            if not self.serving:
                self._next(now)

    def _next(self, now):
        if not self.rotation:
            self.serving = False
            self._load = 0.0
            return
        k = self.rotation.popleft()
        head = self.ctx.head(k)
        s = head.remaining if head.remaining < self.q else self.q
        self.serving = True
        self._load = 1.0
        self.sim.events.push(now + s, self._slice_end, (k, s))

    def _slice_end(self, now, ks):
        k, s = ks
        self._account(now)
        head = self.ctx.head(k)
        head.remaining -= s
        if head.remaining <= _EPS:
            more = self.ctx.pop_head(k)
            self._leave(now, head)
            if more:
                self.ctx.head(k).t_dev_start = now
                self.rotation.append(k)
        else:
            self.rotation.append(k)
        self._next(now)


class BatchedStation(Station):
    def __init__(self, sim, name: str, disc: Batched):
        super().__init__(sim, name)
        self.max_batch = disc.max_batch
        self.bp = disc.batch_profile
        self.queue: deque[Request] = deque()
        self.busy = False
        self.batch_sizes: list[int] = []

    def arrive(self, now, req):
        self._account(now)
        self.n += 1
        req.t_dev_arrival = now
        self.queue.append(req)
        if not self.busy:
            self._dispatch(now)

    def _dispatch(self, now):
        b = min(len(self.queue), self.max_batch)
        batch = [self.queue.popleft() for _ in range(b)]
        s = (self.bp.k1 + self.bp.k2 / b) / 1000.0
        for req in batch:
            req.t_dev_start = now
            req.demand_s = s
        self.busy = True
        self._load = 1.0
        if now >= self.measure_from:
            self.batch_sizes.append(b)
        self.sim.events.push(now + s, self._finish, batch)

    def _finish(self, now, batch):
        self._account(now)
        for req in batch:
            self._leave(now, req)
        self.busy = False
        self._load = 0.0
        if self.queue:
            self._dispatch(now)


def make_station(sim, name: str, disc: Discipline) -> Station:
    if isinstance(disc, FcfsNonPreemptive):
        return FcfsStation(sim, name, disc)
    if isinstance(disc, TimeShared):
        if disc.quantum_ms == 0:
            return TimeSharedPsStation(sim, name, disc)
        return RoundRobinStation(sim, name, disc)
    if isinstance(disc, MultiServerPs):
        return PsStation(sim, name, disc)
    if isinstance(disc, Batched):
        return BatchedStation(sim, name, disc)
    raise TypeError(f"unknown discipline {disc!r}")
