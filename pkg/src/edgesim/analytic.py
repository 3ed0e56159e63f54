"""Closed-form mean response-time predictors for shared accelerators.

Rates are requests/second and variances are in s^2; every returned time is
in milliseconds. An overloaded queue (utilization >= 1) yields ``math.inf``
rather than raising, so callers can treat it as just another infeasible
value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from edgesim.profiles import BatchProfile

UNSTABLE = math.inf

FCFS = "fcfs"
PS = "ps"
MD1 = "md1"
MGC_PS = "mgc_ps"
GPU_POLICIES = ("max", FCFS, PS)


@dataclass(frozen=True)
class ClassLoad:
    class_id: str
    lam: float
    exec_ms: float
    switch_ms: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.exec_ms <= 0 or self.switch_ms < 0:
            raise ValueError(f"invalid class load {self}")


@dataclass(frozen=True)
class WorkloadMix:
    """Aggregate load offered to one shared accelerator queue.

    Per-class service follows the switch-probability model: a class-i
    request pays its switch overhead unless the previous request was also
    class i, which happens with probability P(M_i) = lam_i / lam.
    """

    classes: tuple[ClassLoad, ...]

    def __post_init__(self):
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate class ids in mix: {ids}")

    @classmethod
    def of(cls, loads: Iterable[ClassLoad]) -> "WorkloadMix":
        return cls(tuple(loads))

    @cached_property
    def total_lambda(self) -> float:
        return sum(c.lam for c in self.classes)

    @cached_property
    def class_prob(self) -> dict[str, float]:
        lam = self.total_lambda
        if lam == 0:
            # idle queue: weights only matter for the (zero) wait
            return {c.class_id: 1.0 / len(self.classes) for c in self.classes}
        return {c.class_id: c.lam / lam for c in self.classes}

    @cached_property
    def class_service_ms(self) -> dict[str, float]:
        out = {}
        for c in self.classes:
            p = self.class_prob[c.class_id] if self.total_lambda > 0 else 1.0
            out[c.class_id] = p * c.exec_ms + (1 - p) * (c.exec_ms + c.switch_ms)
        return out

    @cached_property
    def mean_service_ms(self) -> float:
        return sum(self.class_prob[k] * s for k, s in self.class_service_ms.items())

    @cached_property
    def service_var_ms2(self) -> float:
        second = 0.0
        for c in self.classes:
            p = self.class_prob[c.class_id]
            p_same = p if self.total_lambda > 0 else 1.0
            second += p * (p_same * c.exec_ms**2 + (1 - p_same) * (c.exec_ms + c.switch_ms) ** 2)
        return max(second - self.mean_service_ms**2, 0.0)

    @property
    def service_var_s2(self) -> float:
        return self.service_var_ms2 * 1e-6

    @property
    def service_rate(self) -> float:
        """mu in requests/second."""
        return 1000.0 / self.mean_service_ms

    def utilization(self, c: float = 1.0) -> float:
        return self.total_lambda / (c * self.service_rate)


@dataclass(frozen=True)
class ResponsePrediction:
    discipline: str
    mean_wait_ms: float
    per_class_response_ms: Mapping[str, float] = field(hash=False)

    @property
    def stable(self) -> bool:
        return math.isfinite(self.mean_wait_ms)

    def __getitem__(self, class_id: str) -> float:
        return self.per_class_response_ms[class_id]


def mg1_fcfs_wait(lam: float, mu: float, service_variance: float) -> float:
    """Pollaczek-Khinchine mean queueing delay (ms); variance in s^2."""
    if lam <= 0:
        return 0.0
    if lam >= mu:
        return UNSTABLE
    rho = lam / mu
    return 1000.0 * (rho + lam * mu * service_variance) / (2.0 * (mu - lam))


def md1_fcfs_wait(lam: float, mu: float) -> float:
    if lam <= 0:
        return 0.0
    if lam >= mu:
        return UNSTABLE
    rho = lam / mu
    return 1000.0 * rho / (1.0 - rho) / (2.0 * mu)


def mg1_ps_response(lam: float, mu: float) -> tuple[float, float]:
    """Mean response and mean wait (ms) of an M/G/1 processor-sharing queue."""
    if lam >= mu:
        return UNSTABLE, UNSTABLE
    r = 1000.0 / (mu - lam)
    return r, r - 1000.0 / mu


def mgc_ps_response(lam: float, mu: float, c: float) -> float:
    """Mean response (ms) of the c-server processor-sharing model, c/(c*mu - lam)."""
    if lam >= c * mu:
        return UNSTABLE
    return 1000.0 * c / (c * mu - lam)


def batch_service_time(bp: BatchProfile, b: int) -> float:
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    return bp.k1 + bp.k2 / b


def batch_service_rate(bp: BatchProfile, b: int) -> float:
    """Service rate (logical batches / s) of a size-b batch."""
    return 1000.0 / batch_service_time(bp, b)


def tpu_class_service(loads: Iterable[ClassLoad]) -> WorkloadMix:
    mix = WorkloadMix.of(loads)
    if not mix.classes or mix.total_lambda <= 0:
        raise ValueError("workload mix needs at least one class with a positive rate")
    return mix


def _unstable(mix: WorkloadMix, tag: str) -> ResponsePrediction:
    return ResponsePrediction(tag, UNSTABLE, {c.class_id: UNSTABLE for c in mix.classes})


def fcfs_prediction(mix: WorkloadMix) -> ResponsePrediction:
    """Shared FCFS queue: M/D/1 for one class, P-K otherwise."""
    lam, mu = mix.total_lambda, mix.service_rate
    if len(mix.classes) == 1:
        w, tag = md1_fcfs_wait(lam, mu), MD1
    else:
        w, tag = mg1_fcfs_wait(lam, mu, mix.service_var_s2), FCFS
    if math.isinf(w):
        return _unstable(mix, tag)
    return ResponsePrediction(tag, w, {k: w + s for k, s in mix.class_service_ms.items()})


def ps_prediction(mix: WorkloadMix) -> ResponsePrediction:
    _, w = mg1_ps_response(mix.total_lambda, mix.service_rate)
    if math.isinf(w):
        return _unstable(mix, PS)
    return ResponsePrediction(PS, w, {k: w + s for k, s in mix.class_service_ms.items()})


tpu_response = fcfs_prediction


def gpu_response_bounds(mix: WorkloadMix) -> tuple[ResponsePrediction, ResponsePrediction]:
    """FCFS and PS predictions bracketing a time-shared edge GPU."""
    return fcfs_prediction(mix), ps_prediction(mix)


def gpu_response(mix: WorkloadMix, policy: str = "max") -> ResponsePrediction:
    fcfs, ps = gpu_response_bounds(mix)
    if policy == FCFS:
        return fcfs
    if policy == PS:
        return ps
    if policy != "max":
        raise ValueError(f"unknown GPU policy {policy!r}; expected one of {GPU_POLICIES}")
    per_class = {k: max(fcfs[k], ps[k]) for k in fcfs.per_class_response_ms}
    return ResponsePrediction("max", max(fcfs.mean_wait_ms, ps.mean_wait_ms), per_class)


def mps_response(mix: WorkloadMix, c: float) -> ResponsePrediction:
    """Multi-server PS: aggregate c/(c*mu - lam), per class S_i / (1 - rho)."""
    r = mgc_ps_response(mix.total_lambda, mix.service_rate, c)
    if math.isinf(r):
        return _unstable(mix, MGC_PS)
    stretch = r / mix.mean_service_ms
    return ResponsePrediction(MGC_PS, r - mix.mean_service_ms, {k: s * stretch for k, s in mix.class_service_ms.items()})


def cpu_response(lam: float, service_ms: float, cores: float) -> float:
    """Frontend CPU stage (ms): the app's own c-core PS queue."""
    if service_ms <= 0:
        return 0.0
    return mgc_ps_response(lam, 1000.0 / service_ms, cores)


def end_to_end_response(cpu_ms: float, accel_ms: float) -> float:
    if math.isinf(cpu_ms) or math.isinf(accel_ms):
        return UNSTABLE
    return cpu_ms + accel_ms
