"""Application traces and per-request arrival streams."""
from __future__ import annotations

import csv
import io
import math
import os
import zlib
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from edgesim.placement import AppKind, ApplicationSpec
from edgesim.profiles import DeviceKind, DnnProfile, Scale

CATEGORIES = (Scale.SMALL, Scale.MEDIUM, Scale.LARGE)
TRACE_COLUMNS = ("seq", "app_id", "dnn", "kind", "lambda_rps", "tau_ms", "cpu_cores", "cpu_service_ms", "frontend_mib")
_CHUNK = 4096


@dataclass(frozen=True)
class ArrivalSpec:
    """How an app's requests arrive: Poisson or evenly spaced, with an optional rate step."""

    mode: str = "poisson"
    step_at: float | None = None
    step_factor: float = 1.0

    def __post_init__(self):
        if self.mode not in ("poisson", "deterministic"):
            raise ValueError(f"unknown arrival mode {self.mode!r}")
        if self.step_factor <= 0:
            raise ValueError("step_factor must be > 0")


def _crc(s: str) -> int:
    return zlib.crc32(s.encode())


def app_rng(seed: int, app_id: str, stream: str = "arrivals") -> np.random.Generator:
    """Generator private to one (app, stream) pair, so apps never share draws."""
    return np.random.default_rng([int(seed), _crc(app_id), _crc(stream)])


def arrival_stream(lam: float, rng: np.random.Generator, spec: ArrivalSpec = ArrivalSpec(),
                   horizon: float = math.inf, start: float = 0.0) -> Iterator[float]:
    """Arrival times (s) in (start, horizon).

    Points of a unit-rate process are mapped through the inverse cumulative
    intensity, which handles the optional rate step exactly.
    """
    if lam <= 0:
        return
    if spec.step_at is None:
        t_step = u_step = math.inf
    else:
        t_step = max(spec.step_at, start)
        u_step = lam * (t_step - start)
    lam2 = lam * spec.step_factor
    u0 = 0.0
    k0 = 0
    while True:
        if spec.mode == "poisson":
            u = u0 + np.cumsum(rng.standard_exponential(_CHUNK))
            u0 = float(u[-1])
        else:
            u = np.arange(k0 + 1, k0 + _CHUNK + 1, dtype=float)
            k0 += _CHUNK
        if u_step == math.inf:
            t = start + u / lam
        else:
            t = np.where(u < u_step, start + u / lam, t_step + (u - u_step) / lam2)
        for x in t.tolist():
            if x >= horizon:
                return
            yield x


def arrival_process(app: ApplicationSpec, seed: int, spec: ArrivalSpec = ArrivalSpec(),
                    horizon: float = math.inf) -> Iterator[float]:
    return arrival_stream(app.lam, app_rng(seed, app.app_id), spec, horizon)


@dataclass(frozen=True)
class TraceSpec:
    """Random application mix.

    ``rate_range`` (req/s) and ``tau_range`` (multiples of the standalone exec
    time on ``reference_device``) may be one pair for all categories or a
    mapping keyed by category. Rates are capped so the app alone loads the
    reference device to at most ``max_standalone_rho``.
    """

    n_apps: int
    seed: int = 0
    proportions: tuple[float, float, float] = (0.47, 0.33, 0.20)
    rate_range: tuple[float, float] | Mapping[Scale, tuple[float, float]] = (1.0, 20.0)
    tau_range: tuple[float, float] | Mapping[Scale, tuple[float, float]] = (3.0, 10.0)
    aias_fraction: float = 0.5
    reference_device: DeviceKind = DeviceKind.EDGE_GPU
    max_standalone_rho: float = 0.5
    cpu_cores: float = 1.0
    cpu_service_ms: float = 2.0
    frontend_mib: float = 100.0
    id_prefix: str = "app"

    def __post_init__(self):
        if self.n_apps < 0:
            raise ValueError("n_apps must be >= 0")
        if len(self.proportions) != 3 or min(self.proportions) < 0:
            raise ValueError("proportions must be three non-negative fractions")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ValueError("proportions must sum to 1")
        if not 0.0 <= self.aias_fraction <= 1.0:
            raise ValueError("aias_fraction must be in [0, 1]")
        for cat in CATEGORIES:
            for lo, hi in (self.rates(cat), self.taus(cat)):
                if not 0 < lo <= hi:
                    raise ValueError(f"bad range ({lo}, {hi}) for {cat.value}")
        if min(self.taus(c)[0] for c in CATEGORIES) <= 1.0:
            raise ValueError("tau multipliers must exceed 1 so a lone app can meet its bound")

    def rates(self, cat: Scale) -> tuple[float, float]:
        return _per_category(self.rate_range, cat)

    def taus(self, cat: Scale) -> tuple[float, float]:
        return _per_category(self.tau_range, cat)


def _per_category(r, cat: Scale) -> tuple[float, float]:
    if isinstance(r, Mapping):
        lo, hi = r[cat]
    else:
        lo, hi = r
    return float(lo), float(hi)


def _catalog(profiles: Mapping[str, DnnProfile], device: DeviceKind) -> dict[Scale, list[DnnProfile]]:
    out = {c: [] for c in CATEGORIES}
    for name in sorted(profiles):
        p = profiles[name]
        if p.supports(device):
            out[p.scale].append(p)
    return out


def gen_app_trace(spec: TraceSpec, profiles: Mapping[str, DnnProfile]) -> list[ApplicationSpec]:
    """Draw ``spec.n_apps`` applications.

    App i uses a generator seeded by (seed, i) only, so a shorter trace is an
    exact prefix of a longer one with the same seed.
    """
    catalog = _catalog(profiles, spec.reference_device)
    for cat, frac in zip(CATEGORIES, spec.proportions):
        if frac > 0 and not catalog[cat]:
            raise ValueError(f"no {cat.value} models available on {spec.reference_device.value}")
    cum = np.cumsum(spec.proportions)
    apps = []
    for i in range(spec.n_apps):
        rng = np.random.default_rng([int(spec.seed), i, _crc("trace")])
        u_cat, u_model, u_rate, u_tau, u_kind = rng.random(5)
        ci = min(int(np.searchsorted(cum, u_cat, side="right")), 2)
        while spec.proportions[ci] == 0:  # float edge at the top of the cdf
            ci -= 1
        cat = CATEGORIES[ci]
        models = catalog[cat]
        dnn = models[min(int(u_model * len(models)), len(models) - 1)]
        exec_ms = dnn.exec_time(spec.reference_device)
        lo, hi = spec.rates(cat)
        cap = spec.max_standalone_rho * 1000.0 / exec_ms
        lo, hi = min(lo, cap), min(hi, cap)
        lam = lo + (hi - lo) * u_rate
        tlo, thi = spec.taus(cat)
        tau = (tlo + (thi - tlo) * u_tau) * exec_ms
        kind = AppKind.AIAAS if u_kind < spec.aias_fraction else AppKind.USER_TRAINED
        apps.append(ApplicationSpec(
            app_id=f"{spec.id_prefix}{i:04d}",
            dnn=dnn.name,
            lam=round(float(lam), 6),
            tau_ms=round(float(tau), 6),
            kind=kind,
            cpu_cores=spec.cpu_cores,
            cpu_service_ms=spec.cpu_service_ms,
            frontend_mib=spec.frontend_mib,
        ))
    return apps


def category_of(profile: DnnProfile) -> Scale:
    return profile.scale


def trace_to_csv(apps: Sequence[ApplicationSpec]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for i, a in enumerate(apps):
        w.writerow([i, a.app_id, a.dnn, a.kind.value, repr(a.lam), repr(a.tau_ms), repr(a.cpu_cores),
                    repr(a.cpu_service_ms), repr(a.frontend_mib)])
    return buf.getvalue()


def write_trace(apps: Sequence[ApplicationSpec], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        f.write(trace_to_csv(apps))


def read_trace(path: str | os.PathLike) -> list[ApplicationSpec]:
    """Load a trace CSV; rows are returned in ``seq`` order."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if rows:
        missing = set(TRACE_COLUMNS) - set(rows[0])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for n, r in enumerate(sorted(rows, key=lambda r: int(r["seq"])), start=2):
        try:
            out.append(ApplicationSpec(
                app_id=r["app_id"],
                dnn=r["dnn"],
                lam=float(r["lambda_rps"]),
                tau_ms=float(r["tau_ms"]),
                kind=AppKind(r["kind"]),
                cpu_cores=float(r["cpu_cores"]),
                cpu_service_ms=float(r["cpu_service_ms"]),
                frontend_mib=float(r["frontend_mib"]),
            ))
        except (KeyError, ValueError) as e:
            raise ValueError(f"{path}: bad trace row {n}: {e}") from e
    return out
