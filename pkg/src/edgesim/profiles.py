"""DNN and accelerator profiles.

The bundled table carries the Jetson Nano measurements for 21 DNNs plus
synthetic EdgeTPU / discrete-GPU execution times (see
``scripts/build_profile_table.py``).
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ONCHIP_CAPACITY_MIB = 8.0
PROFILE_DIR_ENV = "EDGESIM_PROFILE_DIR"
BUNDLED_TABLE = "dnn_profiles.csv"


class DeviceKind(str, Enum):
    EDGE_TPU = "edgetpu"
    EDGE_GPU = "edgegpu"
    DISCRETE_GPU_MPS = "mps"


class Scale(str, Enum):
    SMALL = "S"
    MEDIUM = "M"
    LARGE = "L"


COLUMNS = (
    "name",
    "scale",
    "param_count_m",
    "static_mib",
    "runtime_mib",
    "gflops",
    "exec_ms_edgegpu",
    "exec_ms_edgetpu",
    "exec_ms_mps",
    "onchip_mib",
    "offchip_mib",
)
REQUIRED = ("name", "scale", "param_count_m", "static_mib", "runtime_mib", "gflops")
EXEC_COLUMNS = {
    DeviceKind.EDGE_GPU: "exec_ms_edgegpu",
    DeviceKind.EDGE_TPU: "exec_ms_edgetpu",
    DeviceKind.DISCRETE_GPU_MPS: "exec_ms_mps",
}


class ProfileError(ValueError):
    """Raised for malformed profile tables or invariant violations."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class DnnProfile:
    name: str
    scale: Scale
    param_count_m: float
    static_mib: float
    runtime_mib: float
    gflops: float
    exec_ms: Mapping[DeviceKind, float] = field(hash=False)
    onchip_mib: float = 0.0
    offchip_mib: float = 0.0

    def __post_init__(self):
        for kind, ms in self.exec_ms.items():
            if not ms > 0:
                raise ProfileError(f"{self.name}: exec time on {kind.value} must be > 0", column=EXEC_COLUMNS[kind])
        if self.static_mib > self.runtime_mib:
            raise ProfileError(f"{self.name}: static size exceeds runtime footprint", column="static_mib")
        if self.onchip_mib > ONCHIP_CAPACITY_MIB:
            raise ProfileError(f"{self.name}: on-chip share exceeds {ONCHIP_CAPACITY_MIB} MiB", column="onchip_mib")

    def supports(self, kind: DeviceKind) -> bool:
        return kind in self.exec_ms

    def exec_time(self, kind: DeviceKind) -> float:
        try:
            return self.exec_ms[kind]
        except KeyError:
            raise KeyError(f"{self.name} has no profile for {kind.value}") from None


@dataclass(frozen=True)
class AcceleratorModel:
    """An accelerator type: what it multiplexes like and how big it is."""

    kind: DeviceKind
    memory_capacity: float
    parallelism_c: float = 1.0
    switch_alpha: float = 9.0
    switch_beta: float = 1.0

    def __post_init__(self):
        if self.memory_capacity <= 0:
            raise ValueError("memory_capacity must be > 0")
        if self.parallelism_c < 1:
            raise ValueError("parallelism_c must be >= 1")
        if self.kind is not DeviceKind.DISCRETE_GPU_MPS and self.parallelism_c != 1:
            raise ValueError(f"{self.kind.value} devices have parallelism_c == 1")
        if self.switch_alpha < 0 or self.switch_beta < 0:
            raise ValueError("switch coefficients must be non-negative")


# Jetson Nano: 4 GiB shared between CPU and GPU.
JETSON_NANO = AcceleratorModel(DeviceKind.EDGE_GPU, memory_capacity=4096.0)
# USB edgeTPU hosted on a Nano-class board; models live in host RAM.
USB_EDGE_TPU = AcceleratorModel(DeviceKind.EDGE_TPU, memory_capacity=4096.0)
# GTX-1080 with MPS enabled; c is the measured parallel speedup.
GTX_1080_MPS = AcceleratorModel(DeviceKind.DISCRETE_GPU_MPS, memory_capacity=8192.0, parallelism_c=1.65)


@dataclass(frozen=True)
class BatchProfile:
    """Batch service time constants, ``S_b = k1 + k2 / b`` in ms."""

    k1: float
    k2: float

    def __post_init__(self):
        if not self.k1 > 0 or self.k2 < 0:
            raise ValueError(f"batch profile needs k1 > 0 and k2 >= 0, got k1={self.k1}, k2={self.k2}")


def switch_overhead(dnn: DnnProfile, dev: AcceleratorModel) -> float:
    """Context-switch cost (ms) of loading ``dnn`` onto ``dev``.

    Only the edgeTPU reloads on-chip weights; GPU context switches are
    treated as free.
    """
    if dev.kind is not DeviceKind.EDGE_TPU:
        return 0.0
    return dev.switch_alpha + dev.switch_beta * dnn.onchip_mib


def fit_batch_params(samples: Iterable[tuple[float, float]]) -> tuple[BatchProfile, np.ndarray]:
    """Least-squares fit of ``S_b = k1 + k2/b`` to (batch size, ms) samples.

    Returns the profile and the per-sample residuals (observed - fitted).
    """
    pts = [(float(b), float(t)) for b, t in samples]
    if any(b < 1 or t <= 0 for b, t in pts):
        raise ValueError("batch sizes must be >= 1 and times > 0")
    if len({b for b, _ in pts}) < 2:
        raise ValueError("degenerate fit: need at least 2 distinct batch sizes")
    b = np.array([p[0] for p in pts])
    t = np.array([p[1] for p in pts])
    design = np.column_stack([np.ones_like(b), 1.0 / b])
    (k1, k2), *_ = np.linalg.lstsq(design, t, rcond=None)
    # least squares leaves round-off around an exact zero
    tol = 1e-9 * float(np.max(t))
    k2 = 0.0 if abs(k2) < tol else k2
    return BatchProfile(float(k1), float(k2)), t - design @ np.array([k1, k2])


def _num(raw: str, row: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ProfileError(f"not a number: {raw!r}", row=row, column=column) from None


def _parse_rows(lines: Iterable[str], source: str) -> list[DnnProfile]:
    reader = csv.DictReader(line for line in lines if not line.lstrip().startswith("#"))
    if reader.fieldnames is None:
        raise ProfileError(f"{source}: missing header")
    header = [h.strip() for h in reader.fieldnames]
    unknown = set(header) - set(COLUMNS)
    if unknown:
        raise ProfileError(f"{source}: unknown columns {sorted(unknown)}")
    missing = [c for c in REQUIRED if c not in header]
    if missing:
        raise ProfileError(f"{source}: missing columns {missing}")

    profiles = []
    # data rows are numbered from 1, header excluded
    for i, raw in enumerate(reader, start=1):
        rec = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
        if None in raw:
            raise ProfileError("too many fields", row=i)
        try:
            scale = Scale(rec["scale"])
        except ValueError:
            raise ProfileError(f"unknown scale {rec['scale']!r}", row=i, column="scale") from None
        exec_ms = {}
        for kind, col in EXEC_COLUMNS.items():
            if rec.get(col):
                exec_ms[kind] = _num(rec[col], i, col)
        static = _num(rec["static_mib"], i, "static_mib")
        onchip = _num(rec["onchip_mib"], i, "onchip_mib") if rec.get("onchip_mib") else min(static, ONCHIP_CAPACITY_MIB)
        offchip = _num(rec["offchip_mib"], i, "offchip_mib") if rec.get("offchip_mib") else max(static - onchip, 0.0)
        if not rec["name"]:
            raise ProfileError("empty name", row=i, column="name")
        try:
            profiles.append(
                DnnProfile(
                    name=rec["name"],
                    scale=scale,
                    param_count_m=_num(rec["param_count_m"], i, "param_count_m"),
                    static_mib=static,
                    runtime_mib=_num(rec["runtime_mib"], i, "runtime_mib"),
                    gflops=_num(rec["gflops"], i, "gflops"),
                    exec_ms=exec_ms,
                    onchip_mib=onchip,
                    offchip_mib=offchip,
                )
            )
        except ProfileError as exc:
            raise ProfileError(str(exc), row=i, column=exc.column) from None
    return profiles


def load_profile_table(path: str | os.PathLike) -> list[DnnProfile]:
    with open(path, newline="") as fh:
        return _parse_rows(fh, str(path))


def bundled_table_path() -> Path:
    override = os.environ.get(PROFILE_DIR_ENV)
    if override:
        return Path(override) / BUNDLED_TABLE
    return Path(str(resources.files("edgesim.data").joinpath(BUNDLED_TABLE)))


def bundled_profiles() -> dict[str, DnnProfile]:
    return {p.name: p for p in load_profile_table(bundled_table_path())}


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def dump_profile_rows(rows: Sequence[Mapping[str, object]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else _fmt(row[k]) if isinstance(row[k], (int, float)) else row[k])
                         for k in COLUMNS})
    return buf.getvalue()


def profile_to_row(p: DnnProfile) -> dict:
    row = dict(
        name=p.name,
        scale=p.scale.value,
        param_count_m=p.param_count_m,
        static_mib=p.static_mib,
        runtime_mib=p.runtime_mib,
        gflops=p.gflops,
        onchip_mib=p.onchip_mib,
        offchip_mib=p.offchip_mib,
    )
    for kind, col in EXEC_COLUMNS.items():
        row[col] = p.exec_ms.get(kind)
    return row


def write_profile_table(profiles: Iterable[DnnProfile], path: str | os.PathLike) -> None:
    Path(path).write_text(dump_profile_rows([profile_to_row(p) for p in profiles]))
