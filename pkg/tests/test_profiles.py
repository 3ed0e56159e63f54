import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesim.profiles import (
    COLUMNS,
    JETSON_NANO,
    USB_EDGE_TPU,
    AcceleratorModel,
    DeviceKind,
    ProfileError,
    bundled_profiles,
    dump_profile_rows,
    fit_batch_params,
    load_profile_table,
    profile_to_row,
    switch_overhead,
    write_profile_table,
)


@pytest.fixture(scope="module")
def profiles():
    return bundled_profiles()


def test_mobilenet_row(profiles):
    p = profiles["MobileNetV2"]
    assert p.exec_time(DeviceKind.EDGE_GPU) == 13.02
    assert p.static_mib == 22
    assert p.runtime_mib == 1130


def test_yolo_row(profiles):
    p = profiles["YoloV4"]
    assert p.exec_time(DeviceKind.EDGE_GPU) == 407.91
    assert p.static_mib == 445


def test_every_model_has_edge_gpu_time(profiles):
    assert len(profiles) == 21
    assert all(p.supports(DeviceKind.EDGE_GPU) for p in profiles.values())


def test_header_only_file_is_empty(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text(",".join(COLUMNS) + "\n")
    assert load_profile_table(f) == []


def test_round_trip(tmp_path, profiles):
    f = tmp_path / "t.csv"
    write_profile_table(profiles.values(), f)
    again = {p.name: p for p in load_profile_table(f)}
    assert again == profiles
    assert all(again[k].exec_ms == profiles[k].exec_ms for k in profiles)


@pytest.mark.parametrize("bad, where", [
    ({"exec_ms_edgegpu": "-3"}, "exec_ms_edgegpu"),
    ({"static_mib": "9999"}, "static_mib"),
    ({"gflops": "lots"}, "gflops"),
    ({"scale": "XL"}, "scale"),
])
def test_malformed_rows_name_row_and_column(tmp_path, profiles, bad, where):
    row = profile_to_row(profiles["AlexNet"])
    row.update(bad)
    f = tmp_path / "t.csv"
    f.write_text(dump_profile_rows([profile_to_row(profiles["ResNet18"]), row]))
    with pytest.raises(ProfileError) as e:
        load_profile_table(f)
    assert e.value.row == 2
    assert e.value.column == where


def test_unknown_column_rejected(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("name,scale,param_count_m,static_mib,runtime_mib,gflops,colour\n")
    with pytest.raises(ProfileError, match="unknown columns"):
        load_profile_table(f)


def test_profile_dir_override(tmp_path, monkeypatch, profiles):
    write_profile_table([profiles["AlexNet"]], tmp_path / "dnn_profiles.csv")
    monkeypatch.setenv("EDGESIM_PROFILE_DIR", str(tmp_path))
    assert list(bundled_profiles()) == ["AlexNet"]


def test_switch_overhead_examples(profiles):
    dnn = profiles["MobileNetV2"]
    zero = type(dnn)(**{**dnn.__dict__, "onchip_mib": 0.0, "static_mib": 0.0})
    assert switch_overhead(zero, AcceleratorModel(DeviceKind.EDGE_TPU, 4096, switch_alpha=10, switch_beta=1)) == 10
    seven = type(dnn)(**{**dnn.__dict__, "onchip_mib": 7.0})
    assert switch_overhead(seven, USB_EDGE_TPU) == 16
    assert 10 <= switch_overhead(seven, USB_EDGE_TPU) <= 17
    assert switch_overhead(dnn, JETSON_NANO) == 0


_ALEX = bundled_profiles()["AlexNet"]


@given(st.floats(0, 8), st.floats(0, 8), st.floats(0, 50), st.floats(0, 5))
def test_switch_overhead_monotone_in_onchip(a, b, alpha, beta):
    base = _ALEX
    lo, hi = sorted((a, b))
    dev = AcceleratorModel(DeviceKind.EDGE_TPU, 4096, switch_alpha=alpha, switch_beta=beta)
    p_lo = type(base)(**{**base.__dict__, "onchip_mib": lo})
    p_hi = type(base)(**{**base.__dict__, "onchip_mib": hi})
    assert switch_overhead(p_lo, dev) <= switch_overhead(p_hi, dev)


def test_fit_batch_exact():
    bp, resid = fit_batch_params([(b, 5 + 20 / b) for b in (1, 2, 4, 8)])
    assert bp.k1 == pytest.approx(5, abs=1e-12)
    assert bp.k2 == pytest.approx(20, abs=1e-12)
    assert np.max(np.abs(resid)) < 1e-12


def test_fit_batch_degenerate():
    with pytest.raises(ValueError, match="degenerate fit"):
        fit_batch_params([(4, 10.0), (4, 10.0)])


def test_fit_batch_noisy_matches_grid_search():
    rng = np.random.default_rng(3)
    bs = [1, 2, 4, 8, 16, 1, 2, 4, 8, 16]
    samples = [(b, (5 + 20 / b) * (1 + rng.uniform(-0.02, 0.02))) for b in bs]
    bp, _ = fit_batch_params(samples)
    assert bp.k1 == pytest.approx(5, rel=0.05)
    assert bp.k2 == pytest.approx(20, rel=0.05)
    grid = itertools.product(np.arange(4.0, 6.0, 0.01), np.arange(18.0, 22.0, 0.01))
    sse = lambda k: sum((t - k[0] - k[1] / b) ** 2 for b, t in samples)
    best = min(grid, key=sse)
    assert bp.k1 == pytest.approx(best[0], abs=0.011)
    assert bp.k2 == pytest.approx(best[1], abs=0.011)


@settings(max_examples=50)
@given(st.floats(0.1, 100), st.floats(0, 500), st.lists(st.integers(1, 64), min_size=2, max_size=8, unique=True))
def test_fit_batch_recovers_any_exact_profile(k1, k2, bs):
    bp, _ = fit_batch_params([(b, k1 + k2 / b) for b in bs])
    assert bp.k1 == pytest.approx(k1, rel=1e-9, abs=1e-9)
    assert bp.k2 == pytest.approx(k2, rel=1e-9, abs=1e-7)
