import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesim import analytic as an
from edgesim.profiles import BatchProfile
from edgesim.sim import Batched, FcfsNonPreemptive, MultiServerPs, SimApp, SimScenario, TimeShared, simulate
from edgesim.sim.bucket import TokenBucket, run_token_bucket
from edgesim.sim.engine import Simulation, sliding_window_means
from edgesim.workload import ArrivalSpec, app_rng, arrival_stream

from oracles import lindley_fcfs, token_bucket_releases


def one(disc, lam, exec_ms=10.0, **kw):
    return SimScenario([SimApp("a", lam, "dev", exec_ms, **kw)], {"dev": disc})


# --- token bucket ------------------------------------------------------------

def test_bucket_burst():
    out = run_token_bucket(10.0, 5, [0.0] * 6)
    assert out[:5] == [0.0] * 5
    assert out[5] == pytest.approx(0.1)


def test_bucket_conforming_traffic_never_waits_long():
    rng = np.random.default_rng(1)
    arr = np.cumsum(rng.exponential(1 / 5.0, 5000))  # half the token rate
    out = run_token_bucket(10.0, 20, arr)
    assert max(o - a for o, a in zip(out, arr)) <= 20 / 10.0
    assert len(out) == len(arr)


def test_bucket_shapes_overload_to_rate():
    arr = np.arange(0, 10, 1 / 20.0)  # 2x the token rate for 10 s
    out = np.array(run_token_bucket(10.0, 5, arr))
    passed = np.count_nonzero(out <= 10.0)
    assert passed <= 10 * 10 + 5 + 1
    assert passed >= 10 * 10


@settings(max_examples=60)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=200), st.floats(0.5, 50), st.integers(1, 20))
def test_bucket_matches_counting_oracle(arr, rate, burst):
    arr = sorted(arr)
    got = run_token_bucket(rate, burst, arr)
    ref = token_bucket_releases(arr, rate, burst)
    assert got == pytest.approx(ref, abs=1e-9)
    assert all(g >= a - 1e-12 for g, a in zip(got, arr))
    assert all(b >= a for a, b in zip(got, got[1:]))


def test_bucket_rate_change_and_hold():
    tb = TokenBucket(1.0, 1)
    tb.hold_until = 5.0
    assert tb.release_time(0.0) == 5.0
    tb.set_rate(10.0, 5.0)
    assert tb.release_time(5.0) == pytest.approx(5.1)
    with pytest.raises(ValueError):
        TokenBucket(0.0)


# --- FCFS and switches -------------------------------------------------------

def _trace(scen, seed, horizon, warmup=0.0):
    buf = io.StringIO()
    Simulation(scen, seed, horizon, warmup, trace=buf).run()
    return list(csv.DictReader(io.StringIO(buf.getvalue())))


def test_fcfs_matches_lindley_per_request():
    scen = one(FcfsNonPreemptive(), 70.0, service="exponential")
    rows = _trace(scen, 4, 200.0)
    arr = np.array([float(r["t_arrival"]) for r in rows])
    done = np.array([float(r["t_complete"]) for r in rows])
    start = np.array([float(r["t_dev_start"]) for r in rows])
    order = np.argsort(arr)
    arr, done, start = arr[order], done[order], start[order]
    ref = lindley_fcfs(arr, done - start)
    assert np.allclose(done, ref, atol=1e-9)


def test_work_conservation_fcfs():
    rows = _trace(one(FcfsNonPreemptive(), 90.0), 2, 100.0)
    rows.sort(key=lambda r: float(r["t_dev_start"]))
    prev_done = 0.0
    for r in rows:
        # a request starts exactly when it arrives or when the previous one leaves
        s, a = float(r["t_dev_start"]), float(r["t_arrival"])
        assert s == pytest.approx(max(a, prev_done), abs=1e-9)
        prev_done = float(r["t_complete"])


def test_alternating_classes_pay_every_switch():
    scen = SimScenario(
        [SimApp("x", 1.0, "dev", 10.0, switch_ms=5.0, arrival=ArrivalSpec("deterministic")),
         SimApp("y", 1.0, "dev", 10.0, switch_ms=5.0, arrival=ArrivalSpec("deterministic"))],
        {"dev": FcfsNonPreemptive()})
    # shift y by half a period so classes strictly alternate
    sim = Simulation(scen, 0, 200.0, 0.0)
    sim.apps["y"].stream = (t + 0.5 for t in arrival_stream(1.0, app_rng(0, "y"), ArrivalSpec("deterministic"), 199.0))
    sim.events._heap.clear()
    for rt in sim.apps.values():
        sim._schedule_next_arrival(rt)
    rep = sim.run()
    total = rep.apps["x"].completions + rep.apps["y"].completions
    switches = rep.apps["x"].switches + rep.apps["y"].switches
    assert switches == total - 1  # only the very first request is free
    busy = sum(rep.apps[k].mean_device_ms * rep.apps[k].completions for k in "xy")
    assert busy == pytest.approx(15.0 * total - 5.0)


def test_back_to_back_same_class_is_free():
    rep = simulate(one(FcfsNonPreemptive(), 20.0, switch_ms=7.0), 0, 100.0, 0.0)
    assert rep.apps["a"].switches == 0


def test_random_class_sequence_matches_switch_model():
    scen = SimScenario([SimApp("x", 30.0, "dev", 10.0, switch_ms=5.0), SimApp("y", 30.0, "dev", 10.0, switch_ms=5.0)],
                       {"dev": FcfsNonPreemptive()})
    rep = simulate(scen, 9, 1000.0, 10.0)
    busy = rep.devices["dev"].utilization / rep.devices["dev"].throughput * 1000.0
    assert busy == pytest.approx(12.5, rel=0.02)


def test_md1_wait_oracle():
    rep = simulate(one(FcfsNonPreemptive(), 50.0), 1, 10_000.0, 100.0)
    assert rep.apps["a"].mean_wait_ms == pytest.approx(5.0, rel=0.02)


def test_idle_app():
    rep = simulate(one(FcfsNonPreemptive(), 0.0, tau_ms=1.0), 0, 50.0)
    assert rep.apps["a"].requests == 0 and rep.apps["a"].violations == 0


# --- batching ------------------------------------------------------------------

def test_batch_low_load_runs_singletons():
    rep = simulate(one(Batched(8, BatchProfile(5, 20)), 0.5), 0, 2000.0, 0.0)
    assert rep.apps["a"].mean_response_ms == pytest.approx(25.0, rel=0.01)


@pytest.mark.parametrize("b", [1, 4])
def test_batch_saturated_throughput(b):
    cap = b * 1000.0 / (5 + 20 / b)
    rep = simulate(one(Batched(b, BatchProfile(5, 20)), 2 * cap), 0, 20.0, 2.0)
    assert rep.devices["dev"].throughput == pytest.approx(cap, rel=0.02)


# --- processor sharing and the GPU ----------------------------------------------

def test_ps_oracle():
    rep = simulate(one(MultiServerPs(1.0), 90.0, service="exponential"), 3, 3000.0, 100.0)
    assert rep.apps["a"].mean_response_ms == pytest.approx(100.0, rel=0.03)


def test_time_shared_quantum_converges_to_exact_ps():
    a = simulate(one(TimeShared(0.0, "request"), 50.0), 5, 500.0, 10.0).apps["a"].mean_response_ms
    b = simulate(one(TimeShared(0.5, "request"), 50.0), 5, 500.0, 10.0).apps["a"].mean_response_ms
    assert a == pytest.approx(b, rel=0.05)


def test_two_app_gpu_longer_app_inside_envelope():
    scen = SimScenario([SimApp("r", 12.0, "dev", 26.03), SimApp("e", 12.0, "dev", 26.03)],
                       {"dev": TimeShared(1.0)})
    rep = simulate(scen, 1, 2000.0, 50.0)
    m = an.WorkloadMix.of([an.ClassLoad("r", 12.0, 26.03), an.ClassLoad("e", 12.0, 26.03)])
    fcfs, ps = an.gpu_response_bounds(m)
    for k in ("r", "e"):
        assert fcfs[k] * 0.97 <= rep.apps[k].mean_response_ms <= ps[k] * 1.03


def test_littles_law():
    scen = SimScenario([SimApp("a", 40.0, "dev", 10.0), SimApp("b", 20.0, "dev", 15.0, service="exponential")],
                       {"dev": MultiServerPs(1.65)})
    rep = simulate(scen, 2, 2000.0, 100.0)
    lam_eff = rep.devices["dev"].throughput
    mean_dev = sum(rep.apps[k].mean_device_ms * rep.apps[k].completions for k in "ab") / sum(
        rep.apps[k].completions for k in "ab")
    assert rep.devices["dev"].mean_in_system == pytest.approx(lam_eff * mean_dev / 1000.0, rel=0.03)


def test_tandem_cpu_then_device():
    scen = one(FcfsNonPreemptive(), 40.0, cpu_service_ms=5.0, cpu_cores=1.0)
    rep = simulate(scen, 8, 3000.0, 50.0)
    pred = an.end_to_end_response(an.cpu_response(40.0, 5.0, 1.0), 10.0 + an.md1_fcfs_wait(40.0, 100.0))
    assert rep.apps["a"].mean_response_ms == pytest.approx(pred, rel=0.05)


# --- determinism and bookkeeping -------------------------------------------------

def _mixed():
    return SimScenario(
        [SimApp("a", 30.0, "g", 13.02, cpu_service_ms=2.0, tau_ms=40.0),
         SimApp("b", 10.0, "g", 41.32, police=True, bucket_burst=3),
         SimApp("c", 25.0, "t", 10.0, switch_ms=17.0), SimApp("d", 5.0, "t", 20.0, switch_ms=17.0)],
        {"g": TimeShared(1.0), "t": FcfsNonPreemptive()})


def test_determinism_byte_identical():
    a = simulate(_mixed(), 42, 60.0).to_csv()
    b = simulate(_mixed(), 42, 60.0).to_csv()
    c = simulate(_mixed(), 43, 60.0).to_csv()
    assert a == b and a != c


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(5, 40))
def test_counts_are_consistent(seed, horizon):
    rep = simulate(_mixed(), seed, horizon, 0.0)
    assert rep.arrivals == rep.completions + rep.in_flight + rep.queued + rep.dropped


def test_removing_an_app_keeps_other_streams():
    full = _mixed()
    part = SimScenario([a for a in full.apps if a.app_id != "d"], full.devices)
    ta = [float(r["t_arrival"]) for r in _trace(full, 5, 20.0) if r["app_id"] == "a"]
    tb = [float(r["t_arrival"]) for r in _trace(part, 5, 20.0) if r["app_id"] == "a"]
    assert sorted(ta)[:50] == sorted(tb)[:50]


def test_sliding_windows():
    t = np.array([1.0, 2.0, 11.5, 12.0])
    r = np.array([10.0, 20.0, 30.0, 50.0])
    ts, m = sliding_window_means(t, r, 0.0, 13.0, 10.0, 1.0)
    assert list(ts) == [10.0, 11.0, 12.0, 13.0]
    assert m[0] == pytest.approx(15.0) and m[1] == pytest.approx(20.0) and m[2] == pytest.approx(40.0)


def test_bad_scenarios():
    with pytest.raises(ValueError):
        SimScenario([SimApp("a", 1, "nope", 1.0)], {"dev": FcfsNonPreemptive()}).validate()
    with pytest.raises(ValueError):
        SimApp("a", -1, "dev", 1.0)
    with pytest.raises(ValueError):
        TimeShared(context="banana")
    with pytest.raises(ValueError):
        simulate(one(FcfsNonPreemptive(), 1.0), 0, 10.0, 10.0)
    assert math.isnan(simulate(one(FcfsNonPreemptive(), 0.0), 0, 5.0).apps["a"].mean_response_ms)
