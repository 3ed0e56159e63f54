import pytest
import yaml

from edgesim.profiles import GTX_1080_MPS, DeviceKind, Scale
from edgesim.scenario import ScenarioError, load_scenario, parse_scenario

BASE = {
    "schema_version": 1,
    "cluster": {"nodes": [{"count": 2, "cpu_cores": 4, "mem_mib": 4096, "devices": ["edgegpu"]},
                          {"cpu_cores": 4, "mem_mib": 4096, "devices": [{"kind": "edgetpu", "switch_alpha_ms": 5}]}]},
    "trace": {"spec": {"n_apps": 5, "seed": 1, "rate_range": {"S": [1, 5], "M": [1, 3], "L": [0.5, 1]}}},
    "policy": {"placement": "heterogeneous", "heuristic": "highest"},
    "simulation": {"seed": 4, "horizon_ms": 30000, "warmup_ms": 5000},
    "dynamics": {"window_ms": 5000, "burst_ms": 3000},
}


def test_parse_full():
    sc = parse_scenario(BASE)
    assert len(sc.cluster.nodes) == 3
    assert sc.cluster.nodes[2].devices[0].switch_alpha == 5
    assert sc.cluster.kinds == {DeviceKind.EDGE_GPU, DeviceKind.EDGE_TPU}
    assert sc.trace_spec.rates(Scale.LARGE) == (0.5, 1.0)
    assert sc.sim.horizon == 30.0 and sc.sim.warmup == 5.0
    assert sc.dynamics.window_s == 5.0 and sc.bridge.burst_s == 3.0 and sc.bridge.police
    assert len(sc.apps()) == 5
    assert sc.validate() == []


def test_defaults():
    sc = parse_scenario({"schema_version": 1})
    assert len(sc.cluster.nodes) == 10
    assert sc.cluster.nodes[0].devices[0] == GTX_1080_MPS
    assert sc.apps() == []


@pytest.mark.parametrize("patch, msg", [
    ({"colour": 1}, "unknown keys"),
    ({"schema_version": 2}, "schema_version"),
    ({"policy": {"placement": "psychic"}}, "placement"),
    ({"policy": {"heuristic": "median"}}, "policy"),
    ({"simulation": {"horizon_ms": 10, "warmup_ms": 20}}, "horizon"),
    ({"trace": {"spec": {"n_apps": 3}, "path": "x.csv"}}, "exactly one"),
    ({"trace": {"spec": {"n_apps": 3, "lambda": 2}}}, "unknown keys"),
    ({"cluster": {"nodes": [{"cpu_cores": 1, "mem_mib": 1, "devices": ["quantum"]}]}}, "preset"),
    ({"cluster": {"nodes": [{"cpu_cores": 1, "mem_mib": 1}]}}, "missing keys"),
    ({"validate": {"cases": [{"name": "x", "discipline": "lifo", "exec_ms": [1]}]}}, "discipline"),
])
def test_rejects_bad_documents(patch, msg):
    with pytest.raises(ScenarioError, match=msg):
        parse_scenario({**BASE, **patch})


def test_reports_unsupported_dnn(tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("seq,app_id,dnn,kind,lambda_rps,tau_ms,cpu_cores,cpu_service_ms,frontend_mib\n"
                     "0,x,NoSuchNet,UserTrained,1,100,1,2,100\n")
    doc = {**BASE, "trace": {"path": "t.csv"}}
    f = tmp_path / "s.yaml"
    f.write_text(yaml.safe_dump(doc))
    sc = load_scenario(f)
    assert sc.trace_path == trace
    assert "unknown DNN" in sc.validate()[0]


def test_profile_path(tmp_path):
    from edgesim.profiles import bundled_profiles, write_profile_table
    write_profile_table([bundled_profiles()["AlexNet"]], tmp_path / "p.csv")
    f = tmp_path / "s.yaml"
    f.write_text(yaml.safe_dump({"schema_version": 1, "profiles": "p.csv"}))
    assert list(load_scenario(f).profiles) == ["AlexNet"]
