"""Synthetic incident generator: structure, propagation, determinism, files."""

import json

import numpy as np
import pytest

from rcalearn.errors import ConfigError
from rcalearn.simulate import ScenarioConfig, simulate

SMALL = ScenarioConfig(
    n_entities=5, horizon_s=1500.0, fault_start_s=800.0,
    fault_duration_s=400.0, seed=11,
)


@pytest.fixture(scope="module")
def case():
    return simulate(SMALL)


def test_node_layout(case):
    assert case.nodes == case.entities + ["kpi"]
    assert case.entities == [f"svc{i:02d}" for i in range(5)]
    assert case.root_causes[0] in case.entities


def test_edges_follow_node_order(case):
    order = {name: i for i, name in enumerate(case.nodes)}
    for src, dst in case.edges:
        assert order[src] < order[dst]
    # every service keeps a path toward the KPI sink
    outgoing = {src for src, _ in case.edges}
    for entity in case.entities:
        assert entity in outgoing


def test_series_shapes(case):
    steps = int(SMALL.horizon_s // SMALL.grid_step_s)
    assert len(case.kpi.timestamps) == steps
    assert len(case.metrics) == 5 * SMALL.d_m
    for series in case.metrics:
        assert len(series.values) == steps


def test_anomaly_starts_at_fault(case):
    root = case.root_causes[0]
    start_idx = int(SMALL.fault_start_s // SMALL.grid_step_s)
    assert np.all(case.anomaly[root][:start_idx] == 0.0)
    assert case.anomaly[root][start_idx] > 0.0


def test_propagation_lags_downstream(case):
    root = case.root_causes[0]
    children = [dst for src, dst in case.edges if src == root]
    first = int(np.argmax(case.anomaly[root] > 0))
    for child in children:
        child_first = int(np.argmax(case.anomaly[child] > 0))
        assert child_first >= first + 3


def test_unreachable_entities_stay_clean(case):
    root = case.root_causes[0]
    downstream = {root}
    changed = True
    while changed:
        changed = False
        for src, dst in case.edges:
            if src in downstream and dst not in downstream:
                downstream.add(dst)
                changed = True
    for name in case.nodes:
        if name not in downstream:
            assert np.all(case.anomaly[name] == 0.0), name


def test_kpi_receives_fault(case):
    assert case.anomaly["kpi"].max() > 0.0


def test_error_logs_carry_keywords(case):
    root = case.root_causes[0]
    lo = 1_700_000_000.0 + SMALL.fault_start_s
    hi = lo + SMALL.fault_duration_s
    keywords = ("error", "exception", "critical", "fatal")
    hits = [
        line for line in case.log_lines
        if line.entity == root and lo <= line.ts < hi
        and any(k in line.msg.lower() for k in keywords)
    ]
    assert hits


def test_ddos_floods_logs():
    cfg = ScenarioConfig(
        n_entities=4, fault="ddos_long", horizon_s=2400.0, fault_start_s=1200.0,
        fault_duration_s=900.0, seed=5, root_entity="svc01",
    )
    c = simulate(cfg)
    base = 1_700_000_000.0
    def count(lo, hi):
        return sum(1 for ln in c.log_lines
                   if ln.entity == "svc01" and lo <= ln.ts - base < hi)
    before = count(300.0, 1200.0)
    during = count(1200.0, 2100.0)
    # benign rate doubles and error lines appear on top
    assert during > 1.5 * before


def test_fault_kinds_shape_profiles():
    base = dict(n_entities=3, horizon_s=1500.0, fault_start_s=600.0,
                fault_duration_s=300.0, seed=2, root_entity="svc00")
    spike = simulate(ScenarioConfig(fault="cpu_spike", **base))
    s0, s1 = 60, 90
    prof = spike.anomaly["svc00"]
    assert np.all(prof[s0:s1] > 0) and np.all(prof[s1:] == 0.0)
    disk = simulate(ScenarioConfig(fault="disk_full", **base))
    prof = disk.anomaly["svc00"]
    third = (s1 - s0) // 3
    assert prof[s0:s0 + third].mean() < prof[s1 - third:s1].mean()  # ramps up
    assert np.all(prof[s1:] > 0)                 # saturates, never recovers
    assert prof[s1:].mean() > 0.5 * prof.max()   # hold stays near peak level


def test_deterministic_files(tmp_path):
    a = simulate(SMALL)
    b = simulate(SMALL)
    pa = a.write(str(tmp_path / "a"))
    pb = b.write(str(tmp_path / "b"))
    for key in pa:
        with open(pa[key], "rb") as fa, open(pb[key], "rb") as fb:
            assert fa.read() == fb.read(), key


def test_ground_truth_schema(case, tmp_path):
    paths = case.write(str(tmp_path / "c"))
    with open(paths["truth"]) as handle:
        truth = json.load(handle)
    assert set(truth) == {"root_causes", "edges"}
    assert truth["root_causes"] == case.root_causes
    assert truth["edges"] == [[s, d] for s, d in case.edges]


def test_written_files_load_back(case, tmp_path):
    from rcalearn.telemetry import read_kpi_csv, read_logs_jsonl, read_metrics_csv

    paths = case.write(str(tmp_path / "d"))
    metrics = read_metrics_csv(paths["metrics"])
    assert len(metrics) == len(case.metrics)
    kpi = read_kpi_csv(paths["kpi"])
    np.testing.assert_array_equal(kpi.values, case.kpi.values)
    lines = read_logs_jsonl(paths["logs"])
    assert len(lines) == len(case.log_lines)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(fault="meteor")
    with pytest.raises(ConfigError):
        ScenarioConfig(fault_start_s=9000.0, horizon_s=7200.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(d_l=3)
    with pytest.raises(ConfigError):
        ScenarioConfig(n_entities=1)
    with pytest.raises(ConfigError):
        simulate(ScenarioConfig(root_entity="nope"))


def test_root_entity_override():
    cfg = ScenarioConfig(n_entities=3, root_entity="svc02", seed=0)
    assert simulate(cfg).root_causes == ["svc02"]
