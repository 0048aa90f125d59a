"""Synthetic incident generator: a random service DAG with an injected fault
that propagates along edges into the KPI, emitted as metrics, logs, and KPI
series on a shared grid together with the ground truth."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .telemetry import (
    KpiSeries,
    LogLine,
    MetricSeries,
    write_metrics_csv,
)

FAULT_KINDS = ("cpu_spike", "disk_full", "ddos_long")

_BASE_TS = 1_700_000_000.0
_METRIC_FACTORS = ("cpu", "disk", "latency", "throughput")
_PROPAGATION_GAIN_RANGE = (0.5, 0.9)
_PROPAGATION_LAG_STEPS = 3
_RESPONSE_TAU_RANGE = (1.0, 2.5)
# fault intensity fluctuates stochastically so every streaming window carries
# fresh innovations that reach downstream entities only after the lag; a
# deterministic or constant profile would leave edge direction unidentifiable
_MODULATION_AR = 0.9
_MODULATION_DEPTH = 0.6
_ANOMALY_SIGMAS = 12.0

_BENIGN_TEMPLATES = (
    "request {rid} completed in {ms} ms",
    "health check ok after {ms} ms",
    "cache hit ratio {pct} percent",
    "served {n} requests",
)
_ERROR_TEMPLATES = (
    "error processing request {rid}",
    "critical resource pressure at {pct} percent",
    "exception in handler h{n}",
    "fatal timeout contacting upstream after {ms} ms",
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_entities: int = 10
    d_m: int = 4
    d_l: int = 2
    density: float = 0.3
    fault: str = "ddos_long"
    fault_start_s: float = 3600.0
    fault_duration_s: float = 3000.0
    noise_sigma: float = 0.1
    grid_step_s: float = 10.0
    horizon_s: float = 7200.0
    root_entity: str | None = None
    base_log_rate: float = 2.0
    kpi_gain: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_entities < 2:
            raise ConfigError("need at least two entities")
        if not 1 <= self.d_m <= len(_METRIC_FACTORS):
            raise ConfigError(f"d_m must be in [1, {len(_METRIC_FACTORS)}]")
        if self.d_l != 2:
            raise ConfigError("log features are fixed to frequency and golden_signal")
        if not 0.0 <= self.density <= 1.0:
            raise ConfigError("density must lie in [0, 1]")
        if self.fault not in FAULT_KINDS:
            raise ConfigError(f"unknown fault {self.fault!r}; choose from {FAULT_KINDS}")
        if self.grid_step_s <= 0 or self.horizon_s <= self.grid_step_s:
            raise ConfigError("horizon must cover at least two grid steps")
        if not 0 <= self.fault_start_s < self.horizon_s:
            raise ConfigError("fault must start inside the horizon")
        if self.fault_duration_s <= 0:
            raise ConfigError("fault duration must be positive")
        if self.noise_sigma <= 0:
            raise ConfigError("noise_sigma must be positive")


@dataclass
class SyntheticCase:
    """One generated incident plus everything needed to score a run on it."""

    config: ScenarioConfig
    entities: list[str]
    nodes: list[str]
    edges: list[tuple[str, str]]
    root_causes: list[str]
    metrics: list[MetricSeries]
    log_lines: list[LogLine]
    kpi: KpiSeries
    anomaly: dict[str, np.ndarray] = field(repr=False)

    def write(self, out_dir: str) -> dict[str, str]:
        """Emit metrics.csv, logs.jsonl, kpi.csv, ground_truth.json."""
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "metrics": os.path.join(out_dir, "metrics.csv"),
            "logs": os.path.join(out_dir, "logs.jsonl"),
            "kpi": os.path.join(out_dir, "kpi.csv"),
            "truth": os.path.join(out_dir, "ground_truth.json"),
        }
        write_metrics_csv(self.metrics, paths["metrics"])
        with open(paths["logs"], "w", encoding="utf-8") as handle:
            for line in self.log_lines:
                handle.write(json.dumps(
                    {"ts": line.ts, "entity": line.entity, "msg": line.msg},
                    sort_keys=True,
                ))
                handle.write("\n")
        with open(paths["kpi"], "w", encoding="utf-8") as handle:
            handle.write("timestamp,value\n")
            for ts, value in zip(self.kpi.timestamps, self.kpi.values):
                handle.write(f"{repr(float(ts))},{repr(float(value))}\n")
        truth = {
            "root_causes": list(self.root_causes),
            "edges": [[src, dst] for src, dst in self.edges],
        }
        with open(paths["truth"], "w", encoding="utf-8") as handle:
            json.dump(truth, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return paths


def _random_dag(rng: np.random.Generator, nodes: Sequence[str], density: float):
    """Edges only run from lower to higher index. Every service sits on the
    serving path, so each one gets a direct edge into the KPI (last node) on
    top of the random service-to-service wiring."""
    n = len(nodes)
    edges: list[tuple[int, int]] = []
    for i in range(n - 1):
        targets = [j for j in range(i + 1, n - 1) if rng.random() < density]
        targets.append(n - 1)
        edges.extend((i, j) for j in targets)
    return edges


def _ar1(
    rng: np.random.Generator, steps: int, level: float, sigma: float,
    coef: float = 0.8,
) -> np.ndarray:
    out = np.empty(steps)
    # start at the stationary law, not at the level: a cold start would give
    # early windows an artificially tight spread and bait the trigger
    out[0] = level + rng.normal(0.0, sigma / np.sqrt(1.0 - coef ** 2))
    noise = rng.normal(0.0, sigma, size=steps)
    for t in range(1, steps):
        out[t] = level + coef * (out[t - 1] - level) + noise[t]
    return out


def _modulation(rng: np.random.Generator, steps: int) -> np.ndarray:
    """Bounded positive fluctuation in [1-depth, 1+depth] around 1."""
    noise = rng.normal(0.0, 1.0, steps)
    scale = np.sqrt(1.0 - _MODULATION_AR ** 2)
    ou = np.empty(steps)
    acc = 0.0
    for t in range(steps):
        acc = _MODULATION_AR * acc + scale * noise[t]
        ou[t] = acc
    return 1.0 + _MODULATION_DEPTH * np.tanh(ou)


def _injection(cfg: ScenarioConfig, steps: int, wave: np.ndarray) -> np.ndarray:
    """Fault intensity profile on the root entity, in baseline-noise units."""
    amp = _ANOMALY_SIGMAS * cfg.noise_sigma
    s0 = int(cfg.fault_start_s // cfg.grid_step_s)
    s1 = min(int((cfg.fault_start_s + cfg.fault_duration_s) // cfg.grid_step_s), steps)
    envelope = np.zeros(steps)
    if cfg.fault in ("cpu_spike", "ddos_long"):
        envelope[s0:s1] = 1.0
    else:  # disk_full: fill up over ~2 minutes, then stay saturated
        ramp = min(max(s1 - s0, 1), int(120.0 // cfg.grid_step_s))
        envelope[s0:s0 + ramp] = (np.arange(ramp) + 1) / ramp
        envelope[s0 + ramp:] = 1.0
    return amp * envelope * wave


def _ema(values: np.ndarray, tau: float) -> np.ndarray:
    """Causal exponential smoothing; tau in grid steps, tau=1 is passthrough."""
    alpha = 1.0 / max(tau, 1.0)
    out = np.empty_like(values)
    acc = 0.0
    for t in range(values.shape[0]):
        acc = alpha * values[t] + (1.0 - alpha) * acc
        out[t] = acc
    return out


def _fault_factor(fault: str) -> int:
    return 1 if fault == "disk_full" else 0


def simulate(cfg: ScenarioConfig) -> SyntheticCase:
    rng = np.random.default_rng(cfg.seed)
    steps = int(cfg.horizon_s // cfg.grid_step_s)
    grid = _BASE_TS + cfg.grid_step_s * np.arange(steps)
    entities = [f"svc{i:02d}" for i in range(cfg.n_entities)]
    nodes = entities + ["kpi"]
    edge_idx = _random_dag(rng, nodes, cfg.density)
    edges = [(nodes[i], nodes[j]) for i, j in edge_idx]

    root = cfg.root_entity
    if root is None:
        root = entities[int(rng.integers(0, cfg.n_entities))]
    elif root not in entities:
        raise ConfigError(f"root entity {root!r} is not one of the services")

    # fault propagation along the DAG; node order is already topological
    parents: dict[int, list[int]] = {j: [] for j in range(len(nodes))}
    for i, j in edge_idx:
        parents[j].append(i)
    wave = _modulation(rng, steps)
    gains = {pair: rng.uniform(*_PROPAGATION_GAIN_RANGE) for pair in edge_idx}
    taus = rng.uniform(*_RESPONSE_TAU_RANGE, size=len(nodes))
    anomaly = {name: np.zeros(steps) for name in nodes}
    anomaly[root] = _injection(cfg, steps, wave)
    for j, name in enumerate(nodes):
        acc = anomaly[name].copy()
        inflow = np.zeros(steps)
        for i in parents[j]:
            upstream = anomaly[nodes[i]]
            shifted = np.zeros(steps)
            shifted[_PROPAGATION_LAG_STEPS:] = upstream[:steps - _PROPAGATION_LAG_STEPS]
            # bottleneck semantics: degradation tracks the worst upstream
            # dependency, so amplitude strictly decays with depth from the root
            inflow = np.maximum(inflow, gains[(i, j)] * shifted)
        if parents[j]:
            # each entity reacts with its own inertia, so downstream shapes
            # are smoothed, lagged variants rather than exact copies
            acc += _ema(inflow, float(taus[j]))
        anomaly[name] = acc

    fault_factor = _fault_factor(cfg.fault)
    metrics: list[MetricSeries] = []
    for entity in entities:
        coupling = rng.uniform(0.2, 0.6, size=cfg.d_m)
        coupling[fault_factor] = 1.0
        for f in range(cfg.d_m):
            level = rng.uniform(2.0, 6.0)
            base = _ar1(rng, steps, level, cfg.noise_sigma)
            metrics.append(MetricSeries(
                entity=entity,
                factor=_METRIC_FACTORS[f],
                timestamps=grid.copy(),
                values=base + coupling[f] * anomaly[entity],
            ))

    kpi_level = rng.uniform(2.0, 6.0)
    # weak persistence keeps the KPI compatible with trailing-window detection
    kpi_values = _ar1(rng, steps, kpi_level, cfg.noise_sigma, coef=0.4)
    kpi_values += cfg.kpi_gain * anomaly["kpi"]
    kpi = KpiSeries(timestamps=grid.copy(), values=kpi_values)

    amp = _ANOMALY_SIGMAS * cfg.noise_sigma
    log_lines: list[LogLine] = []
    for entity in entities:
        for t in range(steps):
            benign_rate = cfg.base_log_rate
            if cfg.fault == "ddos_long" and entity == root and anomaly[entity][t] > 0:
                benign_rate *= 2.0  # request flood shows up as extra chatter
            error_rate = 3.0 * max(anomaly[entity][t], 0.0) / amp
            for kind, lam in (("benign", benign_rate), ("error", error_rate)):
                count = int(rng.poisson(lam))
                templates = _BENIGN_TEMPLATES if kind == "benign" else _ERROR_TEMPLATES
                for _ in range(count):
                    template = templates[int(rng.integers(0, len(templates)))]
                    msg = template.format(
                        rid=int(rng.integers(1000, 9999)),
                        ms=int(rng.integers(1, 500)),
                        pct=int(rng.integers(1, 100)),
                        n=int(rng.integers(1, 50)),
                    )
                    ts = grid[t] + float(rng.uniform(0.0, cfg.grid_step_s))
                    log_lines.append(LogLine(ts=ts, entity=entity, msg=msg))
    log_lines.sort(key=lambda line: (line.ts, line.entity, line.msg))

    return SyntheticCase(
        config=cfg,
        entities=entities,
        nodes=nodes,
        edges=edges,
        root_causes=[root],
        metrics=metrics,
        log_lines=log_lines,
        kpi=kpi,
        anomaly=anomaly,
    )
