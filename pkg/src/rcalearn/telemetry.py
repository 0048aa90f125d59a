"""Telemetry ingestion: parse metric/log/KPI files, featurize logs into count
series, align everything on one grid, window into historical + streaming
batches, z-normalize, and detect the KPI trigger that starts an analysis."""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Protocol, Sequence

import numpy as np

from .errors import (
    DataError,
    GridMismatchError,
    InsufficientHistoryError,
)

logger = logging.getLogger(__name__)

METRICS_MODALITY = "metrics"
LOGS_MODALITY = "logs"
LOG_FACTORS = ("frequency", "golden_signal")
GOLDEN_SIGNAL_KEYWORDS = ("error", "exception", "critical", "fatal")
DEFAULT_KPI_NAME = "kpi"

_STD_GUARD = 1e-8


@dataclass(frozen=True)
class MetricSeries:
    """One (entity, factor) channel sampled on a uniform grid."""

    entity: str
    factor: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise DataError(f"{self.entity}/{self.factor}: timestamp/value length mismatch")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DataError(f"{self.entity}/{self.factor}: timestamps not strictly increasing")


@dataclass(frozen=True)
class KpiSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise DataError("kpi: timestamp/value length mismatch")


class LogLine(NamedTuple):
    ts: object  # raw; featurize_logs validates parseability
    entity: str
    msg: str


@dataclass(frozen=True)
class TelemetryBatch:
    """One windowed view of one modality: values (n, d_v, T), KPI row last."""

    modality: str
    index: int
    entities: list[str]
    factors: list[str]
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n, d_v, t = self.values.shape
        if n != len(self.entities) or d_v != len(self.factors) or t != len(self.timestamps):
            raise DataError("telemetry batch shape does not match its labels")

    @property
    def n_entities(self) -> int:
        return self.values.shape[0]

    @property
    def n_factors(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class BatchPair:
    """The two modality views of the same window."""

    metrics: TelemetryBatch
    logs: TelemetryBatch

    @property
    def index(self) -> int:
        return self.metrics.index


@dataclass(frozen=True)
class LogFeatures:
    """Per-entity count series mined from raw log lines."""

    series: list[MetricSeries]
    skipped_lines: int
    template_counts: dict[str, int]


@dataclass(frozen=True)
class ChannelStats:
    """Per (entity, factor) mean/std used for z-scoring; frozen at history."""

    mean: np.ndarray
    std: np.ndarray


# -- log featurization ---------------------------------------------------------


def _template_key(msg: str, prefix_depth: int) -> tuple[str, ...]:
    # tokens carrying any digit are masked so ids/ports do not split templates
    tokens = [("<num>" if any(c.isdigit() for c in tok) else tok) for tok in msg.split()]
    return tuple(tokens[:prefix_depth])


def featurize_logs(
    lines: Iterable[LogLine],
    grid: np.ndarray,
    keywords: Sequence[str] = GOLDEN_SIGNAL_KEYWORDS,
    prefix_depth: int = 4,
) -> LogFeatures:
    """Turn raw log lines into per-entity `frequency` and `golden_signal` series.

    `frequency` counts template fires (one per parsed line) per grid cell;
    `golden_signal` counts lines containing any keyword, case-insensitive,
    whole-word. Lines with unparseable timestamps or outside the grid are
    skipped and counted in `skipped_lines`.
    """
    if len(grid) < 2:
        raise DataError("log featurization needs a grid of at least two cells")
    step = float(grid[1] - grid[0])
    if step <= 0:
        raise DataError("grid step must be positive")
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(k) for k in keywords) + r")\b", re.IGNORECASE
    )
    frequency: dict[str, np.ndarray] = {}
    golden: dict[str, np.ndarray] = {}
    templates: dict[str, set[tuple[str, ...]]] = {}
    skipped = 0
    start = float(grid[0])
    n_cells = len(grid)
    for line in lines:
        try:
            ts = float(line.ts)
        except (TypeError, ValueError):
            skipped += 1
            continue
        cell = int(round((ts - start) / step))
        if cell < 0 or cell >= n_cells:
            skipped += 1
            continue
        entity = line.entity
        if entity not in frequency:
            frequency[entity] = np.zeros(n_cells)
            golden[entity] = np.zeros(n_cells)
            templates[entity] = set()
        templates[entity].add(_template_key(line.msg, prefix_depth))
        frequency[entity][cell] += 1.0
        if pattern.search(line.msg):
            golden[entity][cell] += 1.0
    if skipped:
        logger.warning("featurize_logs skipped %d unassignable log lines", skipped)
    series: list[MetricSeries] = []
    for entity in sorted(frequency):
        series.append(MetricSeries(entity, "frequency", grid, frequency[entity]))
        series.append(MetricSeries(entity, "golden_signal", grid, golden[entity]))
    return LogFeatures(
        series=series,
        skipped_lines=skipped,
        template_counts={e: len(t) for e, t in sorted(templates.items())},
    )


# -- assembly ------------------------------------------------------------------


def _full_array(
    series: Sequence[MetricSeries],
    entities: list[str],
    factors: list[str],
    grid: np.ndarray,
    zero_fill: bool,
    modality: str,
) -> np.ndarray:
    table = {(s.entity, s.factor): s for s in series}
    extra = sorted({s.entity for s in series} - set(entities))
    if extra:
        logger.warning("%s: dropping series for unknown entities %s", modality, extra)
    full = np.zeros((len(entities), len(factors), len(grid)))
    for i, entity in enumerate(entities):
        for j, factor in enumerate(factors):
            s = table.get((entity, factor))
            if s is None:
                if zero_fill:
                    continue
                raise GridMismatchError(f"{modality}: {entity} is missing factor {factor}")
            if not np.array_equal(s.timestamps, grid):
                raise GridMismatchError(
                    f"{modality}: {entity}/{factor} is not on the shared grid"
                )
            full[i, j, :] = s.values
    return full


def _window(full: np.ndarray, kpi_values: np.ndarray, lo: int, hi: int) -> np.ndarray:
    d_v = full.shape[1]
    kpi_rows = np.tile(kpi_values[lo:hi], (1, d_v, 1))
    return np.concatenate([full[:, :, lo:hi], kpi_rows], axis=0)


def assemble(
    metrics: Sequence[MetricSeries],
    log_features: Sequence[MetricSeries],
    kpi: KpiSeries,
    trigger_ts: float,
    history_steps: int,
    batch_steps: int,
    kpi_name: str = DEFAULT_KPI_NAME,
) -> tuple[BatchPair, Iterator[BatchPair]]:
    """Window both modalities around the trigger.

    Batch 0 holds the last `history_steps` grid steps before the trigger;
    batch i >= 1 holds the i-th consecutive `batch_steps` window starting at
    the trigger. The KPI is appended as the last entity with its values
    duplicated across each modality's factor axis. Metric series must cover
    the KPI grid exactly; entities without log series get zero log features.
    """
    grid = np.asarray(kpi.timestamps, dtype=np.float64)
    if len(grid) < 2:
        raise DataError("kpi series too short to assemble")
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
        raise GridMismatchError("kpi timestamps are not a uniform grid")
    if history_steps < 1 or batch_steps < 1:
        raise DataError("window lengths must be positive")
    entities = sorted({s.entity for s in metrics})
    if not entities:
        raise DataError("no metric series given")
    if kpi_name in entities:
        raise DataError(f"entity name {kpi_name!r} collides with the KPI row")
    metric_factors = sorted({s.factor for s in metrics})
    log_factors = list(LOG_FACTORS)
    full_m = _full_array(metrics, entities, metric_factors, grid, False, METRICS_MODALITY)
    full_l = _full_array(log_features, entities, log_factors, grid, True, LOGS_MODALITY)
    trigger_idx = int(np.searchsorted(grid, trigger_ts, side="left"))
    if trigger_idx >= len(grid):
        raise DataError("trigger timestamp beyond the end of the grid")
    if trigger_idx < history_steps:
        raise InsufficientHistoryError(
            f"need {history_steps} steps before the trigger, have {trigger_idx}"
        )
    node_names = entities + [kpi_name]
    kpi_values = np.asarray(kpi.values, dtype=np.float64)

    def _pair(index: int, lo: int, hi: int) -> BatchPair:
        return BatchPair(
            metrics=TelemetryBatch(
                METRICS_MODALITY, index, node_names, metric_factors,
                grid[lo:hi], _window(full_m, kpi_values, lo, hi),
            ),
            logs=TelemetryBatch(
                LOGS_MODALITY, index, node_names, log_factors,
                grid[lo:hi], _window(full_l, kpi_values, lo, hi),
            ),
        )

    historical = _pair(0, trigger_idx - history_steps, trigger_idx)

    def _stream() -> Iterator[BatchPair]:
        index = 1
        lo = trigger_idx
        while lo + batch_steps <= len(grid):
            yield _pair(index, lo, lo + batch_steps)
            index += 1
            lo += batch_steps

    return historical, _stream()


# -- normalization ---------------------------------------------------------------


def compute_stats(batch: TelemetryBatch) -> ChannelStats:
    """Per-channel mean/std over time; call on the historical batch only."""
    return ChannelStats(mean=batch.values.mean(axis=2), std=batch.values.std(axis=2))


def normalize(
    batch: TelemetryBatch, stats: ChannelStats | None = None
) -> tuple[TelemetryBatch, ChannelStats]:
    """Z-score every channel; streaming batches must reuse historical stats."""
    if stats is None:
        stats = compute_stats(batch)
    std = np.where(stats.std < _STD_GUARD, 1.0, stats.std)
    values = (batch.values - stats.mean[:, :, None]) / std[:, :, None]
    normalized = TelemetryBatch(
        batch.modality, batch.index, batch.entities, batch.factors,
        batch.timestamps, values,
    )
    return normalized, stats


# -- trigger detection ------------------------------------------------------------


class Trigger(Protocol):
    """Anything that can point at the first anomalous KPI timestamp."""

    def detect(self, kpi: KpiSeries) -> float | None: ...


class RollingZScoreTrigger:
    """Fires at the first sample whose z-score against the trailing window
    strictly exceeds the threshold; the z-score is never clipped."""

    def __init__(self, window: int, z_thresh: float):
        if window <= 1:
            raise ValueError("trigger window must exceed 1")
        self.window = int(window)
        self.z_thresh = float(z_thresh)

    def detect(self, kpi: KpiSeries) -> float | None:
        y = np.asarray(kpi.values, dtype=np.float64)
        if len(y) <= self.window:
            raise DataError("kpi series not longer than the trigger window")
        for t in range(self.window, len(y)):
            segment = y[t - self.window : t]
            std = segment.std()
            deviation = y[t] - segment.mean()
            if std < _STD_GUARD:
                # flat history: any real excursion above it is an infinite z
                if deviation > _STD_GUARD:
                    return float(kpi.timestamps[t])
                continue
            if deviation / std > self.z_thresh:
                return float(kpi.timestamps[t])
        return None


def detect_trigger(kpi: KpiSeries, window: int, z_thresh: float) -> float | None:
    return RollingZScoreTrigger(window, z_thresh).detect(kpi)


# -- file formats -----------------------------------------------------------------


def read_metrics_csv(path: str) -> list[MetricSeries]:
    """Read `timestamp,entity,factor,value` rows into per-channel series."""
    rows: dict[tuple[str, str], list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["timestamp", "entity", "factor", "value"]:
            raise DataError(f"{path}:1: expected header timestamp,entity,factor,value")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                ts, value = float(row[0]), float(row[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            rows.setdefault((row[1], row[2]), []).append((ts, value))
    series = []
    for (entity, factor), pairs in sorted(rows.items()):
        pairs.sort(key=lambda p: p[0])
        arr = np.asarray(pairs, dtype=np.float64)
        series.append(MetricSeries(entity, factor, arr[:, 0], arr[:, 1]))
    return series


def write_metrics_csv(series: Sequence[MetricSeries], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", "entity", "factor", "value"])
        for s in sorted(series, key=lambda s: (s.entity, s.factor)):
            for ts, value in zip(s.timestamps, s.values):
                writer.writerow([repr(float(ts)), s.entity, s.factor, repr(float(value))])


def read_kpi_csv(path: str) -> KpiSeries:
    rows: list[tuple[float, float]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["timestamp", "value"]:
            raise DataError(f"{path}:1: expected header timestamp,value")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty kpi file")
    rows.sort(key=lambda p: p[0])
    arr = np.asarray(rows, dtype=np.float64)
    return KpiSeries(arr[:, 0], arr[:, 1])


def read_logs_jsonl(path: str) -> list[LogLine]:
    """Read JSON-lines log records with fields ts, entity, msg."""
    lines: list[LogLine] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict) or not {"ts", "entity", "msg"} <= record.keys():
                raise DataError(f"{path}:{lineno}: record needs ts, entity, msg fields")
            lines.append(LogLine(record["ts"], str(record["entity"]), str(record["msg"])))
    return lines
