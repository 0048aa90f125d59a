"""Online root-cause analysis for microservice incidents.

Learns a causal graph over service entities from streaming metrics and log
features, then ranks likely root causes by a random walk with restart from
the KPI node, stopping once the ranking stabilizes.
"""

from .autodiff import Adam, Tensor, acyclicity_penalty, grad_check
from .config import RunConfig, load_run_config
from .encoder import ConvLayerSpec, GatedConvStack, dilated_causal_conv, receptive_field
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    GridMismatchError,
    InsufficientHistoryError,
    NoIncidentError,
    NonFiniteError,
    RcaError,
    TrainingDivergedError,
    WindowTooShortError,
)
from .evaluate import FaultCase, map_at_k, mrr, precision_at_k, summarize
from .learner import CausalGraphLearner, GraphState, LossReport, write_graph_csv
from .pipeline import RunResult, run_online
from .ranking import RankedCauses, StopTracker, rank, rbo, rwr, transition_matrix
from .simulate import ScenarioConfig, SyntheticCase, simulate
from .telemetry import (
    BatchPair,
    KpiSeries,
    LogLine,
    MetricSeries,
    RollingZScoreTrigger,
    TelemetryBatch,
    assemble,
    detect_trigger,
    featurize_logs,
    normalize,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Tensor",
    "acyclicity_penalty",
    "grad_check",
    "RunConfig",
    "load_run_config",
    "ConvLayerSpec",
    "GatedConvStack",
    "dilated_causal_conv",
    "receptive_field",
    "RcaError",
    "ConfigError",
    "DataError",
    "GridMismatchError",
    "InsufficientHistoryError",
    "NoIncidentError",
    "NonFiniteError",
    "ConvergenceError",
    "TrainingDivergedError",
    "WindowTooShortError",
    "FaultCase",
    "precision_at_k",
    "map_at_k",
    "mrr",
    "summarize",
    "CausalGraphLearner",
    "GraphState",
    "LossReport",
    "write_graph_csv",
    "RunResult",
    "run_online",
    "RankedCauses",
    "StopTracker",
    "rank",
    "rbo",
    "rwr",
    "transition_matrix",
    "ScenarioConfig",
    "SyntheticCase",
    "simulate",
    "MetricSeries",
    "KpiSeries",
    "LogLine",
    "TelemetryBatch",
    "BatchPair",
    "RollingZScoreTrigger",
    "assemble",
    "detect_trigger",
    "featurize_logs",
    "normalize",
    "__version__",
]
