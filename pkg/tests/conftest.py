import numpy as np
import pytest

from rcalearn.telemetry import LOGS_MODALITY, METRICS_MODALITY, TelemetryBatch

TINY_ENTITIES = ["a", "b", "kpi"]
TINY_T_HIST = 14
TINY_T_STREAM = 10
GRID_STEP = 10.0
BASE_TS = 1000.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_batch(rng, modality, index, n_factors, length, entities=None, start=BASE_TS):
    """Random batch on a synthetic grid; streaming indexes advance the clock."""
    entities = entities or TINY_ENTITIES
    if index > 0:
        start = start + GRID_STEP * (TINY_T_HIST + (index - 1) * length)
    grid = start + GRID_STEP * np.arange(length)
    values = rng.normal(0.0, 1.0, (len(entities), n_factors, length))
    factors = [f"f{i}" for i in range(n_factors)]
    return TelemetryBatch(modality, index, list(entities), factors, grid, values)


def make_pair(rng, index, length, d_m=2, d_l=2, entities=None):
    return (
        make_batch(rng, METRICS_MODALITY, index, d_m, length, entities),
        make_batch(rng, LOGS_MODALITY, index, d_l, length, entities),
    )


def tiny_learner(rng, **overrides):
    """3-node learner fed with a random historical pair, stream side built."""
    from rcalearn.learner import CausalGraphLearner

    kwargs = dict(iterations=1, mi_hidden=8, mi_out=4, seed=0)
    kwargs.update(overrides)
    learner = CausalGraphLearner(**kwargs)
    learner.partial_fit(*make_pair(rng, 0, TINY_T_HIST))
    learner._ensure_stream(TINY_T_STREAM)
    return learner
