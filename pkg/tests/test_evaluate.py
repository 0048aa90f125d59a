"""Scoring metrics against hand-computed fixtures and basic properties."""

import time

import numpy as np
import pytest

from rcalearn.errors import DataError
from rcalearn.evaluate import (
    BatchTimer,
    FaultCase,
    map_at_k,
    mrr,
    precision_at_k,
    summarize,
)


def case(cid, truth, ranking):
    return FaultCase(cid, frozenset(truth), tuple(ranking))


# -- precision -----------------------------------------------------------------


def test_pr_perfect_rank_one():
    assert precision_at_k([case("a", {"x"}, ["x", "y"])], 1) == 1.0


def test_pr_true_cause_below_k():
    assert precision_at_k([case("a", {"z"}, ["x", "y", "z"])], 2) == 0.0


def test_pr_two_case_average():
    cases = [
        case("a", {"x"}, ["x", "y", "z"]),        # PR@3 = 1
        case("b", {"p", "q"}, ["p", "r", "s"]),   # PR@3 = 1/min(3,2) = 0.5
    ]
    assert precision_at_k(cases, 3) == 0.75


def test_pr_min_denominator():
    # K larger than the truth set must not dilute a full hit
    assert precision_at_k([case("a", {"x"}, ["x", "y", "z"])], 3) == 1.0


def test_pr_monotone_in_k_single_truth(rng):
    # monotonicity holds when |V_a| = 1; with larger truth sets the min(K,|V_a|)
    # denominator can shrink PR as K grows past the first hit
    names = [f"e{i}" for i in range(8)]
    cases = []
    for i in range(6):
        ranking = rng.permutation(names)[:5].tolist()
        truth = {str(rng.choice(names))}
        cases.append(case(f"c{i}", truth, ranking))
    values = [precision_at_k(cases, k) for k in range(1, 6)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert all(0.0 <= v <= 1.0 for v in values)


def test_pr_permutation_invariant(rng):
    cases = [
        case("a", {"x"}, ["x", "y"]),
        case("b", {"y"}, ["x", "y"]),
        case("c", {"z"}, ["x", "y"]),
    ]
    forward = precision_at_k(cases, 2)
    assert precision_at_k(cases[::-1], 2) == forward


# -- mean average precision -------------------------------------------------------


def test_map_rank_one():
    # PR@1 = 1 and PR@2 = 1 under the min(K, |V_a|) denominator
    assert map_at_k([case("a", {"x"}, ["x", "y"])], 2) == 1.0


def test_map_rank_two():
    # PR@1 = 0, PR@2 = 1/min(2,1) = 1, so the average is 0.5
    assert map_at_k([case("a", {"y"}, ["x", "y"])], 2) == 0.5


def test_map_bounded_by_best_pr():
    cases = [case("a", {"y"}, ["x", "y", "z"])]
    best = max(precision_at_k(cases, j) for j in (1, 2, 3))
    assert map_at_k(cases, 3) <= best + 1e-12


# -- mean reciprocal rank -----------------------------------------------------------


def test_mrr_rank_one():
    assert mrr([case("a", {"x"}, ["x", "y"])]) == 1.0


def test_mrr_rank_two():
    assert mrr([case("a", {"y"}, ["x", "y"])]) == 0.5


def test_mrr_two_cases():
    cases = [
        case("a", {"x"}, ["x"]),
        case("b", {"q"}, ["a", "b", "c", "q"]),
    ]
    assert mrr(cases) == (1.0 + 0.25) / 2.0


def test_mrr_no_hit_contributes_zero():
    cases = [case("a", {"x"}, ["x"]), case("b", {"z"}, ["a", "b"])]
    assert mrr(cases) == 0.5


def test_empty_ranking_scores_zero():
    empty = case("a", {"x"}, [])
    assert precision_at_k([empty], 3) == 0.0
    assert mrr([empty]) == 0.0


# -- validation and summary ----------------------------------------------------------


def test_errors_on_bad_inputs():
    with pytest.raises(DataError):
        precision_at_k([], 1)
    with pytest.raises(ValueError):
        precision_at_k([case("a", {"x"}, ["x"])], 0)
    with pytest.raises(DataError):
        case("a", set(), ["x"])
    with pytest.raises(DataError):
        case("a", {"x"}, ["x", "x"])


def test_summarize_shape():
    out = summarize([case("a", {"x"}, ["x", "y"])], ks=[1, 2])
    assert out["cases"] == 1
    assert out["pr"] == {1: 1.0, 2: 1.0}
    assert out["map"][2] == 1.0
    assert out["mrr"] == 1.0


# -- timing --------------------------------------------------------------------------


def test_timer_mean():
    timer = BatchTimer()
    for _ in range(3):
        with timer:
            time.sleep(0.002)
    assert len(timer.laps) == 3
    assert all(lap >= 0.0 for lap in timer.laps)
    assert abs(timer.mean - timer.total / 3.0) < 1e-12


def test_timer_empty_mean_errors():
    with pytest.raises(ValueError):
        BatchTimer().mean
