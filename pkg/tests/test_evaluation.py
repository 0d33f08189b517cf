import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from reflalign.evaluation import (
    ScoreMatrix,
    compute_metrics,
    compute_ranks,
    csls_adjust,
    evaluate_alignment,
    metrics_line,
    mutual_nearest,
    pairwise_scores,
)


def test_pairwise_scores_closed_forms():
    h = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 3.0], [1.0, 1.0]])
    s = pairwise_scores(h, [0], [1, 2, 3]).values[0]
    assert s[0] == pytest.approx(1.0, abs=1e-15)
    assert s[1] == 0.0
    assert s[2] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_pairwise_scores_zero_norm_names_entity():
    h = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="entity 1"):
        pairwise_scores(h, [0], [1])


def brute_csls(s, k):
    rows, cols = s.shape
    out = np.empty_like(s)
    for i in range(rows):
        for j in range(cols):
            rx = sum(sorted(s[i, :], reverse=True)[:k]) / k
            ry = sum(sorted(s[:, j], reverse=True)[:k]) / k
            out[i, j] = 2 * s[i, j] - rx - ry
    return out


@pytest.mark.parametrize("k", [1, 2, 5])
def test_csls_brute_force(k, rng):
    s = rng.uniform(-1, 1, size=(5, 5))
    got = csls_adjust(ScoreMatrix.from_array(s), k).values
    assert np.max(np.abs(got - brute_csls(s, k))) < 1e-12


def test_csls_degenerate_cases():
    assert csls_adjust(ScoreMatrix.from_array([[0.7]]), 1).values[0, 0] == 0.0
    np.testing.assert_allclose(csls_adjust(ScoreMatrix.from_array(np.full((4, 4), 0.3)), 2).values, 0.0)
    with pytest.raises(ValueError):
        csls_adjust(ScoreMatrix.from_array(np.zeros((3, 3))), 4)


def test_ranks_examples():
    s = ScoreMatrix.from_array([[0.9, 0.5, 0.7]])
    assert compute_ranks(s, [(0, 1)]).tolist() == [3]
    assert compute_ranks(s, [(0, 0)]).tolist() == [1]
    tie = ScoreMatrix.from_array([[0.8, 0.8, 0.1]])
    assert compute_ranks(tie, [(0, 0)]).tolist() == [1]
    assert compute_ranks(tie, [(0, 1)]).tolist() == [2]


def test_ranks_direction_and_missing_truth():
    s = ScoreMatrix(np.array([[0.1, 0.9], [0.8, 0.2]]), [0, 1], [10, 11])
    assert compute_ranks(s, [(0, 10), (1, 11)], "l2r").tolist() == [2, 2]
    assert compute_ranks(s, [(0, 11), (1, 10)], "r2l").tolist() == [1, 1]
    with pytest.raises(KeyError):
        compute_ranks(s, [(0, 12)])


def test_metrics_closed_forms():
    r = compute_metrics([1, 2, 4])
    assert r.hits1 == 1 / 3 and r.hits5 == 1.0
    assert r.mrr == (1 + 0.5 + 0.25) / 3
    one = compute_metrics([1, 1, 1])
    assert one.hits1 == 1.0 and one.mrr == 1.0
    assert compute_metrics([11, 12]).hits10 == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=40))
def test_metrics_properties(ranks):
    r = compute_metrics(ranks)
    assert 0 <= r.hits1 <= r.hits5 <= r.hits10 <= 1
    assert r.hits1 <= r.mrr <= 1


def brute_mutual(v):
    out = []
    for i in range(v.shape[0]):
        j = int(np.argmax(v[i]))
        if int(np.argmax(v[:, j])) == i:
            out.append((i, j))
    return out


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-1, 1)))
def test_mutual_nearest_brute_force(v):
    assert mutual_nearest(v) == brute_mutual(v)


def test_mutual_nearest_requires_mutuality():
    v = np.array([[0.9, 0.1], [0.95, 0.2]])  # row 0 likes col 0, but col 0 prefers row 1
    assert mutual_nearest(v) == [(1, 0)]


def test_evaluate_alignment_perfect_and_line():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(12, 4))
    h = np.concatenate([base, base])
    test = np.stack([np.arange(12), np.arange(12)], axis=1)
    for metric in ("csls", "cosine"):
        rep = evaluate_alignment(h, test, 12, metric)
        assert rep["l2r"].hits1 == 1.0 and rep["r2l"].mrr == 1.0
    line = metrics_line(rep["l2r"], "l2r", "cosine")
    assert line == "hits1=1.000000 hits5=1.000000 hits10=1.000000 mrr=1.000000 direction=l2r metric=cosine"
