"""Alignment ranking: cosine scores, CSLS rescoring, ranks and Hits@k / MRR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScoreMatrix",
    "RankingReport",
    "pairwise_scores",
    "csls_adjust",
    "compute_ranks",
    "compute_metrics",
    "mutual_nearest",
    "evaluate_alignment",
    "metrics_line",
]

CSLS_K = 10


@dataclass
class ScoreMatrix:
    values: np.ndarray  # (rows, cols), higher is better
    row_ids: np.ndarray
    col_ids: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        self.col_ids = np.asarray(self.col_ids, dtype=np.int64)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("score matrix shape does not match its id lists")

    @classmethod
    def from_array(cls, values) -> "ScoreMatrix":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.arange(values.shape[0]), np.arange(values.shape[1]))

    def transpose(self) -> "ScoreMatrix":
        return ScoreMatrix(self.values.T, self.col_ids, self.row_ids)


@dataclass
class RankingReport:
    ranks: np.ndarray
    hits1: float
    hits5: float
    hits10: float
    mrr: float

    def as_dict(self) -> dict:
        return {"hits1": self.hits1, "hits5": self.hits5, "hits10": self.hits10, "mrr": self.mrr}


def _normalized(h: np.ndarray, ids: np.ndarray) -> np.ndarray:
    rows = h[ids]
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if len(zero):
        raise ValueError(f"zero-norm embedding for entity {int(ids[zero[0]])}")
    return rows / norms[:, None]


def pairwise_scores(h_mul: np.ndarray, left_ids, right_ids) -> ScoreMatrix:
    """Cosine similarity between rows ``left_ids`` and ``right_ids`` of ``h_mul``."""
    left_ids = np.asarray(left_ids, dtype=np.int64)
    right_ids = np.asarray(right_ids, dtype=np.int64)
    return ScoreMatrix(_normalized(h_mul, left_ids) @ _normalized(h_mul, right_ids).T, left_ids, right_ids)


def _topk_mean(values: np.ndarray, k: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    part = np.partition(values, n - k, axis=axis)
    top = part[n - k :] if axis == 0 else part[:, n - k :]
    return np.sort(top, axis=axis).mean(axis=axis)


def csls_adjust(scores: ScoreMatrix, k: int = CSLS_K) -> ScoreMatrix:
    """CSLS(x, y) = 2 s(x, y) - mean top-k of row x - mean top-k of column y."""
    rows, cols = scores.values.shape
    if not 1 <= k <= min(rows, cols):
        raise ValueError(f"csls k={k} out of range for a {rows}x{cols} matrix")
    r_row = _topk_mean(scores.values, k, axis=1)
    r_col = _topk_mean(scores.values, k, axis=0)
    return ScoreMatrix(2.0 * scores.values - r_row[:, None] - r_col[None, :], scores.row_ids, scores.col_ids)


def compute_ranks(scores: ScoreMatrix, truth, direction: str = "l2r") -> np.ndarray:
    """1-based rank of each true counterpart; ties go to the smaller candidate id."""
    truth = np.asarray(truth, dtype=np.int64).reshape(-1, 2)
    if direction == "r2l":
        scores = scores.transpose()
        truth = truth[:, ::-1]
    elif direction != "l2r":
        raise ValueError(f"direction must be 'l2r' or 'r2l', got {direction!r}")
    row_pos = {e: i for i, e in enumerate(scores.row_ids.tolist())}
    col_pos = {e: i for i, e in enumerate(scores.col_ids.tolist())}
    ranks = np.empty(len(truth), dtype=np.int64)
    for n, (q, t) in enumerate(truth.tolist()):
        if q not in row_pos or t not in col_pos:
            raise KeyError(f"truth pair ({q}, {t}) is not indexed in the score matrix")
        row = scores.values[row_pos[q]]
        s = row[col_pos[t]]
        ranks[n] = 1 + np.count_nonzero(row > s) + np.count_nonzero((row == s) & (scores.col_ids < t))
    return ranks


def compute_metrics(ranks) -> RankingReport:
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("no ranks to summarise")
    return RankingReport(
        ranks=ranks,
        hits1=float(np.mean(ranks <= 1)),
        hits5=float(np.mean(ranks <= 5)),
        hits10=float(np.mean(ranks <= 10)),
        mrr=float(np.mean(1.0 / ranks)),
    )


def mutual_nearest(values: np.ndarray) -> list[tuple[int, int]]:
    """(row, col) positions that are each other's argmax; first index wins ties."""
    values = np.asarray(values)
    if values.size == 0:
        return []
    best_col = np.argmax(values, axis=1)
    best_row = np.argmax(values, axis=0)
    return [(i, int(j)) for i, j in enumerate(best_col) if best_row[j] == i]


def evaluate_alignment(
    h_mul: np.ndarray,
    test_pairs,
    entity_offset: int,
    metric: str = "csls",
    k: int = CSLS_K,
) -> dict[str, RankingReport]:
    """Rank the test alignment both ways; candidates are the test entities of the opposite KG."""
    test_pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    left = test_pairs[:, 0]
    right = test_pairs[:, 1] + entity_offset
    scores = pairwise_scores(h_mul, left, right)
    if metric == "csls":
        scores = csls_adjust(scores, min(k, len(left)))
    elif metric != "cosine":
        raise ValueError(f"metric must be 'csls' or 'cosine', got {metric!r}")
    truth = np.stack([left, right], axis=1)
    return {d: compute_metrics(compute_ranks(scores, truth, d)) for d in ("l2r", "r2l")}


def metrics_line(report: RankingReport, direction: str, metric: str) -> str:
    return (
        f"hits1={report.hits1:.6f} hits5={report.hits5:.6f} hits10={report.hits10:.6f} "
        f"mrr={report.mrr:.6f} direction={direction} metric={metric}"
    )
