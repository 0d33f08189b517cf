"""Embedding-space diagnostics: shape similarity, orthogonality, reflection isometry, apart-loss training, export."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .diffmath import rmsprop_step, unit_rows
from .kg import KnowledgeGraphPair, NeighborIndex, SeedSplit, build_union_index
from .model import ModelConfig, ModelParams, backward_model, forward_model, init_params
from . import kernels

__all__ = [
    "SSReport",
    "IsometryReport",
    "shape_similarity",
    "orthogonality_residual",
    "reflection_matrix",
    "isometry_report",
    "apart_loss_train",
    "export_embeddings",
    "read_embeddings",
]


@dataclass
class SSReport:
    numerator: float
    denominator: float
    ss: float
    distance_metric: str
    sample_size: int
    rng_seed: int

    def to_record(self) -> str:
        return (
            f"ss={self.ss:.6f} numerator={self.numerator:.6f} denominator={self.denominator:.6f} "
            f"metric={self.distance_metric} m={self.sample_size} seed={self.rng_seed}"
        )


@dataclass
class IsometryReport:
    max_norm_deviation: float
    max_inner_deviation: float
    relations: int
    probes: int
    differentiation_pairs: int
    differentiation_failures: int

    def to_record(self) -> str:
        return (
            f"norm_dev={self.max_norm_deviation:.3e} inner_dev={self.max_inner_deviation:.3e} "
            f"relations={self.relations} probes={self.probes} "
            f"diff_pairs={self.differentiation_pairs} diff_failures={self.differentiation_failures}"
        )


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0.0, 1.0, norms)


def _dist(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    """Row-wise distance between matching rows of ``a`` and ``b`` (both unit-norm)."""
    if metric == "cosine":
        return 1.0 - np.einsum("nc,nc->n", a, b)
    return np.linalg.norm(a - b, axis=1)


def shape_similarity(
    emb1: np.ndarray,
    emb2: np.ndarray,
    aligned,
    metric: str = "cosine",
    m: int = 100,
    rng_seed: int = 0,
) -> SSReport:
    """Distance-difference between counterpart pairs, relative to corrupted quadruples.

    Near 0 when the two embedding sets share their geometry, near 1 when they
    are unrelated. Embeddings are L2-normalised first.
    """
    if metric not in ("cosine", "l2"):
        raise ValueError(f"metric must be 'cosine' or 'l2', got {metric!r}")
    aligned = np.asarray(aligned, dtype=np.int64).reshape(-1, 2)
    if m < 2:
        raise ValueError("m must be >= 2")
    if m > len(aligned):
        raise ValueError(f"m={m} exceeds the {len(aligned)} aligned pairs")
    rng = np.random.default_rng(rng_seed)
    sample = aligned[rng.choice(len(aligned), size=m, replace=False)]

    ii, jj = np.nonzero(~np.eye(m, dtype=bool))  # ordered pairs i != j
    # quadruple columns: e_i, e~_i, e_j, e~_j as (kg, entity id)
    quad = np.stack([sample[ii, 0], sample[ii, 1], sample[jj, 0], sample[jj, 1]], axis=1)
    e1 = _l2_normalize(np.asarray(emb1, dtype=np.float64))
    e2 = _l2_normalize(np.asarray(emb2, dtype=np.float64))

    def gap(q):
        d1 = _dist(e1[q[:, 0]], e1[q[:, 2]], metric)
        d2 = _dist(e2[q[:, 1]], e2[q[:, 3]], metric)
        return np.abs(d1 - d2)

    numerator = float(gap(quad).sum())
    corrupt = quad.copy()
    slot = rng.integers(4, size=len(quad))
    rows = np.arange(len(quad))
    sizes = np.where(slot % 2 == 0, len(e1), len(e2))  # slots 0, 2 live in KG1; 1, 3 in KG2
    corrupt[rows, slot] = (rng.random(len(quad)) * sizes).astype(np.int64)
    denominator = float(gap(corrupt).sum())
    if not denominator > 0.0:
        raise ValueError("degenerate sample: zero denominator")
    return SSReport(numerator, denominator, numerator / denominator, metric, m, int(rng_seed))


def orthogonality_residual(w) -> float:
    """Squared Frobenius norm of W^T W - I."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    r = w.T @ w - np.eye(w.shape[0])
    return float(np.sum(r * r))


def reflection_matrix(r) -> np.ndarray:
    """Dense I - 2 u u^T; for diagnostics only, the model never builds it."""
    u = np.asarray(r, dtype=np.float64)
    u = u / np.linalg.norm(u)
    return np.eye(len(u)) - 2.0 * np.outer(u, u)


def isometry_report(
    relation_vectors,
    probe_vectors,
    max_pairs: int = 2000,
    rng_seed: int = 0,
    tol: float = 1e-9,
) -> IsometryReport:
    """Check that reflections keep norms and inner products, and that distinct relations act differently.

    Differentiation is checked on up to ``max_pairs`` random relation pairs;
    parallel pairs (identical hyperplanes) are skipped.
    """
    rel = np.atleast_2d(np.asarray(relation_vectors, dtype=np.float64))
    x = np.atleast_2d(np.asarray(probe_vectors, dtype=np.float64))
    if rel.size == 0 or x.size == 0:
        raise ValueError("need at least one relation vector and one probe")
    unit, _ = unit_rows(rel)
    norms = np.linalg.norm(x, axis=1)
    gram = x @ x.T
    norm_dev = inner_dev = 0.0
    for u in unit:
        y = x - 2.0 * np.outer(x @ u, u)
        norm_dev = max(norm_dev, float(np.max(np.abs(np.linalg.norm(y, axis=1) - norms))))
        inner_dev = max(inner_dev, float(np.max(np.abs(y @ y.T - gram))))

    n = len(unit)
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)] if n * (n - 1) // 2 <= max_pairs else None
    if pairs is None:
        rng = np.random.default_rng(rng_seed)
        a = rng.integers(n, size=max_pairs)
        b = rng.integers(n - 1, size=max_pairs)
        b += b >= a
        pairs = list(zip(a.tolist(), b.tolist()))
    checked = failures = 0
    for a, b in pairs:
        if abs(abs(unit[a] @ unit[b]) - 1.0) < 1e-12:
            continue
        ya = x - 2.0 * np.outer(x @ unit[a], unit[a])
        yb = x - 2.0 * np.outer(x @ unit[b], unit[b])
        checked += 1
        if not np.any(np.linalg.norm(ya - yb, axis=1) > tol):
            failures += 1
    return IsometryReport(norm_dev, inner_dev, n, len(x), checked, failures)


def apart_loss_train(
    pair: KnowledgeGraphPair,
    index: NeighborIndex,
    config: ModelConfig,
    margin: float,
    split: SeedSplit | None = None,
) -> tuple[ModelParams, list[float]]:
    """Train with only the apart term: sum of max(margin - |h_x - h_y|_1, 0) over random negative pairs.

    Negatives corrupt one side of each seed pair with a uniformly drawn entity
    of the same KG, ``neg_k`` per side, redrawn every epoch. There is no
    attraction term, so the alignment itself is never used.
    """
    seeds = split.train if split is not None else pair.alignment
    n1 = index.entity_offset
    n2 = index.unified_entity_count - n1
    a = seeds[:, 0]
    b = seeds[:, 1] + n1
    params = init_params(index, config)
    rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, 3]))
    k = config.neg_k
    losses = []
    for _ in range(config.epochs):
        h_mul, trace = forward_model(index, params, config, training=True, rng=rng)
        rand2 = n1 + rng.integers(n2, size=(len(seeds), k))
        rand1 = rng.integers(n1, size=(len(seeds), k))
        neg_x = np.concatenate([np.repeat(a, k), rand1.reshape(-1)])
        neg_y = np.concatenate([rand2.reshape(-1), np.repeat(b, k)])
        # zero-length positives turn the triplet hinge into the apart term
        loss, grad = kernels.triplet_hinge(
            np.ascontiguousarray(h_mul), neg_x, neg_x, np.arange(len(neg_x)), neg_x, neg_y, float(margin)
        )
        losses.append(float(loss))
        backward_model(trace, grad, params)
        rmsprop_step(params.store, config.learning_rate)
    return params, losses


def export_embeddings(
    params: ModelParams,
    pair: KnowledgeGraphPair,
    path: str | os.PathLike,
    config: ModelConfig,
    index: NeighborIndex | None = None,
) -> int:
    """Write one TSV line per entity: URI, KG tag, then the dual-aspect vector. Returns lines written."""
    index = build_union_index(pair) if index is None else index
    h_mul, _ = forward_model(index, params, config, training=False)
    n1 = index.entity_offset
    lines = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tag, store, base in (("KG1", pair.g1, 0), ("KG2", pair.g2, n1)):
            for i, uri in enumerate(store.entity_uris):
                vals = "\t".join(format(x, ".17g") for x in h_mul[base + i])
                fh.write(f"{uri}\t{tag}\t{vals}\n")
                lines += 1
    return lines


def read_embeddings(path: str | os.PathLike) -> tuple[list[str], list[str], np.ndarray]:
    uris, tags, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            uris.append(parts[0])
            tags.append(parts[1])
            rows.append([float(v) for v in parts[2:]])
    return uris, tags, np.array(rows, dtype=np.float64)
