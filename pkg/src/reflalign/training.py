"""Triplet-loss training with nearest-neighbour negatives and mutual-nearest-neighbour seed expansion."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .diffmath import NonFiniteError, rmsprop_step
from .evaluation import csls_adjust, mutual_nearest, pairwise_scores
from .kg import KnowledgeGraphPair, NeighborIndex, SeedSplit
from .model import ModelConfig, ModelParams, backward_model, forward_model, init_params

__all__ = [
    "NegativeCache",
    "TrainReport",
    "TrainState",
    "TrainingAborted",
    "manhattan_distance",
    "triplet_loss",
    "sample_negatives",
    "expand_seeds_mnn",
    "init_state",
    "run_epochs",
    "train",
]

logger = logging.getLogger(__name__)


class TrainingAborted(NonFiniteError):
    """Loss went non-finite; ``state`` holds the parameters at the failing epoch."""

    def __init__(self, message: str, state: "TrainState"):
        super().__init__(message)
        self.state = state


@dataclass
class NegativeCache:
    """Per training pair (a, b): ``left[p]`` replaces b, ``right[p]`` replaces a. Unified ids."""

    left: np.ndarray  # (P, k) ids in KG2
    right: np.ndarray  # (P, k) ids in KG1
    refresh_epoch: int = 0

    @property
    def neg_k(self) -> int:
        return self.left.shape[1]


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    final_epoch: int = 0
    rng_seed: int = 0
    pseudo_pairs: int = 0


@dataclass
class TrainState:
    params: ModelParams
    epoch: int
    rng: np.random.Generator
    negatives: NegativeCache | None = None
    pseudo: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    report: TrainReport = field(default_factory=TrainReport)


def manhattan_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def _unified(pairs: np.ndarray, entity_offset: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.stack([pairs[:, 0], pairs[:, 1] + entity_offset], axis=1)


def triplet_loss(
    h_mul: np.ndarray, pairs: np.ndarray, negatives: NegativeCache, margin: float
) -> tuple[float, np.ndarray]:
    """Summed hinge over every (positive, cached negative) combination, plus d(loss)/d(h_mul).

    ``pairs`` are unified ids. Each positive meets ``2 * neg_k`` negatives:
    its right side replaced by ``negatives.left`` and its left side by
    ``negatives.right``.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("empty train set")
    p, k = negatives.left.shape
    if p != len(pairs):
        raise ValueError("negative cache does not match the train pairs")
    idx = np.repeat(np.arange(p), k)
    term_pos = np.concatenate([idx, idx])
    neg_a = np.concatenate([pairs[idx, 0], negatives.right.reshape(-1)])
    neg_b = np.concatenate([negatives.left.reshape(-1), pairs[idx, 1]])
    loss, grad = kernels.triplet_hinge(
        np.ascontiguousarray(h_mul), pairs[:, 0].copy(), pairs[:, 1].copy(), term_pos, neg_a, neg_b, float(margin)
    )
    return float(loss), grad


def sample_negatives(
    h_mul: np.ndarray,
    pairs: np.ndarray,
    neg_k: int,
    rng_seed: int,
    entity_offset: int,
    pool_size: int | None = None,
) -> NegativeCache:
    """``neg_k`` Manhattan-nearest opposite-KG entities per pair side, truth excluded.

    ``pairs`` are local ids. With ``pool_size`` set, the search runs over a
    random subset of each KG of that size (drawn from ``rng_seed``); the
    default scans every entity and ``rng_seed`` is unused.
    """
    if neg_k < 1:
        raise ValueError("neg_k must be >= 1")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n1 = entity_offset
    n2 = h_mul.shape[0] - n1
    rng = np.random.default_rng(rng_seed)

    def side(query_ids, truth_local, lo, size):
        if size < neg_k + 1:
            raise ValueError(f"opposite KG has {size} entities; need at least neg_k + 1 = {neg_k + 1}")
        pool = np.arange(size)
        if pool_size is not None and pool_size < size:
            pool = np.sort(rng.choice(size, size=max(pool_size, neg_k + 1), replace=False))
        # map truth to its pool position or -1
        pos = np.searchsorted(pool, truth_local)
        hit = (pos < len(pool)) & (pool[np.minimum(pos, len(pool) - 1)] == truth_local)
        exclude = np.where(hit, pos, -1).astype(np.int64)
        cand = np.ascontiguousarray(h_mul[lo + pool])
        query = np.ascontiguousarray(h_mul[query_ids])
        near = kernels.l1_topk(query, cand, neg_k, exclude)
        return lo + pool[near]

    left = side(pairs[:, 0], pairs[:, 1], n1, n2)
    right = side(pairs[:, 1] + n1, pairs[:, 0], 0, n1)
    return NegativeCache(left=left, right=right)


def expand_seeds_mnn(
    h_mul: np.ndarray,
    split: SeedSplit,
    unaligned: tuple[np.ndarray, np.ndarray] | None,
    entity_offset: int,
    k: int = 10,
) -> np.ndarray:
    """Pseudo pairs (local ids) that are mutual CSLS nearest neighbours among the unaligned entities.

    ``unaligned`` defaults to the test-side entities of each KG. Entities in the
    gold train set are never candidates.
    """
    if unaligned is None:
        unaligned = (split.test[:, 0], split.test[:, 1])
    left = np.setdiff1d(np.asarray(unaligned[0], dtype=np.int64), split.train[:, 0])
    right = np.setdiff1d(np.asarray(unaligned[1], dtype=np.int64), split.train[:, 1])
    if len(left) == 0 or len(right) == 0:
        return np.empty((0, 2), dtype=np.int64)
    scores = pairwise_scores(h_mul, left, right + entity_offset)
    scores = csls_adjust(scores, min(k, len(left), len(right)))
    found = mutual_nearest(scores.values)
    return np.array([(left[i], right[j]) for i, j in found], dtype=np.int64).reshape(-1, 2)


def init_state(index: NeighborIndex, config: ModelConfig) -> TrainState:
    params = init_params(index, config)
    rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, 1]))
    return TrainState(params=params, epoch=0, rng=rng, report=TrainReport(rng_seed=config.rng_seed))


def _epoch_seed(config: ModelConfig, epoch: int) -> int:
    return int(np.random.SeedSequence([config.rng_seed, 2, epoch]).generate_state(1)[0])


def run_epochs(
    state: TrainState,
    index: NeighborIndex,
    split: SeedSplit,
    config: ModelConfig,
    until: int | None = None,
    semi: bool = False,
    callback: Callable[[TrainState], None] | None = None,
) -> TrainState:
    """Advance ``state`` to epoch ``until`` (default ``config.epochs``)."""
    until = config.epochs if until is None else min(until, config.epochs)
    n1 = index.entity_offset
    params = state.params
    while state.epoch < until:
        epoch = state.epoch
        t0 = time.perf_counter()
        pairs_changed = False
        if semi and epoch >= config.semi_start and (epoch - config.semi_start) % config.semi_every == 0:
            h_eval, _ = forward_model(index, params, config, training=False)
            state.pseudo = expand_seeds_mnn(h_eval, split, None, n1, config.csls_k)
            pairs_changed = True
            logger.info("epoch %d: %d pseudo pairs", epoch, len(state.pseudo))
        local = np.concatenate([split.train, state.pseudo]) if len(state.pseudo) else split.train
        if state.negatives is None or pairs_changed or epoch % config.neg_refresh_epochs == 0:
            h_eval, _ = forward_model(index, params, config, training=False)
            state.negatives = sample_negatives(h_eval, local, config.neg_k, _epoch_seed(config, epoch), n1)
            state.negatives.refresh_epoch = epoch

        h_mul, trace = forward_model(index, params, config, training=True, rng=state.rng)
        loss, grad = triplet_loss(h_mul, _unified(local, n1), state.negatives, config.margin)
        if not np.isfinite(loss):
            raise TrainingAborted(f"non-finite loss at epoch {epoch}", state)
        backward_model(trace, grad, params)
        try:
            rmsprop_step(params.store, config.learning_rate)
        except NonFiniteError as exc:
            raise TrainingAborted(f"epoch {epoch}: {exc}", state) from exc

        state.report.losses.append(loss)
        state.report.epoch_seconds.append(time.perf_counter() - t0)
        state.epoch = epoch + 1
        state.report.final_epoch = state.epoch
        state.report.pseudo_pairs = len(state.pseudo)
        if callback is not None:
            callback(state)
    return state


def train(
    pair: KnowledgeGraphPair,
    index: NeighborIndex,
    split: SeedSplit,
    config: ModelConfig,
    semi: bool = False,
) -> tuple[ModelParams, TrainReport]:
    """Full-batch training from a fresh He initialisation."""
    if index.entity_offset != pair.g1.entity_count:
        raise ValueError("index was not built from this pair")
    state = run_epochs(init_state(index, config), index, split, config, semi=semi)
    return state.params, state.report
