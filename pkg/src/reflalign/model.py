"""The relational-reflection GNN: attention aggregate layers, layer concatenation and dual-aspect output.

Forward and backward are hand-derived; per-edge messages are recomputed in
the backward pass rather than cached, so the trace stays O(entities).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from . import kernels
from .diffmath import ParameterStore, he_init, unit_rows, unit_rows_backward
from .kg import NeighborIndex

__all__ = [
    "ConfigError",
    "ModelConfig",
    "ModelParams",
    "ForwardTrace",
    "init_params",
    "relation_mean_matrix",
    "neighbour_mean_matrix",
    "forward_layer",
    "forward_model",
    "backward_model",
]


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ModelConfig:
    dim: int = 100
    layers: int = 2
    margin: float = 3.0
    dropout: float = 0.3
    learning_rate: float = 0.005
    epochs: int = 3000
    neg_k: int = 25
    neg_refresh_epochs: int = 5
    rng_seed: int = 0
    reflection: bool = True
    semi_start: int = 600
    semi_every: int = 300
    csls_k: int = 10
    input_dropout: bool = True
    initial_features: str = "mean"  # "mean": h^0 = neighbourhood mean of the entity table; "raw": the table itself

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            ("dim", self.dim >= 1, "must be >= 1"),
            ("layers", self.layers >= 1, "must be >= 1"),
            ("margin", self.margin > 0, "must be > 0"),
            ("dropout", 0.0 <= self.dropout < 1.0, "must lie in [0, 1)"),
            ("learning_rate", self.learning_rate > 0, "must be > 0"),
            ("epochs", self.epochs >= 0, "must be >= 0"),
            ("neg_k", self.neg_k >= 1, "must be >= 1"),
            ("neg_refresh_epochs", self.neg_refresh_epochs >= 1, "must be >= 1"),
            ("semi_start", self.semi_start >= 0, "must be >= 0"),
            ("semi_every", self.semi_every >= 1, "must be >= 1"),
            ("csls_k", self.csls_k >= 1, "must be >= 1"),
            ("initial_features", self.initial_features in ("mean", "raw"), "must be 'mean' or 'raw'"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, f"{msg}, got {getattr(self, key)!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(eq=False)
class ModelParams:
    entity: np.ndarray  # (N, d)
    relation: np.ndarray  # (R, d)
    attention: np.ndarray  # (layers, 3d), one vector per layer
    store: ParameterStore = field(default=None, repr=False)

    def __post_init__(self):
        if self.store is None:
            self.store = ParameterStore()
            self.store.add("entity", self.entity)
            self.store.add("relation", self.relation)
            self.store.add("attention", self.attention)

    @property
    def dim(self) -> int:
        return self.entity.shape[1]

    @property
    def layers(self) -> int:
        return self.attention.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.entity.copy(), self.relation.copy(), self.attention.copy())

    def equals(self, other: "ModelParams") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in ((self.entity, other.entity), (self.relation, other.relation), (self.attention, other.attention))
        )


def init_params(index: NeighborIndex, config: ModelConfig) -> ModelParams:
    s_ent, s_rel, s_att = np.random.SeedSequence(config.rng_seed).generate_state(3)
    d = config.dim
    return ModelParams(
        entity=he_init(index.unified_entity_count, d, int(s_ent)),
        relation=he_init(index.unified_relation_count, d, int(s_rel)),
        attention=he_init(config.layers, 3 * d, int(s_att)),
    )


@dataclass
class ForwardTrace:
    layer_inputs: list = field(default_factory=list)
    pre_activation: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    masks: list = field(default_factory=list)  # None where no dropout was applied
    outputs: list = field(default_factory=list)  # h^0 .. h^l
    unit: np.ndarray = None  # normalised relation table
    norms: np.ndarray = None
    rel_mean: sp.csr_matrix = None
    ent_mean: sp.csr_matrix = None  # None when h^0 is the raw table
    input_mask: np.ndarray = None
    reflection: bool = True
    dropout: float = 0.0
    dim: int = 0
    index: NeighborIndex = None


def relation_mean_matrix(index: NeighborIndex) -> sp.csr_matrix:
    """Sparse (N, R) matrix averaging each entity's distinct incident relations."""
    counts = np.diff(index.rel_offsets)
    data = np.repeat(1.0 / np.maximum(counts, 1), counts)
    return sp.csr_matrix(
        (data, index.rel_ids, index.rel_offsets),
        shape=(index.unified_entity_count, index.unified_relation_count),
    )


def neighbour_mean_matrix(index: NeighborIndex) -> sp.csr_matrix:
    """Sparse (N, N) matrix averaging each entity's distinct neighbours (itself included)."""
    n = index.unified_entity_count
    keep = np.ones(index.edge_count, dtype=bool)
    keep[1:] = (index.src[1:] != index.src[:-1]) | (index.nbr[1:] != index.nbr[:-1])
    rows, cols = index.src[keep], index.nbr[keep]
    counts = np.bincount(rows, minlength=n)
    return sp.csr_matrix((1.0 / counts[rows], (rows, cols)), shape=(n, n))


def forward_layer(
    layer: int,
    h_in: np.ndarray,
    index: NeighborIndex,
    params: ModelParams,
    training: bool,
    trace: ForwardTrace,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One reflection aggregate layer: ReLU(sum_edges alpha * reflect(r_k, h_j)), then dropout."""
    if not np.all(np.isfinite(h_in)):
        raise FloatingPointError(f"non-finite input to layer {layer}")
    if trace.unit is None:
        trace.unit, trace.norms = unit_rows(params.relation)
    v = params.attention[layer]
    beta, alpha, s = kernels.edge_forward(
        h_in, trace.unit, v, index.offsets, index.src, index.nbr, index.rel, trace.reflection
    )
    out = np.maximum(s, 0.0)
    mask = None
    if training and trace.dropout > 0.0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        keep = 1.0 - trace.dropout
        mask = (rng.random(out.shape) < keep) / keep
        out = out * mask
    trace.layer_inputs.append(h_in)
    trace.pre_activation.append(s)
    trace.beta.append(beta)
    trace.alpha.append(alpha)
    trace.masks.append(mask)
    return out


def forward_model(
    index: NeighborIndex,
    params: ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Return the dual-aspect embeddings, width (layers + 2) * dim, and the trace for backward."""
    if params.layers != config.layers or params.dim != config.dim:
        raise ValueError("parameter shapes do not match config")
    trace = ForwardTrace(
        reflection=config.reflection,
        dropout=config.dropout if training else 0.0,
        dim=config.dim,
        index=index,
    )
    h = params.entity
    if config.initial_features == "mean":
        trace.ent_mean = neighbour_mean_matrix(index)
        h = trace.ent_mean @ h
    if config.input_dropout and training and trace.dropout > 0.0:
        keep = 1.0 - trace.dropout
        trace.input_mask = (rng.random(h.shape) < keep) / keep
        h = h * trace.input_mask
    trace.outputs.append(h)
    for layer in range(config.layers):
        h = forward_layer(layer, h, index, params, training, trace, rng)
        trace.outputs.append(h)
    trace.rel_mean = relation_mean_matrix(index)
    tail = trace.rel_mean @ params.relation
    return np.concatenate(trace.outputs + [tail], axis=1), trace


def backward_model(trace: ForwardTrace, upstream: np.ndarray, params: ModelParams) -> ParameterStore:
    """Accumulate d(loss)/d(params) into ``params.store`` given d(loss)/d(h_mul)."""
    index = trace.index
    d = trace.dim
    n_layers = len(trace.alpha)
    n = params.entity.shape[0]
    if upstream.shape != (n, (n_layers + 2) * d):
        raise ValueError(f"upstream shape {upstream.shape} does not match trace")
    store = params.store
    g_unit = np.zeros_like(trace.unit)
    g_next = np.zeros((n, d))  # gradient flowing into the current layer's output from above
    for layer in range(n_layers - 1, -1, -1):
        g_out = upstream[:, (layer + 1) * d : (layer + 2) * d] + g_next
        if trace.masks[layer] is not None:
            g_out = g_out * trace.masks[layer]
        g_s = g_out * (trace.pre_activation[layer] > 0.0)
        g_h, g_u, g_v = kernels.edge_backward(
            g_s,
            trace.layer_inputs[layer],
            trace.unit,
            params.attention[layer],
            trace.alpha[layer],
            index.offsets,
            index.src,
            index.nbr,
            index.rel,
            trace.reflection,
        )
        g_unit += g_u
        store["attention"].grad[layer] += g_v
        g_next = g_h
    g_h0 = upstream[:, :d] + g_next
    if trace.input_mask is not None:
        g_h0 = g_h0 * trace.input_mask
    store["entity"].grad += g_h0 if trace.ent_mean is None else trace.ent_mean.T @ g_h0
    g_rel = unit_rows_backward(g_unit, trace.unit, trace.norms)
    g_rel += trace.rel_mean.T @ upstream[:, (n_layers + 1) * d :]
    store["relation"].grad += g_rel
    return store
