"""Dense math primitives: init, reflection, grouped softmax, RMSprop and a finite-difference checker.

Everything is float64. Matrices are plain ``numpy.ndarray``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "NonFiniteError",
    "he_init",
    "reflect",
    "reflect_rows",
    "unit_rows",
    "unit_rows_backward",
    "group_softmax",
    "group_softmax_csr",
    "RmsPropState",
    "Parameter",
    "ParameterStore",
    "rmsprop_step",
    "check_gradients",
]

RMS_DECAY = 0.9
RMS_EPS = 1e-8


class NonFiniteError(FloatingPointError):
    """A loss or gradient became NaN/inf."""


def he_init(rows: int, cols: int, rng_seed: int) -> np.ndarray:
    """I.i.d. N(0, 2/cols) entries, reproducible per seed."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return rng.normal(0.0, np.sqrt(2.0 / cols), size=(rows, cols))


def reflect(r_raw, x) -> np.ndarray:
    """Reflect ``x`` across the hyperplane with normal ``r_raw``: x - 2 u (u.x), u = r/|r|."""
    r = np.asarray(r_raw, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if r.shape != x.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {x.shape}")
    norm = np.linalg.norm(r)
    if not norm > 0.0:
        raise ValueError("relation vector has zero norm")
    u = r / norm
    return x - 2.0 * u * (u @ x)


def unit_rows(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalise ``mat``; returns (unit rows, norms). Zero rows are an error."""
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"row {bad} has zero norm")
    return mat / norms[:, None], norms


def unit_rows_backward(grad_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d(r/|r|) = (I - u u^T) / |r|
    inner = np.einsum("rc,rc->r", grad_unit, unit)
    return (grad_unit - inner[:, None] * unit) / norms[:, None]


def reflect_rows(unit: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise reflection with already-normalised normals ``unit`` (same shape as ``x``)."""
    return x - 2.0 * np.einsum("ec,ec->e", unit, x)[:, None] * unit


def group_softmax_csr(scores: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    starts = offsets[:-1]
    if np.any(np.diff(offsets) <= 0):
        raise ValueError("empty softmax group")
    sizes = np.diff(offsets)
    shifted = scores - np.repeat(np.maximum.reduceat(scores, starts), sizes)
    w = np.exp(shifted)
    return w / np.repeat(np.add.reduceat(w, starts), sizes)


def group_softmax(scores, group_boundaries) -> np.ndarray:
    """Softmax within each group; ``group_boundaries`` are CSR offsets ``[0, ..., len(scores)]``."""
    scores = np.asarray(scores, dtype=np.float64)
    offsets = np.asarray(group_boundaries, dtype=np.int64)
    if offsets[0] != 0 or offsets[-1] != len(scores):
        raise ValueError("group boundaries must start at 0 and end at len(scores)")
    return group_softmax_csr(scores, offsets)


@dataclass
class RmsPropState:
    accumulator: np.ndarray
    decay: float = RMS_DECAY
    epsilon: float = RMS_EPS


@dataclass
class Parameter:
    value: np.ndarray
    grad: np.ndarray = None
    state: RmsPropState = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.state is None:
            self.state = RmsPropState(np.zeros_like(self.value))
        if self.grad.shape != self.value.shape or self.state.accumulator.shape != self.value.shape:
            raise ValueError("value/gradient/accumulator shapes disagree")


@dataclass
class ParameterStore:
    params: dict[str, Parameter] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray) -> Parameter:
        p = Parameter(value)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad[...] = 0.0

    def grads(self) -> dict[str, np.ndarray]:
        return {k: p.grad.copy() for k, p in self.params.items()}


def rmsprop_step(store: ParameterStore, learning_rate: float) -> ParameterStore:
    """acc <- rho acc + (1-rho) g^2; value <- value - lr g / (sqrt(acc) + eps); then zero grads."""
    for name, p in store.items():
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient in {name!r}")
    for p in store.params.values():
        st = p.state
        st.accumulator *= st.decay
        st.accumulator += (1.0 - st.decay) * p.grad * p.grad
        p.value -= learning_rate * p.grad / (np.sqrt(st.accumulator) + st.epsilon)
        p.grad[...] = 0.0
    return store


def check_gradients(
    loss_fn: Callable[[ParameterStore], float],
    store: ParameterStore,
    analytic: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng_seed: int = 0,
) -> float:
    """Max relative error between ``analytic`` and central differences of ``loss_fn``.

    With ``max_coords`` set, that many coordinates are sampled per parameter;
    otherwise every coordinate is checked. Values are restored afterwards.
    """
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for name, p in store.items():
        flat = p.value.reshape(-1)
        g = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and max_coords < flat.size:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = loss_fn(store)
            flat[c] = orig - eps
            f_minus = loss_fn(store)
            flat[c] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(f"loss is not finite while probing {name}[{c}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(g[c] - numeric) / max(1e-8, abs(g[c]) + abs(numeric))
            worst = max(worst, err)
    return worst
