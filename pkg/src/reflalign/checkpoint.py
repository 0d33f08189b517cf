"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    b"RFLACKPT"  | u32 version | u64 header length | JSON header
    raw array bytes in header["arrays"] order (little-endian, C order)
    32-byte SHA-256 over everything above
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .diffmath import RmsPropState
from .kg import SeedSplit
from .model import ModelConfig, ModelParams
from .training import NegativeCache, TrainReport, TrainState

__all__ = [
    "CheckpointError",
    "Checkpoint",
    "FORMAT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_from_state",
    "state_from_checkpoint",
]

MAGIC = b"RFLACKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    epoch: int
    rng_state: dict
    arrays: dict[str, np.ndarray]
    run: dict = field(default_factory=dict)  # CLI-level settings (data dir, mode, ...)
    meta: dict = field(default_factory=dict)  # small extras: loss history, negative refresh epoch
    version: int = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    manifest = []
    blobs = []
    for name, arr in ckpt.arrays.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        manifest.append([name, le.dtype.str, list(arr.shape)])
        blobs.append(np.ascontiguousarray(le).tobytes())
    header = json.dumps(
        {
            "config": ckpt.config,
            "epoch": ckpt.epoch,
            "rng_state": ckpt.rng_state,
            "run": ckpt.run,
            "meta": ckpt.meta,
            "arrays": manifest,
        },
        sort_keys=True,
    ).encode("utf-8")
    body = _PREFIX.pack(MAGIC, ckpt.version, len(header)) + header + b"".join(blobs)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint (no header)")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    pos = _PREFIX.size
    if len(raw) < pos + hlen:
        raise CheckpointError("truncated checkpoint (header)")
    try:
        header = json.loads(raw[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    pos += hlen
    specs = []
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        specs.append((name, dt, tuple(shape), dt.itemsize * int(np.prod(shape, dtype=np.int64))))
    expected = pos + sum(s[3] for s in specs) + _DIGEST
    if len(raw) < expected:
        raise CheckpointError(f"truncated checkpoint ({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise CheckpointError(f"corrupt checkpoint ({len(raw) - expected} unexpected trailing bytes)")
    if hashlib.sha256(raw[: expected - _DIGEST]).digest() != raw[expected - _DIGEST :]:
        raise CheckpointError("checksum mismatch")
    arrays = {}
    for name, dt, shape, nbytes in specs:
        arrays[name] = np.frombuffer(raw, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape).astype(
            dt.newbyteorder("="), copy=True
        )
        pos += nbytes
    ckpt = Checkpoint(
        config=header["config"],
        epoch=header["epoch"],
        rng_state=header["rng_state"],
        arrays=arrays,
        run=header.get("run", {}),
        meta=header.get("meta", {}),
        version=version,
    )
    _check_shapes(ckpt)
    return ckpt


def _check_shapes(ckpt: Checkpoint) -> None:
    d, layers = ckpt.config["dim"], ckpt.config["layers"]
    a = ckpt.arrays
    if a["entity"].ndim != 2 or a["entity"].shape[1] != d:
        raise CheckpointError(f"shape mismatch: entity table {a['entity'].shape} vs dim={d}")
    if a["relation"].ndim != 2 or a["relation"].shape[1] != d:
        raise CheckpointError(f"shape mismatch: relation table {a['relation'].shape} vs dim={d}")
    if a["attention"].shape != (layers, 3 * d):
        raise CheckpointError(f"shape mismatch: attention {a['attention'].shape} vs layers={layers}, dim={d}")
    for name in ("entity", "relation", "attention"):
        if f"acc_{name}" in a and a[f"acc_{name}"].shape != a[name].shape:
            raise CheckpointError(f"shape mismatch: optimizer state for {name}")


def checkpoint_from_state(state: TrainState, config: ModelConfig, split: SeedSplit, run: dict | None = None) -> Checkpoint:
    p = state.params
    arrays = {
        "entity": p.entity,
        "relation": p.relation,
        "attention": p.attention,
        "acc_entity": p.store["entity"].state.accumulator,
        "acc_relation": p.store["relation"].state.accumulator,
        "acc_attention": p.store["attention"].state.accumulator,
        "split_train": split.train,
        "split_test": split.test,
        "pseudo": state.pseudo,
    }
    meta = {
        "losses": state.report.losses,
        "split_seed": split.rng_seed,
        "neg_refresh_epoch": None,
    }
    if state.negatives is not None:
        arrays["neg_left"] = state.negatives.left
        arrays["neg_right"] = state.negatives.right
        meta["neg_refresh_epoch"] = state.negatives.refresh_epoch
    return Checkpoint(
        config=config.to_dict(),
        epoch=state.epoch,
        rng_state=state.rng.bit_generator.state,
        arrays=arrays,
        run=dict(run or {}),
        meta=meta,
    )


def state_from_checkpoint(ckpt: Checkpoint) -> tuple[TrainState, ModelConfig, SeedSplit]:
    config = ModelConfig(**ckpt.config)
    a = ckpt.arrays
    params = ModelParams(a["entity"].copy(), a["relation"].copy(), a["attention"].copy())
    for name in ("entity", "relation", "attention"):
        if f"acc_{name}" in a:
            params.store[name].state = RmsPropState(a[f"acc_{name}"].copy())
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.rng_state
    negatives = None
    if "neg_left" in a:
        negatives = NegativeCache(a["neg_left"].copy(), a["neg_right"].copy(), ckpt.meta.get("neg_refresh_epoch") or 0)
    report = TrainReport(
        losses=list(ckpt.meta.get("losses", [])),
        final_epoch=ckpt.epoch,
        rng_seed=config.rng_seed,
        pseudo_pairs=len(a.get("pseudo", ())),
    )
    state = TrainState(
        params=params,
        epoch=ckpt.epoch,
        rng=rng,
        negatives=negatives,
        pseudo=a.get("pseudo", np.empty((0, 2), dtype=np.int64)).copy(),
        report=report,
    )
    split = SeedSplit(a["split_train"], a["split_test"], int(ckpt.meta.get("split_seed", 0)))
    return state, config, split
