"""Knowledge-graph pairs: DBP15K-style loading, the merged neighbour index and seed splits."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "TripleStore",
    "KnowledgeGraphPair",
    "NeighborIndex",
    "SeedSplit",
    "load_kg_pair",
    "save_kg_pair",
    "build_union_index",
    "split_seeds",
]


class DataError(ValueError):
    """Raised for missing or malformed input data."""


def _frozen(a, dtype=np.int64):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TripleStore:
    """One KG with dense 0-based entity and relation ids.

    ``entity_ids``/``relation_ids`` hold the original on-disk ids (position ==
    dense id), ``entity_uris``/``relation_uris`` the matching URIs.
    """

    entity_count: int
    relation_count: int
    triples: np.ndarray  # (n, 3) int64, sorted lexicographically, unique
    entity_ids: np.ndarray = field(default=None)
    entity_uris: tuple = ()
    relation_ids: np.ndarray = field(default=None)
    relation_uris: tuple = ()

    def __post_init__(self):
        tr = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if len(tr):
            if tr.min() < 0:
                raise DataError("negative id in triples")
            if tr[:, [0, 2]].max() >= self.entity_count:
                raise DataError("triple entity id out of range")
            if tr[:, 1].max() >= self.relation_count:
                raise DataError("triple relation id out of range")
            tr = np.unique(tr, axis=0)
        object.__setattr__(self, "triples", _frozen(tr.reshape(-1, 3)))
        if self.entity_ids is None:
            object.__setattr__(self, "entity_ids", np.arange(self.entity_count))
        if self.relation_ids is None:
            object.__setattr__(self, "relation_ids", np.arange(self.relation_count))
        object.__setattr__(self, "entity_ids", _frozen(self.entity_ids))
        object.__setattr__(self, "relation_ids", _frozen(self.relation_ids))
        if not self.entity_uris:
            object.__setattr__(self, "entity_uris", tuple(str(i) for i in self.entity_ids))
        if not self.relation_uris:
            object.__setattr__(self, "relation_uris", tuple(str(i) for i in self.relation_ids))
        if len(self.entity_ids) != self.entity_count or len(self.entity_uris) != self.entity_count:
            raise DataError("entity side table does not match entity_count")
        if len(self.relation_ids) != self.relation_count:
            raise DataError("relation side table does not match relation_count")

    def __eq__(self, other):
        if not isinstance(other, TripleStore):
            return NotImplemented
        return (
            self.entity_count == other.entity_count
            and self.relation_count == other.relation_count
            and np.array_equal(self.triples, other.triples)
            and np.array_equal(self.entity_ids, other.entity_ids)
            and self.entity_uris == other.entity_uris
            and np.array_equal(self.relation_ids, other.relation_ids)
            and self.relation_uris == other.relation_uris
        )


@dataclass(frozen=True, eq=False)
class KnowledgeGraphPair:
    g1: TripleStore
    g2: TripleStore
    alignment: np.ndarray  # (p, 2) int64: (id in g1, id in g2)

    def __post_init__(self):
        al = np.asarray(self.alignment, dtype=np.int64).reshape(-1, 2)
        if len(al):
            if al.min() < 0 or al[:, 0].max() >= self.g1.entity_count or al[:, 1].max() >= self.g2.entity_count:
                raise DataError("alignment id out of range")
            for side in (0, 1):
                if len(np.unique(al[:, side])) != len(al):
                    raise DataError("duplicate alignment entry")
        object.__setattr__(self, "alignment", _frozen(al))

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraphPair):
            return NotImplemented
        return self.g1 == other.g1 and self.g2 == other.g2 and np.array_equal(self.alignment, other.alignment)


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """Edge lists over the disjoint union of both KGs in CSR layout.

    Edge ``e`` belongs to entity ``src[e]`` and points at ``nbr[e]`` via
    unified relation ``rel[e]``. Entity ``i``'s edges are
    ``offsets[i]:offsets[i+1]``, sorted by (neighbour, relation).
    """

    unified_entity_count: int
    unified_relation_count: int
    entity_offset: int  # |E1|
    relation_offset: int  # |R1|
    base_relation_count: int  # |R1| + |R2|
    offsets: np.ndarray
    src: np.ndarray
    nbr: np.ndarray
    rel: np.ndarray
    # distinct incident relations per entity (inverses included, self-loop excluded)
    rel_offsets: np.ndarray
    rel_ids: np.ndarray

    @property
    def self_loop(self) -> int:
        return 2 * self.base_relation_count

    @property
    def edge_count(self) -> int:
        return len(self.nbr)

    def inverse(self, r: int) -> int:
        if not 0 <= r < self.base_relation_count:
            raise ValueError(f"{r} is not an original relation id")
        return r + self.base_relation_count

    def mirror(self, r: int) -> int:
        if r == self.self_loop:
            return r
        if r < self.base_relation_count:
            return r + self.base_relation_count
        return r - self.base_relation_count

    def edges(self, i: int) -> list[tuple[int, int]]:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return list(zip(self.nbr[lo:hi].tolist(), self.rel[lo:hi].tolist()))

    def incident_relations(self, i: int) -> list[int]:
        return self.rel_ids[self.rel_offsets[i] : self.rel_offsets[i + 1]].tolist()

    def g2_entity(self, local_id):
        return np.asarray(local_id) + self.entity_offset


@dataclass(frozen=True, eq=False)
class SeedSplit:
    train: np.ndarray  # (n_train, 2) local ids
    test: np.ndarray
    rng_seed: int


# ---------------------------------------------------------------- loading


def _read_rows(path: str, n_fields: int, int_fields: tuple[int, ...]) -> list[list]:
    if not os.path.isfile(path):
        raise DataError(f"missing file: {path}")
    rows = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise DataError(f"malformed line {path}:{lineno}: expected {n_fields} fields, got {len(parts)}")
            try:
                for k in int_fields:
                    parts[k] = int(parts[k])
            except ValueError:
                raise DataError(f"malformed line {path}:{lineno}: non-integer id") from None
            rows.append(parts)
    return rows


def _load_store(dir_path: str, k: int) -> tuple[TripleStore, dict[int, int]]:
    ents = _read_rows(os.path.join(dir_path, f"ent_ids_{k}"), 2, (0,))
    ents.sort(key=lambda row: row[0])
    ent_map = {}
    for dense, (orig, _) in enumerate(ents):
        if orig in ent_map:
            raise DataError(f"duplicate entity id {orig} in ent_ids_{k}")
        ent_map[orig] = dense
    triples_raw = _read_rows(os.path.join(dir_path, f"triples_{k}"), 3, (0, 1, 2))

    rel_path = os.path.join(dir_path, f"rel_ids_{k}")
    rel_uri = {}
    if os.path.isfile(rel_path):
        for orig, uri in _read_rows(rel_path, 2, (0,)):
            rel_uri[orig] = uri
    rel_orig = sorted(set(rel_uri) | {r for _, r, _ in triples_raw})
    rel_map = {r: i for i, r in enumerate(rel_orig)}

    triples = np.empty((len(triples_raw), 3), dtype=np.int64)
    for n, (h, r, t) in enumerate(triples_raw):
        for e in (h, t):
            if e not in ent_map:
                raise DataError(f"entity id {e} in triples_{k} is absent from ent_ids_{k}")
        triples[n] = ent_map[h], rel_map[r], ent_map[t]

    store = TripleStore(
        entity_count=len(ents),
        relation_count=len(rel_orig),
        triples=triples,
        entity_ids=np.array([row[0] for row in ents], dtype=np.int64),
        entity_uris=tuple(row[1] for row in ents),
        relation_ids=np.array(rel_orig, dtype=np.int64),
        relation_uris=tuple(rel_uri.get(r, str(r)) for r in rel_orig),
    )
    return store, ent_map


def load_kg_pair(dir_path: str | os.PathLike) -> KnowledgeGraphPair:
    """Load a DBP15K-layout directory, re-mapping ids to dense ranges per KG."""
    dir_path = os.fspath(dir_path)
    for name in ("ent_ids_1", "ent_ids_2", "triples_1", "triples_2", "ref_ent_ids"):
        if not os.path.isfile(os.path.join(dir_path, name)):
            raise DataError(f"missing file: {os.path.join(dir_path, name)}")
    g1, map1 = _load_store(dir_path, 1)
    g2, map2 = _load_store(dir_path, 2)
    ref = _read_rows(os.path.join(dir_path, "ref_ent_ids"), 2, (0, 1))
    alignment = np.empty((len(ref), 2), dtype=np.int64)
    seen1, seen2 = set(), set()
    for n, (a, b) in enumerate(ref):
        if a not in map1 or b not in map2:
            raise DataError(f"alignment entry ({a}, {b}) references an unknown entity")
        if a in seen1 or b in seen2:
            raise DataError(f"duplicate alignment entry ({a}, {b})")
        seen1.add(a)
        seen2.add(b)
        alignment[n] = map1[a], map2[b]
    return KnowledgeGraphPair(g1, g2, alignment)


def save_kg_pair(pair: KnowledgeGraphPair, dir_path: str | os.PathLike) -> None:
    """Write ``pair`` in the on-disk layout ``load_kg_pair`` reads (original ids)."""
    dir_path = os.fspath(dir_path)
    os.makedirs(dir_path, exist_ok=True)

    def write(name, rows):
        with open(os.path.join(dir_path, name), "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write("\t".join(str(x) for x in row) + "\n")

    for k, g in ((1, pair.g1), (2, pair.g2)):
        write(f"ent_ids_{k}", zip(g.entity_ids.tolist(), g.entity_uris))
        write(f"rel_ids_{k}", zip(g.relation_ids.tolist(), g.relation_uris))
        ent, rel = g.entity_ids, g.relation_ids
        write(f"triples_{k}", ((ent[h], rel[r], ent[t]) for h, r, t in g.triples.tolist()))
    write(
        "ref_ent_ids",
        ((pair.g1.entity_ids[a], pair.g2.entity_ids[b]) for a, b in pair.alignment.tolist()),
    )


# ---------------------------------------------------------------- index


def build_union_index(pair: KnowledgeGraphPair) -> NeighborIndex:
    n1, n2 = pair.g1.entity_count, pair.g2.entity_count
    r1, r2 = pair.g1.relation_count, pair.g2.relation_count
    n, base = n1 + n2, r1 + r2
    t1, t2 = pair.g1.triples, pair.g2.triples
    heads = np.concatenate([t1[:, 0], t2[:, 0] + n1])
    rels = np.concatenate([t1[:, 1], t2[:, 1] + r1])
    tails = np.concatenate([t1[:, 2], t2[:, 2] + n1])
    ids = np.arange(n, dtype=np.int64)

    src = np.concatenate([heads, tails, ids])
    nbr = np.concatenate([tails, heads, ids])
    rel = np.concatenate([rels, rels + base, np.full(n, 2 * base, dtype=np.int64)])
    edges = np.unique(np.stack([src, nbr, rel], axis=1), axis=0)  # sorts by (src, nbr, rel)
    src, nbr, rel = edges[:, 0], edges[:, 1], edges[:, 2]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])

    inc = np.unique(np.stack([src, rel], axis=1)[rel != 2 * base], axis=0)
    rel_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(inc[:, 0], minlength=n), out=rel_offsets[1:])

    return NeighborIndex(
        unified_entity_count=n,
        unified_relation_count=2 * base + 1,
        entity_offset=n1,
        relation_offset=r1,
        base_relation_count=base,
        offsets=_frozen(offsets),
        src=_frozen(src),
        nbr=_frozen(nbr),
        rel=_frozen(rel),
        rel_offsets=_frozen(rel_offsets),
        rel_ids=_frozen(inc[:, 1]),
    )


def split_seeds(pair: KnowledgeGraphPair, train_ratio: float, rng_seed: int) -> SeedSplit:
    """Shuffle the reference alignment and take the first ``floor(ratio * n)`` pairs as train."""
    if not 0.0 < train_ratio < 1.0:
        raise ValueError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    n = len(pair.alignment)
    if n < 2:
        raise DataError("need at least 2 aligned pairs to split")
    perm = np.random.default_rng(rng_seed).permutation(n)
    k = int(np.floor(train_ratio * n + 1e-9))
    return SeedSplit(
        train=_frozen(pair.alignment[perm[:k]]),
        test=_frozen(pair.alignment[perm[k:]]),
        rng_seed=int(rng_seed),
    )
