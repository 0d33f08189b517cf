import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reflalign.kg import (
    DataError,
    KnowledgeGraphPair,
    TripleStore,
    build_union_index,
    load_kg_pair,
    save_kg_pair,
    split_seeds,
)
from reflalign.synthetic import dbp_style_pair, isomorphic_pair

from conftest import write_dir


def minimal_files():
    return {
        "ent_ids_1": ["0\thttp://a/x", "1\thttp://a/y"],
        "ent_ids_2": ["0\thttp://b/x", "1\thttp://b/y"],
        "triples_1": ["0\t0\t1"],
        "triples_2": ["0\t0\t1"],
        "ref_ent_ids": ["0\t0"],
    }


def test_load_minimal(tmp_path):
    pair = load_kg_pair(write_dir(tmp_path / "d", minimal_files()))
    assert pair.g1.entity_count == 2
    assert len(pair.alignment) == 1
    assert pair.g1.entity_uris == ("http://a/x", "http://a/y")


def test_load_remaps_sparse_ids(tmp_path):
    files = {
        "ent_ids_1": ["10\ta", "20\tb"],
        "ent_ids_2": ["30\tc", "40\td"],
        "triples_1": ["20\t7\t10"],
        "triples_2": ["30\t9\t40"],
        "ref_ent_ids": ["10\t40", "20\t30"],
    }
    pair = load_kg_pair(write_dir(tmp_path / "d", files))
    assert pair.g1.triples.tolist() == [[1, 0, 0]]
    assert pair.alignment.tolist() == [[0, 1], [1, 0]]
    assert pair.g1.entity_ids.tolist() == [10, 20]


def test_missing_file(tmp_path):
    files = minimal_files()
    del files["ref_ent_ids"]
    with pytest.raises(DataError, match="missing file"):
        load_kg_pair(write_dir(tmp_path / "d", files))


@pytest.mark.parametrize(
    "name, lines",
    [
        ("triples_1", ["0\t0"]),
        ("triples_1", ["0\tx\t1"]),
        ("triples_1", ["0\t0\t5"]),
        ("ref_ent_ids", ["0\t0", "0\t1"]),
        ("ref_ent_ids", ["7\t0"]),
    ],
)
def test_malformed_inputs(tmp_path, name, lines):
    files = minimal_files()
    files[name] = lines
    with pytest.raises(DataError):
        load_kg_pair(write_dir(tmp_path / "d", files))


def test_save_load_round_trip(tmp_path):
    pair = dbp_style_pair(n_entities=80, n_relations=7, seed=2)
    save_kg_pair(pair, tmp_path / "rt")
    assert load_kg_pair(tmp_path / "rt") == pair


def test_triples_deduplicated():
    store = TripleStore(3, 1, [(0, 0, 1), (0, 0, 1), (1, 0, 2)])
    assert len(store.triples) == 2


def test_union_index_single_triple():
    pair = KnowledgeGraphPair(TripleStore(2, 1, [(0, 0, 1)]), TripleStore(0, 0, []), [])
    idx = build_union_index(pair)
    assert idx.edges(0) == [(0, idx.self_loop), (1, 0)]
    assert idx.edges(1) == [(0, idx.inverse(0)), (1, idx.self_loop)]
    assert idx.incident_relations(0) == [0]
    assert idx.incident_relations(1) == [idx.inverse(0)]


def test_union_index_offsets(tiny):
    pair, idx = tiny
    assert idx.unified_entity_count == 5
    assert idx.g2_entity(0) == 3
    assert idx.unified_relation_count == 2 * 2 + 1
    # g2's relation 0 becomes unified relation 1
    assert idx.edges(3) == [(3, idx.self_loop), (4, 1)]


def test_isolated_entity_gets_only_self_loop():
    pair = KnowledgeGraphPair(TripleStore(3, 1, [(0, 0, 1)]), TripleStore(1, 0, []), [(2, 0)])
    idx = build_union_index(pair)
    assert idx.edges(2) == [(2, idx.self_loop)]
    assert idx.edges(3) == [(3, idx.self_loop)]
    assert idx.incident_relations(2) == []


def test_mirror_and_inverse(tiny):
    _, idx = tiny
    for r in range(idx.base_relation_count):
        assert idx.mirror(idx.mirror(r)) == r
        assert idx.mirror(r) == idx.inverse(r)
    assert idx.mirror(idx.self_loop) == idx.self_loop


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(6, 30))
def test_union_index_invariants(seed, n):
    pair = isomorphic_pair(n_entities=n, n_relations=3, mean_degree=2.5, seed=seed)
    idx = build_union_index(pair)
    edges = set(zip(idx.src.tolist(), idx.nbr.tolist(), idx.rel.tolist()))
    for s, t, r in edges:
        assert (t, s, idx.mirror(r)) in edges  # symmetric under inversion
        # edges never cross the two KGs
        assert (s < idx.entity_offset) == (t < idx.entity_offset)
    assert np.all(np.diff(idx.offsets) >= 1)
    assert all((i, i, idx.self_loop) in edges for i in range(idx.unified_entity_count))


def test_split_counts_and_determinism():
    pair = isomorphic_pair(n_entities=10, seed=0)
    a = split_seeds(pair, 0.3, 7)
    b = split_seeds(pair, 0.3, 7)
    assert len(a.train) == 3 and len(a.test) == 7
    assert not set(map(tuple, a.train.tolist())) & set(map(tuple, a.test.tolist()))
    assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)


def test_split_dbp15k_size():
    n = 15000
    pair = KnowledgeGraphPair(TripleStore(n, 1, []), TripleStore(n, 1, []), np.stack([np.arange(n)] * 2, axis=1))
    assert len(split_seeds(pair, 0.3, 0).train) == 4500


def test_split_nested_prefixes():
    # same seed, larger ratio -> the smaller train set is a prefix
    pair = isomorphic_pair(n_entities=40, seed=1)
    small = split_seeds(pair, 0.25, 5)
    large = split_seeds(pair, 0.75, 5)
    assert np.array_equal(large.train[: len(small.train)], small.train)
    assert len(large.train) == len(small.test)


def test_split_rejects_bad_ratio():
    pair = isomorphic_pair(n_entities=10, seed=0)
    with pytest.raises(ValueError):
        split_seeds(pair, 1.0, 0)
