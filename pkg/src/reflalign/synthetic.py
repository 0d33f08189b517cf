"""Synthetic KG pairs with a known ground-truth alignment."""

from __future__ import annotations

import numpy as np

from .kg import KnowledgeGraphPair, TripleStore

__all__ = ["random_triples", "isomorphic_pair", "dbp_style_pair", "tiny_pair"]


def random_triples(n_entities: int, n_relations: int, n_triples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random triples without self loops or duplicates; every entity gets at least one edge."""
    out = set()
    # one edge per entity first so nobody is isolated
    for e in rng.permutation(n_entities):
        t = int(rng.integers(n_entities - 1))
        t += t >= e
        h, t = (int(e), t) if rng.random() < 0.5 else (t, int(e))
        out.add((h, int(rng.integers(n_relations)), t))
    while len(out) < n_triples:
        h, t = rng.integers(n_entities, size=2)
        if h != t:
            out.add((int(h), int(rng.integers(n_relations)), int(t)))
    return np.array(sorted(out), dtype=np.int64)


def _relabel(triples: np.ndarray, ent_perm: np.ndarray, rel_perm: np.ndarray) -> np.ndarray:
    return np.stack([ent_perm[triples[:, 0]], rel_perm[triples[:, 1]], ent_perm[triples[:, 2]]], axis=1)


def isomorphic_pair(
    n_entities: int = 100, n_relations: int = 10, mean_degree: float = 5.0, seed: int = 0
) -> KnowledgeGraphPair:
    """KG2 is KG1 with entities and relations relabelled by random permutations."""
    rng = np.random.default_rng(seed)
    n_triples = int(round(n_entities * mean_degree / 2))
    t1 = random_triples(n_entities, n_relations, n_triples, rng)
    ent_perm = rng.permutation(n_entities)
    rel_perm = rng.permutation(n_relations)
    t2 = _relabel(t1, ent_perm, rel_perm)
    g1 = TripleStore(n_entities, n_relations, t1, entity_uris=tuple(f"kg1/e{i}" for i in range(n_entities)))
    g2 = TripleStore(n_entities, n_relations, t2, entity_uris=tuple(f"kg2/e{i}" for i in range(n_entities)))
    alignment = np.stack([np.arange(n_entities), ent_perm], axis=1)
    return KnowledgeGraphPair(g1, g2, alignment)


def dbp_style_pair(
    n_entities: int = 1000,
    n_relations: int = 60,
    mean_degree: float = 4.0,
    keep: float = 0.8,
    zipf: float = 1.1,
    seed: int = 0,
) -> KnowledgeGraphPair:
    """Two noisy views of one heavy-tailed 'world' graph, in the spirit of DBP15K.

    Tail endpoints are drawn with Zipf weights so a few hub entities collect
    most edges and many long-tail entities hang off the same hubs under
    different relations. Each KG keeps a triple independently with
    probability ``keep``; KG2 relabels entities and relations.
    """
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, n_entities + 1) ** zipf
    weights /= weights.sum()
    popularity = rng.permutation(n_entities)  # hub ranks are not the ids
    rel_weights = 1.0 / np.arange(1, n_relations + 1)
    rel_weights /= rel_weights.sum()

    n_triples = int(round(n_entities * mean_degree / 2))
    world = set()
    for e in range(n_entities):
        t = popularity[rng.choice(n_entities, p=weights)]
        if t != e:
            world.add((e, int(rng.choice(n_relations, p=rel_weights)), int(t)))
    while len(world) < n_triples:
        h = int(rng.integers(n_entities))
        t = int(popularity[rng.choice(n_entities, p=weights)])
        if h != t:
            world.add((h, int(rng.choice(n_relations, p=rel_weights)), t))
    world = np.array(sorted(world), dtype=np.int64)

    t1 = world[rng.random(len(world)) < keep]
    t2 = world[rng.random(len(world)) < keep]
    ent_perm = rng.permutation(n_entities)
    rel_perm = rng.permutation(n_relations)
    t2 = _relabel(t2, ent_perm, rel_perm)
    g1 = TripleStore(n_entities, n_relations, t1, entity_uris=tuple(f"kg1/e{i}" for i in range(n_entities)))
    g2 = TripleStore(n_entities, n_relations, t2, entity_uris=tuple(f"kg2/e{i}" for i in range(n_entities)))
    return KnowledgeGraphPair(g1, g2, np.stack([np.arange(n_entities), ent_perm], axis=1))


def tiny_pair() -> KnowledgeGraphPair:
    """5 entities (3 + 2) and 2 relations (1 + 1): the gradient-check fixture."""
    g1 = TripleStore(3, 1, [(0, 0, 1), (1, 0, 2)])  # a path: no automorphism
    g2 = TripleStore(2, 1, [(0, 0, 1)])
    return KnowledgeGraphPair(g1, g2, [(0, 0), (1, 1)])
