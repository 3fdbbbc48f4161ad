"""Planted knowledge graphs for pattern and multi-semantic experiments."""

from __future__ import annotations

import numpy as np

from .store import TripleStore


def _filler(rng, n_entities, n, rel, taken):
    out = set()
    while len(out) < n:
        a, b = (int(x) for x in rng.integers(n_entities, size=2))
        if a != b and (a, rel, b) not in taken:
            out.add((a, rel, b))
    return sorted(out)


def planted_pattern_kg(pattern: str, n_entities: int = 200, n_filler: int = 200, seed: int = 0) -> TripleStore:
    """A KG whose relations ``r1`` (and ``r2``, ``r3``) satisfy ``pattern``.

    A ``filler`` relation over random pairs is added so that every entity
    coordinate receives gradient signal; without it, coordinates that the
    planted relations do not constrain collapse towards zero modulus and
    their phases become arbitrary.
    """
    rng = np.random.default_rng(seed)
    perm = [int(x) for x in rng.permutation(n_entities)]
    tr = []
    if pattern == "symmetric":
        rels = ["r1", "filler"]
        for i in range(0, n_entities - 1, 2):
            a, b = perm[i], perm[i + 1]
            tr += [(a, 0, b), (b, 0, a)]
    elif pattern == "inverse":
        rels = ["r1", "r2", "filler"]
        pairs = set()
        while len(pairs) < int(1.5 * n_entities):
            a, b = (int(x) for x in rng.integers(n_entities, size=2))
            if a != b:
                pairs.add((a, b))
        for a, b in sorted(pairs):
            tr += [(a, 0, b), (b, 1, a)]
    elif pattern == "composition":
        rels = ["r1", "r2", "r3", "filler"]
        for i in range(0, n_entities - 2, 3):
            x, y, z = perm[i], perm[i + 1], perm[i + 2]
            tr += [(x, 1, y), (y, 2, z), (x, 0, z)]
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    filler = len(rels) - 1
    tr += _filler(rng, n_entities, n_filler, filler, set(tr))
    tr = list(dict.fromkeys(tr))
    return TripleStore([f"e{i}" for i in range(n_entities)], rels, {"train": np.array(tr, dtype=np.int64)})


def planted_two_cluster(
    n_entities: int = 400,
    dim: int = 32,
    n_per_cluster: int = 50,
    centers=(1.0, -1.0),
    sigma: float = 0.05,
    test_fraction: float = 0.2,
    seed: int = 0,
):
    """Entities fixed at planted complex values and one relation whose pairs
    rotate by one of two phase offsets (constant across coordinates, plus
    Gaussian noise). Returns (store, entity table)."""
    rng = np.random.default_rng(seed)
    n_pairs = n_per_cluster * len(centers)
    if 2 * n_pairs > n_entities:
        raise ValueError("not enough entities for disjoint pairs")
    E = np.exp(1j * rng.uniform(-np.pi, np.pi, (n_entities, dim))) * rng.uniform(0.5, 1.5, (n_entities, dim))
    perm = rng.permutation(n_entities)
    triples = []
    for i in range(n_pairs):
        h, t = int(perm[2 * i]), int(perm[2 * i + 1])
        theta = centers[i // n_per_cluster] + rng.normal(0.0, sigma, dim)
        E[t] = E[h] * np.exp(1j * theta)
        triples.append((h, 0, t))
    triples = np.array(triples, dtype=np.int64)[rng.permutation(n_pairs)]
    n_test = int(round(test_fraction * n_pairs))
    store = TripleStore(
        [f"e{i}" for i in range(n_entities)],
        ["r"],
        {"train": triples[n_test:], "test": triples[:n_test]},
    )
    return store, E
