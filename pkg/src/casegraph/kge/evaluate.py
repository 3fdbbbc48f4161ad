"""Filtered link-prediction metrics."""

from __future__ import annotations

from collections import defaultdict

import numpy as np


def _filters(triples):
    tails = defaultdict(set)
    heads = defaultdict(set)
    for h, r, t in triples:
        tails[(int(h), int(r))].add(int(t))
        heads[(int(r), int(t))].add(int(h))
    return tails, heads


def filtered_rank(scores, target: int, exclude) -> float:
    """Rank of ``target`` among candidates minus ``exclude`` (higher score is
    better); tied candidates share the mean of their ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(scores), dtype=bool)
    if exclude:
        keep[list(exclude)] = False
    keep[target] = False
    s = scores[target]
    better = np.count_nonzero(scores[keep] > s)
    ties = np.count_nonzero(scores[keep] == s)
    return 1.0 + better + 0.5 * ties


def eval_link_prediction(store, scorer, partition: str = "test", both_sides: bool = True, filter_triples=None):
    """MRR and Hits@{1,3,10} with filtered ranking.

    ``scorer(heads, relation, tails)`` returns plausibility scores (higher is
    better) for broadcast index arrays. Known triples from every partition
    are filtered unless ``filter_triples`` is given.
    """
    triples = store.partitions[partition]
    if len(triples) == 0:
        raise ValueError(f"partition {partition!r} is empty")
    tails_f, heads_f = _filters(store.all_triples() if filter_triples is None else filter_triples)
    every = np.arange(store.n_entities)
    ranks = []
    for h, r, t in triples:
        h, r, t = int(h), int(r), int(t)
        s = scorer(np.full(store.n_entities, h), r, every)
        ranks.append(filtered_rank(s, t, tails_f[(h, r)] - {t}))
        if both_sides:
            s = scorer(every, r, np.full(store.n_entities, t))
            ranks.append(filtered_rank(s, h, heads_f[(r, t)] - {h}))
    ranks = np.array(ranks)
    return {
        "mrr": float(np.mean(1.0 / ranks)),
        "hits@1": float(np.mean(ranks <= 1)),
        "hits@3": float(np.mean(ranks <= 3)),
        "hits@10": float(np.mean(ranks <= 10)),
        "n_queries": int(len(ranks)),
    }
