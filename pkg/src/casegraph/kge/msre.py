"""Multi-semantic relation embedding.

A relation whose (head, tail) phase differences form several clusters is
represented by one phase vector per cluster. Clusters come from Mean-Shift
on PCA-reduced relation angle vectors; each component is the per-coordinate
circular mean of its members in the full angle space. Scoring takes the best
component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numeric import (
    Adam,
    UndefinedMeanError,
    ZeroVarianceError,
    circular_mean,
    mean_shift,
    pca_fit,
    wrap_angle,
)
from .models import rotate_score
from .train import KgeTrainConfig, corrupt, negative_sampling_loss


def relation_angle_vector(h, t):
    """Per-coordinate phase difference arg(t_j) - arg(h_j) in (-pi, pi]."""
    h = np.asarray(h, dtype=np.complex128)
    t = np.asarray(t, dtype=np.complex128)
    if h.shape != t.shape:
        raise ValueError(f"dimension mismatch: {h.shape} vs {t.shape}")
    if np.any(np.abs(h) < 1e-12) or np.any(np.abs(t) < 1e-12):
        raise ValueError("undefined phase: zero-modulus coordinate")
    return wrap_angle(np.angle(t) - np.angle(h))


@dataclass(frozen=True)
class AngleVectorSet:
    relation: str
    pairs: np.ndarray  # (c, 2) head/tail entity ids
    angles: np.ndarray  # (c, D)

    def __len__(self):
        return len(self.angles)


def collect_relation_angles(store, entity_table, relation) -> AngleVectorSet:
    """One angle vector per training (head, tail) pair of ``relation``."""
    r = store.relation_id(relation)
    train = store.train
    rows = train[train[:, 1] == r]
    if len(rows) == 0:
        raise ValueError(f"relation {store.relations[r]!r} has no training triples")
    E = np.asarray(entity_table)
    angles = relation_angle_vector(E[rows[:, 0]], E[rows[:, 2]])
    return AngleVectorSet(store.relations[r], rows[:, [0, 2]].copy(), np.atleast_2d(angles))


@dataclass
class SemanticComponentSet:
    relation: str
    phases: np.ndarray  # (k, D)
    counts: np.ndarray  # (k,)
    assignments: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    bandwidth: float | None = None

    @property
    def k(self) -> int:
        return len(self.phases)

    def to_json(self) -> dict:
        return {
            "relation": self.relation,
            "phases": self.phases.tolist(),
            "counts": [int(c) for c in self.counts],
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SemanticComponentSet":
        return cls(
            d["relation"],
            np.array(d["phases"], dtype=np.float64).reshape(len(d["counts"]), -1),
            np.array(d["counts"], dtype=np.int64),
            bandwidth=d.get("bandwidth"),
        )

    @classmethod
    def single(cls, relation: str, phase) -> "SemanticComponentSet":
        phase = wrap_angle(np.atleast_2d(phase))
        return cls(relation, phase, np.ones(1, dtype=np.int64))


def _average(angles, method: str):
    if method == "arithmetic":
        return wrap_angle(angles.mean(axis=0))
    try:
        return circular_mean(angles, axis=0)
    except UndefinedMeanError:
        # a perfectly dispersed coordinate has no mean direction; fall back
        s = np.sin(angles).sum(axis=0)
        c = np.cos(angles).sum(axis=0)
        out = np.arctan2(s, c)
        bad = np.hypot(s, c) < 1e-12
        out[bad] = angles.mean(axis=0)[bad]
        return wrap_angle(out)


def derive_components(
    angles: AngleVectorSet,
    pca_dim: int = 2,
    bandwidth: float | None = None,
    average: str = "circular",
    min_cluster_size: int = 2,
    embed: str = "angle",
    kernel: str = "flat",
    max_iter: int = 300,
    tol: float = 1e-6,
) -> SemanticComponentSet:
    """Cluster relation angle vectors and average each cluster.

    ``embed="circle"`` clusters (cos, sin) pairs instead of raw angles, which
    keeps clusters near the +-pi cut together. Clusters smaller than
    ``min_cluster_size`` are folded into the nearest larger cluster once the
    relation has at least four pairs.
    """
    A = np.asarray(angles.angles, dtype=np.float64)
    c, D = A.shape
    if pca_dim > D:
        raise ValueError(f"pca_dim={pca_dim} exceeds angle dimension {D}")
    if average not in ("circular", "arithmetic"):
        raise ValueError(f"unknown averaging {average!r}")
    if c == 1:
        return SemanticComponentSet(angles.relation, A.copy(), np.ones(1, dtype=np.int64), np.zeros(1, dtype=np.int64))
    X = np.concatenate([np.cos(A), np.sin(A)], axis=1) if embed == "circle" else A
    try:
        pca = pca_fit(X, min(pca_dim, X.shape[1]))
    except ZeroVarianceError:
        return SemanticComponentSet(
            angles.relation, _average(A, average)[None], np.array([c]), np.zeros(c, dtype=np.int64)
        )
    Z = pca.transform(X)
    ms = mean_shift(Z, bandwidth=bandwidth, max_iter=max_iter, tol=tol, kernel=kernel)
    labels = ms.assignments.copy()
    modes = ms.modes

    sizes = np.bincount(labels, minlength=len(modes))
    if c >= 4:
        big = np.flatnonzero(sizes >= min_cluster_size)
        if len(big):
            for m in np.flatnonzero(sizes < min_cluster_size):
                target = big[np.argmin(np.sum((modes[big] - modes[m]) ** 2, axis=1))]
                labels[labels == m] = target

    groups = [np.flatnonzero(labels == m) for m in np.unique(labels)]
    phases = [_average(A[g], average) for g in groups]
    counts = [len(g) for g in groups]
    # canonical order: larger clusters first, then by phase values
    order = sorted(range(len(groups)), key=lambda i: (-counts[i], tuple(np.round(phases[i], 6))))
    remap = np.empty(len(groups), dtype=np.int64)
    new_labels = np.empty(c, dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
        new_labels[groups[old]] = new
    return SemanticComponentSet(
        angles.relation,
        np.array([phases[i] for i in order]),
        np.array([counts[i] for i in order], dtype=np.int64),
        new_labels,
        ms.bandwidth,
    )


def msre_score(h, components, t, norm: str = "l1"):
    """Best component score max_k -|h o v_k - t| and the index achieving it.

    ``components`` is a SemanticComponentSet or a (k, D) phase array.
    ``h`` and ``t`` may carry leading batch dimensions; scores and indices
    then come back with that batch shape.
    """
    phases = components.phases if isinstance(components, SemanticComponentSet) else np.atleast_2d(components)
    h = np.asarray(h)
    t = np.asarray(t)
    scores = -rotate_score(h[..., None, :], phases, t[..., None, :], norm)
    idx = np.argmax(scores, axis=-1)
    best = np.take_along_axis(scores, idx[..., None], axis=-1)[..., 0]
    if best.ndim == 0:
        return float(best), int(idx)
    return best, idx


@dataclass
class MsreModel:
    """Frozen entity vectors plus a component set per relation."""

    entities: np.ndarray  # complex (N, D)
    components: dict[int, SemanticComponentSet]
    norm: str = "l1"

    @classmethod
    def from_rotate(cls, rotate_model, store, components_by_name=None, derive=False, **derive_kwargs):
        """Start from a trained RotatE model. Relations without derived
        components keep their single learned phase vector."""
        E = rotate_model.entities
        comps = {}
        phases = rotate_model.phases
        for r, name in enumerate(store.relations):
            if components_by_name and name in components_by_name:
                comps[r] = components_by_name[name]
            elif derive and np.any(store.train[:, 1] == r):
                comps[r] = derive_components(collect_relation_angles(store, E, r), **derive_kwargs)
            else:
                comps[r] = SemanticComponentSet.single(name, phases[r])
        return cls(E, comps, rotate_model.norm)

    def score_with_component(self, h, r, t):
        r = int(r)
        if r not in self.components:
            raise KeyError(f"unknown relation id {r}")
        E = self.entities
        return msre_score(E[np.asarray(h)], self.components[r], E[np.asarray(t)], self.norm)

    def score(self, h, r, t):
        return self.score_with_component(h, r, t)[0]

    __call__ = score


def complete(store, model, query, filtered: bool = True, top: int | None = None):
    """Rank candidate entities for ``(h, r, None)`` or ``(None, r, t)``.

    ``model`` is any object with ``score_with_component(h, r, t)`` (an
    MsreModel) or a plain scorer ``f(h, r, t)``. With ``filtered`` the
    entities already known to complete the query are dropped. Returns a list
    of (entity name, score, component index) sorted by descending score,
    ties by entity id.
    """
    h, r, t = query
    if (h is None) == (t is None):
        raise ValueError("exactly one of head and tail must be None")
    r = store.relation_id(r)
    every = np.arange(store.n_entities)
    if t is None:
        h = store.entity_id(h)
        heads, tails = np.full(store.n_entities, h), every
    else:
        t = store.entity_id(t)
        heads, tails = every, np.full(store.n_entities, t)
    if hasattr(model, "score_with_component"):
        scores, comp = model.score_with_component(heads, r, tails)
    else:
        scores, comp = np.asarray(model(heads, r, tails)), np.zeros(store.n_entities, dtype=np.int64)
    keep = np.ones(store.n_entities, dtype=bool)
    if filtered:
        for hh, rr, tt in store.all_triples():
            if rr != r:
                continue
            if t is None and hh == h:
                keep[tt] = False
            elif h is None and tt == t:
                keep[hh] = False
    cand = np.flatnonzero(keep)
    order = cand[np.lexsort((cand, -scores[cand]))]
    if top is not None:
        order = order[:top]
    return [(store.entities[i], float(scores[i]), int(comp[i])) for i in order]


def finetune_components(store, msre: MsreModel, config: KgeTrainConfig | None = None) -> MsreModel:
    """Train component phases only, entities frozen.

    Each triple (positive or negative) is scored by its best component, and
    the gradient flows into that component alone.
    """
    config = config or KgeTrainConfig(epochs=50)
    rng = np.random.default_rng(config.seed)
    rel_ids = sorted(msre.components)
    offsets, flat = {}, []
    for r in rel_ids:
        offsets[r] = sum(len(p) for p in flat)
        flat.append(msre.components[r].phases)
    flat_phase = np.concatenate(flat, axis=0).copy()

    from .models import RotatEModel

    inner = RotatEModel(
        {"ent_re": msre.entities.real.copy(), "ent_im": msre.entities.imag.copy(), "phase": flat_phase},
        msre.norm,
    )

    class _Routed:
        def __init__(self):
            self.params = inner.params
            self.norm = inner.norm

        def _virtual(self, h, r, t):
            h, r, t = np.broadcast_arrays(h, r, t)
            v = np.empty(h.shape, dtype=np.int64)
            E = inner.entities
            for rid in np.unique(r):
                sel = r == rid
                ph = inner.params["phase"][offsets[rid] : offsets[rid] + msre.components[rid].k]
                _, idx = msre_score(E[h[sel]], ph, E[t[sel]], inner.norm)
                v[sel] = offsets[rid] + idx
            return h, v, t

        def distance(self, h, r, t):
            return inner.distance(*self._virtual(h, r, t))

        def add_grads(self, h, r, t, coef, grads):
            inner.add_grads(*self._virtual(h, r, t), coef, grads)

    routed = _Routed()
    opt = Adam({"phase": inner.params["phase"]}, lr=config.lr)
    train = store.train
    for _ in range(config.epochs):
        order = rng.permutation(len(train))
        for b0 in range(0, len(order), config.batch_size):
            batch = train[order[b0 : b0 + config.batch_size]]
            nh, nt = corrupt(batch, store.n_entities, config.negatives, rng)
            grads = {k: np.zeros_like(v) for k, v in inner.params.items()}
            negative_sampling_loss(routed, batch, nh, nt, config, grads)
            opt.step({"phase": grads["phase"]})
    comps = {}
    for r in rel_ids:
        c = msre.components[r]
        ph = wrap_angle(inner.params["phase"][offsets[r] : offsets[r] + c.k])
        comps[r] = SemanticComponentSet(c.relation, ph, c.counts.copy(), c.assignments, c.bandwidth)
    return MsreModel(msre.entities, comps, msre.norm)


def reduced_angles(angles: AngleVectorSet, components: SemanticComponentSet | None = None, dim: int = 2) -> list[dict]:
    """Plot-ready rows: PCA coordinates of each angle vector plus its
    component label (0 when no components are given)."""
    A = np.asarray(angles.angles)
    if len(A) < 2:
        Z = np.zeros((len(A), dim))
    else:
        try:
            Z = pca_fit(A, min(dim, A.shape[1])).transform(A)
        except ZeroVarianceError:
            Z = np.zeros((len(A), dim))
    labels = components.assignments if components is not None and len(components.assignments) == len(A) else np.zeros(len(A), dtype=np.int64)
    return [
        {"relation": angles.relation, "head": int(h), "tail": int(t), "x": [float(v) for v in z], "component": int(c)}
        for (h, t), z, c in zip(angles.pairs, Z, labels)
    ]
