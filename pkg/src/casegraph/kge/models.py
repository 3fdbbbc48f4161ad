"""Scoring functions for rotational (RotatE) and translational (TransE) embeddings.

Entities of a rotational model are complex vectors; a relation is a vector
of phases whose unit-modulus complex exponentials rotate the head onto the
tail. Distances are lower-is-better.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..numeric import wrap_angle

EMBEDDING_VERSION = "casegraph-kge/1"


def rotate_apply(h, theta):
    """Elementwise rotation h_j * exp(i * theta_j)."""
    h = np.asarray(h)
    theta = np.asarray(theta, dtype=np.float64)
    if h.shape[-1] != theta.shape[-1]:
        raise ValueError(f"dimension mismatch: {h.shape} vs {theta.shape}")
    return h * np.exp(1j * theta)


def rotate_score(h, theta, t, norm: str = "l1"):
    """|h o r - t|: sum of complex moduli (``l1``) or Euclidean norm (``l2``)."""
    diff = rotate_apply(h, theta) - np.asarray(t)
    mod = np.abs(diff)
    if norm == "l1":
        return mod.sum(axis=-1)
    if norm == "l2":
        return np.sqrt((mod * mod).sum(axis=-1))
    raise ValueError(f"unknown norm {norm!r}")


def transe_score(h, r, t, norm: str = "l1"):
    diff = np.asarray(h) + np.asarray(r) - np.asarray(t)
    if norm == "l1":
        return np.abs(diff).sum(axis=-1)
    if norm == "l2":
        return np.sqrt((diff * diff).sum(axis=-1))
    raise ValueError(f"unknown norm {norm!r}")


@dataclass
class RotatEModel:
    """Trainable parameters: ``ent_re``, ``ent_im`` (N, D) and ``phase`` (R, D)."""

    params: dict[str, np.ndarray]
    norm: str = "l1"
    kind: str = field(default="rotate", init=False)

    @classmethod
    def init(cls, n_entities, n_relations, dim, gamma, rng, norm="l1"):
        r = (gamma + 2.0) / dim
        return cls(
            {
                "ent_re": rng.uniform(-r, r, size=(n_entities, dim)),
                "ent_im": rng.uniform(-r, r, size=(n_entities, dim)),
                "phase": rng.uniform(-np.pi, np.pi, size=(n_relations, dim)),
            },
            norm,
        )

    @property
    def entities(self) -> np.ndarray:
        return self.params["ent_re"] + 1j * self.params["ent_im"]

    @property
    def phases(self) -> np.ndarray:
        return wrap_angle(self.params["phase"])

    def distance(self, h, r, t):
        E = self.entities
        return rotate_score(E[h], self.params["phase"][r], E[t], self.norm)

    def add_grads(self, h, r, t, coef, grads):
        """Accumulate coef * d distance / d params for index arrays h, r, t."""
        p = self.params
        h, r, t, coef = np.broadcast_arrays(h, r, t, coef)
        h, r, t, coef = h.ravel(), r.ravel(), t.ravel(), coef.ravel()
        hc = p["ent_re"][h] + 1j * p["ent_im"][h]
        tc = p["ent_re"][t] + 1j * p["ent_im"][t]
        rot = np.exp(1j * p["phase"][r])
        hr = hc * rot
        u = hr - tc
        mod = np.abs(u)
        if self.norm == "l1":
            g = u / np.maximum(mod, 1e-12)
        else:
            g = u / np.maximum(np.sqrt((mod * mod).sum(axis=1, keepdims=True)), 1e-12)
        g = g * coef[:, None]
        gh = g * np.conj(rot)
        np.add.at(grads["ent_re"], h, gh.real)
        np.add.at(grads["ent_im"], h, gh.imag)
        np.add.at(grads["ent_re"], t, -g.real)
        np.add.at(grads["ent_im"], t, -g.imag)
        np.add.at(grads["phase"], r, -np.imag(np.conj(g) * hr))

    def to_json(self, entities, relations) -> dict:
        return {
            "version": EMBEDDING_VERSION,
            "model": "rotate",
            "norm": self.norm,
            "dim": int(self.params["ent_re"].shape[1]),
            "entities": list(entities),
            "relations": list(relations),
            "entity_re": self.params["ent_re"].tolist(),
            "entity_im": self.params["ent_im"].tolist(),
            "phases": self.phases.tolist(),
        }


@dataclass
class TransEModel:
    """Baseline with real vectors: ``ent`` (N, D) and ``rel`` (R, D)."""

    params: dict[str, np.ndarray]
    norm: str = "l1"
    kind: str = field(default="transe", init=False)

    @classmethod
    def init(cls, n_entities, n_relations, dim, gamma, rng, norm="l1"):
        r = 6.0 / np.sqrt(dim)
        return cls(
            {
                "ent": rng.uniform(-r, r, size=(n_entities, dim)),
                "rel": rng.uniform(-r, r, size=(n_relations, dim)),
            },
            norm,
        )

    def distance(self, h, r, t):
        p = self.params
        return transe_score(p["ent"][h], p["rel"][r], p["ent"][t], self.norm)

    def add_grads(self, h, r, t, coef, grads):
        p = self.params
        h, r, t, coef = np.broadcast_arrays(h, r, t, coef)
        h, r, t, coef = h.ravel(), r.ravel(), t.ravel(), coef.ravel()
        diff = p["ent"][h] + p["rel"][r] - p["ent"][t]
        if self.norm == "l1":
            g = np.sign(diff)
        else:
            g = diff / np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), 1e-12)
        g = g * coef[:, None]
        np.add.at(grads["ent"], h, g)
        np.add.at(grads["rel"], r, g)
        np.add.at(grads["ent"], t, -g)

    def to_json(self, entities, relations) -> dict:
        return {
            "version": EMBEDDING_VERSION,
            "model": "transe",
            "norm": self.norm,
            "dim": int(self.params["ent"].shape[1]),
            "entities": list(entities),
            "relations": list(relations),
            "entity": self.params["ent"].tolist(),
            "relation": self.params["rel"].tolist(),
        }


def save_embeddings(path, model, entities, relations, components=None) -> None:
    d = model.to_json(entities, relations)
    if components:
        d["components"] = {name: c.to_json() for name, c in sorted(components.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh)


def load_embeddings(path):
    """Returns (model, entities, relations, components)."""
    from .msre import SemanticComponentSet

    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("version") != EMBEDDING_VERSION:
        raise ValueError(f"embedding version {d.get('version')!r} != {EMBEDDING_VERSION!r}")
    if d["model"] == "rotate":
        model = RotatEModel(
            {
                "ent_re": np.array(d["entity_re"], dtype=np.float64),
                "ent_im": np.array(d["entity_im"], dtype=np.float64),
                "phase": np.array(d["phases"], dtype=np.float64),
            },
            d.get("norm", "l1"),
        )
    elif d["model"] == "transe":
        model = TransEModel(
            {"ent": np.array(d["entity"], dtype=np.float64), "rel": np.array(d["relation"], dtype=np.float64)},
            d.get("norm", "l1"),
        )
    else:
        raise ValueError(f"unknown embedding model {d['model']!r}")
    comps = {name: SemanticComponentSet.from_json(c) for name, c in d.get("components", {}).items()}
    return model, d["entities"], d["relations"], comps
