"""Linear-chain CRF over BIO labels.

Label layout: ``0..L-1`` are real labels, ``L`` is the virtual START state
and ``L+1`` the virtual STOP state. A transition matrix therefore has shape
``(L+2, L+2)``. Forbidden transitions are pinned at ``MASKED_SCORE``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numeric import log_sum_exp

MASKED_SCORE = -10000.0


class IllegalPathError(ValueError):
    pass


@dataclass(frozen=True)
class TagSet:
    entity_types: tuple[str, ...]

    def __post_init__(self):
        types = tuple(self.entity_types)
        if len(set(types)) != len(types):
            raise ValueError("duplicate entity types in TagSet")
        object.__setattr__(self, "entity_types", types)

    @property
    def labels(self) -> list[str]:
        out = ["O"]
        for t in self.entity_types:
            out += [f"B-{t}", f"I-{t}"]
        return out

    @property
    def n_labels(self) -> int:
        return 1 + 2 * len(self.entity_types)

    @property
    def start(self) -> int:
        return self.n_labels

    @property
    def stop(self) -> int:
        return self.n_labels + 1

    def index(self, label: str) -> int:
        if label == "O":
            return 0
        prefix, _, etype = label.partition("-")
        try:
            k = self.entity_types.index(etype)
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None
        if prefix == "B":
            return 1 + 2 * k
        if prefix == "I":
            return 2 + 2 * k
        raise KeyError(f"unknown label {label!r}")

    def label(self, index: int) -> str:
        return self.labels[index]

    def encode(self, labels) -> np.ndarray:
        return np.array([self.index(x) for x in labels], dtype=np.int64)

    def decode(self, indices) -> list[str]:
        labels = self.labels
        return [labels[i] for i in indices]

    def to_dict(self) -> dict:
        return {"entity_types": list(self.entity_types)}

    @classmethod
    def from_dict(cls, d: dict) -> "TagSet":
        return cls(tuple(d["entity_types"]))


def build_transition_mask(tagset: TagSet) -> np.ndarray:
    """Boolean (L+2, L+2) matrix; True where a transition is allowed."""
    L = tagset.n_labels
    start, stop = tagset.start, tagset.stop
    mask = np.zeros((L + 2, L + 2), dtype=bool)
    sources = list(range(L)) + [start]
    for i in sources:
        for j in range(L):
            if j >= 1 and j % 2 == 0:  # I-x
                mask[i, j] = i in (j - 1, j)
            else:
                mask[i, j] = True
    mask[:L, stop] = True
    return mask


def masked_transitions(A, mask) -> np.ndarray:
    A = np.array(A, dtype=np.float64)
    A[~mask] = MASKED_SCORE
    return A


def _check_path(P, y):
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if P.ndim != 2:
        raise ValueError("emissions must be an (n, L) matrix")
    if y.shape != (P.shape[0],):
        raise ValueError(f"label sequence length {y.shape} does not match {P.shape[0]} tokens")
    if np.any(y < 0) or np.any(y >= P.shape[1]):
        raise ValueError("label index out of range")
    return P, y


def path_score(P, A, y) -> float:
    """Emission plus transition score of a label path, START/STOP included."""
    P, y = _check_path(P, y)
    A = np.asarray(A, dtype=np.float64)
    L = P.shape[1]
    terms = [A[L, y[0]], A[y[-1], L + 1]]
    terms += A[y[:-1], y[1:]].tolist()
    terms += P[np.arange(len(y)), y].tolist()
    # correctly rounded, so the value does not depend on summation order
    return math.fsum(terms)


def log_partition(P, A) -> float:
    P = np.asarray(P, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    lz, _, _ = _forward(P[None], np.array([P.shape[0]]), A)
    return float(lz[0])


def _forward(P, lengths, A):
    """Batched forward recursion. Returns (logZ, alpha, trans)."""
    B, T, L = P.shape
    trans = A[:L, :L]
    alpha = np.empty((B, T, L))
    alpha[:, 0] = A[L, :L][None] + P[:, 0]
    for t in range(1, T):
        nxt = log_sum_exp(alpha[:, t - 1, :, None] + trans[None], axis=1) + P[:, t]
        live = (t < lengths)[:, None]
        alpha[:, t] = np.where(live, nxt, alpha[:, t - 1])
    last = alpha[np.arange(B), lengths - 1]
    logz = log_sum_exp(last + A[:L, L + 1][None], axis=1)
    return logz, alpha, trans


def _backward(P, lengths, A):
    B, T, L = P.shape
    trans = A[:L, :L]
    beta = np.zeros((B, T, L))
    stop = A[:L, L + 1]
    for t in range(T - 1, -1, -1):
        is_last = (lengths - 1 == t)[:, None]
        if t + 1 < T:
            inner = log_sum_exp(trans[None] + (P[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        else:
            inner = np.zeros((B, L))
        beta[:, t] = np.where(is_last, stop[None], inner)
    return beta


def batch_nll(P, lengths, A, Y):
    """Summed negative log-likelihood of a padded batch, with exact gradients.

    P: (B, T, L) emissions, lengths: (B,), Y: (B, T) gold labels (padding
    ignored). Returns (loss, dP, dA) where dA covers the full (L+2)^2 matrix.
    """
    P = np.asarray(P, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    Y = np.asarray(Y, dtype=np.int64)
    A = np.asarray(A, dtype=np.float64)
    B, T, L = P.shape
    valid = np.arange(T)[None, :] < lengths[:, None]

    logz, alpha, trans = _forward(P, lengths, A)
    beta = _backward(P, lengths, A)

    rows = np.arange(B)
    last = Y[rows, lengths - 1]
    gold = A[L, Y[:, 0]] + A[last, L + 1]
    gold += np.where(valid, np.take_along_axis(P, Y[:, :, None], axis=2)[:, :, 0], 0.0).sum(axis=1)
    if T > 1:
        pair_valid = valid[:, 1:]
        gold += np.where(pair_valid, A[Y[:, :-1], Y[:, 1:]], 0.0).sum(axis=1)
    loss = float(np.sum(logz - gold))

    node = np.exp(alpha + beta - logz[:, None, None]) * valid[:, :, None]
    dP = node.copy()
    dP[rows[:, None], np.arange(T)[None, :], Y] -= valid.astype(np.float64)

    dA = np.zeros_like(A)
    dA[L, :L] = node[:, 0].sum(axis=0)
    dA[:L, L + 1] = node[rows, lengths - 1].sum(axis=0)
    if T > 1:
        edge = np.exp(
            alpha[:, :-1, :, None]
            + trans[None, None]
            + (P[:, 1:] + beta[:, 1:])[:, :, None, :]
            - logz[:, None, None, None]
        )
        edge *= valid[:, 1:, None, None]
        dA[:L, :L] = edge.sum(axis=(0, 1))
        np.add.at(dA, (Y[:, :-1][valid[:, 1:]], Y[:, 1:][valid[:, 1:]]), -1.0)
    np.add.at(dA, (np.full(B, L), Y[:, 0]), -1.0)
    np.add.at(dA, (last, np.full(B, L + 1)), -1.0)
    return loss, dP, dA


def nll(P, A, y, mask=None):
    """Negative log-likelihood of one path with gradients (value, dP, dA).

    When ``mask`` is given, a gold path that uses a forbidden transition
    raises IllegalPathError.
    """
    P, y = _check_path(P, y)
    A = np.asarray(A, dtype=np.float64)
    if mask is not None:
        bad = violations(y, mask)
        if bad:
            raise IllegalPathError(f"gold path uses forbidden transitions {bad}")
    loss, dP, dA = batch_nll(P[None], np.array([len(y)]), A, y[None])
    return loss, dP[0], dA


def violations(y, mask) -> list[tuple[int, int]]:
    """Forbidden (from, to) transitions along a path, START/STOP included."""
    L = mask.shape[0] - 2
    seq = [L] + [int(v) for v in y] + [L + 1]
    return [(a, b) for a, b in zip(seq[:-1], seq[1:]) if not mask[a, b]]


def viterbi(P, A) -> tuple[np.ndarray, float]:
    """Best label path and its score.

    Ties resolve to the lowest label index at the latest differing position:
    the final label and every back-pointer take the first maximiser.
    """
    P = np.asarray(P, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    n, L = P.shape
    if n < 1:
        raise ValueError("viterbi needs at least one token")
    trans = A[:L, :L]
    delta = A[L, :L] + P[0]
    back = np.zeros((n, L), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(L)] + P[t]
    final = delta + A[:L, L + 1]
    y = np.empty(n, dtype=np.int64)
    y[-1] = int(np.argmax(final))
    for t in range(n - 1, 0, -1):
        y[t - 1] = back[t, y[t]]
    return y, path_score(P, A, y)


def enumerate_paths(n: int, L: int) -> np.ndarray:
    """All L**n label sequences as an (L**n, n) array, lexicographic order."""
    grids = np.indices((L,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


def brute_force_scores(P, A) -> tuple[np.ndarray, np.ndarray]:
    """Scores of every label path by direct summation (test oracle)."""
    P = np.asarray(P, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    n, L = P.shape
    paths = enumerate_paths(n, L)
    s = A[L, paths[:, 0]] + A[paths[:, -1], L + 1]
    for i in range(n):
        s = s + P[i, paths[:, i]]
        if i + 1 < n:
            s = s + A[paths[:, i], paths[:, i + 1]]
    return paths, s
