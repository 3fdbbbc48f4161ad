"""Relation-pattern checks on phase vectors.

Residuals are angular distances to the set of phases satisfying the
pattern, so a tolerance reads directly in radians:

* symmetric: distance of theta_j to the nearest of {0, pi}
* inverse: |wrap(theta1_j + theta2_j)|
* composition: |wrap(theta1_j - theta2_j - theta3_j)|

Arguments may be (D,) phase vectors, (k, D) stacks, or SemanticComponentSets.
With several components the verdict holds when some combination of one
component per relation satisfies the congruence; the best such combination
is reported.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..numeric import wrap_angle

PATTERNS = {"symmetric": 1, "antisymmetric": 1, "inverse": 2, "composition": 3}


@dataclass(frozen=True)
class PatternVerdict:
    pattern: str
    holds: bool
    residuals: np.ndarray  # per coordinate, for the best component combination
    fraction_within: float
    components: tuple[int, ...]


def _stack(x) -> np.ndarray:
    phases = getattr(x, "phases", x)
    return np.atleast_2d(np.asarray(phases, dtype=np.float64))


def residuals(pattern: str, *phases) -> np.ndarray:
    if pattern in ("symmetric", "antisymmetric"):
        (a,) = phases
        return np.abs(wrap_angle(2.0 * a)) / 2.0
    if pattern == "inverse":
        a, b = phases
        return np.abs(wrap_angle(a + b))
    if pattern == "composition":
        a, b, c = phases
        return np.abs(wrap_angle(a - b - c))
    raise ValueError(f"unknown pattern {pattern!r}")


def check_pattern(pattern: str, *relations, tol: float = 0.2, min_fraction: float = 1.0) -> PatternVerdict:
    """Test ``pattern`` on the given relations.

    ``min_fraction`` is the share of coordinates that must fall within
    ``tol``; 1.0 demands every coordinate. Antisymmetry is the negation of
    symmetry.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}")
    if len(relations) != PATTERNS[pattern]:
        raise ValueError(f"{pattern} takes {PATTERNS[pattern]} relation(s), got {len(relations)}")
    stacks = [_stack(r) for r in relations]
    if len({s.shape[1] for s in stacks}) != 1:
        raise ValueError("phase dimensions differ across relations")

    best = None
    for combo in itertools.product(*(range(len(s)) for s in stacks)):
        res = residuals(pattern, *(s[i] for s, i in zip(stacks, combo)))
        frac = float(np.mean(res <= tol))
        key = (frac, -float(res.mean()))
        if best is None or key > best[0]:
            best = (key, res, frac, combo)
    _, res, frac, combo = best
    holds = frac >= min_fraction
    if pattern == "antisymmetric":
        # antisymmetric only if every component breaks symmetry somewhere
        holds = not holds
    return PatternVerdict(pattern, holds, res, frac, tuple(int(i) for i in combo))
