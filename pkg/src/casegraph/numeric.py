"""Shared numeric substrate: PCA, Mean-Shift, circular statistics, Adam,
log-sum-exp and a central finite-difference gradient oracle.

Everything here works in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

TWO_PI = 2.0 * np.pi


class ZeroVarianceError(ValueError):
    pass


class UndefinedMeanError(ValueError):
    pass


# ---------------------------------------------------------------------------
# elementwise helpers
# ---------------------------------------------------------------------------


def wrap_angle(x):
    """Wrap angles into (-pi, pi]."""
    x = np.asarray(x, dtype=np.float64)
    return np.pi - np.mod(np.pi - x, TWO_PI)


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def log_sum_exp(values, axis=None):
    """Numerically stable log(sum(exp(values)))."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    m = np.max(values, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(values - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (target_dim, input_dim), rows orthonormal
    explained_variance: np.ndarray  # descending
    discarded_variance: float = 0.0

    def transform(self, points):
        return (np.asarray(points, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, reduced):
        return np.asarray(reduced, dtype=np.float64) @ self.components + self.mean


def pca_fit(points, target_dim: int) -> PcaModel:
    """Fit PCA by eigendecomposition of the sample covariance (ddof=1).

    Component signs are fixed so that the largest-magnitude loading of each
    row is positive, which makes the fit deterministic.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca_fit needs at least 2 points in a 2-D array")
    n, d = X.shape
    if not 1 <= target_dim <= d:
        raise ValueError(f"target_dim={target_dim} must lie in [1, {d}]")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    if np.trace(cov) <= 1e-24:
        raise ZeroVarianceError("zero variance: all points are identical")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    comps = evecs[:, :target_dim].T.copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(target_dim), pivot])
    comps *= signs[:, None]
    return PcaModel(
        mean=mean,
        components=comps,
        explained_variance=evals[:target_dim].copy(),
        discarded_variance=float(evals[target_dim:].sum()),
    )


# ---------------------------------------------------------------------------
# Mean-Shift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanShiftResult:
    modes: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,) point index -> mode index
    bandwidth: float
    n_iter: int = 0

    @property
    def n_modes(self) -> int:
        return len(self.modes)


def default_bandwidth(points, quantile: float = 0.3, max_points: int = 2000, seed: int = 0) -> float:
    """Mean distance from each point to its k-th nearest neighbour, with
    k = quantile * n, estimated on a subsample of at most ``max_points``."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    if len(X) > max_points:
        idx = np.random.default_rng(seed).choice(len(X), size=max_points, replace=False)
        X = X[np.sort(idx)]
    if len(X) < 2:
        return 1.0
    d = np.sqrt(_pairwise_sq(X, X))
    d.sort(axis=1)
    k = min(max(1, int(quantile * len(X))), len(X) - 1)
    bw = float(d[:, k].mean())
    return bw if bw > 0 else 1.0


def _pairwise_sq(A, B):
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def mean_shift(
    points,
    bandwidth: float | None = None,
    max_iter: int = 300,
    tol: float = 1e-6,
    kernel: str = "flat",
) -> MeanShiftResult:
    """Mode seeking from every point.

    With the flat kernel each seed b moves by the mean offset of the points
    inside the open ball ||x - b|| < bandwidth. Seeds are iterated until the
    shift norm drops below ``tol``; converged positions closer than
    bandwidth/2 are merged, visiting candidates in order of decreasing
    support so the result does not depend on input order.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("mean_shift needs at least one point")
    if bandwidth is None:
        bandwidth = default_bandwidth(X)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if kernel not in ("flat", "gaussian"):
        raise ValueError(f"unknown kernel {kernel!r}")
    g2 = bandwidth * bandwidth

    seeds = X.copy()
    active = np.ones(len(X), dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        b = seeds[idx]
        d2 = _pairwise_sq(b, X)
        if kernel == "flat":
            w = (d2 < g2).astype(np.float64)
        else:
            w = np.exp(-0.5 * d2 / g2)
        wsum = w.sum(axis=1)
        # a seed always sits inside its own ball after the first step
        wsum = np.where(wsum > 0, wsum, 1.0)
        shift = (w @ X) / wsum[:, None] - b
        seeds[idx] = b + shift
        done = np.linalg.norm(shift, axis=1) < tol
        active[idx[done]] = False

    support = (_pairwise_sq(seeds, X) < g2).sum(axis=1)
    order = np.lexsort(tuple(np.round(seeds[:, ::-1].T, 9)) + (-support,))
    merge_r2 = (0.5 * bandwidth) ** 2
    modes: list[np.ndarray] = []
    for i in order:
        p = seeds[i]
        if not any(np.sum((p - m) ** 2) <= merge_r2 for m in modes):
            modes.append(p)
    modes_arr = np.array(modes)
    assignments = np.argmin(_pairwise_sq(seeds, modes_arr), axis=1)
    return MeanShiftResult(modes=modes_arr, assignments=assignments, bandwidth=float(bandwidth), n_iter=it)


# ---------------------------------------------------------------------------
# circular statistics
# ---------------------------------------------------------------------------


def circular_mean(angles, axis=None):
    """Mean direction of angles, wrapped to (-pi, pi].

    Raises UndefinedMeanError when the resultant vector vanishes.
    """
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        raise ValueError("circular_mean of an empty list")
    s = np.sin(a).sum(axis=axis)
    c = np.cos(a).sum(axis=axis)
    if np.any(np.hypot(s, c) < 1e-12):
        raise UndefinedMeanError("undefined mean: resultant vector has zero length")
    out = wrap_angle(np.arctan2(s, c))
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs) -> "AdamState":
        p = np.asarray(params, dtype=np.float64)
        return cls(m=np.zeros_like(p), v=np.zeros_like(p), **kwargs)


def adam_step(params, grads, state: AdamState, weight_decay: float = 0.0):
    """One bias-corrected Adam update. Returns (new_params, new_state).

    ``weight_decay`` is applied decoupled from the gradient (AdamW style).
    """
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape or p.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {p.shape}, grads {g.shape}, state {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_p = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if weight_decay:
        new_p = new_p - state.lr * weight_decay * p
    new_state = AdamState(m=m, v=v, step=t, lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_p, new_state


@dataclass
class Adam:
    """In-place Adam over a dict of named parameter arrays.

    ``decay`` names the parameters that receive weight decay; ``frozen`` maps
    a parameter name to a boolean mask of entries that never move.
    """

    params: dict[str, np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay: frozenset = frozenset()
    frozen: dict[str, np.ndarray] = field(default_factory=dict)
    states: dict[str, AdamState] = field(init=False)

    def __post_init__(self):
        self.states = {
            k: AdamState.zeros_like(v, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
            for k, v in self.params.items()
        }

    def set_lr(self, lr: float) -> None:
        self.lr = lr
        for s in self.states.values():
            s.lr = lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self.params:
                continue
            mask = self.frozen.get(name)
            if mask is not None:
                g = np.where(mask, 0.0, g)
            wd = self.weight_decay if name in self.decay else 0.0
            new_p, self.states[name] = adam_step(self.params[name], g, self.states[name], weight_decay=wd)
            if mask is not None:
                new_p = np.where(mask, self.params[name], new_p)
            self.params[name][...] = new_p


def decay_names(params) -> frozenset[str]:
    """Names that receive weight decay: everything except bias vectors,
    recognised by a ``_b`` suffix or ``b_`` prefix on the last dotted part."""
    out = set()
    for name in params:
        leaf = name.rsplit(".", 1)[-1]
        if not (leaf.endswith("_b") or leaf.startswith("b_")):
            out.add(name)
    return frozenset(out)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def finite_diff_grad(fn: Callable[[np.ndarray], float], point, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate."""
    x = np.array(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn(x))
        flat[i] = orig - eps
        fm = float(fn(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"function is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))
