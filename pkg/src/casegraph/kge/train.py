"""Negative-sampling training for rotational and translational embeddings."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..numeric import Adam
from .evaluate import eval_link_prediction
from .models import RotatEModel, TransEModel

log = logging.getLogger(__name__)


@dataclass
class KgeTrainConfig:
    dim: int = 64
    gamma: float = 6.0
    negatives: int = 8
    lr: float = 0.01
    batch_size: int = 256
    epochs: int = 200
    patience: int = 3
    eval_every: int = 10
    self_adversarial: bool = False
    adv_temperature: float = 1.0
    norm: str = "l1"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


def corrupt(batch, n_entities: int, k: int, rng):
    """k negatives per positive: a coin flip picks head or tail, then a
    uniformly drawn entity replaces it."""
    B = len(batch)
    heads = np.repeat(batch[:, :1], k, axis=1)
    tails = np.repeat(batch[:, 2:], k, axis=1)
    rand = rng.integers(n_entities, size=(B, k))
    flip_head = rng.random(B) < 0.5
    heads = np.where(flip_head[:, None], rand, heads)
    tails = np.where(flip_head[:, None], tails, rand)
    return heads, tails


def negative_sampling_loss(model, batch, neg_heads, neg_tails, config: KgeTrainConfig, grads=None):
    """Margin-sigmoid loss averaged over the batch.

    loss = 0.5 * mean(-log s(gamma - d_pos)) + 0.5 * mean(-sum_k w_k log s(d_neg_k - gamma))

    with uniform weights 1/k or, under self-adversarial sampling, a softmax of
    the negatives' scores held constant. Gradients are accumulated into
    ``grads`` when given.
    """
    gamma = config.gamma
    h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
    B, k = neg_heads.shape
    d_pos = model.distance(h, r, t)
    rk = np.repeat(r[:, None], k, axis=1)
    d_neg = model.distance(neg_heads, rk, neg_tails)
    if config.self_adversarial:
        z = config.adv_temperature * (gamma - d_neg)
        z -= z.max(axis=1, keepdims=True)
        w = np.exp(z)
        w /= w.sum(axis=1, keepdims=True)
    else:
        w = np.full((B, k), 1.0 / k)
    pos_loss = -_log_sigmoid(gamma - d_pos)
    neg_loss = -(w * _log_sigmoid(d_neg - gamma)).sum(axis=1)
    loss = 0.5 * pos_loss.mean() + 0.5 * neg_loss.mean()
    if grads is not None:
        c_pos = 0.5 / B * _sigmoid(d_pos - gamma)
        c_neg = -0.5 / B * w * _sigmoid(gamma - d_neg)
        model.add_grads(h, r, t, c_pos, grads)
        model.add_grads(neg_heads, rk, neg_tails, c_neg, grads)
    return float(loss)


def _train(model, store, config: KgeTrainConfig, rng, frozen=()):
    train = store.train
    if len(train) == 0:
        raise ValueError("empty training partition")
    params = {k: v for k, v in model.params.items() if k not in frozen}
    opt = Adam(params, lr=config.lr)
    best, stale, lr = -np.inf, 0, config.lr
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for b0 in range(0, len(order), config.batch_size):
            batch = train[order[b0 : b0 + config.batch_size]]
            nh, nt = corrupt(batch, store.n_entities, config.negatives, rng)
            grads = {k: np.zeros_like(v) for k, v in model.params.items()}
            total += negative_sampling_loss(model, batch, nh, nt, config, grads) * len(batch)
            opt.step({k: g for k, g in grads.items() if k not in frozen})
        history.append(total / len(train))
        if len(store.valid) and config.eval_every and (epoch + 1) % config.eval_every == 0:
            mrr = eval_link_prediction(store, lambda hh, rr, tt: -model.distance(hh, rr, tt), "valid")["mrr"]
            if mrr > best + 1e-9:
                best, stale = mrr, 0
            else:
                stale += 1
                if stale >= config.patience:
                    lr *= 0.5
                    opt.set_lr(lr)
                    stale = 0
                    log.info("epoch %d: validation MRR stalled at %.4f, lr -> %g", epoch, best, lr)
    model.history = history
    model.final_lr = lr
    return model


def train_rotate(store, config: KgeTrainConfig | None = None) -> RotatEModel:
    """Fit entity vectors and relation phases with Adam on corrupted-triple
    negatives; halve the learning rate when validation MRR stalls."""
    config = config or KgeTrainConfig()
    rng = np.random.default_rng(config.seed)
    model = RotatEModel.init(store.n_entities, store.n_relations, config.dim, config.gamma, rng, config.norm)
    _train(model, store, config, rng)
    model.params["phase"][...] = model.phases
    return model


def train_transe(store, config: KgeTrainConfig | None = None) -> TransEModel:
    config = config or KgeTrainConfig()
    rng = np.random.default_rng(config.seed)
    model = TransEModel.init(store.n_entities, store.n_relations, config.dim, config.gamma, rng, config.norm)
    return _train(model, store, config, rng)
