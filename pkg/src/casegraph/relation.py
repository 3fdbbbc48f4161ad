"""Multitask relation classification with a translational-embedding auxiliary loss.

Per candidate entity pair the model builds a sentence feature from the start
slot, averaged span features for both entities, fuses them through a gelu
layer, appends entity-type embeddings and classifies with a softmax. The
auxiliary task asks ``e1 + rel_emb[true] ~ e2`` under an L1 distance and a
margin against a sampled fake relation.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoder import ConvEncoder, Vocab, pad_batch
from .ner import EntityMention
from .numeric import Adam, clip_grad_norm, decay_names, gelu, gelu_grad, softmax
from .schema import RelationSchema, SchemaError

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "casegraph-re/1"


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class RelationInstance:
    tokens: list[str]
    e1_span: tuple[int, int]
    e1_type: str
    e2_span: tuple[int, int]
    e2_type: str
    label: str | None = None
    sentence: int | None = None
    pair: tuple[int, int] | None = None

    def __post_init__(self):
        n = len(self.tokens)
        for s, e in (self.e1_span, self.e2_span):
            if not 0 <= s < e <= n:
                raise ValueError(f"span ({s}, {e}) outside sentence of length {n}")
        if tuple(self.e1_span) == tuple(self.e2_span):
            raise ValueError("entity spans must differ")
        self.e1_span = tuple(self.e1_span)
        self.e2_span = tuple(self.e2_span)

    def to_json(self) -> dict:
        return {
            "tokens": self.tokens,
            "e1": {"span": list(self.e1_span), "type": self.e1_type},
            "e2": {"span": list(self.e2_span), "type": self.e2_type},
            "label": self.label,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RelationInstance":
        return cls(
            list(d["tokens"]),
            tuple(d["e1"]["span"]),
            d["e1"]["type"],
            tuple(d["e2"]["span"]),
            d["e2"]["type"],
            d.get("label"),
        )


def read_instances(path) -> list[RelationInstance]:
    with open(path, encoding="utf-8") as fh:
        return [RelationInstance.from_json(json.loads(line)) for line in fh if line.strip()]


def write_instances(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")


@dataclass
class AnnotatedSentence:
    """Tokens, typed mentions and (for training) gold relations between
    mention indices."""

    tokens: list[str]
    mentions: list[EntityMention]
    relations: dict[tuple[int, int], str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# feature and loss operations
# ---------------------------------------------------------------------------


def sentence_feature(H, W_sent):
    """tanh of the start-slot row projected by W_sent."""
    H = np.asarray(H, dtype=np.float64)
    W_sent = np.asarray(W_sent, dtype=np.float64)
    if H.shape[-1] != W_sent.shape[0]:
        raise ValueError(f"hidden dim {H.shape[-1]} does not match W_sent {W_sent.shape}")
    return np.tanh(H[0] @ W_sent)


def entity_feature(H, span, offset: int = 1):
    """Mean of the hidden rows of a token span.

    ``offset`` skips the start slot: token i lives in row i + offset.
    """
    s, e = span
    if e <= s:
        raise ValueError(f"empty entity span {span}")
    H = np.asarray(H, dtype=np.float64)
    if e + offset > H.shape[0] or s < 0:
        raise ValueError(f"span {span} outside hidden states of {H.shape[0] - offset} tokens")
    return H[s + offset : e + offset].mean(axis=0)


def fuse(F_sent, F_ent1, F_ent2, W_fused, b_fused):
    x = np.concatenate([F_sent, F_ent1, F_ent2], axis=-1)
    if x.shape[-1] != np.shape(W_fused)[0]:
        raise ValueError(f"concatenated dim {x.shape[-1]} does not match W_fused {np.shape(W_fused)}")
    return gelu(x @ W_fused + b_fused)


def classify(F_fused, type1, type2, params, type_index):
    """Relation distribution for one pair.

    ``params`` needs ``type_emb`` and ``w_final``; ``type_index`` maps an
    entity type to its embedding row.
    """
    if type1 not in type_index or type2 not in type_index:
        raise KeyError(f"unknown entity type in ({type1}, {type2})")
    te = params["type_emb"]
    final = np.concatenate([te[type_index[type1]], te[type_index[type2]], F_fused])
    return softmax(final @ params["w_final"])


def ce_loss(distributions, gold, reduction: str = "sum") -> float:
    p = np.atleast_2d(np.asarray(distributions, dtype=np.float64))
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if len(gold) == 0:
        raise ValueError("empty batch")
    if np.any(gold < 0) or np.any(gold >= p.shape[1]):
        raise ValueError("gold label out of range")
    losses = -np.log(p[np.arange(len(gold)), gold])
    return float(losses.mean() if reduction == "mean" else losses.sum())


def translation_margin_loss(F_ent1, F_ent2, true_rel, fake_rel, gamma, rel_emb) -> float:
    """Summed hinge [gamma + ||e1 + r_true - e2||_1 - ||e1 + r_fake - e2||_1]_+."""
    F_ent1 = np.atleast_2d(F_ent1)
    F_ent2 = np.atleast_2d(F_ent2)
    true_rel = np.atleast_1d(true_rel)
    fake_rel = np.atleast_1d(fake_rel)
    if np.any(true_rel == fake_rel):
        raise ValueError("fake relation equals the true relation")
    R = np.asarray(rel_emb, dtype=np.float64)
    if R.shape[1] != F_ent1.shape[1]:
        raise ValueError(f"relation embedding dim {R.shape[1]} != entity feature dim {F_ent1.shape[1]}")
    d_true = np.abs(F_ent1 + R[true_rel] - F_ent2).sum(axis=1)
    d_fake = np.abs(F_ent1 + R[fake_rel] - F_ent2).sum(axis=1)
    return float(np.maximum(gamma + d_true - d_fake, 0.0).sum())


def sample_fake_relation(schema: RelationSchema, true_rel: str, rng) -> str:
    """Uniform over substantive relations other than ``true_rel``."""
    pool = [r for r in schema.substantive if r != true_rel]
    if len(schema.labels) < 2 or not pool:
        raise SchemaError("need at least two relation labels to sample a fake one")
    return pool[int(rng.integers(len(pool)))]


def total_loss(L1, L2, lam) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return L1 + lam * L2


@dataclass(frozen=True)
class MultitaskLossConfig:
    lam: float = 1e-5
    gamma: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


def generate_candidates(
    sentences,
    schema: RelationSchema,
    mode: str = "inference",
    keep_prob: float = 0.5,
    rng=None,
) -> list[RelationInstance]:
    """Ordered mention pairs whose type pair some relation admits.

    In training mode, pairs without a gold relation become ``Other`` and
    survive with probability ``keep_prob``.
    """
    if mode not in ("train", "inference"):
        raise ValueError(f"mode must be 'train' or 'inference', got {mode!r}")
    if mode == "train" and rng is None:
        raise ValueError("training mode needs a random generator")
    admissible = schema.admissible_pairs()
    out = []
    for si, sent in enumerate(sentences):
        ms = sent.mentions
        for i, a in enumerate(ms):
            for j, b in enumerate(ms):
                if i == j or (a.type, b.type) not in admissible:
                    continue
                if (a.start, a.end) == (b.start, b.end):
                    continue
                label = None
                if mode == "train":
                    label = sent.relations.get((i, j))
                    if label is None:
                        if rng.random() >= keep_prob:
                            continue
                        label = schema.other
                out.append(
                    RelationInstance(
                        list(sent.tokens), (a.start, a.end), a.type, (b.start, b.end), b.type, label, si, (i, j)
                    )
                )
    return out


def macro_f1(gold, predicted, include_other: bool = True, other: str = "Other", labels=None):
    """Unweighted mean of per-class precision, recall and F1.

    Returns (macro_p, macro_r, macro_f1, table) with ``table[label] =
    (p, r, f1, support)``. Classes absent from both sides are skipped.
    """
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted are not aligned")
    classes = sorted(set(labels) if labels is not None else set(gold) | set(predicted))
    if not include_other:
        classes = [c for c in classes if c != other]
    tp, n_pred, n_gold = defaultdict(int), defaultdict(int), defaultdict(int)
    for g, p in zip(gold, predicted):
        n_gold[g] += 1
        n_pred[p] += 1
        if g == p:
            tp[g] += 1
    # a class nobody produced or annotated carries no evidence either way
    classes = [c for c in classes if n_gold[c] or n_pred[c]]
    table = {}
    for c in classes:
        p = tp[c] / n_pred[c] if n_pred[c] else 0.0
        r = tp[c] / n_gold[c] if n_gold[c] else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        table[c] = (p, r, f, n_gold[c])
    if not classes:
        return 0.0, 0.0, 0.0, table
    k = len(classes)
    return (
        sum(v[0] for v in table.values()) / k,
        sum(v[1] for v in table.values()) / k,
        sum(v[2] for v in table.values()) / k,
        table,
    )


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class ReConfig:
    lam: float = 1e-5
    gamma: float = 1.0
    type_emb_dim: int = 128
    rel_emb_dim: int = 768
    fused_dim: int | None = None  # None -> hidden dim
    emb_dim: int = 64
    width: int = 5
    batch_size: int = 16
    clip: float = 2.0
    lr: float = 2e-5
    weight_decay: float = 0.01
    dropout: float = 0.1
    epochs: int = 50
    max_len: int = 400
    min_count: int = 2
    keep_prob: float = 0.5
    use_translation: bool = True
    other_in_translation: bool = False
    reduction: str = "sum"
    seed: int = 0

    def __post_init__(self):
        MultitaskLossConfig(self.lam, self.gamma)
        if self.reduction not in ("sum", "mean"):
            raise ValueError("reduction must be 'sum' or 'mean'")
        for name in ("type_emb_dim", "rel_emb_dim", "emb_dim", "width", "batch_size", "epochs", "max_len", "min_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 < self.keep_prob <= 1.0:
            raise ValueError("dropout must lie in [0, 1) and keep_prob in (0, 1]")
        if self.clip <= 0 or self.lr <= 0:
            raise ValueError("clip and lr must be positive")

    @property
    def hidden_dim(self) -> int:
        # the translation task adds relation embeddings to entity features
        return self.rel_emb_dim

    @property
    def loss_config(self) -> MultitaskLossConfig:
        return MultitaskLossConfig(self.lam, self.gamma)


@dataclass
class Batch:
    ids: np.ndarray
    lengths: np.ndarray
    span1: np.ndarray  # (B, 2)
    span2: np.ndarray
    type1: np.ndarray
    type2: np.ndarray
    labels: np.ndarray | None = None
    fake: np.ndarray | None = None
    l2_mask: np.ndarray | None = None


class ReModel:
    def __init__(self, schema: RelationSchema, vocab: Vocab, config: ReConfig, rng=None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        self.schema = schema
        self.vocab = vocab
        self.config = config
        self.type_index = {t: i for i, t in enumerate(schema.entity_types)}
        d_h = config.hidden_dim
        d_f = config.fused_dim or d_h
        d_e = config.type_emb_dim
        C = len(schema.labels)
        self.encoder = ConvEncoder(len(vocab), config.emb_dim, d_h, config.width, rng=rng)

        def glorot(a, b):
            return rng.normal(0.0, np.sqrt(2.0 / (a + b)), size=(a, b))

        self.params = {
            "w_sent": glorot(d_h, d_f),
            "w_fused": glorot(d_f + 2 * d_h, d_f),
            "b_fused": np.zeros(d_f),
            "w_final": glorot(2 * d_e + d_f, C),
            "type_emb": rng.normal(0.0, 0.1, size=(len(schema.entity_types), d_e)),
            "rel_emb": rng.normal(0.0, 0.1, size=(C, d_h)),
        }

    def all_params(self) -> dict[str, np.ndarray]:
        out = {f"enc.{k}": v for k, v in self.encoder.params.items()}
        out.update(self.params)
        return out

    def make_batch(self, instances, rng=None, fake_rng=None) -> Batch:
        ids, lengths = pad_batch([self.vocab.encode(x.tokens) for x in instances])
        batch = Batch(
            ids=ids,
            lengths=lengths,
            span1=np.array([x.e1_span for x in instances], dtype=np.int64),
            span2=np.array([x.e2_span for x in instances], dtype=np.int64),
            type1=np.array([self.type_index[x.e1_type] for x in instances], dtype=np.int64),
            type2=np.array([self.type_index[x.e2_type] for x in instances], dtype=np.int64),
        )
        if instances and instances[0].label is not None:
            schema = self.schema
            batch.labels = np.array([schema.label_index(x.label) for x in instances], dtype=np.int64)
            if fake_rng is not None:
                fakes, mask = [], []
                for x in instances:
                    fakes.append(schema.label_index(sample_fake_relation(schema, x.label, fake_rng)))
                    mask.append(x.label != schema.other or self.config.other_in_translation)
                batch.fake = np.array(fakes, dtype=np.int64)
                batch.l2_mask = np.array(mask, dtype=bool)
        return batch

    @staticmethod
    def _span_weights(spans, T1):
        B = len(spans)
        W = np.zeros((B, T1))
        pos = np.arange(T1)[None, :]
        s = spans[:, :1] + 1
        e = spans[:, 1:] + 1
        W[(pos >= s) & (pos < e)] = 1.0
        W /= (spans[:, 1] - spans[:, 0])[:, None]
        return W

    def forward(self, batch: Batch, rng=None):
        p = self.params
        H, cache = self.encoder.forward(batch.ids, batch.lengths)
        T1 = H.shape[1]
        M1 = self._span_weights(batch.span1, T1)
        M2 = self._span_weights(batch.span2, T1)
        Hs = H[:, 0]
        Fs = np.tanh(Hs @ p["w_sent"])
        E1 = np.einsum("bt,btd->bd", M1, H)
        E2 = np.einsum("bt,btd->bd", M2, H)
        X = np.concatenate([Fs, E1, E2], axis=1)
        U = X @ p["w_fused"] + p["b_fused"]
        Ff = gelu(U)
        drop = None
        if rng is not None and self.config.dropout > 0:
            keep = 1.0 - self.config.dropout
            drop = (rng.random(Ff.shape) < keep) / keep
            Ffd = Ff * drop
        else:
            Ffd = Ff
        Fin = np.concatenate([p["type_emb"][batch.type1], p["type_emb"][batch.type2], Ffd], axis=1)
        probs = softmax(Fin @ p["w_final"], axis=1)
        state = dict(H=H, cache=cache, M1=M1, M2=M2, Hs=Hs, Fs=Fs, E1=E1, E2=E2, X=X, U=U, drop=drop, Fin=Fin)
        return probs, state

    def loss_and_grads(self, batch: Batch, rng=None, with_translation: bool | None = None):
        """Joint loss L1 + lam * L2 on a labelled batch and all gradients.

        Returns (total, L1, L2, grads).
        """
        cfg = self.config
        p = self.params
        use_l2 = cfg.use_translation if with_translation is None else with_translation
        probs, st = self.forward(batch, rng)
        B = len(batch.labels)
        rows = np.arange(B)
        scale = 1.0 / B if cfg.reduction == "mean" else 1.0
        L1 = float(-np.log(probs[rows, batch.labels]).sum()) * scale
        dlogits = probs.copy()
        dlogits[rows, batch.labels] -= 1.0
        dlogits *= scale

        d_e = p["type_emb"].shape[1]
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        grads["w_final"] = st["Fin"].T @ dlogits
        dFin = dlogits @ p["w_final"].T
        np.add.at(grads["type_emb"], batch.type1, dFin[:, :d_e])
        np.add.at(grads["type_emb"], batch.type2, dFin[:, d_e : 2 * d_e])
        dFf = dFin[:, 2 * d_e :]
        if st["drop"] is not None:
            dFf = dFf * st["drop"]
        dU = dFf * gelu_grad(st["U"])
        grads["w_fused"] = st["X"].T @ dU
        grads["b_fused"] = dU.sum(axis=0)
        dX = dU @ p["w_fused"].T
        d_f = st["Fs"].shape[1]
        d_h = st["E1"].shape[1]
        dFs = dX[:, :d_f]
        dE1 = dX[:, d_f : d_f + d_h].copy()
        dE2 = dX[:, d_f + d_h :].copy()

        L2 = 0.0
        if use_l2 and batch.fake is not None:
            m = batch.l2_mask
            R = p["rel_emb"]
            a = st["E1"] + R[batch.labels] - st["E2"]
            b = st["E1"] + R[batch.fake] - st["E2"]
            z = cfg.gamma + np.abs(a).sum(axis=1) - np.abs(b).sum(axis=1)
            active = m & (z > 0)
            L2 = float(np.where(m, np.maximum(z, 0.0), 0.0).sum()) * scale
            w = (cfg.lam * scale) * active.astype(np.float64)[:, None]
            sa, sb = np.sign(a) * w, np.sign(b) * w
            dE1 += sa - sb
            dE2 += sb - sa
            np.add.at(grads["rel_emb"], batch.labels, sa)
            np.add.at(grads["rel_emb"], batch.fake, -sb)

        dS = dFs * (1.0 - st["Fs"] ** 2)
        grads["w_sent"] = st["Hs"].T @ dS
        dH = st["M1"][:, :, None] * dE1[:, None, :] + st["M2"][:, :, None] * dE2[:, None, :]
        dH[:, 0] += dS @ p["w_sent"].T
        for k, g in self.encoder.backward(dH, st["cache"]).items():
            grads[f"enc.{k}"] = g
        total = L1 + cfg.lam * L2 if use_l2 else L1
        return total, L1, L2, grads

    def predict_proba(self, instances, batch_size: int = 64) -> np.ndarray:
        out = []
        for b0 in range(0, len(instances), batch_size):
            chunk = [_truncate(x, self.config.max_len) for x in instances[b0 : b0 + batch_size]]
            probs, _ = self.forward(self.make_batch(chunk))
            out.append(probs)
        if not out:
            return np.zeros((0, len(self.schema.labels)))
        return np.concatenate(out, axis=0)

    def predict(self, instances) -> list[str]:
        labels = self.schema.labels
        return [labels[i] for i in np.argmax(self.predict_proba(instances), axis=1)]

    def relation_embeddings(self) -> dict[str, np.ndarray]:
        return {lab: self.params["rel_emb"][i].copy() for i, lab in enumerate(self.schema.labels)}

    def save(self, path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "schema": self.schema.to_dict(),
            "vocab": self.vocab.itos,
            "config": asdict(self.config),
            "encoder": self.encoder.state_dict(),
        }
        with open(Path(path), "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.all_params())

    @classmethod
    def load(cls, path) -> "ReModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"checkpoint version {meta.get('version')!r} != {CHECKPOINT_VERSION!r}")
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
        vocab = Vocab([])
        vocab.itos = list(meta["vocab"])
        vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
        model = cls(RelationSchema.from_dict(meta["schema"]), vocab, ReConfig(**meta["config"]))
        model.encoder = ConvEncoder.from_state(
            meta["encoder"], {k[4:]: v for k, v in arrays.items() if k.startswith("enc.")}
        )
        for k in model.params:
            model.params[k] = np.array(arrays[k], dtype=np.float64)
        return model


def _truncate(inst: RelationInstance, max_len: int) -> RelationInstance:
    """Keep a window of at most max_len tokens around both entities."""
    n = len(inst.tokens)
    if n <= max_len:
        return inst
    lo = min(inst.e1_span[0], inst.e2_span[0])
    hi = max(inst.e1_span[1], inst.e2_span[1])
    if hi - lo > max_len:
        raise ValueError(f"entity pair spans {hi - lo} tokens, more than max_len={max_len}")
    start = (lo + hi) // 2 - max_len // 2
    start = min(max(start, hi - max_len, 0), lo, n - max_len)
    end = start + max_len
    return RelationInstance(
        inst.tokens[start:end],
        (inst.e1_span[0] - start, inst.e1_span[1] - start),
        inst.e1_type,
        (inst.e2_span[0] - start, inst.e2_span[1] - start),
        inst.e2_type,
        inst.label,
        inst.sentence,
        inst.pair,
    )


def validate_instances(instances, schema: RelationSchema) -> None:
    bad = []
    for i, x in enumerate(instances):
        if x.label is None or x.label not in schema.labels:
            bad.append(i)
        elif x.label != schema.other and not schema.allows(x.label, x.e1_type, x.e2_type):
            bad.append(i)
        elif x.e1_type not in schema.entity_types or x.e2_type not in schema.entity_types:
            bad.append(i)
    if bad:
        raise SchemaError(f"instances violate the schema: {bad[:20]}{' ...' if len(bad) > 20 else ''}")


def train_re(instances, schema: RelationSchema, config: ReConfig | None = None) -> ReModel:
    """Jointly minimise cross-entropy plus lam * translation margin loss with Adam."""
    config = config or ReConfig()
    instances = [_truncate(x, config.max_len) for x in instances]
    if not instances:
        raise ValueError("no training instances")
    validate_instances(instances, schema)
    rng = np.random.default_rng(config.seed)
    # fake-relation draws use their own stream so the classification path
    # consumes identical random numbers with or without the auxiliary task
    fake_rng = np.random.default_rng([config.seed, 1])
    vocab = Vocab.build([x.tokens for x in instances], min_count=config.min_count)
    model = ReModel(schema, vocab, config, rng=rng)
    params = model.all_params()
    opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay, decay=decay_names(params))
    model.history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(instances))
        total = 0.0
        for b0 in range(0, len(order), config.batch_size):
            chunk = [instances[i] for i in order[b0 : b0 + config.batch_size]]
            batch = model.make_batch(chunk, fake_rng=fake_rng)
            loss, _, _, grads = model.loss_and_grads(batch, rng=rng)
            clip_grad_norm(grads, config.clip)
            opt.step(grads)
            total += loss
        model.history.append(total / len(instances))
        log.debug("re epoch %d loss %.4f", epoch, model.history[-1])
    return model
