"""Entity tagging: encoder + emission projection + CRF (or softmax) decoding."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import crf
from .crf import TagSet
from .encoder import ConvEncoder, Vocab, pad_batch
from .numeric import Adam, clip_grad_norm, decay_names, softmax

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "casegraph-ner/1"
SPLIT_PUNCT = (",", ";", ":", "，", "；", "。", ".", "!", "?")


@dataclass(frozen=True)
class EntityMention:
    start: int
    end: int
    type: str
    text: str = ""

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty mention span [{self.start}, {self.end})")


def decode_mentions(tokens, labels) -> list[EntityMention]:
    """Collapse a BIO sequence into mentions.

    A stray I-x that does not continue an x mention opens a new one.
    """
    if len(tokens) != len(labels):
        raise ValueError("tokens and labels differ in length")
    out = []
    cur_type, cur_start = None, None

    def close(end):
        if cur_type is not None:
            out.append(EntityMention(cur_start, end, cur_type, " ".join(tokens[cur_start:end])))

    for i, lab in enumerate(labels):
        prefix, _, etype = lab.partition("-")
        if prefix == "B" or (prefix == "I" and etype != cur_type):
            close(i)
            cur_type, cur_start = etype, i
        elif prefix == "I":
            continue
        else:
            close(i)
            cur_type, cur_start = None, None
    close(len(labels))
    return out


def encode_mentions(n_tokens: int, mentions) -> list[str]:
    labels = ["O"] * n_tokens
    for m in mentions:
        if m.end > n_tokens:
            raise ValueError(f"mention {m} exceeds sentence length {n_tokens}")
        labels[m.start] = f"B-{m.type}"
        for i in range(m.start + 1, m.end):
            labels[i] = f"I-{m.type}"
    return labels


def span_f1(gold, predicted):
    """Exact-span, exact-type precision/recall/F1.

    ``gold`` and ``predicted`` are aligned lists (one entry per sentence or
    document) of mention collections. Returns (overall, per_type) where each
    value is a (precision, recall, f1) tuple.
    """
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted are not aligned")
    tp, ng, np_ = defaultdict(int), defaultdict(int), defaultdict(int)
    for g, p in zip(gold, predicted):
        gs = {(m.start, m.end, m.type) for m in g}
        ps = {(m.start, m.end, m.type) for m in p}
        for s in gs:
            ng[s[2]] += 1
        for s in ps:
            np_[s[2]] += 1
        for s in gs & ps:
            tp[s[2]] += 1
    per_type = {t: _prf(tp[t], np_[t], ng[t]) for t in sorted(set(ng) | set(np_))}
    overall = _prf(sum(tp.values()), sum(np_.values()), sum(ng.values()))
    return overall, per_type


def _prf(tp, n_pred, n_gold):
    if n_pred == 0 and n_gold == 0:
        return (1.0, 1.0, 1.0)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return (p, r, f)


def split_long(tokens, labels, max_len: int):
    """Cut sequences longer than max_len at the last punctuation mark that
    keeps the head within bounds; fall back to a hard cut."""
    if len(tokens) <= max_len:
        return [(tokens, labels)]
    cut = None
    for i in range(min(max_len, len(tokens)) - 1, 0, -1):
        if tokens[i] in SPLIT_PUNCT and (labels is None or not labels[min(i + 1, len(labels) - 1)].startswith("I-")):
            cut = i + 1
            break
    if cut is None:
        cut = max_len
        if labels is not None:
            while cut > 1 and labels[cut].startswith("I-"):
                cut -= 1
    head = (tokens[:cut], None if labels is None else labels[:cut])
    tail_labels = None if labels is None else labels[cut:]
    return [head] + split_long(tokens[cut:], tail_labels, max_len)


@dataclass
class NerConfig:
    decoder: str = "crf"  # "crf" or "softmax"
    max_len: int = 400
    weight_decay: float = 0.01
    dropout: float = 0.1
    batch_size: int = 16
    clip: float = 2.0
    lr: float | None = None  # None -> decoder default
    epochs: int = 30
    emb_dim: int = 64
    hidden_dim: int = 64
    width: int = 5
    min_count: int = 2
    seed: int = 0

    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-5 if self.decoder == "crf" else 2e-5

    def __post_init__(self):
        if self.decoder not in ("crf", "softmax"):
            raise ValueError(f"decoder must be 'crf' or 'softmax', got {self.decoder!r}")
        for name in ("max_len", "batch_size", "epochs", "emb_dim", "hidden_dim", "width", "min_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.clip <= 0 or (self.lr is not None and self.lr <= 0):
            raise ValueError("clip and lr must be positive")


class IllegalLabelsError(ValueError):
    def __init__(self, offenders):
        self.offenders = offenders
        super().__init__(f"gold labels violate BIO transitions in sentences {offenders}")


class NerModel:
    def __init__(self, tagset: TagSet, vocab: Vocab, config: NerConfig, rng=None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        self.tagset = tagset
        self.vocab = vocab
        self.config = config
        self.mask = crf.build_transition_mask(tagset)
        self.encoder = ConvEncoder(len(vocab), config.emb_dim, config.hidden_dim, config.width, rng=rng)
        L = tagset.n_labels
        self.params = {
            "proj_w": rng.normal(0.0, np.sqrt(1.0 / config.hidden_dim), size=(config.hidden_dim, L)),
            "proj_b": np.zeros(L),
            "trans": crf.masked_transitions(np.zeros((L + 2, L + 2)), self.mask),
        }

    def all_params(self) -> dict[str, np.ndarray]:
        out = {f"enc.{k}": v for k, v in self.encoder.params.items()}
        out.update(self.params)
        return out

    def emissions(self, ids, lengths, rng=None):
        H, cache = self.encoder.forward(ids, lengths)
        Ht = H[:, 1:]
        drop = None
        if rng is not None and self.config.dropout > 0:
            keep = 1.0 - self.config.dropout
            drop = (rng.random(Ht.shape) < keep) / keep
            Ht = Ht * drop
        P = Ht @ self.params["proj_w"] + self.params["proj_b"]
        return P, (H, cache, Ht, drop)

    def loss_and_grads(self, ids, lengths, Y, rng=None):
        """Summed loss over a padded batch and gradients for every parameter."""
        P, (H, cache, Ht, drop) = self.emissions(ids, lengths, rng)
        valid = np.arange(P.shape[1])[None, :] < lengths[:, None]
        if self.config.decoder == "crf":
            loss, dP, dA = crf.batch_nll(P, lengths, self.params["trans"], Y)
        else:
            probs = softmax(P, axis=-1)
            picked = np.take_along_axis(probs, Y[:, :, None], axis=2)[:, :, 0]
            loss = float(-np.sum(np.log(picked + 1e-300) * valid))
            dP = probs.copy()
            np.put_along_axis(dP, Y[:, :, None], np.take_along_axis(dP, Y[:, :, None], axis=2) - 1.0, axis=2)
            dP *= valid[:, :, None]
            dA = np.zeros_like(self.params["trans"])
        grads = {
            "proj_w": np.einsum("btd,btl->dl", Ht, dP),
            "proj_b": dP.sum(axis=(0, 1)),
            "trans": np.where(self.mask, dA, 0.0),
        }
        dHt = dP @ self.params["proj_w"].T
        if drop is not None:
            dHt = dHt * drop
        dH = np.zeros_like(H)
        dH[:, 1:] = dHt
        for k, g in self.encoder.backward(dH, cache).items():
            grads[f"enc.{k}"] = g
        return loss, grads

    def predict_ids(self, ids) -> np.ndarray:
        if len(ids) == 0:
            return np.zeros(0, dtype=np.int64)
        P, _ = self.emissions(*pad_batch([ids]))
        P = P[0]
        if self.config.decoder == "crf":
            y, _ = crf.viterbi(P, self.params["trans"])
            return y
        return np.argmax(P, axis=1)

    def predict(self, tokens) -> list[str]:
        labels = []
        for chunk, _ in split_long(list(tokens), None, self.config.max_len):
            labels += self.tagset.decode(self.predict_ids(self.vocab.encode(chunk)))
        return labels

    def predict_mentions(self, tokens) -> list[EntityMention]:
        return decode_mentions(list(tokens), self.predict(tokens))

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        meta = {
            "version": CHECKPOINT_VERSION,
            "tagset": self.tagset.to_dict(),
            "vocab": self.vocab.itos,
            "config": asdict(self.config),
            "encoder": self.encoder.state_dict(),
        }
        arrays = {k: v for k, v in self.all_params().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "NerModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"checkpoint version {meta.get('version')!r} != {CHECKPOINT_VERSION!r}")
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
        vocab = Vocab([])
        vocab.itos = list(meta["vocab"])
        vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
        model = cls(TagSet.from_dict(meta["tagset"]), vocab, NerConfig(**meta["config"]))
        model.encoder = ConvEncoder.from_state(
            meta["encoder"], {k[4:]: v for k, v in arrays.items() if k.startswith("enc.")}
        )
        for k in model.params:
            model.params[k] = np.array(arrays[k], dtype=np.float64)
        return model


@dataclass
class LabeledSentence:
    tokens: list[str]
    labels: list[str]


def read_corpus(path) -> list[LabeledSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(LabeledSentence(list(d["tokens"]), list(d["labels"])))
    return out


def write_corpus(path, sentences) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps({"tokens": s.tokens, "labels": s.labels}, ensure_ascii=False) + "\n")


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)


def train_ner(corpus, tagset: TagSet, config: NerConfig | None = None) -> NerModel:
    """Fit a tagger by minimising the mean CRF negative log-likelihood with Adam.

    Weight decay skips bias vectors.
    """
    config = config or NerConfig()
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty training corpus")
    mask = crf.build_transition_mask(tagset)
    offenders = []
    examples = []
    for i, s in enumerate(corpus):
        if len(s.tokens) != len(s.labels):
            raise ValueError(f"sentence {i}: tokens and labels differ in length")
        try:
            y = tagset.encode(s.labels)
        except KeyError:
            offenders.append(i)
            continue
        if len(y) and crf.violations(y, mask):
            offenders.append(i)
            continue
        for toks, labs in split_long(s.tokens, s.labels, config.max_len):
            if toks:
                examples.append((toks, labs))
    if offenders:
        raise IllegalLabelsError(offenders)

    rng = np.random.default_rng(config.seed)
    vocab = Vocab.build([t for t, _ in examples], min_count=config.min_count)
    model = NerModel(tagset, vocab, config, rng=rng)
    encoded = [(vocab.encode(t), tagset.encode(l)) for t, l in examples]
    params = model.all_params()
    frozen = {"trans": ~model.mask}
    if config.decoder != "crf":
        params.pop("trans")
    opt = Adam(params, lr=config.learning_rate(), weight_decay=config.weight_decay, decay=decay_names(params), frozen=frozen)
    history = TrainHistory()
    for epoch in range(config.epochs):
        order = rng.permutation(len(encoded))
        total = 0.0
        for b0 in range(0, len(order), config.batch_size):
            batch = [encoded[i] for i in order[b0 : b0 + config.batch_size]]
            ids, lengths = pad_batch([x for x, _ in batch])
            Y, _ = pad_batch([y for _, y in batch])
            loss, grads = model.loss_and_grads(ids, lengths, Y, rng=rng)
            n = len(batch)
            for g in grads.values():
                g /= n
            clip_grad_norm(grads, config.clip)
            opt.step(grads)
            total += loss
        history.losses.append(total / len(encoded))
        log.debug("ner epoch %d loss %.4f", epoch, history.losses[-1])
    model.history = history
    return model
