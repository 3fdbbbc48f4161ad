"""Tokenizer, vocabulary and the small trainable reference encoder.

The encoder maps a token sequence to hidden states ``H`` of shape
``(n + 1, d_h)``; row 0 is the sequence-start slot playing the role of a
[CLS] summary. Forward and backward passes are written out by hand.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .numeric import gelu, gelu_grad

TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:[-'][A-Za-z0-9]+)*|[^\sA-Za-z0-9]")

UNK_SHAPES = ("<unk:digit>", "<unk:upper>", "<unk:cap>", "<unk:lower>", "<unk:punct>", "<unk>")
PAD = "<pad>"


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Split text into (token, start, end) triples."""
    return [(m.group(), m.start(), m.end()) for m in TOKEN_RE.finditer(text)]


def token_shape(tok: str) -> str:
    if any(c.isdigit() for c in tok):
        return "<unk:digit>"
    if tok.isupper() and tok.isalpha():
        return "<unk:upper>"
    if tok[:1].isupper():
        return "<unk:cap>"
    if tok.isalpha():
        return "<unk:lower>"
    if not any(c.isalnum() for c in tok):
        return "<unk:punct>"
    return "<unk>"


class Vocab:
    """Token-to-id table. Unknown tokens fall back to a shape bucket."""

    def __init__(self, tokens):
        self.itos = [PAD, *UNK_SHAPES] + [t for t in tokens if t not in UNK_SHAPES and t != PAD]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, sentences, min_count: int = 2) -> "Vocab":
        counts = Counter(tok for sent in sentences for tok in sent)
        keep = sorted(t for t, c in counts.items() if c >= min_count)
        return cls(keep)

    def __len__(self):
        return len(self.itos)

    def lookup(self, tok: str) -> int:
        i = self.stoi.get(tok)
        if i is None:
            i = self.stoi[token_shape(tok)]
        return i

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)


def pad_batch(id_seqs) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in id_seqs], dtype=np.int64)
    T = int(lengths.max()) if len(lengths) else 0
    ids = np.zeros((len(id_seqs), T), dtype=np.int64)
    for i, s in enumerate(id_seqs):
        ids[i, : len(s)] = s
    return ids, lengths


@dataclass
class EncoderCache:
    ids: np.ndarray
    lengths: np.ndarray
    cols: np.ndarray
    Z: np.ndarray
    valid: np.ndarray


class ConvEncoder:
    """Token embeddings + one width-``width`` convolution with gelu.

    Parameters (all float64 arrays held in ``params``):
      emb    (V, d_e)          token embedding table, row 0 is padding
      start  (d_e,)            embedding of the sequence-start slot
      conv_w (width*d_e, d_h)  convolution kernel
      conv_b (d_h,)            convolution bias

    The start row of ``H`` additionally receives the mean of the token rows,
    so the sentence summary sees the whole sequence.
    """

    def __init__(self, vocab_size: int, emb_dim: int = 64, hidden_dim: int = 64, width: int = 5, rng=None):
        if width % 2 != 1:
            raise ValueError("convolution width must be odd")
        rng = np.random.default_rng(0) if rng is None else rng
        self.width = width
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        emb = rng.normal(0.0, 0.1, size=(vocab_size, emb_dim))
        emb[0] = 0.0
        fan_in = width * emb_dim
        self.params = {
            "emb": emb,
            "start": rng.normal(0.0, 0.1, size=emb_dim),
            "conv_w": rng.normal(0.0, np.sqrt(2.0 / (fan_in + hidden_dim)), size=(fan_in, hidden_dim)),
            "conv_b": np.zeros(hidden_dim),
        }

    def forward(self, ids, lengths):
        """ids: (B, T) padded token ids. Returns H (B, T+1, d_h) and a cache."""
        ids = np.asarray(ids, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        B, T = ids.shape
        p = self.params
        valid = np.zeros((B, T + 1), dtype=bool)
        valid[:, 0] = True
        valid[:, 1:] = np.arange(T)[None, :] < lengths[:, None]
        X = np.zeros((B, T + 1, self.emb_dim))
        X[:, 0] = p["start"]
        X[:, 1:] = p["emb"][ids]
        X *= valid[:, :, None]
        half = self.width // 2
        Xp = np.pad(X, ((0, 0), (half, half), (0, 0)))
        cols = np.concatenate([Xp[:, k : k + T + 1] for k in range(self.width)], axis=2)
        Z = cols @ p["conv_w"] + p["conv_b"]
        H = gelu(Z)
        H *= valid[:, :, None]
        denom = np.maximum(lengths, 1)[:, None]
        H[:, 0] += H[:, 1:].sum(axis=1) / denom
        return H, EncoderCache(ids=ids, lengths=lengths, cols=cols, Z=Z, valid=valid)

    def backward(self, dH, cache: EncoderCache) -> dict[str, np.ndarray]:
        p = self.params
        B, T1, _ = dH.shape
        T = T1 - 1
        dH = dH * cache.valid[:, :, None]
        denom = np.maximum(cache.lengths, 1)[:, None, None]
        dH = dH.copy()
        dH[:, 1:] += dH[:, :1] / denom
        dH *= cache.valid[:, :, None]
        dZ = dH * gelu_grad(cache.Z)
        g_w = np.einsum("btc,bth->ch", cache.cols, dZ)
        g_b = dZ.sum(axis=(0, 1))
        dcols = dZ @ p["conv_w"].T
        half = self.width // 2
        dXp = np.zeros((B, T1 + 2 * half, self.emb_dim))
        for k in range(self.width):
            dXp[:, k : k + T1] += dcols[:, :, k * self.emb_dim : (k + 1) * self.emb_dim]
        dX = dXp[:, half : half + T1] * cache.valid[:, :, None]
        g_emb = np.zeros_like(p["emb"])
        np.add.at(g_emb, cache.ids.reshape(-1), dX[:, 1:].reshape(-1, self.emb_dim))
        g_emb[0] = 0.0
        return {"emb": g_emb, "start": dX[:, 0].sum(axis=0), "conv_w": g_w, "conv_b": g_b}

    def encode(self, tokens_ids) -> np.ndarray:
        """Hidden states for a single id sequence, shape (n+1, d_h)."""
        ids, lengths = pad_batch([tokens_ids])
        H, _ = self.forward(ids, lengths)
        return H[0]

    def state_dict(self) -> dict:
        return {"width": self.width, "emb_dim": self.emb_dim, "hidden_dim": self.hidden_dim}

    @classmethod
    def from_state(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "ConvEncoder":
        enc = cls(arrays["emb"].shape[0], meta["emb_dim"], meta["hidden_dim"], meta["width"])
        for k in enc.params:
            enc.params[k] = np.array(arrays[k], dtype=np.float64)
        return enc
