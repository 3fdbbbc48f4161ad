import numpy as np
import pytest

from casegraph.crf import TagSet
from casegraph.encoder import ConvEncoder, Vocab, pad_batch, token_shape, tokenize
from casegraph.ner import (
    EntityMention,
    IllegalLabelsError,
    LabeledSentence,
    NerConfig,
    NerModel,
    decode_mentions,
    encode_mentions,
    read_corpus,
    span_f1,
    split_long,
    train_ner,
    write_corpus,
)

from oracles import central_diff, prf_sets, rel_err


def test_tokenize_keeps_offsets():
    text = "Car VA-7439 hit Lin's bike."
    toks = tokenize(text)
    assert [t for t, _, _ in toks] == ["Car", "VA-7439", "hit", "Lin's", "bike", "."]
    assert all(text[s:e] == t for t, s, e in toks)


def test_vocab_shape_buckets():
    v = Vocab.build([["the", "the", "car", "car"]], min_count=2)
    assert v.lookup("the") != v.lookup("bus")
    assert v.lookup("AB-1234") == v.stoi["<unk:digit>"]
    assert v.lookup("Gulou") == v.stoi["<unk:cap>"]
    assert token_shape(";") == "<unk:punct>"
    ids, lengths = pad_batch([v.encode(["the"]), v.encode(["car", "the", "x"])])
    assert ids.shape == (2, 3) and list(lengths) == [1, 3] and ids[0, 1] == 0


def test_encoder_start_slot_and_padding_invariance(rng):
    enc = ConvEncoder(20, 6, 5, 3, rng=rng)
    a = enc.encode(np.array([3, 4, 5]))
    ids, lengths = pad_batch([np.array([3, 4, 5]), np.array([1, 2, 3, 4, 5, 6])])
    H, _ = enc.forward(ids, lengths)
    assert a.shape == (4, 5)
    assert np.allclose(H[0, :4], a)
    assert np.all(H[0, 4:] == 0)


def test_encoder_backward_matches_differences(rng):
    enc = ConvEncoder(10, 4, 3, 3, rng=rng)
    ids, lengths = pad_batch([np.array([1, 2, 3]), np.array([4, 5])])
    W = rng.normal(size=(2, 4, 3))

    def f(name):
        def fn(x):
            old = enc.params[name]
            enc.params[name] = x
            H, _ = enc.forward(ids, lengths)
            enc.params[name] = old
            return float(np.sum(H * W))

        return fn

    H, cache = enc.forward(ids, lengths)
    grads = enc.backward(W, cache)
    for name in ("start", "conv_w", "conv_b", "emb"):
        assert rel_err(grads[name], central_diff(f(name), enc.params[name])) < 1e-6, name


def test_decode_and_encode_mentions_round_trip():
    toks = ["Zhao", "Min", "drove", "car", "VA-7439"]
    labels = ["B-NP", "I-NP", "O", "B-MV", "I-MV"]
    ms = decode_mentions(toks, labels)
    assert ms == [EntityMention(0, 2, "NP", "Zhao Min"), EntityMention(3, 5, "MV", "car VA-7439")]
    assert encode_mentions(5, ms) == labels


def test_stray_inside_label_opens_mention():
    assert decode_mentions(["a", "b"], ["O", "I-MV"]) == [EntityMention(1, 2, "MV", "b")]
    assert [m.type for m in decode_mentions(["a", "b"], ["B-NP", "I-MV"])] == ["NP", "MV"]


def test_span_f1_against_set_oracle(rng):
    types = ["A", "B"]
    gold, pred = [], []
    for _ in range(30):
        g = {EntityMention(s, s + int(rng.integers(1, 3)), types[int(rng.integers(2))]) for s in rng.choice(10, 3, replace=False)}
        p = {m for m in g if rng.random() < 0.7} | {EntityMention(12, 13, "A")}
        gold.append(g)
        pred.append(p)
    overall, per = span_f1(gold, pred)
    G = {(i, m.start, m.end, m.type) for i, g in enumerate(gold) for m in g}
    P = {(i, m.start, m.end, m.type) for i, p in enumerate(pred) for m in p}
    assert np.allclose(overall, prf_sets(G, P))
    GA = {x for x in G if x[3] == "A"}
    PA = {x for x in P if x[3] == "A"}
    assert np.allclose(per["A"], prf_sets(GA, PA))


def test_span_f1_perfect_and_empty():
    assert span_f1([[EntityMention(0, 1, "A")]], [[EntityMention(0, 1, "A")]])[0] == (1.0, 1.0, 1.0)
    assert span_f1([[]], [[]])[0] == (1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        span_f1([[]], [])


def test_split_long_never_cuts_inside_mention():
    toks = ["w"] * 5 + [","] + ["Big", "Name", "Here"] + ["w"] * 3
    labels = ["O"] * 6 + ["B-NP", "I-NP", "I-NP"] + ["O"] * 3
    parts = split_long(toks, labels, 8)
    assert sum(len(t) for t, _ in parts) == len(toks)
    assert all(len(t) <= 8 for t, _ in parts)
    assert all(not lab[0].startswith("I-") for _, lab in parts)


def test_config_defaults_follow_decoder():
    assert NerConfig().learning_rate() == 1e-5
    assert NerConfig(decoder="softmax").learning_rate() == 2e-5
    assert NerConfig(lr=0.1).learning_rate() == 0.1
    with pytest.raises(ValueError):
        NerConfig(decoder="hmm")


@pytest.mark.parametrize("decoder", ["crf", "softmax"])
def test_model_gradients(rng, decoder):
    ts = TagSet(("A",))
    vocab = Vocab(["x", "y", "z"])
    model = NerModel(ts, vocab, NerConfig(decoder=decoder, emb_dim=4, hidden_dim=3, width=3), rng=rng)
    model.params["trans"] = np.where(model.mask, rng.normal(size=model.mask.shape), model.params["trans"])
    ids, lengths = pad_batch([vocab.encode(["x", "y", "z"]), vocab.encode(["z", "x"])])
    Y = np.array([[1, 2, 0], [0, 1, 0]])
    _, grads = model.loss_and_grads(ids, lengths, Y)
    params = model.all_params()
    for name in ("proj_w", "proj_b", "enc.conv_w", "enc.start"):
        def fn(x, name=name):
            old = params[name].copy()
            params[name][...] = x
            value = model.loss_and_grads(ids, lengths, Y)[0]
            params[name][...] = old
            return value

        assert rel_err(grads[name], central_diff(fn, params[name].copy())) < 1e-6, name


def test_train_rejects_illegal_labels():
    ts = TagSet(("A",))
    with pytest.raises(IllegalLabelsError) as exc:
        train_ner([LabeledSentence(["a"], ["O"]), LabeledSentence(["a", "b"], ["O", "I-A"])], ts)
    assert exc.value.offenders == [1]
    with pytest.raises(ValueError):
        train_ner([], ts)


def test_training_learns_a_toy_language(tmp_path):
    ts = TagSet(("CAR",))
    sents = []
    for i in range(40):
        n = f"C{i % 7}"
        sents.append(LabeledSentence(["the", "car", n, "hit", "a", "tree", "."], ["O", "B-CAR", "I-CAR", "O", "O", "O", "O"]))
    model = train_ner(sents, ts, NerConfig(lr=1e-2, epochs=15, emb_dim=8, hidden_dim=8, width=3, min_count=1))
    assert model.history.losses[-1] < model.history.losses[0]
    assert model.predict(["the", "car", "C99", "hit", "a", "tree", "."]) == sents[0].labels
    path = tmp_path / "ner.npz"
    model.save(path)
    again = NerModel.load(path)
    assert again.predict(sents[3].tokens) == model.predict(sents[3].tokens)
    write_corpus(tmp_path / "c.jsonl", sents[:2])
    assert read_corpus(tmp_path / "c.jsonl") == sents[:2]


def test_training_is_deterministic():
    ts = TagSet(("X",))
    sents = [LabeledSentence(["a", "b", "c"], ["B-X", "O", "O"])] * 5
    cfg = NerConfig(lr=1e-2, epochs=2, emb_dim=4, hidden_dim=4, width=3, min_count=1)
    a, b = train_ner(sents, ts, cfg), train_ner(sents, ts, cfg)
    assert a.history.losses == b.history.losses
