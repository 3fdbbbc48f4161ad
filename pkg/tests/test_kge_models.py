import numpy as np
import pytest

from casegraph.kge import (
    KgeTrainConfig,
    RotatEModel,
    TransEModel,
    TripleStore,
    eval_link_prediction,
    filtered_rank,
    load_embeddings,
    negative_sampling_loss,
    rotate_apply,
    rotate_score,
    save_embeddings,
    train_rotate,
    train_transe,
    transe_score,
)
from casegraph.kge.train import corrupt

from oracles import central_diff, rel_err


def test_rotation_preserves_modulus(rng):
    h = rng.normal(size=8) + 1j * rng.normal(size=8)
    theta = rng.uniform(-np.pi, np.pi, size=8)
    assert np.allclose(np.abs(rotate_apply(h, theta)), np.abs(h))
    with pytest.raises(ValueError):
        rotate_apply(h, theta[:3])


def test_rotate_score_zero_for_exact_rotation(rng):
    h = rng.normal(size=4) + 1j * rng.normal(size=4)
    theta = rng.uniform(-np.pi, np.pi, size=4)
    t = h * np.exp(1j * theta)
    assert rotate_score(h, theta, t) == pytest.approx(0.0, abs=1e-12)
    d = rotate_score(h, theta, t + np.array([3j, 0, 0, 4]))
    assert d == pytest.approx(7.0)
    assert rotate_score(h, theta, t + np.array([3, 4, 0, 0]), norm="l2") == pytest.approx(5.0)


def test_transe_score():
    assert transe_score(np.array([1.0, 0]), np.array([1.0, 1]), np.array([0.0, 0])) == 3.0
    with pytest.raises(ValueError):
        transe_score(np.zeros(2), np.zeros(2), np.zeros(2), norm="l3")


@pytest.mark.parametrize("cls", [RotatEModel, TransEModel])
def test_training_loss_gradients(rng, cls):
    model = cls.init(6, 2, 3, 2.0, rng)
    cfg = KgeTrainConfig(dim=3, gamma=2.0, negatives=3)
    batch = np.array([[0, 0, 1], [2, 1, 3], [4, 0, 5]])
    nh, nt = corrupt(batch, 6, 3, rng)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    negative_sampling_loss(model, batch, nh, nt, cfg, grads)
    for name, value in model.params.items():
        def fn(x, name=name):
            old = model.params[name].copy()
            model.params[name][...] = x
            out = negative_sampling_loss(model, batch, nh, nt, cfg)
            model.params[name][...] = old
            return out

        assert rel_err(grads[name], central_diff(fn, value.copy())) < 1e-6, name


def test_adversarial_weights_at_zero_temperature_are_uniform(rng):
    model = RotatEModel.init(6, 2, 3, 2.0, rng)
    batch = np.array([[0, 0, 1], [2, 1, 3]])
    nh, nt = corrupt(batch, 6, 4, rng)
    results = []
    for cfg in (KgeTrainConfig(dim=3, negatives=4), KgeTrainConfig(dim=3, negatives=4, self_adversarial=True, adv_temperature=0.0)):
        grads = {k: np.zeros_like(v) for k, v in model.params.items()}
        results.append((negative_sampling_loss(model, batch, nh, nt, cfg, grads), grads))
    assert results[0][0] == pytest.approx(results[1][0])
    assert all(np.allclose(results[0][1][k], results[1][1][k]) for k in model.params)
    hard = KgeTrainConfig(dim=3, negatives=4, self_adversarial=True, adv_temperature=5.0)
    assert negative_sampling_loss(model, batch, nh, nt, hard) != pytest.approx(results[0][0])


def test_corrupt_replaces_one_side(rng):
    batch = np.array([[0, 0, 1]] * 50)
    nh, nt = corrupt(batch, 100, 4, rng)
    assert nh.shape == (50, 4)
    for i in range(50):
        assert np.all(nh[i] == 0) or np.all(nt[i] == 1)


def test_filtered_rank_with_ties():
    scores = np.array([5.0, 3.0, 5.0, 9.0, 5.0])
    assert filtered_rank(scores, 0, set()) == 1 + 1 + 0.5 * 2
    assert filtered_rank(scores, 0, {3}) == 1 + 0.5 * 2
    assert filtered_rank(scores, 3, set()) == 1.0


def test_link_prediction_oracle():
    store = TripleStore.from_named({"train": [("a", "r", "b"), ("a", "r", "c")], "test": [("a", "r", "d")]})
    ids = {e: i for i, e in enumerate(store.entities)}
    # a perfect scorer: d is the best tail, a the best head, known tails filtered
    prefs = {ids["d"]: 3.0, ids["b"]: 5.0, ids["c"]: 4.0, ids["a"]: 1.0}

    def scorer(h, r, t):
        h = np.asarray(h)
        t = np.asarray(t)
        if np.all(h == h.flat[0]):
            return np.array([prefs[int(x)] for x in t])
        return np.array([10.0 if x == ids["a"] else 0.0 for x in h])

    m = eval_link_prediction(store, scorer, "test")
    assert m["mrr"] == 1.0 and m["hits@1"] == 1.0 and m["n_queries"] == 2
    m = eval_link_prediction(store, scorer, "test", filter_triples=store.test)
    assert m["hits@1"] == 0.5
    with pytest.raises(ValueError):
        eval_link_prediction(store, scorer, "valid")


def test_store_validation_and_tsv(tmp_path):
    store = TripleStore.from_named({"train": [("a", "r", "b")], "valid": [("b", "s", "a")]})
    store.save_tsv(tmp_path)
    again = TripleStore.load_tsv(tmp_path)
    assert again.entities == store.entities and np.array_equal(again.valid, store.valid)
    with pytest.raises(ValueError):
        TripleStore(["a"], ["r"], {"train": np.array([[0, 0, 1]])})
    with pytest.raises(ValueError):
        TripleStore(["a", "b"], ["r"], {"train": np.array([[0, 0, 1], [0, 0, 1]])})
    with pytest.raises(KeyError):
        store.entity_id("zz")
    (tmp_path / "train.txt").write_text("a\tb\n")
    with pytest.raises(ValueError):
        TripleStore.load_tsv(tmp_path)


def _chain_store(n=12):
    triples = [(f"e{i}", "next", f"e{i + 1}") for i in range(n)]
    return TripleStore.from_named({"train": triples, "test": triples[:3]})


@pytest.mark.parametrize("trainer", [train_rotate, train_transe])
def test_training_reduces_loss_and_ranks_train_facts(trainer):
    store = _chain_store()
    cfg = KgeTrainConfig(dim=8, gamma=3.0, batch_size=4, epochs=60, eval_every=0, lr=0.05)
    model = trainer(store, cfg)
    assert model.history[-1] < model.history[0]
    m = eval_link_prediction(store, lambda h, r, t: -model.distance(h, r, t), "test", filter_triples=store.test)
    assert m["mrr"] > 0.5


def test_training_is_deterministic():
    cfg = KgeTrainConfig(dim=4, batch_size=4, epochs=3, eval_every=0)
    a, b = train_rotate(_chain_store(), cfg), train_rotate(_chain_store(), cfg)
    assert np.array_equal(a.params["phase"], b.params["phase"])


def test_lr_halves_when_validation_stalls():
    triples = [(f"e{i}", "r", f"e{(i * 7) % 30}") for i in range(30)]
    store = TripleStore.from_named({"train": triples, "valid": [("x", "r", "y")]})
    cfg = KgeTrainConfig(dim=4, epochs=12, eval_every=1, patience=2, lr=0.01)
    model = train_rotate(store, cfg)
    assert model.final_lr < cfg.lr


def test_embedding_round_trip(tmp_path):
    store = _chain_store()
    model = train_rotate(store, KgeTrainConfig(dim=4, epochs=2, eval_every=0))
    save_embeddings(tmp_path / "e.json", model, store.entities, store.relations)
    again, ents, rels, comps = load_embeddings(tmp_path / "e.json")
    assert ents == store.entities and rels == store.relations and comps == {}
    assert np.allclose(again.distance(np.arange(3), 0, np.arange(3)), model.distance(np.arange(3), 0, np.arange(3)))


def test_phases_are_wrapped():
    model = train_rotate(_chain_store(), KgeTrainConfig(dim=4, epochs=2, eval_every=0, lr=1.0))
    assert np.all(np.abs(model.params["phase"]) <= np.pi)


def test_config_validation():
    with pytest.raises(ValueError):
        KgeTrainConfig(dim=0)
    with pytest.raises(ValueError):
        KgeTrainConfig(negatives=0)
