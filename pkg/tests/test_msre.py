import numpy as np
import pytest

from casegraph.kge import (
    AngleVectorSet,
    KgeTrainConfig,
    MsreModel,
    SemanticComponentSet,
    TripleStore,
    collect_relation_angles,
    complete,
    derive_components,
    eval_link_prediction,
    finetune_components,
    load_embeddings,
    msre_score,
    reduced_angles,
    relation_angle_vector,
    save_embeddings,
    train_rotate,
)
from casegraph.kge.synthetic import planted_two_cluster

from oracles import circ_dist


def angle_set(A, name="r"):
    A = np.asarray(A, dtype=np.float64)
    return AngleVectorSet(name, np.zeros((len(A), 2), dtype=np.int64), A)


def test_angle_vector_is_phase_difference(rng):
    h = rng.normal(size=5) + 1j * rng.normal(size=5)
    theta = rng.uniform(-np.pi, np.pi, size=5)
    t = h * np.exp(1j * theta) * 2.5
    assert np.allclose(circ_dist(relation_angle_vector(h, t), theta), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        relation_angle_vector(np.array([0j, 1]), np.array([1j, 1]))
    with pytest.raises(ValueError):
        relation_angle_vector(h, t[:3])


def test_single_pair_gives_one_component():
    comps = derive_components(angle_set([[0.3, -0.2, 0.1]]))
    assert comps.k == 1 and np.allclose(comps.phases[0], [0.3, -0.2, 0.1])


def test_identical_pairs_give_one_component():
    comps = derive_components(angle_set(np.tile([0.5, 1.0], (6, 1))))
    assert comps.k == 1 and list(comps.counts) == [6]


def test_two_planted_clusters_are_recovered(rng):
    A = np.vstack([1.0 + rng.normal(0, 0.05, (30, 8)), -1.0 + rng.normal(0, 0.05, (20, 8))])
    comps = derive_components(angle_set(A))
    assert comps.k == 2
    assert list(comps.counts) == [30, 20]
    assert np.max(np.abs(comps.phases[0] - 1.0)) < 0.1
    assert np.max(np.abs(comps.phases[1] + 1.0)) < 0.1
    assert np.all(comps.assignments[:30] == 0) and np.all(comps.assignments[30:] == 1)


def test_cluster_across_the_cut_needs_circle_embedding(rng):
    # one cluster straddling +-pi
    A = np.pi + rng.normal(0, 0.05, (40, 4))
    A = (A + np.pi) % (2 * np.pi) - np.pi
    comps = derive_components(angle_set(A), embed="circle")
    assert comps.k == 1
    assert np.all(circ_dist(comps.phases[0], np.pi) < 0.05)


def test_circular_average_differs_from_arithmetic_near_cut():
    A = np.array([[3.1], [-3.1], [3.1], [-3.1]])
    circ = derive_components(angle_set(A), pca_dim=1, bandwidth=10.0).phases[0, 0]
    arith = derive_components(angle_set(A), pca_dim=1, bandwidth=10.0, average="arithmetic").phases[0, 0]
    assert circ_dist(circ, np.pi) < 1e-9
    assert abs(arith) < 1e-9


def test_singletons_fold_into_larger_clusters(rng):
    A = np.vstack([rng.normal(0, 0.01, (10, 3)), [[0.3, 0.3, 0.3]]])
    comps = derive_components(angle_set(A), bandwidth=0.2)
    assert comps.k == 1 and comps.counts[0] == 11
    kept = derive_components(angle_set(A), bandwidth=0.2, min_cluster_size=1)
    assert kept.k == 2


def test_derive_argument_errors():
    with pytest.raises(ValueError):
        derive_components(angle_set([[0.1], [0.2]]), pca_dim=3)
    with pytest.raises(ValueError):
        derive_components(angle_set([[0.1], [0.2]]), average="median")


def test_msre_score_takes_best_component(rng):
    h = np.exp(1j * rng.uniform(-np.pi, np.pi, 6))
    phases = np.array([np.full(6, 1.0), np.full(6, -1.0)])
    s, idx = msre_score(h, phases, h * np.exp(-1j))
    assert idx == 1 and s == pytest.approx(0.0, abs=1e-12)
    H = np.stack([h, h])
    T = np.stack([h * np.exp(1j), h * np.exp(-1j)])
    s, idx = msre_score(H, phases, T)
    assert list(idx) == [0, 1] and np.allclose(s, 0.0)
    single, _ = msre_score(h, phases[:1], h * np.exp(-1j))
    assert single < -1.0


def test_component_set_json_round_trip():
    c = SemanticComponentSet("r", np.array([[0.1, 0.2], [0.3, -0.4]]), np.array([3, 2]), bandwidth=0.5)
    again = SemanticComponentSet.from_json(c.to_json())
    assert np.array_equal(again.phases, c.phases) and list(again.counts) == [3, 2] and again.bandwidth == 0.5
    assert SemanticComponentSet.single("r", [4.0]).phases[0, 0] == pytest.approx(4.0 - 2 * np.pi)


@pytest.fixture(scope="module")
def two_cluster():
    store, E = planted_two_cluster(seed=3)
    comps = derive_components(collect_relation_angles(store, E, "r"))
    return store, E, comps


def test_two_cluster_kg_beats_single_vector(two_cluster):
    store, E, comps = two_cluster
    assert comps.k == 2
    msre = MsreModel(E, {0: comps})
    single = MsreModel(E, {0: SemanticComponentSet.single("r", np.angle(np.exp(1j * collect_relation_angles(store, E, "r").angles).sum(axis=0)))})
    a = eval_link_prediction(store, msre.score, "test")
    b = eval_link_prediction(store, single.score, "test")
    assert a["hits@1"] > b["hits@1"]


def test_complete_filters_and_reports_component(two_cluster):
    store, E, comps = two_cluster
    msre = MsreModel(E, {0: comps})
    h, _, t = (int(x) for x in store.train[0])
    unfiltered = complete(store, msre, (store.entities[h], "r", None), filtered=False, top=3)
    assert unfiltered[0][0] == store.entities[t]
    assert unfiltered[0][2] == comps.assignments[0]
    assert [s for _, s, _ in unfiltered] == sorted((s for _, s, _ in unfiltered), reverse=True)
    filtered = complete(store, msre, (store.entities[h], "r", None))
    assert store.entities[t] not in [name for name, _, _ in filtered]
    heads = complete(store, msre, (None, "r", store.entities[t]), filtered=False, top=1)
    assert heads[0][0] == store.entities[h]


def test_complete_errors(two_cluster):
    store, E, comps = two_cluster
    msre = MsreModel(E, {0: comps})
    with pytest.raises(ValueError):
        complete(store, msre, ("e0", "r", "e1"))
    with pytest.raises(ValueError):
        complete(store, msre, (None, "r", None))
    with pytest.raises(KeyError):
        complete(store, msre, ("nobody", "r", None))
    with pytest.raises(KeyError):
        complete(store, msre, ("e0", "unknown", None))


def test_complete_accepts_plain_scorer(two_cluster):
    store, E, comps = two_cluster
    msre = MsreModel(E, {0: comps})
    out = complete(store, msre.score, ("e0", "r", None), top=2)
    assert len(out) == 2 and out[0][2] == 0


def test_reduced_angles_rows(two_cluster):
    store, E, comps = two_cluster
    rows = reduced_angles(collect_relation_angles(store, E, "r"), comps)
    assert len(rows) == len(store.train)
    assert {r["component"] for r in rows} == {0, 1}
    assert all(len(r["x"]) == 2 for r in rows)


def test_components_survive_embedding_file(tmp_path):
    store = TripleStore.from_named({"train": [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")]})
    model = train_rotate(store, KgeTrainConfig(dim=4, epochs=2, eval_every=0))
    msre = MsreModel.from_rotate(model, store, derive=True)
    comps = {"r": msre.components[0]}
    save_embeddings(tmp_path / "e.json", model, store.entities, store.relations, comps)
    _, _, _, loaded = load_embeddings(tmp_path / "e.json")
    assert np.allclose(loaded["r"].phases, comps["r"].phases)


def test_finetune_moves_phases_only():
    store, E = planted_two_cluster(n_entities=80, dim=4, n_per_cluster=10, seed=1)
    comps = derive_components(collect_relation_angles(store, E, "r"))
    comps.phases[:] += 0.3
    msre = MsreModel(E, {0: comps})
    tuned = finetune_components(store, msre, KgeTrainConfig(dim=4, epochs=20, batch_size=16, lr=0.02, gamma=2.0))
    assert tuned.entities is msre.entities
    assert tuned.components[0].k == comps.k
    before = eval_link_prediction(store, msre.score, "train")["mrr"]
    after = eval_link_prediction(store, tuned.score, "train")["mrr"]
    assert after >= before
