import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from casegraph.crf import (
    MASKED_SCORE,
    IllegalPathError,
    TagSet,
    batch_nll,
    build_transition_mask,
    log_partition,
    masked_transitions,
    nll,
    path_score,
    viterbi,
    violations,
)

from oracles import central_diff, crf_best, crf_log_partition, crf_paths, crf_score, rel_err


def random_crf(rng, n, L):
    return rng.normal(size=(n, L)), rng.normal(size=(L + 2, L + 2))


def test_tagset_layout():
    ts = TagSet(("MV", "NP"))
    assert ts.labels == ["O", "B-MV", "I-MV", "B-NP", "I-NP"]
    assert (ts.start, ts.stop) == (5, 6)
    assert ts.index("I-NP") == 4
    assert ts.decode(ts.encode(["B-NP", "I-NP", "O"])) == ["B-NP", "I-NP", "O"]
    with pytest.raises(KeyError):
        ts.index("B-XX")
    with pytest.raises(ValueError):
        TagSet(("MV", "MV"))


def test_transition_mask_forbids_bad_inside_labels():
    ts = TagSet(("A", "B"))
    m = build_transition_mask(ts)
    O, BA, IA, BB, IB = range(5)
    assert m[BA, IA] and m[IA, IA]
    assert not m[O, IA] and not m[BB, IA] and not m[ts.start, IA]
    assert m[ts.start, BA] and m[IB, ts.stop]
    assert not m[:, ts.start].any() and not m[ts.stop].any()


def test_masked_transitions_pins_value():
    ts = TagSet(("A",))
    A = masked_transitions(np.zeros((5, 5)), build_transition_mask(ts))
    assert A[0, 2] == MASKED_SCORE and A[1, 2] == 0.0


def test_path_score_by_hand():
    P = np.array([[1.0, 2.0], [3.0, 4.0]])
    A = np.arange(16, dtype=float).reshape(4, 4) / 10
    # START->1, 1->0, 0->STOP
    expected = A[2, 1] + P[0, 1] + A[1, 0] + P[1, 0] + A[0, 3]
    assert path_score(P, A, [1, 0]) == pytest.approx(expected)


def test_single_token_sentence(rng):
    P, A = random_crf(rng, 1, 3)
    y, s = viterbi(P, A)
    best, best_s = crf_best(P, A)
    assert tuple(y) == best and s == best_s
    assert log_partition(P, A) == pytest.approx(crf_log_partition(P, A), rel=1e-12)


@pytest.mark.parametrize("n,L", [(2, 2), (3, 3), (4, 5), (6, 2)])
def test_viterbi_and_partition_agree_with_exhaustive(rng, n, L):
    for _ in range(20):
        P, A = random_crf(rng, n, L)
        y, s = viterbi(P, A)
        best, best_s = crf_best(P, A)
        assert tuple(y) == best
        assert s == best_s
        assert abs(log_partition(P, A) - crf_log_partition(P, A)) <= 1e-8 * abs(crf_log_partition(P, A))


def test_viterbi_ties_pick_lowest_labels():
    P = np.zeros((3, 3))
    A = np.zeros((5, 5))
    y, _ = viterbi(P, A)
    assert list(y) == [0, 0, 0]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_probabilities_sum_to_one(n, L, seed):
    P, A = random_crf(np.random.default_rng(seed), n, L)
    Z = log_partition(P, A)
    total = math.fsum(math.exp(crf_score(P, A, p) - Z) for p in crf_paths(n, L))
    assert abs(total - 1.0) < 1e-8


def test_masked_viterbi_never_emits_illegal_path(rng):
    ts = TagSet(("A", "B"))
    mask = build_transition_mask(ts)
    for _ in range(50):
        P = rng.normal(size=(6, ts.n_labels)) * 3
        A = masked_transitions(rng.normal(size=(7, 7)), mask)
        y, _ = viterbi(P, A)
        assert violations(y, mask) == []


def test_nll_gradient_matches_central_differences(rng):
    P, A = random_crf(rng, 4, 3)
    y = np.array([0, 2, 1, 1])
    _, dP, dA = nll(P, A, y)
    gP = central_diff(lambda x: nll(x, A, y)[0], P)
    gA = central_diff(lambda x: nll(P, x, y)[0], A)
    assert rel_err(dP, gP) < 1e-6
    assert rel_err(dA, gA) < 1e-6


def test_nll_is_logz_minus_gold(rng):
    P, A = random_crf(rng, 3, 3)
    y = [2, 0, 1]
    assert nll(P, A, y)[0] == pytest.approx(crf_log_partition(P, A) - crf_score(P, A, y))


def test_batch_nll_equals_sum_of_singles(rng):
    L = 3
    A = rng.normal(size=(L + 2, L + 2))
    lengths = np.array([4, 1, 3])
    P = rng.normal(size=(3, 4, L))
    Y = rng.integers(L, size=(3, 4))
    loss, dP, dA = batch_nll(P, lengths, A, Y)
    total, dA_sum = 0.0, np.zeros_like(A)
    for b, n in enumerate(lengths):
        lb, dPb, dAb = nll(P[b, :n], A, Y[b, :n])
        total += lb
        dA_sum += dAb
        assert np.allclose(dP[b, :n], dPb)
        assert np.all(dP[b, n:] == 0)
    assert loss == pytest.approx(total)
    assert np.allclose(dA, dA_sum)


def test_nll_rejects_illegal_gold():
    ts = TagSet(("A",))
    mask = build_transition_mask(ts)
    P = np.zeros((2, 3))
    A = masked_transitions(np.zeros((5, 5)), mask)
    with pytest.raises(IllegalPathError):
        nll(P, A, [0, 2], mask=mask)


def test_shape_errors():
    with pytest.raises(ValueError):
        path_score(np.zeros((3, 2)), np.zeros((4, 4)), [0, 1])
    with pytest.raises(ValueError):
        viterbi(np.zeros((0, 2)), np.zeros((4, 4)))
