import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from casegraph.numeric import (
    Adam,
    AdamState,
    UndefinedMeanError,
    ZeroVarianceError,
    adam_step,
    circular_mean,
    clip_grad_norm,
    default_bandwidth,
    finite_diff_grad,
    gelu,
    gelu_grad,
    log_sum_exp,
    mean_shift,
    pca_fit,
    relative_error,
    softmax,
    wrap_angle,
)

from oracles import central_diff, flat_mean_shift_point, pca_oracle


def test_wrap_angle_range_and_pi():
    x = np.linspace(-20, 20, 1001)
    w = wrap_angle(x)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    assert np.allclose(np.sin(w), np.sin(x)) and np.allclose(np.cos(w), np.cos(x))
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)


def test_gelu_grad_matches_differences():
    x = np.linspace(-4, 4, 17)
    num = central_diff(lambda v: gelu(v).sum(), x)
    assert np.allclose(gelu_grad(x), num, atol=1e-7)


def test_log_sum_exp_is_stable():
    v = np.array([1000.0, 1000.0])
    assert log_sum_exp(v) == pytest.approx(1000.0 + np.log(2.0))
    assert np.isfinite(log_sum_exp(np.array([-1e308, 0.0])))


def test_softmax_rows_sum_to_one(rng):
    p = softmax(rng.normal(size=(5, 7)) * 50, axis=1)
    assert np.allclose(p.sum(axis=1), 1.0)


# -- PCA -------------------------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 4])
def test_pca_matches_covariance_eigendecomposition(rng, k):
    X = rng.normal(size=(60, 6)) @ rng.normal(size=(6, 6))
    model = pca_fit(X, k)
    axes, var, discarded = pca_oracle(X, k)
    # axes agree up to sign
    assert np.allclose(np.abs(np.sum(model.components * axes, axis=1)), 1.0, atol=1e-8)
    assert np.allclose(model.explained_variance, var)
    assert model.discarded_variance == pytest.approx(discarded, rel=1e-9)


def test_pca_reconstruction_error_identity(rng):
    X = rng.normal(size=(40, 5)) * [5, 3, 1, 0.5, 0.1]
    m = pca_fit(X, 2)
    recon = m.inverse_transform(m.transform(X))
    assert np.sum((X - recon) ** 2) / (len(X) - 1) == pytest.approx(m.discarded_variance, abs=1e-9)


def test_pca_full_rank_is_lossless(rng):
    X = rng.normal(size=(10, 3))
    m = pca_fit(X, 3)
    assert np.allclose(m.inverse_transform(m.transform(X)), X)
    assert m.discarded_variance == pytest.approx(0.0, abs=1e-12)


def test_pca_is_deterministic_in_sign(rng):
    X = rng.normal(size=(30, 4))
    a, b = pca_fit(X, 2), pca_fit(X.copy(), 2)
    assert np.array_equal(a.components, b.components)
    pivots = np.argmax(np.abs(a.components), axis=1)
    assert np.all(a.components[np.arange(2), pivots] > 0)


def test_pca_errors():
    with pytest.raises(ZeroVarianceError):
        pca_fit(np.ones((5, 3)), 1)
    with pytest.raises(ValueError):
        pca_fit(np.zeros((5, 3)) + np.arange(3), 4)
    with pytest.raises(ValueError):
        pca_fit(np.ones((1, 3)), 1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (12, 4), elements=st.floats(-10, 10)), st.integers(1, 4))
def test_pca_components_orthonormal(X, k):
    if np.trace(np.cov(X, rowvar=False)) < 1e-6:
        return
    C = pca_fit(X, k).components
    assert np.allclose(C @ C.T, np.eye(k), atol=1e-6)


# -- Mean-Shift ------------------------------------------------------------


def test_mean_shift_two_blobs(rng):
    sigma = 0.3
    a = rng.normal([0, 0], sigma, size=(80, 2))
    b = rng.normal([5, 5], sigma, size=(80, 2))
    res = mean_shift(np.vstack([a, b]), bandwidth=1.5)
    assert res.n_modes == 2
    modes = sorted(res.modes.tolist())
    assert np.allclose(modes[0], a.mean(axis=0), atol=0.1 * sigma)
    assert np.allclose(modes[1], b.mean(axis=0), atol=0.1 * sigma)
    assert len(set(res.assignments[:80])) == 1 and len(set(res.assignments[80:])) == 1


def test_mean_shift_matches_point_oracle(rng):
    X = np.vstack([rng.normal(0, 0.5, size=(20, 2)), rng.normal(4, 0.5, size=(20, 2))])
    h = 1.2
    res = mean_shift(X, bandwidth=h, tol=1e-10)
    for i in (0, 7, 25, 39):
        target = flat_mean_shift_point(X, X[i], h)
        assert np.linalg.norm(res.modes[res.assignments[i]] - target) < 1e-6


def test_mean_shift_is_order_invariant(rng):
    X = np.vstack([rng.normal(0, 0.2, size=(15, 2)), rng.normal(3, 0.2, size=(15, 2))])
    perm = rng.permutation(len(X))
    a, b = mean_shift(X, bandwidth=1.0), mean_shift(X[perm], bandwidth=1.0)
    assert np.allclose(a.modes, b.modes)


def test_mean_shift_single_point_and_huge_bandwidth():
    assert mean_shift(np.array([[1.0, 2.0]])).n_modes == 1
    X = np.random.default_rng(0).normal(size=(30, 2))
    assert mean_shift(X, bandwidth=100.0).n_modes == 1


def test_mean_shift_errors():
    with pytest.raises(ValueError):
        mean_shift(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        mean_shift(np.zeros((3, 2)), bandwidth=0.0)
    with pytest.raises(ValueError):
        mean_shift(np.zeros((3, 2)), bandwidth=1.0, kernel="epanechnikov")


def test_default_bandwidth_keeps_unimodal_data_together(rng):
    X = rng.normal(size=(200, 2))
    assert mean_shift(X, bandwidth=default_bandwidth(X)).n_modes <= 2


# -- circular mean ---------------------------------------------------------


def test_circular_mean_wraps():
    assert circular_mean([np.pi - 0.1, -np.pi + 0.1]) == pytest.approx(np.pi)
    assert circular_mean([0.2, 0.4]) == pytest.approx(0.3)


def test_circular_mean_undefined():
    with pytest.raises(UndefinedMeanError):
        circular_mean([0.0, np.pi])
    with pytest.raises(ValueError):
        circular_mean([])


# -- Adam ------------------------------------------------------------------


def test_adam_first_step_moves_by_lr():
    p, s = adam_step(np.array([1.0, -1.0]), np.array([0.5, -3.0]), AdamState.zeros_like(np.zeros(2), lr=0.1))
    assert np.allclose(p, [0.9, -0.9], atol=1e-6)
    assert s.step == 1


def test_adam_decoupled_decay():
    p0 = np.array([2.0])
    p, _ = adam_step(p0, np.zeros(1), AdamState.zeros_like(p0, lr=0.1), weight_decay=0.01)
    assert p[0] == pytest.approx(2.0 - 0.1 * 0.01 * 2.0)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros_like(np.zeros(2)))


def test_adam_respects_frozen_mask_and_decay_set():
    params = {"w": np.ones(3), "b": np.ones(3)}
    opt = Adam(params, lr=0.1, weight_decay=0.5, decay=frozenset({"w"}), frozen={"w": np.array([True, False, False])})
    opt.step({"w": np.zeros(3), "b": np.zeros(3)})
    assert params["w"][0] == 1.0
    assert params["w"][1] < 1.0
    assert np.all(params["b"] == 1.0)


def test_adam_minimises_quadratic():
    params = {"x": np.array([3.0, -2.0])}
    opt = Adam(params, lr=0.1)
    for _ in range(500):
        opt.step({"x": 2 * params["x"]})
    assert np.allclose(params["x"], 0.0, atol=1e-2)


def test_clip_grad_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(g, 1.0) == pytest.approx(5.0)
    assert np.sqrt(g["a"] ** 2 + g["b"] ** 2)[0] == pytest.approx(1.0)
    g = {"a": np.array([0.3])}
    clip_grad_norm(g, 1.0)
    assert g["a"][0] == 0.3


def test_finite_diff_and_relative_error():
    g = finite_diff_grad(lambda x: float(np.sum(x**3)), np.array([1.0, 2.0]))
    assert relative_error(g, [3.0, 12.0]) < 1e-8
    assert relative_error([0.0], [0.0]) == 0.0
