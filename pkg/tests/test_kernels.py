"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskfair._backend import compiled_kernels, kernels, python_kernels

needs_ext = pytest.mark.skipif(compiled_kernels is None, reason="compiled extension not built")


def test_selected_backend_is_known():
    assert kernels.NAME in ("cython", "python")


def test_pava_hand_case(backend):
    out = backend.pava(np.array([1.0, 0.0, 1.0]), np.ones(3))
    np.testing.assert_allclose(out, [0.5, 0.5, 1.0])


def test_pava_weights(backend):
    # weighted pool of (1, w=3) and (0, w=1) is 0.75
    out = backend.pava(np.array([1.0, 0.0]), np.array([3.0, 1.0]))
    np.testing.assert_allclose(out, [0.75, 0.75])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_pava_monotone_and_mean_preserving(ys):
    y = np.array(ys)
    w = np.linspace(1.0, 2.0, y.size)
    for b in (python_kernels, compiled_kernels or python_kernels):
        out = b.pava(y, w)
        assert np.all(np.diff(out) >= -1e-12)
        assert np.dot(out, w) == pytest.approx(np.dot(y, w), abs=1e-9)


def test_weighted_auc_ties(backend):
    s = np.array([0.5, 0.5, 0.5])
    y = np.array([1.0, 0.0, 1.0])
    assert backend.weighted_auc(s, y, 1 - y) == 0.5


def test_weighted_auc_no_mass_is_nan(backend):
    y = np.ones(3)
    assert np.isnan(backend.weighted_auc(np.array([0.1, 0.2, 0.3]), y, 1 - y))


def test_knn_ties_lowest_index(backend):
    X = np.array([[0.0], [1.0], [-1.0], [2.0]])
    nn = backend.knn_indices(X, 2)
    # row 0 has rows 1 and 2 at equal distance; lower index first
    assert nn[0].tolist() == [1, 2]
    assert nn[3].tolist() == [1, 0]


@needs_ext
def test_backends_agree_pava_auc_knn():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 300))
        y = rng.random(n)
        w = rng.uniform(0.1, 3, n)
        np.testing.assert_array_equal(compiled_kernels.pava(y, w), python_kernels.pava(y, w))
        s = np.round(rng.random(n), 2)
        lab = (rng.random(n) < 0.4).astype(float)
        a = compiled_kernels.weighted_auc(s, lab, 1 - lab)
        b = python_kernels.weighted_auc(s, lab, 1 - lab)
        assert (np.isnan(a) and np.isnan(b)) or a == pytest.approx(b, abs=1e-14)
        if n > 6:
            X = np.round(rng.normal(size=(n, 4)), 1)
            np.testing.assert_array_equal(compiled_kernels.knn_indices(X, 5), python_kernels.knn_indices(X, 5))


def _mlp_params(rng, d=6, h=9):
    return (np.ascontiguousarray(rng.normal(size=(d, h))), rng.normal(size=h), rng.normal(size=h),
            float(rng.normal()))


@needs_ext
def test_backends_agree_mlp_grad():
    rng = np.random.default_rng(4)
    W1, b1, w2, b2 = _mlp_params(rng)
    X = rng.normal(size=(50, 6))
    y = (rng.random(50) < 0.5).astype(float)
    got = compiled_kernels.mlp_loss_grad(W1, b1, w2, b2, X, y, 1e-3)
    ref = python_kernels.mlp_loss_grad(W1, b1, w2, b2, X, y, 1e-3)
    assert got[0] == pytest.approx(ref[0], rel=1e-12)
    for g, r in zip(got[1:], ref[1:]):
        np.testing.assert_allclose(g, r, rtol=1e-10, atol=1e-13)


@needs_ext
def test_backends_agree_sgd_epoch():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 6))
    y = (rng.random(200) < 0.4).astype(float)
    order = rng.permutation(200).astype(np.int64)
    states = []
    for b in (compiled_kernels, python_kernels):
        W1, b1, w2, b2 = _mlp_params(np.random.default_rng(0))
        p = [W1, b1, w2, np.array([b2])]
        v = [np.zeros_like(q) for q in p]
        losses = [b.mlp_sgd_epoch(*p, *v, X, y, order, 32, 0.05, 0.9, 1e-4) for _ in range(5)]
        states.append((p, losses))
    for a, b in zip(states[0][0], states[1][0]):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(states[0][1], states[1][1], rtol=1e-10)
