"""Reverse-mode tape: gradients against central differences, graph reuse,
and the functional API's pass-through behavior on plain arrays."""

import numpy as np
import pytest

from navcontrast import autodiff as ad


def central_diff(fn, x, h=1e-6):
    g = np.zeros_like(x, dtype=np.float64)
    flat = g.ravel()
    xf = x.ravel()
    for i in range(x.size):
        old = xf[i]
        xf[i] = old + h
        up = fn(x)
        xf[i] = old - h
        dn = fn(x)
        xf[i] = old
        flat[i] = (up - dn) / (2 * h)
    return g


def test_plain_arrays_pass_through():
    x = np.array([1.0, 2.0])
    y = ad.tanh(ad.add(x, x))
    assert isinstance(y, np.ndarray)
    np.testing.assert_allclose(y, np.tanh(2 * x))


def test_diamond_reuse_counts_both_paths():
    x = ad.leaf(np.array(3.0))
    s = ad.add(x, x)
    out = ad.mul(s, s)        # (2x)^2, d/dx = 8x
    out.backward()
    assert out.item() == pytest.approx(36.0)
    assert x.grad == pytest.approx(24.0)


def test_composite_graph_matches_central_differences(rng):
    W = rng.normal(size=(4, 5))
    x0 = rng.normal(size=5)

    def forward(xv):
        h = ad.tanh(ad.matmul(W, xv))
        p = ad.softmax(h)
        n = ad.l2_normalize(h)
        return ad.value(ad.add(ad.dot(p, n), ad.sum_(ad.mul(h, h))))

    x = ad.leaf(x0)
    h = ad.tanh(ad.matmul(W, x))
    p = ad.softmax(h)
    n = ad.l2_normalize(h)
    out = ad.add(ad.dot(p, n), ad.sum_(ad.mul(h, h)))
    out.backward()
    fd = central_diff(lambda v: forward(v), x0.copy())
    np.testing.assert_allclose(x.grad, fd, rtol=1e-5, atol=1e-7)


def test_matmul_variants_match_central_differences(rng):
    A0 = rng.normal(size=(3, 4))
    B0 = rng.normal(size=(4, 2))
    v0 = rng.normal(size=4)

    A = ad.leaf(A0)
    out = ad.sum_(ad.tanh(ad.matmul(A, B0)))
    out.backward()
    fd = central_diff(
        lambda M: float(np.sum(np.tanh(M @ B0))), A0.copy())
    np.testing.assert_allclose(A.grad, fd, rtol=1e-5, atol=1e-7)

    v = ad.leaf(v0)
    out = ad.sum_(ad.matmul(v, B0))
    out.backward()
    fd = central_diff(lambda u: float(np.sum(u @ B0)), v0.copy())
    np.testing.assert_allclose(v.grad, fd, rtol=1e-6, atol=1e-9)


def test_gather_rows_accumulates_repeated_indices():
    table = ad.leaf(np.arange(6.0).reshape(3, 2))
    rows = ad.gather_rows(table, [0, 0, 2])
    out = ad.sum_(rows)
    out.backward()
    np.testing.assert_allclose(table.grad, [[2, 2], [0, 0], [1, 1]])


def test_log_softmax_matches_central_differences(rng):
    x0 = rng.normal(size=6)
    w = rng.normal(size=6)
    x = ad.leaf(x0)
    out = ad.dot(ad.log_softmax(x), w)
    out.backward()

    def f(v):
        ls = v - (np.max(v) + np.log(np.sum(np.exp(v - np.max(v)))))
        return float(ls @ w)

    fd = central_diff(f, x0.copy())
    np.testing.assert_allclose(x.grad, fd, rtol=1e-5, atol=1e-8)


def test_l2_normalize_degenerate_vector_is_constant_basis():
    x = ad.leaf(np.zeros(4))
    y = ad.l2_normalize(x)
    np.testing.assert_allclose(ad.value(y), [1.0, 0.0, 0.0, 0.0])
    out = ad.sum_(y)
    out.backward()
    np.testing.assert_allclose(x.grad, np.zeros(4))


def test_l2_normalize_gradient(rng):
    x0 = rng.normal(size=5)
    w = rng.normal(size=5)
    x = ad.leaf(x0)
    out = ad.dot(ad.l2_normalize(x), w)
    out.backward()
    fd = central_diff(lambda v: float((v / np.linalg.norm(v)) @ w), x0.copy())
    np.testing.assert_allclose(x.grad, fd, rtol=1e-5, atol=1e-8)


def test_stack_and_concat_mix_tensors_and_arrays(rng):
    a = ad.leaf(rng.normal(size=3))
    b = rng.normal(size=3)
    stacked = ad.stack_rows([a, b])
    assert ad.value(stacked).shape == (2, 3)
    out = ad.sum_(ad.mean_rows(stacked))
    out.backward()
    np.testing.assert_allclose(a.grad, np.full(3, 0.5))

    a2 = ad.leaf(rng.normal(size=2))
    cat = ad.concat1d([a2, b])
    assert ad.value(cat).shape == (5,)
    out = ad.sum_(cat)
    out.backward()
    np.testing.assert_allclose(a2.grad, np.ones(2))


def test_backward_requires_scalar():
    x = ad.leaf(np.ones(3))
    y = ad.tanh(x)
    with pytest.raises(ValueError):
        y.backward()


def test_scale_and_accumulate(rng):
    x0 = rng.normal(size=4)
    x = ad.leaf(x0)
    total = ad.accumulate([ad.scale(ad.sum_(x), 2.0),
                           ad.scalar(1.5),
                           ad.dot(x, x0)])
    total.backward()
    np.testing.assert_allclose(x.grad, 2.0 + x0, rtol=1e-12)
    assert total.item() == pytest.approx(2.0 * x0.sum() + 1.5 + x0 @ x0)
