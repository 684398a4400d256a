import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trimatte import tensor as T
from trimatte.gradcheck import gradcheck
from trimatte.tensor import Tensor


def leaf(rng, *shape, positive=False):
    data = rng.standard_normal(shape)
    if positive:
        data = np.abs(data) + 0.5
    return Tensor(data, requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- softmax -------------------------------------------------------------------

def test_softmax_uniform():
    out = T.softmax(Tensor([1.0, 1.0, 1.0]), axis=0)
    np.testing.assert_allclose(out.data, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_log2():
    out = T.softmax(Tensor([0.0, math.log(2.0)]), axis=0)
    np.testing.assert_allclose(out.data, [1 / 3, 2 / 3], rtol=0, atol=1e-15)


def test_softmax_matches_direct_formula(rng):
    x = rng.standard_normal(5)
    expected = np.exp(x) / np.exp(x).sum()
    out = T.softmax(Tensor(x), axis=0).data
    assert abs(out.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_softmax_bad_axis():
    with pytest.raises(ValueError):
        T.softmax(Tensor(np.ones((2, 3))), axis=2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-500, 500)))
def test_softmax_rows_sum_to_one(x):
    out = T.softmax(Tensor(x), axis=-1).data
    assert np.all(out >= 0)
    assert np.all(np.abs(out.sum(axis=-1) - 1.0) < 1e-6)


# -- conv2d ----------------------------------------------------------------------

def naive_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(n):
        for oc in range(o):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0 if b is None else b[oc]
                    for ic in range(c):
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += xp[i, ic, y * stride + dy, xx * stride + dx] * w[oc, ic, dy, dx]
                    out[i, oc, y, xx] = acc
    return out


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 1, 4, 4))
    out = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv_ones_counts_overlap():
    out = T.conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), padding=1).data[0, 0]
    assert out[1, 1] == 9 and out[2, 2] == 9
    assert out[0, 0] == 4 and out[3, 3] == 4 and out[0, 3] == 4


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_matches_naive_loops(rng, stride, pad):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
    np.testing.assert_allclose(out, naive_conv(x, w, b, stride, pad), rtol=0, atol=1e-10)


def test_conv_output_size():
    out = T.conv2d(Tensor(np.zeros((2, 3, 9, 7))), Tensor(np.zeros((4, 3, 3, 2))), stride=2, padding=1)
    assert out.shape == (2, 4, (9 + 2 - 3) // 2 + 1, (7 + 2 - 2) // 2 + 1)


def test_conv_shape_errors():
    with pytest.raises(ValueError):
        T.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError):
        T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


# -- backward ------------------------------------------------------------------

def test_backward_sum_of_squares():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, -4.0, 6.0])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_backward_twice_accumulates():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])


def test_softmax_weighted_sum_gradient(rng):
    x = leaf(rng, 4)
    w = Tensor(rng.standard_normal(4))
    assert gradcheck(lambda: (T.softmax(x, 0) * w).sum(), [x]) < 1e-6


def test_conv_mean_gradient(rng):
    x, w, b = leaf(rng, 1, 2, 4, 4), leaf(rng, 2, 2, 3, 3), leaf(rng, 2)
    assert gradcheck(lambda: T.conv2d(x, w, b, 1, 1).mean(), [x, w, b]) < 1e-4


def test_reused_tensor_sums_path_gradients(rng):
    x = leaf(rng, 3)
    fn = lambda: (T.exp(x) * x).sum() + (x * 3.0).sum()
    assert gradcheck(fn, [x]) < 1e-6
    x.grad = None
    fn().backward()
    np.testing.assert_allclose(x.grad, np.exp(x.data) * (1 + x.data) + 3.0, rtol=1e-12)


def test_topological_order_visits_each_node_once(rng):
    x = leaf(rng, 3)
    y = x * x
    z = y + y * x
    order = T.topological_order(z.sum())
    assert len(order) == len({id(n) for n in order})
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]


def test_debug_mode_catches_nan():
    T.set_debug(True)
    try:
        with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
            T.log(Tensor([-1.0]))
    finally:
        T.set_debug(False)


def test_no_grad_skips_graph():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.is_leaf


# -- every op against finite differences ------------------------------------------

def _op_cases(rng):
    a34, b34 = leaf(rng, 3, 4), leaf(rng, 3, 4)
    col = leaf(rng, 3, 1)
    vec = leaf(rng, 4)
    img = leaf(rng, 1, 2, 4, 4)
    chan = leaf(rng, 1, 2, 1, 1)
    m1, m2 = leaf(rng, 2, 3, 4), leaf(rng, 2, 4, 2)
    pos = leaf(rng, 3, 4, positive=True)
    lnx, lnw, lnb = leaf(rng, 2, 3, 5), leaf(rng, 5), leaf(rng, 5)
    fx, fw, fb = leaf(rng, 2, 3, 4), leaf(rng, 4, 3), leaf(rng, 3)
    table = leaf(rng, 3, 4)
    idx = rng.integers(0, 3, size=(2, 3))
    weights = Tensor(rng.standard_normal((3, 4)))
    return {
        "add": (lambda: ((a34 + b34) * weights).sum(), [a34, b34]),
        "sub": (lambda: ((a34 - b34) * weights).sum(), [a34, b34]),
        "mul": (lambda: (a34 * b34).sum(), [a34, b34]),
        "div": (lambda: (a34 / pos).sum(), [a34, pos]),
        "broadcast_add": (lambda: ((a34 + col) * weights).sum() + ((a34 + vec) ** 2).sum(), [a34, col, vec]),
        "broadcast_mul": (lambda: ((img * chan) ** 2).sum(), [img, chan]),
        "matmul": (lambda: ((m1 @ m2) ** 2).sum(), [m1, m2]),
        "relu": (lambda: (T.relu(a34) * weights).sum(), [a34]),
        "gelu": (lambda: (T.gelu(a34) * weights).sum(), [a34]),
        "sigmoid": (lambda: (T.sigmoid(a34) * weights).sum(), [a34]),
        "softmax": (lambda: (T.softmax(a34, axis=1) * weights).sum(), [a34]),
        "layer_norm": (lambda: (T.layer_norm(lnx, lnw, lnb) ** 2).sum(), [lnx, lnw, lnb]),
        "sum": (lambda: (a34.sum(axis=1) ** 2).sum(), [a34]),
        "mean": (lambda: (a34.mean(axis=0) ** 2).sum(), [a34]),
        "avg_pool": (lambda: (T.avg_pool2d(img, 2) ** 2).sum(), [img]),
        "global_avg_pool": (lambda: (T.global_avg_pool(img) ** 2).sum(), [img]),
        "upsample": (lambda: (T.upsample_nearest(img, 2) ** 2).sum(), [img]),
        "downsample": (lambda: (T.downsample_nearest(img, 2) ** 2).sum(), [img]),
        "concat": (lambda: ((T.concat([img, img * 2.0], axis=1)) ** 2).sum(), [img]),
        "reshape_transpose": (lambda: ((a34.reshape(4, 3).transpose(1, 0)) * weights).sum(), [a34]),
        "abs": (lambda: (T.tabs(a34) * weights).sum(), [a34]),
        "linear": (lambda: (T.linear(fx, fw, fb) ** 2).sum(), [fx, fw, fb]),
        "conv2d": (lambda: (T.conv2d(img, leafc, None, 2, 1) ** 2).sum(), [img]),
        "take": (lambda: (T.take(table, idx) ** 2).sum(), [table]),
        "pad_edge": (lambda: (T.pad_edge(img, 2) ** 2).sum(), [img]),
        "zero_insert": (lambda: (T.zero_insert(img, 2) ** 2).sum(), [img]),
        "getitem": (lambda: (a34[1:, ::2] ** 2).sum(), [a34]),
    }


leafc = Tensor(np.random.default_rng(7).standard_normal((3, 2, 3, 3)))
OPS = sorted(_op_cases(np.random.default_rng(0)))


@pytest.mark.parametrize("op", OPS)
def test_op_gradients_match_finite_differences(op):
    rng = np.random.default_rng(zlib.crc32(op.encode()))
    fn, inputs = _op_cases(rng)[op]
    assert gradcheck(fn, inputs) < 1e-4


# -- roundtrips ----------------------------------------------------------------

def test_reshape_transpose_concat_roundtrip(rng):
    x = rng.standard_normal((2, 3, 4))
    t = Tensor(x)
    back = t.reshape(6, 4).reshape(2, 3, 4).transpose(2, 0, 1).transpose(1, 2, 0)
    np.testing.assert_array_equal(back.data, x)
    cat = T.concat([t, Tensor(x + 1)], axis=1)
    np.testing.assert_array_equal(cat.data[:, :3], x)


def test_downsample_requires_divisible():
    with pytest.raises(ValueError):
        T.downsample_nearest(Tensor(np.zeros((1, 1, 5, 4))), 2)
