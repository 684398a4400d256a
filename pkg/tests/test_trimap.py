import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trimatte.tensor import Tensor
from trimatte.trimap import (
    Trimap,
    TrimapFormatError,
    TriTokenTable,
    build_tritoken_map,
    decode_trimap_bytes,
    downsample_trimap,
    encode_trimap_bytes,
    init_tokens,
    non_background_mask,
)

class_maps = arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.integers(0, 2))


def table_with(values):
    t = TriTokenTable("t", np.asarray(values).shape[1], dtype=np.float64)
    t.tokens.data = np.asarray(values, dtype=np.float64)
    return t


def test_all_background_broadcasts_token0():
    table = table_with(np.random.default_rng(0).standard_normal((3, 5)))
    out = build_tritoken_map(Trimap(np.zeros((3, 4), np.uint8)), table).data
    assert out.shape == (5, 3, 4)
    for y in range(3):
        for x in range(4):
            np.testing.assert_array_equal(out[:, y, x], table.tokens.data[0])


def test_default_init_gives_class_values():
    table = TriTokenTable("t", 1)
    out = build_tritoken_map(Trimap(np.array([[0, 1], [2, 0]])), table).data
    np.testing.assert_array_equal(out[0], [[0, 1], [2, 0]])


def test_matches_per_pixel_lookup():
    rng = np.random.default_rng(3)
    classes = rng.integers(0, 3, (8, 8))
    tokens = rng.standard_normal((3, 4))
    out = build_tritoken_map(Trimap(classes), table_with(tokens)).data
    expected = np.empty((4, 8, 8))
    for y in range(8):
        for x in range(8):
            expected[:, y, x] = tokens[classes[y, x]]
    np.testing.assert_array_equal(out, expected)


def test_batched_and_channels_last():
    rng = np.random.default_rng(4)
    classes = rng.integers(0, 3, (2, 4, 4))
    table = table_with(rng.standard_normal((3, 3)))
    nchw = build_tritoken_map(classes, table).data
    nhwc = build_tritoken_map(classes, table, channels_last=True).data
    assert nchw.shape == (2, 3, 4, 4)
    np.testing.assert_array_equal(nchw.transpose(0, 2, 3, 1), nhwc)


@settings(max_examples=40, deadline=None)
@given(class_maps)
def test_token_map_recovers_trimap(classes):
    tokens = np.array([[0.5, -1.0], [2.0, 3.0], [-4.0, 0.25]])
    out = build_tritoken_map(Trimap(classes), table_with(tokens)).data
    recovered = np.full(classes.shape, -1)
    for i in range(3):
        recovered[np.all(out == tokens[i][:, None, None], axis=0)] = i
    np.testing.assert_array_equal(recovered, classes)


@settings(max_examples=40, deadline=None)
@given(class_maps)
def test_token_gradient_is_pixel_count(classes):
    table = table_with(np.random.default_rng(0).standard_normal((3, 3)))
    build_tritoken_map(Trimap(classes), table).sum().backward()
    counts = np.bincount(classes.ravel(), minlength=3)
    np.testing.assert_array_equal(table.tokens.grad, np.repeat(counts[:, None], 3, axis=1))


def test_downsample_uniform():
    out = downsample_trimap(Trimap(np.full((8, 4), 2)), 4)
    assert out.shape == (2, 1) and np.all(out.classes == 2)


def test_downsample_top_left_rule():
    out = downsample_trimap(Trimap(np.array([[0, 2], [2, 0]])), 2)
    np.testing.assert_array_equal(out.classes, [[0]])


def test_downsample_strided_oracle():
    classes = np.random.default_rng(5).integers(0, 3, (16, 16))
    out = downsample_trimap(Trimap(classes), 4).classes
    expected = np.array([[classes[4 * i, 4 * j] for j in range(4)] for i in range(4)])
    np.testing.assert_array_equal(out, expected)


def test_downsample_errors():
    with pytest.raises(ValueError):
        downsample_trimap(Trimap(np.zeros((6, 8))), 4)
    with pytest.raises(ValueError):
        downsample_trimap(Trimap(np.zeros((6, 6))), 3)


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, (8, 8), elements=st.integers(0, 2)), st.sampled_from([1, 2, 4, 8]))
def test_downsample_stays_in_alphabet(classes, factor):
    out = downsample_trimap(Trimap(classes), factor).classes
    assert set(np.unique(out)) <= {0, 1, 2}


def test_non_background_mask():
    np.testing.assert_array_equal(non_background_mask(Trimap(np.full((2, 2), 2))).data, np.ones((1, 2, 2)))
    np.testing.assert_array_equal(non_background_mask(Trimap(np.zeros((2, 2)))).data, np.zeros((1, 2, 2)))
    np.testing.assert_array_equal(non_background_mask(Trimap(np.array([[0, 1], [2, 0]]))).data[0],
                                  [[0, 1], [1, 0]])


def test_byte_codec():
    assert decode_trimap_bytes(np.array([128]))[0] == 1
    assert decode_trimap_bytes(np.array([0]))[0] == 0
    assert decode_trimap_bytes(np.array([255]))[0] == 2
    with pytest.raises(TrimapFormatError, match=r"\(0, 1\)"):
        decode_trimap_bytes(np.array([[0, 7]], dtype=np.uint8))


@settings(max_examples=30, deadline=None)
@given(class_maps)
def test_byte_roundtrip(classes):
    np.testing.assert_array_equal(decode_trimap_bytes(encode_trimap_bytes(classes)), classes)
    np.testing.assert_array_equal(Trimap.from_bytes(Trimap(classes).to_bytes()).classes, classes)


def test_init_strategies():
    np.testing.assert_array_equal(init_tokens(2, "-1,0,1"), [[-1, -1], [0, 0], [1, 1]])
    np.testing.assert_array_equal(init_tokens(2, "0,1,2"), [[0, 0], [1, 1], [2, 2]])
    r = init_tokens(16, "random", np.random.default_rng(0))
    assert r.shape == (3, 16) and r.min() >= -1 and r.max() <= 1
    with pytest.raises(ValueError):
        init_tokens(2, "ones")


def test_table_is_learnable():
    t = TriTokenTable("x", 4)
    assert t.tokens.requires_grad and t.tokens.shape == (3, 4)
    assert [n for n, _ in t.named_parameters()] == ["tokens"]
