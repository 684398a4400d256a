import numpy as np
import pytest

from trimatte.decoder import MGF, Decoder, DecoderConfig, check_mgf_inputs, mgf_fuse
from trimatte.errors import ConfigError
from trimatte.gradcheck import gradcheck
from trimatte.tensor import Tensor

CHANNELS = [8, 16, 32, 64, 128]
STRIDES = [2, 4, 8, 16, 32]


def mgf_inputs(rng, cp=3, cc=4, cn=5, h=4, n=1, mask=None):
    t_prev = Tensor(rng.standard_normal((n, cp, 2 * h, 2 * h)), requires_grad=True)
    t_cur = Tensor(rng.standard_normal((n, cc, h, h)), requires_grad=True)
    t_next = Tensor(rng.standard_normal((n, cn, h // 2, h // 2)), requires_grad=True)
    if mask is None:
        mask = rng.integers(0, 2, (n, 1, 2 * h, 2 * h))
    return t_prev, t_cur, t_next, Tensor(np.asarray(mask, dtype=np.float64))


def make_mgf(seed=0, cp=3, cc=4, cn=5):
    return MGF(cp, cc, cn, np.random.default_rng(seed), squeeze_ratio=2).astype(np.float64)


def test_mgf_shape():
    rng = np.random.default_rng(0)
    args = mgf_inputs(rng, n=2)
    assert make_mgf()(*args).shape == args[1].shape


def test_zero_weights_give_skip_identity():
    mgf = make_mgf()
    for p in mgf.parameters():
        p.data[...] = 0
    args = mgf_inputs(np.random.default_rng(1))
    np.testing.assert_array_equal(mgf_fuse(mgf, *args).data, args[1].data)


def test_mask_changes_output():
    rng = np.random.default_rng(2)
    tp, tc, tn, _ = mgf_inputs(rng)
    mgf = make_mgf(2)
    zeros = mgf(tp, tc, tn, Tensor(np.zeros((1, 1, 8, 8))))
    ones = mgf(tp, tc, tn, Tensor(np.ones((1, 1, 8, 8))))
    assert np.abs(zeros.data - ones.data).max() > 0


@pytest.mark.parametrize("seed", range(3))
def test_mgf_gradcheck(seed):
    rng = np.random.default_rng(seed)
    cp, cc, cn = rng.integers(1, 4, 3)
    mgf = make_mgf(seed, cp, cc, cn)
    tp, tc, tn, mask = mgf_inputs(rng, cp, cc, cn, h=2)
    w = Tensor(rng.standard_normal(tc.shape))
    fn = lambda: (mgf(tp, tc, tn, mask) * w).sum()
    assert gradcheck(fn, [tp, tc, tn] + mgf.parameters()) < 1e-4


def test_masked_positions_get_no_gradient():
    rng = np.random.default_rng(3)
    tp, tc, tn, mask = mgf_inputs(rng, h=4)
    mgf = make_mgf(3)
    (mgf(tp, tc, tn, mask) ** 2).sum().backward()
    masked = np.broadcast_to(mask.data == 0, tp.shape)
    assert masked.any()
    assert np.all(tp.grad[masked] == 0)
    assert np.abs(tp.grad[~masked]).max() > 0


def test_mgf_argument_errors():
    rng = np.random.default_rng(4)
    tp, tc, tn, mask = mgf_inputs(rng)
    with pytest.raises(ValueError):
        check_mgf_inputs(tc, tc, tn, Tensor(np.ones((1, 1, 4, 4))))
    with pytest.raises(ValueError):
        check_mgf_inputs(tp, tc, tp, mask)
    with pytest.raises(ValueError):
        check_mgf_inputs(tp, tc, tn, Tensor(np.full((1, 1, 8, 8), 0.5)))
    with pytest.raises(ValueError):
        check_mgf_inputs(tp, tc, tn, Tensor(np.ones((1, 1, 4, 4))))


def random_pyramid(rng, size=64, n=1):
    return [Tensor(rng.standard_normal((n, c, size // s, size // s)).astype(np.float32))
            for c, s in zip(CHANNELS, STRIDES)]


def test_decode_range_and_size():
    rng = np.random.default_rng(5)
    dec = Decoder(CHANNELS, STRIDES, DecoderConfig(), np.random.default_rng(0))
    out = dec(random_pyramid(rng, n=2), rng.integers(0, 3, (2, 64, 64)))
    assert out.shape == (2, 1, 64, 64)
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_decode_resolution_mismatch():
    rng = np.random.default_rng(6)
    dec = Decoder(CHANNELS, STRIDES, DecoderConfig(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        dec(random_pyramid(rng), rng.integers(0, 3, (1, 32, 32)))


def test_mgf_level_validation():
    with pytest.raises(ConfigError):
        Decoder(CHANNELS, STRIDES, DecoderConfig(mgf_levels=[0]), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        Decoder(CHANNELS, STRIDES, DecoderConfig(mgf_levels=[4]), np.random.default_rng(0))
    dec = Decoder(CHANNELS, STRIDES, DecoderConfig(mgf_levels=[]), np.random.default_rng(0))
    assert dec.mgf == {}


@pytest.mark.parametrize("seed", range(5))
def test_decoder_gradients_reach_parameters(seed):
    # a batch of 4 (the training default); one sample alone leaves about half of
    # the squeeze units behind their ReLU
    rng = np.random.default_rng(seed)
    dec = Decoder(CHANNELS, STRIDES, DecoderConfig(), np.random.default_rng(seed)).astype(np.float64)
    pyr = [Tensor(p.data.astype(np.float64)) for p in random_pyramid(rng, n=4)]
    target = rng.random((4, 1, 64, 64))
    ((dec(pyr, rng.integers(0, 3, (4, 64, 64))) - target) ** 2).mean().backward()
    total = nonzero = 0
    for name, p in dec.named_parameters():
        assert np.all(np.isfinite(p.grad)), name
        total += p.size
        nonzero += int(np.count_nonzero(p.grad))
    assert nonzero / total >= 0.99
