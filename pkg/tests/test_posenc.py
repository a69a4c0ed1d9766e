import warnings

import numpy as np
import pytest

from hyperkg.posenc import (
    EncPI,
    PosEncConfig,
    enc_pi,
    encode_position,
    lipschitz_constant,
    pair_input,
    position_table,
    sinusoid,
)
from hyperkg.tensor import backward, precision, sum_all


def cfg(d=16, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return PosEncConfig(d=d, **kw)


class TestSinusoid:
    def test_position_zero(self):
        np.testing.assert_array_equal(sinusoid(0, cfg(8)), [0, 1] * 4)

    def test_position_one_d4(self):
        expected = [np.sin(1), np.cos(1), np.sin(10000**-0.5), np.cos(10000**-0.5)]
        np.testing.assert_allclose(sinusoid(1, cfg(4)), expected, rtol=1e-15)

    def test_bounded(self):
        c = cfg(64)
        vals = np.stack([sinusoid(a, c) for a in range(0, 500, 7)])
        assert np.all(np.abs(vals) <= 1)

    def test_lipschitz_on_grid(self):
        c = cfg(64)
        C = lipschitz_constant(c)
        grid = np.stack([sinusoid(a, c) for a in range(1, 101)])
        diffs = np.linalg.norm(grid[:, None] - grid[None], axis=-1)
        gaps = np.abs(np.arange(1, 101)[:, None] - np.arange(1, 101)[None])
        assert np.all(diffs <= C * gaps + 1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PosEncConfig(d=7)
        with pytest.raises(ValueError):
            PosEncConfig(scheme="learned")
        with pytest.warns(UserWarning):
            PosEncConfig(d=8)


class TestSchemes:
    def test_alternatives(self):
        np.testing.assert_array_equal(encode_position(3, cfg(scheme="all-one")), np.ones(16))
        np.testing.assert_array_equal(encode_position(3, cfg(scheme="magnitude")), np.full(16, 3.0))

    def test_random_fixed_per_position(self):
        c = cfg(scheme="random", seed=4)
        np.testing.assert_array_equal(encode_position(2, c), encode_position(2, c))
        assert not np.allclose(encode_position(2, c), encode_position(3, c))
        assert not np.allclose(encode_position(2, c), encode_position(2, cfg(scheme="random", seed=5)))

    def test_table_rows(self):
        c = cfg()
        table = position_table(5, c, np.float64)
        np.testing.assert_array_equal(table[2], sinusoid(3, c))


class TestEncPI:
    def test_matches_manual_mlp(self):
        c = cfg()
        with precision(np.float64):
            enc = EncPI(c, np.random.default_rng(0))
            x = pair_input(2, 5, c)
            W1, b1 = enc.mlp.fc1.weight.data, enc.mlp.fc1.bias.data
            W2, b2 = enc.mlp.fc2.weight.data, enc.mlp.fc2.bias.data
            ref = np.maximum(x @ W1 + b1, 0) @ W2 + b2
            np.testing.assert_allclose(enc_pi(2, 5, enc), ref, rtol=1e-12)

    def test_ordered_pairs_differ(self):
        enc = EncPI(cfg(), np.random.default_rng(1))
        for a, b in [(1, 2), (2, 3), (1, 7)]:
            assert not np.allclose(enc_pi(a, b, enc), enc_pi(b, a, enc))

    def test_shared_weights_and_recorded_pairs(self):
        enc = EncPI(cfg(), np.random.default_rng(2))
        out = enc([(1, 1), (1, 2), (40, 900)])
        assert out.shape == (3, 16)
        assert enc.pairs_seen == {(1, 1), (1, 2), (40, 900)}
        assert set(enc.parameters()) == {"mlp.fc1.weight", "mlp.fc1.bias", "mlp.fc2.weight", "mlp.fc2.bias"}

    def test_rejects_position_zero(self):
        with pytest.raises(ValueError):
            EncPI(cfg(), np.random.default_rng(0))([(0, 1)])

    def test_differentiable(self):
        enc = EncPI(cfg(), np.random.default_rng(3))
        backward(sum_all(enc([(1, 2), (3, 1)])))
        assert all(p.grad is not None for p in enc.parameters().values())

    def test_bounded_extrapolation(self):
        enc = EncPI(cfg(64), np.random.default_rng(4))
        small = enc([(a, b) for a in range(1, 65) for b in range(1, 65)]).data
        big_pos = np.random.default_rng(5).integers(1, 1025, size=(4000, 2))
        big = enc([tuple(p) for p in big_pos]).data
        assert np.abs(big).max() <= 1.5 * np.abs(small).max()
