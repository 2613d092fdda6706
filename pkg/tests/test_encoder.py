import numpy as np
import pytest

from marktpp.autograd import ParamStore
from marktpp.encoder import GRUEncoder, build_input, embed_mark, encode_prefixes, time_feature


def make_encoder(num_marks=3, emb=2, hidden=4, seed=0, transform="log"):
    return GRUEncoder(ParamStore(), num_marks, emb, hidden, np.random.default_rng(seed), transform)


class TestEmbedding:
    def test_identity_table(self):
        np.testing.assert_array_equal(embed_mark(np.eye(3), 1), [0.0, 1.0, 0.0])

    def test_row_equals_one_hot_product(self, rng):
        E = rng.normal(size=(5, 3))
        for m in range(5):
            np.testing.assert_allclose(embed_mark(E, m), np.eye(5)[m] @ E, rtol=1e-15)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            embed_mark(np.eye(3), 3)
        with pytest.raises(IndexError):
            embed_mark(np.eye(3), -1)


class TestBuildInput:
    def test_raw(self):
        np.testing.assert_allclose(build_input(1.5, np.array([0.1, 0.2]), "raw"), [1.5, 0.1, 0.2])

    def test_log_time_first(self):
        y = build_input(1.0, np.array([0.7, -0.3]), "log")
        assert y[0] == pytest.approx(0.0, abs=1e-7)
        np.testing.assert_array_equal(y[1:], [0.7, -0.3])

    def test_non_positive_tau(self):
        with pytest.raises(ValueError):
            build_input(0.0, np.zeros(2))

    def test_unknown_transform(self):
        with pytest.raises(ValueError):
            time_feature(1.0, "sqrt")


class TestEncodePrefixes:
    def test_zero_weights_halve_state(self):
        enc = make_encoder(hidden=3)
        for p in (enc.W, enc.U, enc.b_x, enc.b_h, enc.embedding):
            p.data = np.zeros_like(p.data)
        v = np.array([1.0, -2.0, 0.5])
        enc.h0.data = v.copy()
        rows = encode_prefixes(enc, [0.5, 1.0, 2.0, 0.3], [0, 1, 2, 0])
        expected = np.stack([v * 0.5**i for i in range(5)])
        np.testing.assert_allclose(rows, expected, rtol=1e-15)

    def test_empty_sequence_single_row(self):
        enc = make_encoder()
        rows = encode_prefixes(enc, [], [])
        assert rows.shape == (1, 4)
        np.testing.assert_array_equal(rows[0], enc.h0.data)

    def test_shared_prefix_identical_rows(self, rng):
        enc = make_encoder()
        a = encode_prefixes(enc, [0.5, 1.0, 2.0], [0, 1, 2])
        b = encode_prefixes(enc, [0.5, 1.0, 0.1, 4.0], [0, 1, 0, 0])
        np.testing.assert_array_equal(a[:3], b[:3])

    def test_causality(self, rng):
        enc = make_encoder(seed=3)
        taus = rng.uniform(0.1, 2.0, 6)
        marks = rng.integers(0, 3, 6)
        base = encode_prefixes(enc, taus, marks)
        for i in range(6):
            t2, m2 = taus.copy(), marks.copy()
            t2[i] *= 3.0
            m2[i] = (m2[i] + 1) % 3
            pert = encode_prefixes(enc, t2, m2)
            np.testing.assert_array_equal(pert[: i + 1], base[: i + 1])
            assert not np.allclose(pert[i + 1], base[i + 1])

    @pytest.mark.parametrize("n", [0, 1, 7])
    def test_row_count(self, n, rng):
        enc = make_encoder()
        assert encode_prefixes(enc, rng.uniform(0.1, 1, n), rng.integers(0, 3, n)).shape == (n + 1, 4)

    def test_batched_matches_single(self, rng):
        enc = make_encoder(seed=5)
        taus = np.array([[0.5, 1.0, 2.0], [0.3, 0.0, 0.0]])
        marks = np.array([[0, 1, 2], [2, 0, 0]])
        H = enc(taus, marks).data
        np.testing.assert_allclose(H[0], encode_prefixes(enc, taus[0], marks[0]), rtol=1e-13)
        np.testing.assert_allclose(H[1, :2], encode_prefixes(enc, taus[1, :1], marks[1, :1]), rtol=1e-13)

    def test_step_matches_scan(self, rng):
        enc = make_encoder(seed=2, transform="raw")
        taus = rng.uniform(0.1, 2.0, 4)
        marks = rng.integers(0, 3, 4)
        rows = encode_prefixes(enc, taus, marks)
        h = enc.h0.data[None, :]
        for i in range(4):
            h = enc.step(h, taus[i : i + 1], marks[i : i + 1])
            np.testing.assert_allclose(h[0], rows[i + 1], rtol=1e-12)

    def test_init_ranges(self):
        enc = make_encoder(hidden=16)
        bound = 1.0 / 4.0
        for p in (enc.W, enc.U, enc.b_x, enc.b_h):
            assert np.abs(p.data).max() <= bound
        np.testing.assert_array_equal(enc.h0.data, np.zeros(16))
