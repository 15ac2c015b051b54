import numpy as np
import pytest

from lmfmult.attention import (
    CrossModalBlockParams,
    EncoderStackParams,
    crossmodal_block,
    crossmodal_stack,
    last_valid,
    positional_embedding,
    scaled_dot_attention,
    self_attention_encoder,
)
from lmfmult.core import Tensor, check_gradients, layer_norm
from lmfmult.errors import EmptySequence, EmptySource, OddDimension, ShapeMismatch


def zero_block(d):
    p = CrossModalBlockParams.init(d, np.random.default_rng(0))
    for name, t in p.named_parameters().items():
        if not name.startswith("ln_"):
            t.data[...] = 0.0
    return p


class TestPositionalEmbedding:
    def test_position_zero(self):
        np.testing.assert_array_equal(positional_embedding(3, 6).data[0], [0, 1, 0, 1, 0, 1])

    def test_closed_form(self):
        np.testing.assert_allclose(positional_embedding(2, 2).data[1], [np.sin(1), np.cos(1)], rtol=1e-15)

    def test_frequencies(self):
        table = positional_embedding(5, 8).data
        i = 2
        np.testing.assert_allclose(table[3, 2 * i], np.sin(3 * 10000 ** (-2 * i / 8)), rtol=1e-14)

    def test_bounded_scan(self):
        for dim in (2, 4, 16, 64):
            assert np.all(np.abs(positional_embedding(512, dim).data) <= 1.0)

    def test_odd_dim(self):
        with pytest.raises(OddDimension):
            positional_embedding(4, 3)


class TestScaledDotAttention:
    def test_single_key_broadcasts_value(self, rng):
        V = rng.standard_normal((1, 4))
        out = scaled_dot_attention(rng.standard_normal((5, 4)), rng.standard_normal((1, 4)), V).data
        np.testing.assert_allclose(out, np.broadcast_to(V, (5, 4)), rtol=1e-15)

    def test_diagonal_dominance(self, rng):
        Q = np.linalg.qr(rng.standard_normal((4, 4)))[0] * 100.0
        V = rng.standard_normal((4, 4))
        out = scaled_dot_attention(Q, Q, V).data
        np.testing.assert_allclose(out, V, atol=1e-8)

    def test_convex_hull_and_probability_rows(self, rng):
        for _ in range(50):
            Lq, Lk, d = rng.integers(1, 7, size=3)
            Q, K, V = (rng.standard_normal(s) * 3 for s in ((Lq, d), (Lk, d), (Lk, d)))
            out, w = scaled_dot_attention(Q, K, V, return_weights=True)
            assert np.all(w.data >= 0)
            np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-10)
            assert np.all(out.data >= V.min(0) - 1e-12) and np.all(out.data <= V.max(0) + 1e-12)

    def test_errors(self):
        with pytest.raises(ShapeMismatch):
            scaled_dot_attention(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)))
        with pytest.raises(EmptySource):
            scaled_dot_attention(np.ones((2, 3)), np.ones((0, 3)), np.ones((0, 3)))

    def test_gradient(self, rng):
        Q, K, V = (Tensor(rng.standard_normal(s), requires_grad=True) for s in ((3, 4), (5, 4), (5, 4)))
        w = rng.standard_normal((3, 4))
        errs = check_gradients(lambda: (scaled_dot_attention(Q, K, V) * w).sum(), {"Q": Q, "K": K, "V": V})
        assert max(errs.values()) < 1e-6


class TestCrossModalBlock:
    def test_zero_weights_identity(self, rng):
        target = rng.standard_normal((3, 8))
        out = crossmodal_block(target, rng.standard_normal((6, 8)), zero_block(8))
        np.testing.assert_array_equal(out.data, target)

    def test_shape_single_query(self, rng):
        p = CrossModalBlockParams.init(8, rng)
        assert crossmodal_block(rng.standard_normal((1, 8)), rng.standard_normal((5, 8)), p).shape == (1, 8)

    def test_dim_mismatch(self, rng):
        p = CrossModalBlockParams.init(8, rng)
        with pytest.raises(ShapeMismatch):
            crossmodal_block(rng.standard_normal((2, 8)), rng.standard_normal((2, 6)), p)

    def test_gradient_to_both_inputs(self, rng):
        p = CrossModalBlockParams.init(4, rng, heads=2)
        t = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
        s = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = rng.standard_normal((2, 4))
        loss = lambda: (crossmodal_block(t, s, p) * w).sum()  # noqa: E731
        errs = check_gradients(loss, {"target": t, "source": s})
        assert max(errs.values()) < 1e-4
        loss().backward()
        assert np.abs(t.grad).sum() > 0 and np.abs(s.grad).sum() > 0

    def test_padded_batch_equals_per_sample(self, rng):
        p = CrossModalBlockParams.init(4, rng, heads=2)
        targets = [rng.standard_normal((n, 4)) for n in (3, 1)]
        sources = [rng.standard_normal((n, 4)) for n in (2, 5)]
        T = np.zeros((2, 3, 4))
        S = np.zeros((2, 5, 4))
        for b in range(2):
            T[b, : len(targets[b])] = targets[b]
            S[b, : len(sources[b])] = sources[b]
        out = crossmodal_block(T, S, p, source_lengths=[2, 5]).data
        for b in range(2):
            ref = crossmodal_block(targets[b], sources[b], p).data
            np.testing.assert_allclose(out[b, : len(targets[b])], ref, atol=1e-12)


class TestEncoders:
    def test_zero_weights_is_layer_norm_of_embedded_input(self, rng):
        p = EncoderStackParams([zero_block(6)], Tensor(np.ones(6)), Tensor(np.zeros(6)))
        seq = rng.standard_normal((4, 6))
        expected = layer_norm(Tensor(seq + positional_embedding(4, 6).data), Tensor(np.ones(6)), Tensor(np.zeros(6)))
        np.testing.assert_allclose(self_attention_encoder(seq, p).data, expected.data, atol=1e-14)

    def test_length_one(self, rng):
        p = EncoderStackParams.init(4, 2, rng)
        assert self_attention_encoder(rng.standard_normal((1, 4)), p).shape == (1, 4)

    def test_empty(self, rng):
        with pytest.raises(EmptySequence):
            self_attention_encoder(np.zeros((0, 4)), EncoderStackParams.init(4, 1, rng))

    def test_permutation_equivariance(self, rng):
        p = EncoderStackParams.init(8, 2, rng, heads=2, positional=False)
        for _ in range(5):
            seq = rng.standard_normal((6, 8))
            perm = rng.permutation(6)
            a = self_attention_encoder(seq, p).data[perm]
            b = self_attention_encoder(seq[perm], p).data
            assert np.max(np.abs(a - b)) < 1e-12

    def test_crossmodal_stack_shapes(self, rng):
        p = EncoderStackParams.init(4, 2, rng)
        assert crossmodal_stack(rng.standard_normal((1, 4)), rng.standard_normal((7, 4)), p).shape == (1, 4)
        assert crossmodal_stack(rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 7, 4)), p).shape == (2, 3, 4)

    def test_padded_self_attention_equals_per_sample(self, rng):
        p = EncoderStackParams.init(4, 2, rng, heads=2)
        seqs = [rng.standard_normal((n, 4)) for n in (5, 2, 3)]
        X = np.zeros((3, 5, 4))
        for b, s in enumerate(seqs):
            X[b, : len(s)] = s
        lengths = [len(s) for s in seqs]
        out = self_attention_encoder(X, p, lengths=lengths)
        last = last_valid(out, lengths).data
        for b, s in enumerate(seqs):
            ref = self_attention_encoder(s, p).data
            np.testing.assert_allclose(out.data[b, : len(s)], ref, atol=1e-12)
            np.testing.assert_allclose(last[b], ref[-1], atol=1e-12)
