import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmfmult.core import Tensor, check_gradients
from lmfmult.errors import NonVectorInput, ShapeMismatch
from lmfmult.fusion import (
    FullFusionWeight,
    LmfParams,
    MacCounter,
    append_one,
    cp_reconstruct,
    full_fusion_macs,
    lmf_fuse,
    lmf_macs,
    tensor_fuse_oracle,
)


def random_params(rng, dims, d_h, r):
    return LmfParams(
        {m: Tensor(rng.standard_normal((r, d + 1, d_h)), requires_grad=True) for m, d in zip("lav", dims)}
    )


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12))


class TestAppendOne:
    def test_empty(self):
        assert append_one(Tensor(np.zeros(0))).data.tolist() == [1.0]

    def test_values(self):
        assert append_one(Tensor([1.0, 2.0])).data.tolist() == [1.0, 2.0, 1.0]
        assert append_one(Tensor([0.0, 0.0, 0.0])).data.tolist() == [0.0, 0.0, 0.0, 1.0]

    def test_batched(self):
        out = append_one(Tensor(np.zeros((3, 2)))).data
        np.testing.assert_array_equal(out[:, -1], 1.0)

    def test_rejects_higher_rank(self):
        with pytest.raises(NonVectorInput):
            append_one(Tensor(np.zeros((2, 2, 2))))


class TestLmfFuse:
    def test_zero_factors(self, rng):
        p = LmfParams({m: Tensor(np.zeros((2, 3, 4))) for m in "lav"})
        np.testing.assert_array_equal(lmf_fuse(*(rng.standard_normal(2) for _ in range(3)), p).data, 0.0)

    def test_zero_inputs_use_only_appended_rows(self, rng):
        p = random_params(rng, (2, 3, 1), 4, 1)
        out = lmf_fuse(np.zeros(2), np.zeros(3), np.zeros(1), p).data
        expected = np.prod([p.factors[m].data[0, -1] for m in "lav"], axis=0)
        np.testing.assert_allclose(out, expected, rtol=1e-14)

    def test_small_random_matches_oracle(self, rng):
        p = random_params(rng, (2, 2, 2), 3, 2)
        z = [rng.standard_normal(2) for _ in range(3)]
        assert rel_err(lmf_fuse(*z, p).data, tensor_fuse_oracle(*z, cp_reconstruct(p))) < 1e-9

    def test_batched_equals_per_sample(self, rng):
        p = random_params(rng, (3, 2, 4), 5, 3)
        zs = [rng.standard_normal((6, d)) for d in (3, 2, 4)]
        batched = lmf_fuse(*zs, p).data
        for b in range(6):
            np.testing.assert_allclose(batched[b], lmf_fuse(*(z[b] for z in zs), p).data, rtol=1e-13)

    def test_dim_mismatch(self, rng):
        p = random_params(rng, (2, 2, 2), 3, 2)
        with pytest.raises(ShapeMismatch):
            lmf_fuse(np.zeros(3), np.zeros(2), np.zeros(2), p)

    def test_gradients(self, rng):
        p = random_params(rng, (2, 3, 2), 3, 2)
        z = {m: Tensor(rng.standard_normal(d), requires_grad=True) for m, d in zip("lav", (2, 3, 2))}
        w = rng.standard_normal(3)
        params = {**{f"z_{m}": t for m, t in z.items()}, **{f"W_{m}": p.factors[m] for m in "lav"}}
        errs = check_gradients(lambda: (lmf_fuse(z["l"], z["a"], z["v"], p) * w).sum(), params)
        assert max(errs.values()) < 1e-6


class TestCpReconstruct:
    def test_rank_one_ones(self):
        p = LmfParams({m: Tensor(np.ones((1, 3, 2))) for m in "lav"})
        np.testing.assert_array_equal(cp_reconstruct(p).W, np.ones((3, 3, 3, 2)))

    def test_zero(self):
        p = LmfParams({m: Tensor(np.zeros((2, 2, 2))) for m in "lav"})
        np.testing.assert_array_equal(cp_reconstruct(p).W, 0.0)

    def test_explicit_sum(self, rng):
        p = random_params(rng, (1, 2, 1), 2, 3)
        W = cp_reconstruct(p).W
        Wl, Wa, Wv = (p.factors[m].data for m in "lav")
        for i, j, k, h in np.ndindex(W.shape):
            expected = sum(Wl[r, i, h] * Wa[r, j, h] * Wv[r, k, h] for r in range(3))
            assert W[i, j, k, h] == pytest.approx(expected, rel=1e-13, abs=1e-15)


class TestOracle:
    def test_zero_weight(self, rng):
        out = tensor_fuse_oracle(rng.standard_normal(2), rng.standard_normal(2), rng.standard_normal(2),
                                 FullFusionWeight(np.zeros((3, 3, 3, 4))))
        np.testing.assert_array_equal(out, 0.0)

    def test_pure_bias(self, rng):
        W = rng.standard_normal((1, 1, 1, 3))
        np.testing.assert_array_equal(tensor_fuse_oracle(np.zeros(0), np.zeros(0), np.zeros(0), FullFusionWeight(W)), W[0, 0, 0])

    def test_explicit_triple_sum(self, rng):
        W = rng.standard_normal((3, 2, 4, 2))
        z = [rng.standard_normal(n - 1) for n in W.shape[:3]]
        zh = [np.append(x, 1.0) for x in z]
        expected = sum(zh[0][i] * zh[1][j] * zh[2][k] * W[i, j, k] for i, j, k in np.ndindex(W.shape[:3]))
        np.testing.assert_allclose(tensor_fuse_oracle(*z, FullFusionWeight(W)), expected, rtol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            tensor_fuse_oracle(np.zeros(2), np.zeros(2), np.zeros(2), FullFusionWeight(np.zeros((2, 3, 3, 1))))


def test_equivalence_over_random_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        dims = tuple(int(x) for x in rng.integers(0, 5, size=3))
        d_h, r = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        p = random_params(rng, dims, d_h, r)
        z = [rng.standard_normal(d) for d in dims]
        worst = max(worst, rel_err(lmf_fuse(*z, p).data, tensor_fuse_oracle(*z, cp_reconstruct(p))))
    assert worst < 1e-9


def _fuse_hat(zh, p):
    # lmf at the extended-vector level: drop the 1 that lmf_fuse appends by folding it into zh
    return sum(np.prod([zh[i] @ p.factors[m].data[r] for i, m in enumerate("lav")], axis=0) for r in range(p.rank))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2))
def test_multilinear_in_each_extended_input(seed, alpha, beta, slot):
    rng = np.random.default_rng(seed)
    p = random_params(rng, (2, 3, 2), 3, 2)
    zh = [np.append(rng.standard_normal(d), 1.0) for d in (2, 3, 2)]
    other = np.append(rng.standard_normal(len(zh[slot]) - 1), 1.0)
    mixed = list(zh)
    mixed[slot] = alpha * zh[slot] + beta * other
    swapped = list(zh)
    swapped[slot] = other
    lhs = _fuse_hat(mixed, p)
    rhs = alpha * _fuse_hat(zh, p) + beta * _fuse_hat(swapped, p)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)
    # the helper agrees with lmf_fuse whenever the last coordinate is 1
    np.testing.assert_allclose(_fuse_hat(zh, p), lmf_fuse(*(z[:-1] for z in zh), p).data, rtol=1e-12)


class TestMacs:
    @pytest.mark.parametrize("dims,d_h,r", [((2, 2, 2), 3, 2), ((4, 0, 3), 4, 3), ((1, 1, 1), 1, 1)])
    def test_counters_match_formulas(self, rng, dims, d_h, r):
        p = random_params(rng, dims, d_h, r)
        z = [rng.standard_normal(d) for d in dims]
        c_lmf, c_full = MacCounter(), MacCounter()
        lmf_fuse(*z, p, counter=c_lmf)
        tensor_fuse_oracle(*z, cp_reconstruct(p), counter=c_full)
        assert c_lmf.macs == lmf_macs(dims, r, d_h) == r * d_h * sum(d + 1 for d in dims)
        assert c_full.macs == full_fusion_macs(dims, d_h) == d_h * np.prod([d + 1 for d in dims])

    def test_lmf_cheaper_at_realistic_dims(self):
        assert lmf_macs((32, 32, 32), 4, 32) < full_fusion_macs((32, 32, 32), 32) / 50
