"""Low-rank multimodal fusion and the full tensor-fusion product it factorizes.

For three modality vectors ``z_l, z_a, z_v`` each is extended with a trailing
constant 1. Full tensor fusion contracts the outer product of the extended
vectors with a dense weight ``W[i, j, k, h]``. When ``W`` is a rank-``r`` CP
tensor, the same result is obtained without materializing the outer product:

    h = sum_rho (zl_hat @ W_l[rho]) * (za_hat @ W_a[rho]) * (zv_hat @ W_v[rho])

:func:`lmf_fuse` is the fast path used by the models. :func:`cp_reconstruct`
and :func:`tensor_fuse_oracle` form the slow, independent ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core.tensor import Tensor, as_tensor, concat, matmul, tsum
from .errors import NonVectorInput, ShapeMismatch

MODALITIES = ("l", "a", "v")


@dataclass
class LmfParams:
    """Per-modality factor stacks, each ``(rank, d_m + 1, d_h)``."""

    factors: dict[str, Tensor]

    def __post_init__(self) -> None:
        if set(self.factors) != set(MODALITIES):
            raise ShapeMismatch(f"need factors for {MODALITIES}, got {sorted(self.factors)}")
        shapes = {m: self.factors[m].shape for m in MODALITIES}
        if any(len(s) != 3 for s in shapes.values()):
            raise ShapeMismatch(f"factor stacks must be 3-d, got {shapes}")
        ranks = {s[0] for s in shapes.values()}
        outs = {s[2] for s in shapes.values()}
        if len(ranks) != 1 or len(outs) != 1:
            raise ShapeMismatch(f"factor stacks disagree on rank/output dim: {shapes}")

    @property
    def rank(self) -> int:
        return self.factors["l"].shape[0]

    @property
    def output_dim(self) -> int:
        return self.factors["l"].shape[2]

    @property
    def input_dims(self) -> tuple[int, int, int]:
        return tuple(self.factors[m].shape[1] - 1 for m in MODALITIES)  # type: ignore[return-value]

    @classmethod
    def init(
        cls, input_dims: Sequence[int], output_dim: int, rank: int, rng: np.random.Generator
    ) -> "LmfParams":
        std = 1.0 / np.sqrt(rank * output_dim)
        return cls(
            {
                m: Tensor(rng.normal(0.0, std, size=(rank, d + 1, output_dim)), requires_grad=True)
                for m, d in zip(MODALITIES, input_dims)
            }
        )


@dataclass
class FullFusionWeight:
    """Dense ``(d_l+1, d_a+1, d_v+1, d_h)`` fusion weight."""

    W: np.ndarray

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 4:
            raise ShapeMismatch(f"full fusion weight must be 4-d, got {self.W.shape}")


class MacCounter:
    """Tallies multiply-adds spent in tensor contractions."""

    def __init__(self) -> None:
        self.macs = 0

    def add(self, n: int) -> None:
        self.macs += int(n)


def append_one(z: Tensor) -> Tensor:
    """``[z_0, ..., z_{d-1}, 1]``; batched input ``(B, d)`` gets a 1 column."""
    z = as_tensor(z)
    if z.ndim not in (1, 2):
        raise NonVectorInput(f"expected a vector (or a batch of vectors), got shape {z.shape}")
    ones = Tensor(np.ones(z.shape[:-1] + (1,)))
    return concat([z, ones], axis=-1)


def lmf_fuse(z_l, z_a, z_v, p: LmfParams, counter: MacCounter | None = None) -> Tensor:
    """Low-rank fused vector ``(d_h,)``, or ``(B, d_h)`` for batched input."""
    zs = [as_tensor(z) for z in (z_l, z_a, z_v)]
    single = zs[0].ndim == 1
    if any((z.ndim == 1) != single for z in zs):
        raise ShapeMismatch("mixed batched and unbatched modality vectors")
    out = None
    for m, z in zip(MODALITIES, zs):
        W = p.factors[m]
        if z.shape[-1] + 1 != W.shape[1]:
            raise ShapeMismatch(f"modality {m}: dim {z.shape[-1]} vs factor rows {W.shape[1]}")
        zh = append_one(z)
        zh = zh.reshape(1, 1, -1) if single else zh.reshape(1, *zh.shape)
        proj = matmul(zh, W)  # (r, B, d_h)
        if counter is not None:
            r, rows, d_h = proj.shape
            counter.add(r * rows * W.shape[1] * d_h)
        out = proj if out is None else out * proj
    fused = tsum(out, axis=0)  # (B, d_h)
    return fused.reshape(-1) if single else fused


def cp_reconstruct(p: LmfParams) -> FullFusionWeight:
    """Expand the factors into ``W[i,j,k,h] = sum_rho Wl[rho,i,h] Wa[rho,j,h] Wv[rho,k,h]``."""
    Wl, Wa, Wv = (p.factors[m].data for m in MODALITIES)
    return FullFusionWeight(np.einsum("rih,rjh,rkh->ijkh", Wl, Wa, Wv))


def tensor_fuse_oracle(z_l, z_a, z_v, W: FullFusionWeight, counter: MacCounter | None = None) -> np.ndarray:
    """Materialize ``Z = zl_hat (x) za_hat (x) zv_hat`` and contract it with ``W``."""
    zh = []
    for z in (z_l, z_a, z_v):
        z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
        if z.ndim != 1:
            raise NonVectorInput(f"oracle is sample-wise; got shape {z.shape}")
        zh.append(np.append(z, 1.0))
    expected = tuple(len(z) for z in zh)
    if W.W.shape[:3] != expected:
        raise ShapeMismatch(f"weight {W.W.shape} does not match extended dims {expected}")
    Z = np.multiply.outer(np.multiply.outer(zh[0], zh[1]), zh[2])
    if counter is not None:
        counter.add(Z.size * W.W.shape[3])
    return np.tensordot(Z, W.W, axes=3)


def lmf_macs(input_dims: Sequence[int], rank: int, output_dim: int) -> int:
    """Contraction multiply-adds of :func:`lmf_fuse` for one sample."""
    return rank * output_dim * sum(d + 1 for d in input_dims)


def full_fusion_macs(input_dims: Sequence[int], output_dim: int) -> int:
    """Contraction multiply-adds of :func:`tensor_fuse_oracle` for one sample."""
    return output_dim * int(np.prod([d + 1 for d in input_dims]))
