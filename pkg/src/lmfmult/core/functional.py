"""Fused differentiable primitives built directly on numpy.

Each op here has a hand-written backward so that a whole layer costs one
tape node instead of a dozen.
"""
from __future__ import annotations

import numpy as np

from ..errors import AxisOutOfRange, EvenKernelWithSamePadding, ShapeMismatch
from .tensor import Tensor, _make, _norm_axis, as_tensor


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise AxisOutOfRange(f"axis {axis} out of range for {x.ndim}-d tensor")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _norm_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def bw(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), bw, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gamma * xhat + beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm: last dim {d} vs gamma {gamma.shape}, beta {beta.shape}")
    inv_d = 1.0 / d
    centered = x.data - x.data.sum(axis=-1, keepdims=True) * inv_d
    var = (centered * centered).sum(axis=-1, keepdims=True) * inv_d
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv * (
                dxhat
                - dxhat.sum(axis=-1, keepdims=True) * inv_d
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) * inv_d
            )
        ggamma = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gbeta = g.sum(axis=lead) if beta.requires_grad else None
        return gx, ggamma, gbeta

    return _make(out, (x, gamma, beta), bw, "layer_norm")


def conv1d(x: Tensor, kernel: Tensor, padding: str = "same") -> Tensor:
    """Temporal cross-correlation.

    ``x`` is ``(L, d_in)`` or batched ``(B, L, d_in)``; ``kernel`` is
    ``(k, d_in, d_out)``. Output position ``t`` sees input rows
    ``t - k//2 .. t + k//2`` under same padding (zeros outside the sequence)
    and ``t .. t + k - 1`` under valid padding.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 3:
        raise ShapeMismatch(f"kernel must be (k, d_in, d_out), got {kernel.shape}")
    k, d_in, d_out = kernel.shape
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[-1] != d_in:
        raise ShapeMismatch(f"conv1d input {x.shape} does not match kernel {kernel.shape}")
    if padding == "same":
        if k % 2 == 0:
            raise EvenKernelWithSamePadding(f"same padding needs an odd kernel, got k={k}")
        pad = k // 2
    elif padding == "valid":
        pad = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    B, L, _ = xd.shape
    L_out = L + 2 * pad - k + 1
    if L_out < 1:
        raise ShapeMismatch(f"sequence of length {L} too short for kernel {k} with {padding} padding")

    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0))) if pad else xd
    # windows[b, t, j, c] = xp[b, t + j, c]
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)[:, :L_out]
    windows = np.ascontiguousarray(np.swapaxes(windows, 2, 3)).reshape(B, L_out, k * d_in)
    kmat = kernel.data.reshape(k * d_in, d_out)
    out = windows @ kmat
    if squeeze:
        out = out[0]

    def bw(g):
        g3 = g[None] if squeeze else g
        gk = None
        if kernel.requires_grad:
            gk = (windows.reshape(-1, k * d_in).T @ g3.reshape(-1, d_out)).reshape(k, d_in, d_out)
        gx = None
        if x.requires_grad:
            gwin = (g3 @ kmat.T).reshape(B, L_out, k, d_in)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j : j + L_out] += gwin[:, :, j]
            gx = gxp[:, pad : pad + L] if pad else gxp
            if squeeze:
                gx = gx[0]
        return gx, gk

    return _make(out, (x, kernel), bw, "conv1d")


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity at eval or when ``rate == 0``."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as ``(d_in, d_out)``."""
    out = x @ weight
    return out if bias is None else out + bias
