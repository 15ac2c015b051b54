"""Scaled dot-product attention and the transformer blocks built from it.

Sequences are ``(L, d)`` or batched ``(B, L, d)``. Batched sequences are
padded at the end; ``*_lengths`` arguments mark the real rows so padded keys
get zero attention weight. Outputs at padded query rows are computed but
carry no meaning.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core.functional import dropout, layer_norm, softmax
from .core.tensor import Tensor, as_tensor, matmul, relu, swapaxes
from .errors import EmptySequence, EmptySource, OddDimension, ShapeMismatch

FFN_EXPANSION = 4
_MASKED = -1e9


@lru_cache(maxsize=64)
def _position_table(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = 10000.0 ** (-np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.empty((length, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    table.setflags(write=False)
    return table


def positional_embedding(length: int, dim: int) -> Tensor:
    """Sinusoidal table: ``sin`` on even columns, ``cos`` on odd ones."""
    if dim % 2:
        raise OddDimension(f"position embeddings need an even dim, got {dim}")
    if length < 0:
        raise ValueError("length must be non-negative")
    return Tensor(_position_table(length, dim))


def key_padding_bias(lengths, max_len: int) -> Tensor:
    """Additive ``(B, 1, 1, max_len)`` bias: 0 on real keys, -1e9 on padding."""
    lengths = np.asarray(lengths)
    pad = np.arange(max_len)[None, :] >= lengths[:, None]
    return Tensor((pad * _MASKED)[:, None, None, :])


def scaled_dot_attention(
    Q,
    K,
    V,
    bias: Tensor | None = None,
    *,
    return_weights: bool = False,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """``softmax(Q K^T / sqrt(d)) V`` over the last two axes.

    With ``return_weights`` the attention matrix is returned as well, as a
    second element.
    """
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    d = Q.shape[-1]
    if K.shape[-1] != d or K.shape[:-1] != V.shape[:-1]:
        raise ShapeMismatch(f"attention shapes Q={Q.shape} K={K.shape} V={V.shape}")
    if K.shape[-2] < 1:
        raise EmptySource("attention needs at least one key")
    scores = matmul(Q, swapaxes(K, -1, -2)) * (1.0 / np.sqrt(d))
    if bias is not None:
        scores = scores + bias
    weights = softmax(scores, axis=-1)
    out = matmul(dropout(weights, dropout_rate, train, rng), V)
    return (out, weights) if return_weights else out


@dataclass
class CrossModalBlockParams:
    """One pre-norm transformer layer; queries from the target, keys/values from the source."""

    W_q: Tensor
    W_k: Tensor
    W_v: Tensor
    W_o: Tensor
    ln_attn_gamma: Tensor
    ln_attn_beta: Tensor
    ln_ffn_gamma: Tensor
    ln_ffn_beta: Tensor
    W_1: Tensor
    b_1: Tensor
    W_2: Tensor
    b_2: Tensor
    heads: int = 1
    attn_dropout: float = 0.0
    res_dropout: float = 0.0
    relu_dropout: float = 0.0

    def __post_init__(self) -> None:
        d = self.model_dim
        for name in ("W_q", "W_k", "W_v", "W_o"):
            if getattr(self, name).shape != (d, d):
                raise ShapeMismatch(f"{name} must be {d}x{d}")
        if self.W_1.shape != (d, FFN_EXPANSION * d) or self.W_2.shape != (FFN_EXPANSION * d, d):
            raise ShapeMismatch("feed-forward weights must be d x 4d and 4d x d")
        if d % self.heads:
            raise ShapeMismatch(f"model dim {d} not divisible by {self.heads} heads")

    @property
    def model_dim(self) -> int:
        return self.W_q.shape[0]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, heads: int = 1, **rates) -> "CrossModalBlockParams":
        def w(n_in, n_out):
            bound = 1.0 / np.sqrt(n_in)
            return Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)

        ones = lambda n: Tensor(np.ones(n), requires_grad=True)  # noqa: E731
        zeros = lambda n: Tensor(np.zeros(n), requires_grad=True)  # noqa: E731
        h = FFN_EXPANSION * d
        return cls(
            w(d, d), w(d, d), w(d, d), w(d, d),
            ones(d), zeros(d), ones(d), zeros(d),
            w(d, h), zeros(h), w(h, d), zeros(d),
            heads=heads, **rates,
        )

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        names = (
            "W_q", "W_k", "W_v", "W_o", "ln_attn_gamma", "ln_attn_beta",
            "ln_ffn_gamma", "ln_ffn_beta", "W_1", "b_1", "W_2", "b_2",
        )
        return {prefix + n: getattr(self, n) for n in names}


@dataclass
class EncoderStackParams:
    layers: list[CrossModalBlockParams]
    final_gamma: Tensor
    final_beta: Tensor
    embed_scale: float = 1.0
    positional: bool = True

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeMismatch("a stack needs at least one layer")
        dims = {layer.model_dim for layer in self.layers}
        if len(dims) != 1 or self.final_gamma.shape != (self.model_dim,):
            raise ShapeMismatch(f"layers disagree on model dim: {dims}")

    @property
    def model_dim(self) -> int:
        return self.layers[0].model_dim

    @classmethod
    def init(
        cls,
        d: int,
        n_layers: int,
        rng: np.random.Generator,
        heads: int = 1,
        embed_scale: float = 1.0,
        positional: bool = True,
        **rates,
    ) -> "EncoderStackParams":
        layers = [CrossModalBlockParams.init(d, rng, heads, **rates) for _ in range(n_layers)]
        return cls(
            layers,
            Tensor(np.ones(d), requires_grad=True),
            Tensor(np.zeros(d), requires_grad=True),
            embed_scale=embed_scale,
            positional=positional,
        )

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.named_parameters(f"{prefix}layers.{i}."))
        out[prefix + "final_gamma"] = self.final_gamma
        out[prefix + "final_beta"] = self.final_beta
        return out


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, L, d = x.shape
    return swapaxes(x.reshape(B, L, heads, d // heads), 1, 2)  # (B, h, L, d/h)


def _merge_heads(x: Tensor) -> Tensor:
    B, h, L, dh = x.shape
    return swapaxes(x, 1, 2).reshape(B, L, h * dh)


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (L, d) or (B, L, d), got {x.shape}")
    return x, False


def crossmodal_block(
    target,
    source,
    p: CrossModalBlockParams,
    train: bool = False,
    *,
    source_lengths=None,
    rng: np.random.Generator | None = None,
    return_weights: bool = False,
):
    """``x + Attn(LN(x), LN(src))`` then ``x + FFN(LN(x))`` with a ReLU FFN."""
    x, single = _batched(target)
    s, s_single = _batched(source)
    if single != s_single:
        raise ShapeMismatch("target and source must both be batched or both unbatched")
    d = p.model_dim
    if x.shape[-1] != d or s.shape[-1] != d:
        raise ShapeMismatch(f"block dim {d} vs target {x.shape} / source {s.shape}")
    if x.shape[0] != s.shape[0]:
        raise ShapeMismatch(f"batch sizes differ: {x.shape[0]} vs {s.shape[0]}")
    if s.shape[1] < 1:
        raise EmptySource("source sequence is empty")

    xn = layer_norm(x, p.ln_attn_gamma, p.ln_attn_beta)
    sn = layer_norm(s, p.ln_attn_gamma, p.ln_attn_beta)
    q = _split_heads(matmul(xn, p.W_q), p.heads)
    k = _split_heads(matmul(sn, p.W_k), p.heads)
    v = _split_heads(matmul(sn, p.W_v), p.heads)
    bias = None if source_lengths is None else key_padding_bias(source_lengths, s.shape[1])
    attn, weights = scaled_dot_attention(
        q, k, v, bias, return_weights=True, dropout_rate=p.attn_dropout, train=train, rng=rng
    )
    x = x + dropout(matmul(_merge_heads(attn), p.W_o), p.res_dropout, train, rng)

    xn = layer_norm(x, p.ln_ffn_gamma, p.ln_ffn_beta)
    hidden = dropout(relu(matmul(xn, p.W_1) + p.b_1), p.relu_dropout, train, rng)
    x = x + dropout(matmul(hidden, p.W_2) + p.b_2, p.res_dropout, train, rng)

    if single:
        x = x.reshape(x.shape[1:])
        weights = weights.reshape(weights.shape[1:])
    return (x, weights) if return_weights else x


def _embed(x: Tensor, p: EncoderStackParams) -> Tensor:
    if p.embed_scale != 1.0:
        x = x * p.embed_scale
    if p.positional:
        x = x + positional_embedding(x.shape[-2], x.shape[-1])
    return x


def crossmodal_stack(
    target,
    source,
    p: EncoderStackParams,
    train: bool = False,
    *,
    source_lengths=None,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Target attends to source through every layer; final layer norm on the target."""
    x = _embed(as_tensor(target), p)
    s = _embed(as_tensor(source), p)
    for layer in p.layers:
        x = crossmodal_block(x, s, layer, train, source_lengths=source_lengths, rng=rng)
    return layer_norm(x, p.final_gamma, p.final_beta)


def self_attention_encoder(
    seq,
    p: EncoderStackParams,
    train: bool = False,
    *,
    lengths=None,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """N blocks with the sequence as its own source, position embeddings once at entry."""
    seq = as_tensor(seq)
    if seq.ndim < 2 or seq.shape[-2] < 1:
        raise EmptySequence(f"self-attention needs a non-empty sequence, got shape {seq.shape}")
    x = _embed(seq, p)
    for layer in p.layers:
        x = crossmodal_block(x, x, layer, train, source_lengths=lengths, rng=rng)
    return layer_norm(x, p.final_gamma, p.final_beta)


def last_valid(x: Tensor, lengths=None) -> Tensor:
    """Row ``lengths[b] - 1`` of each batch element of ``(B, L, d)``."""
    if lengths is None:
        return x[:, -1]
    lengths = np.asarray(lengths)
    return x[np.arange(x.shape[0]), lengths - 1]


__all__ = [
    "CrossModalBlockParams", "EncoderStackParams", "FFN_EXPANSION",
    "crossmodal_block", "crossmodal_stack", "key_padding_bias", "last_valid",
    "positional_embedding", "scaled_dot_attention", "self_attention_encoder",
]
