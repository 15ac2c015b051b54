"""Finite-difference gradient checks for primitives and whole models."""
from __future__ import annotations

import numpy as np

from .attention import (
    CrossModalBlockParams,
    EncoderStackParams,
    crossmodal_block,
    scaled_dot_attention,
    self_attention_encoder,
)
from .core import functional as F
from .core import tensor as T
from .core.gradcheck import check_gradients
from .core.lstm import lstm_states
from .data import collate, gen_parity_dataset
from .fusion import LmfParams, lmf_fuse
from .models import ModelConfig, build_model, forward_batch

GRAD_TOL = 1e-4


def tiny_config(seed: int = 0, output: str = "regression", **overrides) -> ModelConfig:
    cfg = dict(
        input_dims=(3, 2, 2), lstm_hidden=(3, 2, 2), model_dim=4, rank=2,
        conv_kernels=(3, 1, 3), n_cm=1, n_self=1, output=output, seed=seed,
    )
    cfg.update(overrides)
    return ModelConfig(**cfg).validate()


def model_gradcheck(
    arch: str,
    seed: int = 0,
    output: str = "regression",
    max_entries: int | None = None,
    **overrides,
) -> dict[str, float]:
    """Relative error per parameter tensor for a tiny model on a 2-sample unaligned batch.

    ``max_entries`` caps the perturbed entries per tensor; ``None`` checks all.
    """
    cfg = tiny_config(seed, output, **overrides)
    m = build_model(arch, cfg)
    ds = gen_parity_dataset((2, 1, 1), dims=cfg.input_dims, len_range=(2, 5), seed=seed,
                            label_kind="sentiment" if output == "regression" else "emotions")
    batch = collate(ds.train)
    rng = np.random.default_rng(seed)
    weights = T.Tensor(rng.standard_normal((len(batch), cfg.output_dim)))
    return check_gradients(
        lambda: (forward_batch(m, batch) * weights).sum(), m.params,
        max_entries=max_entries, rng=np.random.default_rng([seed, 7]),
    )


def _param(rng, *shape, scale=1.0):
    return T.Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def primitive_gradchecks(seed: int = 0) -> dict[str, float]:
    """Max relative error of every differentiable primitive on random inputs."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    def run(name, make_out, params):
        out_shape = make_out().shape
        w = T.Tensor(rng.standard_normal(out_shape))
        errs = check_gradients(lambda: (make_out() * w).sum(), params)
        results[name] = max(errs.values())

    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    run("matmul", lambda: T.matmul(a, b), {"a": a, "b": b})
    x, y = _param(rng, 2, 3), _param(rng, 3)
    pos = T.Tensor(rng.uniform(0.5, 2.0, (2, 3)), requires_grad=True)
    run("add", lambda: x + y, {"x": x, "y": y})
    run("sub", lambda: x - y, {"x": x, "y": y})
    run("mul", lambda: x * y, {"x": x, "y": y})
    run("div", lambda: x / pos, {"x": x, "pos": pos})
    run("pow", lambda: pos**1.5, {"pos": pos})
    run("exp", lambda: T.exp(x), {"x": x})
    run("log", lambda: T.log(pos), {"pos": pos})
    run("tanh", lambda: T.tanh(x), {"x": x})
    run("sigmoid", lambda: T.sigmoid(x), {"x": x})
    run("relu", lambda: T.relu(x), {"x": x})
    run("abs", lambda: T.absolute(x), {"x": x})
    run("sum", lambda: x.sum(axis=0), {"x": x})
    run("mean", lambda: x.mean(axis=1, keepdims=True), {"x": x})
    run("reshape_transpose", lambda: x.reshape(3, 2).T, {"x": x})
    run("getitem", lambda: x[np.array([1, 0, 1]), np.array([2, 2, 0])], {"x": x})
    run("concat", lambda: T.concat([x, pos], axis=0), {"x": x, "pos": pos})
    run("stack", lambda: T.stack([x, pos], axis=1), {"x": x, "pos": pos})

    s = _param(rng, 2, 5)
    run("softmax", lambda: F.softmax(s, axis=-1), {"s": s})
    run("log_softmax", lambda: F.log_softmax(s, axis=0), {"s": s})
    g, be = _param(rng, 5), _param(rng, 5)
    run("layer_norm", lambda: F.layer_norm(s, g, be), {"s": s, "g": g, "be": be})
    seq, ker = _param(rng, 2, 6, 3), _param(rng, 3, 3, 4)
    run("conv1d_same", lambda: F.conv1d(seq, ker), {"seq": seq, "ker": ker})
    run("conv1d_valid", lambda: F.conv1d(seq, ker, padding="valid"), {"seq": seq, "ker": ker})
    W, U, bb = _param(rng, 8, 3, scale=0.5), _param(rng, 8, 2, scale=0.5), _param(rng, 8, scale=0.5)
    run("lstm", lambda: lstm_states(seq, W, U, bb), {"seq": seq, "W": W, "U": U, "b": bb})

    lmf = LmfParams.init((2, 3, 1), 3, 2, rng)
    zl, za, zv = _param(rng, 4, 2), _param(rng, 4, 3), _param(rng, 4, 1)
    run("lmf_fuse", lambda: lmf_fuse(zl, za, zv, lmf),
        {"zl": zl, "za": za, "zv": zv, **{f"W_{k}": t for k, t in lmf.factors.items()}})

    q, k, v = _param(rng, 2, 3, 4), _param(rng, 2, 5, 4), _param(rng, 2, 5, 4)
    run("scaled_dot_attention", lambda: scaled_dot_attention(q, k, v), {"q": q, "k": k, "v": v})
    block = CrossModalBlockParams.init(4, rng)
    tgt, src = _param(rng, 2, 3, 4), _param(rng, 2, 5, 4)
    run("crossmodal_block",
        lambda: crossmodal_block(tgt, src, block, source_lengths=np.array([5, 3])),
        {"target": tgt, "source": src, **block.named_parameters()})
    enc = EncoderStackParams.init(4, 2, rng, embed_scale=2.0)
    run("self_attention_encoder", lambda: self_attention_encoder(tgt, enc),
        {"seq": tgt, **enc.named_parameters()})
    return results
