"""The three architectures and their shared plumbing.

* ``lmf-mult``: LSTM context vectors -> low-rank fusion -> the fused (length-1)
  stream attends to each conv-projected modality -> one self-attention
  encoder over the concatenation -> linear head.
* ``fusion-cm-attn``: each conv-projected modality attends to the fused
  stream; last steps are concatenated -> linear head.
* ``mult-lite``: reduced MulT; six pairwise cross-modal stacks and three
  self-attention stacks.
* ``lstm-unimodal``: a single-modality LSTM regressor/classifier, used only as
  a control when checking that a task needs all three modalities.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attention import EncoderStackParams, crossmodal_stack, last_valid, self_attention_encoder
from .core.functional import conv1d, dropout, linear
from .core.lstm import LstmParams, lstm_forward
from .core.tensor import Tensor, concat
from .data import MODALITIES, Batch, MultimodalSample, collate
from .errors import DimMismatch, InvalidConfig, ShapeCorruption, VersionMismatch
from .fusion import LmfParams, lmf_fuse

ARCHITECTURES = ("lmf-mult", "fusion-cm-attn", "mult-lite", "lstm-unimodal")
OUTPUTS = {"regression": 1, "emotions": 8}
MODEL_MAGIC = b"LMFMULT-MODEL\n"
MODEL_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    input_dims: tuple[int, int, int] = (300, 5, 20)
    lstm_hidden: tuple[int, int, int] = (32, 32, 32)
    model_dim: int = 32
    rank: int = 4
    conv_kernels: tuple[int, int, int] = (3, 3, 3)
    fused_kernel: int = 1
    n_cm: int = 2
    n_self: int = 2
    output: str = "regression"
    attn_dropout: float = 0.0
    res_dropout: float = 0.0
    relu_dropout: float = 0.0
    out_dropout: float = 0.0
    heads: int = 1
    scale_embeddings: bool = True
    trailing_self_attention: bool = False
    baseline_modality: str = "l"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("input_dims", "lstm_hidden", "conv_kernels"):
            setattr(self, name, tuple(int(x) for x in getattr(self, name)))

    def validate(self) -> "ModelConfig":
        problems = []
        if len(self.input_dims) != 3 or min(self.input_dims) < 1:
            problems.append(f"input_dims must be three ints >= 1, got {self.input_dims}")
        if len(self.lstm_hidden) != 3 or min(self.lstm_hidden) < 1:
            problems.append(f"lstm_hidden must be three ints >= 1, got {self.lstm_hidden}")
        if self.model_dim < 2 or self.model_dim % 2:
            problems.append(f"model_dim must be even and >= 2, got {self.model_dim}")
        if len(self.conv_kernels) != 3 or any(k < 1 or k % 2 == 0 for k in self.conv_kernels):
            problems.append(f"conv_kernels must be three odd ints, got {self.conv_kernels}")
        if self.fused_kernel < 1 or self.fused_kernel % 2 == 0:
            problems.append(f"fused_kernel must be odd, got {self.fused_kernel}")
        for name in ("rank", "n_cm", "n_self", "heads"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.heads >= 1 and self.model_dim % self.heads:
            problems.append(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.output not in OUTPUTS:
            problems.append(f"output must be one of {sorted(OUTPUTS)}, got {self.output!r}")
        for name in ("attn_dropout", "res_dropout", "relu_dropout", "out_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"{name} must be in [0, 1)")
        if self.baseline_modality not in MODALITIES:
            problems.append(f"baseline_modality must be one of {MODALITIES}")
        if problems:
            raise InvalidConfig("; ".join(problems))
        return self

    @property
    def output_dim(self) -> int:
        return OUTPUTS[self.output]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass
class ModelBundle:
    architecture: str
    config: ModelConfig
    params: dict[str, Tensor]
    parts: dict = field(repr=False, default_factory=dict)
    rng: np.random.Generator = field(repr=False, default_factory=np.random.default_rng)

    def stack_counts(self) -> dict[str, int]:
        """Transformer stacks actually present in the registry."""
        cross = {n.split(".")[1] for n in self.params if n.startswith("xstack.")}
        selfs = {n.split(".")[1] for n in self.params if n.startswith("sstack.")}
        return {"crossmodal": len(cross), "self": len(selfs), "total": len(cross) + len(selfs)}


def param_count(m: ModelBundle) -> int:
    return int(sum(p.size for p in m.params.values()))


# ------------------------------------------------------------------ building
class _Builder:
    def __init__(self, c: ModelConfig) -> None:
        self.c = c
        self.rng = np.random.default_rng(c.seed)
        self.params: dict[str, Tensor] = {}
        self.parts: dict = {}

    def register(self, prefix: str, named: dict[str, Tensor]) -> None:
        for k, t in named.items():
            name = prefix + k
            if name in self.params:
                raise InvalidConfig(f"duplicate parameter name {name}")
            t.name = name
            self.params[name] = t

    def weight(self, name: str, *shape: int) -> Tensor:
        bound = 1.0 / np.sqrt(shape[0] if len(shape) == 2 else shape[0] * shape[1])
        t = Tensor(self.rng.uniform(-bound, bound, size=shape), requires_grad=True)
        self.register("", {name: t})
        return t

    def zeros(self, name: str, *shape: int) -> Tensor:
        t = Tensor(np.zeros(shape), requires_grad=True)
        self.register("", {name: t})
        return t

    def lstm(self, m: str) -> LstmParams:
        c = self.c
        p = LstmParams.init(c.input_dims[MODALITIES.index(m)], c.lstm_hidden[MODALITIES.index(m)], self.rng)
        self.register(f"lstm.{m}.", {"W": p.W, "U": p.U, "b": p.b})
        return p

    def lmf(self) -> LmfParams:
        p = LmfParams.init(self.c.lstm_hidden, self.c.model_dim, self.c.rank, self.rng)
        self.register("lmf.", p.factors)
        return p

    def conv(self, name: str, k: int, d_in: int, d_out: int) -> Tensor:
        return self.weight(name, k, d_in, d_out)

    def stack(self, kind: str, name: str, d: int, n_layers: int) -> EncoderStackParams:
        c = self.c
        p = EncoderStackParams.init(
            d, n_layers, self.rng, heads=c.heads,
            embed_scale=float(np.sqrt(d)) if c.scale_embeddings else 1.0,
            attn_dropout=c.attn_dropout, res_dropout=c.res_dropout, relu_dropout=c.relu_dropout,
        )
        self.register(f"{kind}.{name}.", p.named_parameters())
        return p

    def head(self, d_in: int) -> None:
        self.parts["head_W"] = self.weight("head.W", d_in, self.c.output_dim)
        self.parts["head_b"] = self.zeros("head.b", self.c.output_dim)

    def projections(self) -> None:
        c = self.c
        self.parts["proj"] = {
            m: self.conv(f"proj.{m}", k, d, c.model_dim)
            for m, k, d in zip(MODALITIES, c.conv_kernels, c.input_dims)
        }

    def fusion_front(self) -> None:
        self.parts["lstm"] = {m: self.lstm(m) for m in MODALITIES}
        self.parts["lmf"] = self.lmf()
        d = self.c.model_dim
        self.parts["conv_fused"] = self.conv("conv.fused", self.c.fused_kernel, d, d)

    def bundle(self, arch: str) -> ModelBundle:
        return ModelBundle(
            arch, self.c, dict(sorted(self.params.items())), self.parts,
            np.random.default_rng([self.c.seed, 99]),
        )


def build_lmf_mult(c: ModelConfig) -> ModelBundle:
    c.validate()
    b = _Builder(c)
    b.fusion_front()
    b.projections()
    d = c.model_dim
    b.parts["xstack"] = {m: b.stack("xstack", f"fused<-{m}", d, c.n_cm) for m in MODALITIES}
    b.parts["sstack"] = b.stack("sstack", "fused", 3 * d, c.n_self)
    b.head(3 * d)
    return b.bundle("lmf-mult")


def build_fusion_cm_attn(c: ModelConfig) -> ModelBundle:
    c.validate()
    b = _Builder(c)
    b.fusion_front()
    b.projections()
    d = c.model_dim
    b.parts["xstack"] = {m: b.stack("xstack", f"{m}<-fused", d, c.n_cm) for m in MODALITIES}
    if c.trailing_self_attention:
        b.parts["sstack"] = {m: b.stack("sstack", m, d, c.n_self) for m in MODALITIES}
    b.head(3 * d)
    return b.bundle("fusion-cm-attn")


def build_mult_lite(c: ModelConfig) -> ModelBundle:
    c.validate()
    b = _Builder(c)
    b.projections()
    d = c.model_dim
    b.parts["xstack"] = {
        (t, s): b.stack("xstack", f"{t}<-{s}", d, c.n_cm)
        for t in MODALITIES for s in MODALITIES if s != t
    }
    b.parts["sstack"] = {t: b.stack("sstack", t, 2 * d, c.n_self) for t in MODALITIES}
    b.head(6 * d)
    return b.bundle("mult-lite")


def build_lstm_unimodal(c: ModelConfig) -> ModelBundle:
    c.validate()
    b = _Builder(c)
    m = c.baseline_modality
    b.parts["lstm"] = {m: b.lstm(m)}
    b.head(c.lstm_hidden[MODALITIES.index(m)])
    return b.bundle("lstm-unimodal")


BUILDERS = {
    "lmf-mult": build_lmf_mult,
    "fusion-cm-attn": build_fusion_cm_attn,
    "mult-lite": build_mult_lite,
    "lstm-unimodal": build_lstm_unimodal,
}


def build_model(arch: str, c: ModelConfig | None = None) -> ModelBundle:
    if arch not in BUILDERS:
        raise InvalidConfig(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    return BUILDERS[arch](c or ModelConfig())


# ------------------------------------------------------------------- forward
def _fused_stream(m: ModelBundle, x: dict[str, Tensor], lengths: dict[str, np.ndarray]) -> Tensor:
    parts = m.parts
    ctx = [lstm_forward(x[k], parts["lstm"][k], lengths[k])[1] for k in MODALITIES]
    fused = lmf_fuse(*ctx, parts["lmf"])  # (B, d)
    return conv1d(fused.reshape(fused.shape[0], 1, fused.shape[1]), parts["conv_fused"])


def _forward_lmf_mult(m, x, lengths, train):
    parts = m.parts
    fused = _fused_stream(m, x, lengths)
    srcs = {k: conv1d(x[k], parts["proj"][k]) for k in MODALITIES}
    outs = [
        crossmodal_stack(fused, srcs[k], parts["xstack"][k], train, source_lengths=lengths[k], rng=m.rng)
        for k in MODALITIES
    ]
    enc = self_attention_encoder(concat(outs, axis=-1), parts["sstack"], train, rng=m.rng)
    return enc[:, 0]


def _forward_fusion_cm_attn(m, x, lengths, train):
    parts = m.parts
    fused = _fused_stream(m, x, lengths)
    feats = []
    for k in MODALITIES:
        h = crossmodal_stack(conv1d(x[k], parts["proj"][k]), fused, parts["xstack"][k], train, rng=m.rng)
        if "sstack" in parts:
            h = self_attention_encoder(h, parts["sstack"][k], train, lengths=lengths[k], rng=m.rng)
        feats.append(last_valid(h, lengths[k]))
    return concat(feats, axis=-1)


def _forward_mult_lite(m, x, lengths, train):
    parts = m.parts
    srcs = {k: conv1d(x[k], parts["proj"][k]) for k in MODALITIES}
    feats = []
    for t in MODALITIES:
        pair = [
            crossmodal_stack(srcs[t], srcs[s], parts["xstack"][(t, s)], train, source_lengths=lengths[s], rng=m.rng)
            for s in MODALITIES if s != t
        ]
        h = self_attention_encoder(concat(pair, axis=-1), parts["sstack"][t], train, lengths=lengths[t], rng=m.rng)
        feats.append(last_valid(h, lengths[t]))
    return concat(feats, axis=-1)


def _forward_lstm_unimodal(m, x, lengths, train):
    k = m.config.baseline_modality
    return lstm_forward(x[k], m.parts["lstm"][k], lengths[k])[1]


_FORWARDS = {
    "lmf-mult": _forward_lmf_mult,
    "fusion-cm-attn": _forward_fusion_cm_attn,
    "mult-lite": _forward_mult_lite,
    "lstm-unimodal": _forward_lstm_unimodal,
}


def forward_batch(m: ModelBundle, batch: Batch, train: bool = False) -> Tensor:
    """``(B, output_dim)`` predictions for a padded batch."""
    for k, d in zip(MODALITIES, m.config.input_dims):
        if batch.seqs[k].shape[-1] != d:
            raise DimMismatch(f"modality {k}: batch dim {batch.seqs[k].shape[-1]}, model expects {d}")
    x = {k: Tensor(batch.seqs[k]) for k in MODALITIES}
    feat = _FORWARDS[m.architecture](m, x, batch.lengths, train)
    feat = dropout(feat, m.config.out_dropout, train, m.rng)
    return linear(feat, m.parts["head_W"], m.parts["head_b"])


def forward(m: ModelBundle, s: MultimodalSample | Batch, train: bool = False) -> Tensor:
    """Output for one sample (``(1,)`` or ``(8,)``) or, given a batch, ``(B, out)``."""
    if isinstance(s, Batch):
        return forward_batch(m, s, train)
    out = forward_batch(m, collate([s]), train)
    return out.reshape(out.shape[1:])


# -------------------------------------------------------------- persistence
def save_model(m: ModelBundle, path) -> Path:
    """Magic line, JSON header line, then float64 little-endian payload in name order."""
    path = Path(path)
    names = sorted(m.params)
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": m.architecture,
        "config": m.config.to_dict(),
        "params": [{"name": n, "shape": list(m.params[n].shape)} for n in names],
    }
    payload = b"".join(m.params[n].data.astype("<f8").tobytes() for n in names)
    header["payload_bytes"] = len(payload)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)
    return path


def load_model(path, expected: ModelConfig | ModelBundle | None = None) -> ModelBundle:
    """Rebuild the model described by ``path``.

    With ``expected``, the stored architecture/config must match it exactly
    or :class:`VersionMismatch` is raised.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MODEL_MAGIC):
        raise ShapeCorruption(f"{path}: not a model file")
    rest = blob[len(MODEL_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise ShapeCorruption(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError as exc:
        raise ShapeCorruption(f"{path}: unreadable header") from exc
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise VersionMismatch(f"model format {header.get('format_version')} != {MODEL_FORMAT_VERSION}")
    config = ModelConfig.from_dict(header["config"])
    arch = header["architecture"]
    if expected is not None:
        exp_cfg = expected.config if isinstance(expected, ModelBundle) else expected
        if config != exp_cfg or (isinstance(expected, ModelBundle) and expected.architecture != arch):
            raise VersionMismatch(f"{path}: stored model does not match the expected configuration")
    payload = rest[nl + 1:]
    if len(payload) != header["payload_bytes"]:
        raise ShapeCorruption(f"{path}: payload has {len(payload)} bytes, header says {header['payload_bytes']}")
    m = build_model(arch, config)
    stored = [(e["name"], tuple(e["shape"])) for e in header["params"]]
    built = [(n, m.params[n].shape) for n in sorted(m.params)]
    if stored != built:
        raise ShapeCorruption(f"{path}: parameter registry does not match the architecture")
    values = np.frombuffer(payload, dtype="<f8")
    if values.size * 8 != len(payload) or values.size != sum(int(np.prod(s)) for _, s in stored):
        raise ShapeCorruption(f"{path}: payload size does not match parameter shapes")
    offset = 0
    for name, shape in stored:
        n = int(np.prod(shape))
        m.params[name].data = values[offset : offset + n].astype(np.float64).reshape(shape)
        offset += n
    return m
