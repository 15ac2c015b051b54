"""Trimodal datasets: synthetic generators, on-disk format, batching.

On disk a dataset is a directory holding ``manifest.json`` plus one
``{split}.jsonl`` per split. Each JSON line is one sample::

    {"l": [[...], ...], "a": [[...], ...], "v": [[...], ...], "label": 1.5}

with time-major float arrays and either a sentiment score in [-3, 3] or four
0/1 emotion indicators (happy, sad, angry, neutral).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .errors import DimMismatchAgainstManifest, InvalidRange, SchemaViolation

MODALITIES = ("l", "a", "v")
SPLITS = ("train", "valid", "test")
EMOTIONS = ("happy", "sad", "angry", "neutral")
FORMAT_VERSION = 1
SENTIMENT_RANGE = (-3.0, 3.0)
PARITY_SENTIMENT = 2.0
# parity label +1 / -1 as emotion indicators
PARITY_EMOTIONS = {1: (1, 0, 1, 0), -1: (0, 1, 0, 1)}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["dims", "aligned", "label_kind", "splits", "format_version"],
    "properties": {
        "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3},
        "aligned": {"type": "boolean"},
        "label_kind": {"enum": ["sentiment", "emotions"]},
        "splits": {
            "type": "object",
            "required": list(SPLITS),
            "properties": {s: {"type": "integer", "minimum": 1} for s in SPLITS},
        },
        "generator": {"type": ["object", "null"]},
        "format_version": {"type": "integer"},
    },
}


@dataclass
class MultimodalSample:
    l: np.ndarray
    a: np.ndarray
    v: np.ndarray
    label: float | np.ndarray

    def seq(self, m: str) -> np.ndarray:
        return getattr(self, m)

    @property
    def lengths(self) -> tuple[int, int, int]:
        return tuple(len(self.seq(m)) for m in MODALITIES)  # type: ignore[return-value]


@dataclass
class DatasetManifest:
    dims: tuple[int, int, int]
    aligned: bool
    label_kind: str
    splits: dict[str, int]
    generator: dict | None = None
    format_version: int = FORMAT_VERSION

    def to_json(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d


@dataclass
class Dataset:
    manifest: DatasetManifest
    train: list[MultimodalSample] = field(default_factory=list)
    valid: list[MultimodalSample] = field(default_factory=list)
    test: list[MultimodalSample] = field(default_factory=list)

    def split(self, name: str) -> list[MultimodalSample]:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)


@dataclass
class Batch:
    """Zero-padded ``(B, L_max, d)`` arrays per modality plus true lengths."""

    seqs: dict[str, np.ndarray]
    lengths: dict[str, np.ndarray]
    labels: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def collate(samples: Sequence[MultimodalSample], indices: Iterable[int] | None = None) -> Batch:
    seqs, lengths = {}, {}
    for m in MODALITIES:
        arrs = [np.asarray(s.seq(m), dtype=np.float64) for s in samples]
        lens = np.array([len(x) for x in arrs])
        out = np.zeros((len(arrs), lens.max(), arrs[0].shape[1]))
        for i, x in enumerate(arrs):
            out[i, : len(x)] = x
        seqs[m], lengths[m] = out, lens
    labels = np.array([s.label for s in samples], dtype=np.float64)
    idx = np.arange(len(samples)) if indices is None else np.asarray(list(indices))
    return Batch(seqs, lengths, labels, idx)


# ----------------------------------------------------------------- generation
def _check_args(n, dims, len_range, noise) -> tuple[int, int, int]:
    sizes = _split_sizes(n)
    if len(dims) != 3 or min(dims) < 1:
        raise InvalidRange(f"need three positive modality dims, got {dims}")
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise InvalidRange(f"bad length range {len_range}")
    if noise < 0:
        raise InvalidRange(f"noise must be >= 0, got {noise}")
    return sizes


def _split_sizes(n) -> tuple[int, int, int]:
    if isinstance(n, (tuple, list)):
        if len(n) != 3 or min(n) < 1:
            raise InvalidRange(f"split sizes must be three positive ints, got {n}")
        return tuple(int(x) for x in n)  # type: ignore[return-value]
    n = int(n)
    if n < 3:
        raise InvalidRange(f"need n >= 3 to fill train/valid/test, got {n}")
    held = max(1, n // 10)
    return n - 2 * held, held, held


def planted_templates(dims: Sequence[int], seed: int) -> dict[str, np.ndarray]:
    """The +-1 template vector planted into each modality."""
    rng = np.random.default_rng([seed, 1])
    return {m: rng.choice([-1.0, 1.0], size=d) for m, d in zip(MODALITIES, dims)}


def _lengths(rng, len_range, aligned) -> list[int]:
    lo, hi = len_range
    if aligned:
        return [int(rng.integers(lo, hi + 1))] * 3
    return [int(x) for x in rng.integers(lo, hi + 1, size=3)]


def _assemble(samples, sizes, manifest) -> Dataset:
    a, b = sizes[0], sizes[0] + sizes[1]
    return Dataset(manifest, samples[:a], samples[a:b], samples[b:])


def gen_parity_dataset(
    n,
    dims: Sequence[int] = (8, 6, 4),
    len_range: tuple[int, int] = (4, 12),
    noise: float = 0.1,
    aligned: bool = False,
    seed: int = 0,
    label_kind: str = "sentiment",
) -> Dataset:
    """Label is the product of three hidden per-modality signs.

    Each modality plants ``sign * template`` on a random nonempty subset of its
    time steps, on top of Gaussian noise. Any single modality, and any pair, is
    independent of the label; only the three-way product decides it.
    """
    sizes = _check_args(n, dims, len_range, noise)
    if label_kind not in ("sentiment", "emotions"):
        raise InvalidRange(f"unknown label kind {label_kind!r}")
    templates = planted_templates(dims, seed)
    rng = np.random.default_rng([seed, 2])
    samples = []
    for _ in range(sum(sizes)):
        signs = rng.choice([-1, 1], size=3)
        seqs = {}
        for m, d, L, s in zip(MODALITIES, dims, _lengths(rng, len_range, aligned), signs):
            x = noise * rng.standard_normal((L, d))
            planted = rng.random(L) < 0.5
            if not planted.any():
                planted[rng.integers(L)] = True
            x[planted] += s * templates[m]
            seqs[m] = x
        y = int(np.prod(signs))
        label = PARITY_SENTIMENT * y if label_kind == "sentiment" else np.array(PARITY_EMOTIONS[y], float)
        samples.append(MultimodalSample(seqs["l"], seqs["a"], seqs["v"], label))
    manifest = DatasetManifest(
        tuple(int(d) for d in dims), aligned, label_kind,
        dict(zip(SPLITS, sizes)),
        {"kind": "parity", "seed": seed, "noise": noise, "len_range": list(len_range)},
    )
    return _assemble(samples, sizes, manifest)


def gen_linear_dataset(
    n,
    dims: Sequence[int] = (8, 6, 4),
    len_range: tuple[int, int] = (4, 12),
    noise: float = 0.1,
    seed: int = 0,
    aligned: bool = False,
) -> Dataset:
    """Sentiment ``clip(2.5 c, -3, 3)`` with ``c ~ U(-1, 1)`` scaling the language template.

    Every language step is ``c * template`` plus noise; audio and visual carry
    noise only.
    """
    sizes = _check_args(n, dims, len_range, noise)
    t_l = planted_templates(dims, seed)["l"]
    rng = np.random.default_rng([seed, 3])
    samples = []
    for _ in range(sum(sizes)):
        c = rng.uniform(-1.0, 1.0)
        L = _lengths(rng, len_range, aligned)
        l = c * t_l + noise * rng.standard_normal((L[0], dims[0]))
        a = noise * rng.standard_normal((L[1], dims[1]))
        v = noise * rng.standard_normal((L[2], dims[2]))
        samples.append(MultimodalSample(l, a, v, float(np.clip(2.5 * c, *SENTIMENT_RANGE))))
    manifest = DatasetManifest(
        tuple(int(d) for d in dims), aligned, "sentiment",
        dict(zip(SPLITS, sizes)),
        {"kind": "linear", "seed": seed, "noise": noise, "len_range": list(len_range)},
    )
    return _assemble(samples, sizes, manifest)


# ---------------------------------------------------------------------- I/O
def _record(s: MultimodalSample) -> dict:
    label = s.label
    if isinstance(label, np.ndarray):
        label = [int(round(x)) for x in label]
    else:
        label = float(label)
    return {"l": s.l.tolist(), "a": s.a.tolist(), "v": s.v.tolist(), "label": label}


def save_dataset(ds: Dataset, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(json.dumps(ds.manifest.to_json(), indent=2) + "\n")
    for split in SPLITS:
        with open(root / f"{split}.jsonl", "w", encoding="utf-8") as fh:
            for s in ds.split(split):
                fh.write(json.dumps(_record(s)) + "\n")
    return root


def _parse_record(raw: dict, manifest: DatasetManifest, where: str) -> MultimodalSample:
    if not isinstance(raw, dict) or set(raw) != {"l", "a", "v", "label"}:
        raise SchemaViolation(f"{where}: record must have exactly keys l, a, v, label")
    seqs = {}
    for m, d in zip(MODALITIES, manifest.dims):
        try:
            x = np.array(raw[m], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise DimMismatchAgainstManifest(f"{where}: ragged or non-numeric '{m}' array") from exc
        if x.ndim != 2 or x.shape[0] < 1:
            raise SchemaViolation(f"{where}: '{m}' must be a non-empty 2-d array")
        if x.shape[1] != d:
            raise DimMismatchAgainstManifest(f"{where}: '{m}' has dim {x.shape[1]}, manifest says {d}")
        if not np.isfinite(x).all():
            raise SchemaViolation(f"{where}: non-finite value in '{m}'")
        seqs[m] = x
    if manifest.aligned and len({len(x) for x in seqs.values()}) != 1:
        raise SchemaViolation(f"{where}: aligned dataset with unequal lengths")
    label = raw["label"]
    if manifest.label_kind == "sentiment":
        if isinstance(label, bool) or not isinstance(label, (int, float)):
            raise SchemaViolation(f"{where}: sentiment label must be a number")
        if not SENTIMENT_RANGE[0] <= label <= SENTIMENT_RANGE[1]:
            raise SchemaViolation(f"{where}: sentiment {label} outside [-3, 3]")
        label = float(label)
    else:
        if not isinstance(label, list) or len(label) != 4 or any(b not in (0, 1) for b in label):
            raise SchemaViolation(f"{where}: emotion label must be four 0/1 values")
        label = np.array(label, dtype=np.float64)
    return MultimodalSample(seqs["l"], seqs["a"], seqs["v"], label)


def load_dataset(path) -> Dataset:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise SchemaViolation(f"missing manifest.json in {root}")
    try:
        raw = json.loads(mpath.read_text())
        jsonschema.validate(raw, MANIFEST_SCHEMA)
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise SchemaViolation(f"invalid manifest: {exc}") from exc
    manifest = DatasetManifest(
        tuple(raw["dims"]), raw["aligned"], raw["label_kind"],
        {s: raw["splits"][s] for s in SPLITS}, raw.get("generator"), raw["format_version"],
    )
    if manifest.format_version != FORMAT_VERSION:
        raise SchemaViolation(f"unsupported format version {manifest.format_version}")
    ds = Dataset(manifest)
    for split in SPLITS:
        records = ds.split(split)
        with open(root / f"{split}.jsonl", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                where = f"{split}.jsonl:{lineno}"
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaViolation(f"{where}: {exc}") from exc
                records.append(_parse_record(rec, manifest, where))
        if len(records) != manifest.splits[split]:
            raise SchemaViolation(
                f"{split}: manifest lists {manifest.splits[split]} records, found {len(records)}"
            )
    return ds
