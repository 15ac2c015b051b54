"""Mini-batch training, evaluation and early stopping."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core.functional import log_softmax
from .core.optim import OptimizerState, optimizer_step, zero_grad
from .core.tensor import Tensor, absolute
from .data import EMOTIONS, MODALITIES, Dataset, MultimodalSample, collate
from .errors import DimMismatch, InvalidConfig, NonFiniteLoss, NonFiniteValue
from .metrics import MetricsReport, emotion_metrics, sentiment_metrics
from .models import ModelBundle, forward_batch, param_count

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    clip: float | None = 0.8
    patience: int = 10
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.lr < 0:
            raise InvalidConfig("lr must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass
class TrainResult:
    model: ModelBundle
    log: list[dict]
    best_epoch: int

    @property
    def losses(self) -> list[float]:
        return [e["train_loss"] for e in self.log]


def loss_fn(out: Tensor, labels: np.ndarray, task: str) -> Tensor:
    """L1 for sentiment regression; summed per-emotion cross-entropy otherwise."""
    if task == "regression":
        return absolute(out.reshape(-1) - Tensor(labels.reshape(-1))).mean()
    B = out.shape[0]
    logp = log_softmax(out.reshape(B, len(EMOTIONS), 2), axis=-1)
    onehot = np.stack([1.0 - labels, labels], axis=-1)  # (B, 4, 2)
    return -(logp * Tensor(onehot)).sum() * (1.0 / B)


def check_dims(m: ModelBundle, ds: Dataset) -> None:
    if tuple(ds.manifest.dims) != tuple(m.config.input_dims):
        raise DimMismatch(f"dataset dims {ds.manifest.dims} vs model input dims {m.config.input_dims}")
    want = "regression" if ds.manifest.label_kind == "sentiment" else "emotions"
    if m.config.output != want:
        raise DimMismatch(f"dataset labels are {ds.manifest.label_kind}, model output is {m.config.output}")


def batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def run_epoch(
    m: ModelBundle,
    samples: list[MultimodalSample],
    tc: TrainConfig,
    opt: OptimizerState,
    epoch: int,
) -> dict:
    """One shuffled pass of optimizer steps; returns the epoch's log entry."""
    params = m.params
    rng = np.random.default_rng([tc.seed, epoch])
    losses, sizes, norms, consumed = [], [], [], []
    start = time.perf_counter()
    for idx in batches(len(samples), tc.batch_size, rng):
        batch = collate([samples[i] for i in idx], idx)
        try:
            loss = loss_fn(forward_batch(m, batch, train=True), batch.labels, m.config.output)
        except NonFiniteValue as exc:
            raise NonFiniteLoss(
                f"epoch {epoch}: non-finite value in forward pass on samples {idx.tolist()}: {exc}"
            ) from exc
        zero_grad(params)
        loss.backward()
        norms.append(optimizer_step(params, opt))
        losses.append(loss.item())
        sizes.append(len(idx))
        consumed.extend(idx.tolist())
    seconds = time.perf_counter() - start
    return {
        "epoch": epoch,
        "train_loss": float(np.average(losses, weights=sizes)),
        "seconds": seconds,
        "grad_norm": float(np.mean(norms)),
        "consumed": consumed,
    }


def predict(m: ModelBundle, samples: list[MultimodalSample], batch_size: int = 64) -> np.ndarray:
    outs = []
    for idx in batches(len(samples), batch_size, None):
        outs.append(forward_batch(m, collate([samples[i] for i in idx]), train=False).data)
    return np.concatenate(outs, axis=0)


def eval_loss(m: ModelBundle, samples: list[MultimodalSample], batch_size: int = 64) -> float:
    total = 0.0
    for idx in batches(len(samples), batch_size, None):
        batch = collate([samples[i] for i in idx])
        out = forward_batch(m, batch, train=False)
        total += loss_fn(out, batch.labels, m.config.output).item() * len(idx)
    return total / len(samples)


def train(m: ModelBundle, ds: Dataset, tc: TrainConfig | None = None, opt: OptimizerState | None = None) -> TrainResult:
    """Train in place, keep the best-validation parameters and return them with the log."""
    tc = (tc or TrainConfig()).validate()
    check_dims(m, ds)
    opt = opt or OptimizerState(tc.optimizer, lr=tc.lr, clip=tc.clip)
    history: list[dict] = []
    best = (np.inf, -1, None)
    stale = 0
    for epoch in range(tc.epochs):
        entry = run_epoch(m, ds.train, tc, opt, epoch)
        entry.pop("consumed")
        if not np.isfinite(entry["train_loss"]):
            raise NonFiniteLoss(f"epoch {epoch}: training loss {entry['train_loss']}")
        entry["valid_loss"] = eval_loss(m, ds.valid) if ds.valid else entry["train_loss"]
        history.append(entry)
        log.info("epoch %d train %.4f valid %.4f (%.2fs)", epoch, entry["train_loss"], entry["valid_loss"], entry["seconds"])
        if entry["valid_loss"] < best[0]:
            best = (entry["valid_loss"], epoch, {k: p.data.copy() for k, p in m.params.items()})
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break
    for k, arr in best[2].items():
        m.params[k].data = arr
    return TrainResult(m, history, best[1])


def evaluate(m: ModelBundle, samples: list[MultimodalSample]) -> MetricsReport:
    preds = predict(m, samples)
    labels = np.array([s.label for s in samples], dtype=np.float64)
    report = MetricsReport(task=m.config.output, loss=eval_loss(m, samples), param_count=param_count(m))
    if m.config.output == "regression":
        report.sentiment = sentiment_metrics(preds[:, 0], labels)
    else:
        report.emotions = emotion_metrics(preds, labels)
    return report


__all__ = [
    "MODALITIES", "TrainConfig", "TrainResult", "check_dims", "eval_loss", "evaluate",
    "loss_fn", "predict", "run_epoch", "train",
]
