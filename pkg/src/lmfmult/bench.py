"""Wall-clock epoch timing across architectures on identical workloads."""
from __future__ import annotations

import hashlib
from dataclasses import replace

import numpy as np

from .core.optim import OptimizerState
from .data import Dataset, gen_parity_dataset
from .models import ModelConfig, build_model, param_count
from .training import TrainConfig, check_dims, run_epoch

COMPARED_ARCHITECTURES = ("mult-lite", "fusion-cm-attn", "lmf-mult")


def bench_workload(seed: int = 0) -> tuple[Dataset, ModelConfig, TrainConfig]:
    """Standard timing workload: aligned length-50 sequences with 300/5/20-dim features, batch 32."""
    ds = gen_parity_dataset((256, 16, 16), dims=(300, 5, 20), len_range=(50, 50), aligned=True, seed=seed)
    return ds, ModelConfig(input_dims=ds.manifest.dims, seed=seed), TrainConfig(batch_size=32, seed=seed)


def bench_epoch_time(
    architectures=COMPARED_ARCHITECTURES,
    dataset: Dataset | None = None,
    tc: TrainConfig | None = None,
    repeats: int = 3,
    config: ModelConfig | None = None,
) -> dict[str, dict]:
    """Per-architecture mean/std seconds per training epoch.

    Every architecture sees the same data, batch size, shuffling seed and
    config. One warm-up epoch runs first and is not timed. Architectures run
    one after another on this thread.
    """
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if dataset is None:
        dataset, default_cfg, default_tc = bench_workload()
        config = config or default_cfg
        tc = tc or default_tc
    tc = (tc or TrainConfig()).validate()
    config = config or ModelConfig(input_dims=dataset.manifest.dims)
    table = {}
    for arch in architectures:
        m = build_model(arch, replace(config))
        check_dims(m, dataset)
        opt = OptimizerState(tc.optimizer, lr=tc.lr, clip=tc.clip)
        run_epoch(m, dataset.train, tc, opt, epoch=0)
        times, digest = [], hashlib.sha256()
        for rep in range(repeats):
            entry = run_epoch(m, dataset.train, tc, opt, epoch=rep + 1)
            times.append(entry["seconds"])
            digest.update(np.asarray(entry["consumed"], dtype=np.int64).tobytes())
        times = np.asarray(times)
        table[arch] = {
            "mean": float(times.mean()),
            "std": float(times.std(ddof=1)),
            "times": times.tolist(),
            "param_count": param_count(m),
            "stacks": m.stack_counts()["total"],
            "data_order_sha256": digest.hexdigest(),
        }
    return table
