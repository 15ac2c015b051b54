"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``.

    ``floor`` keeps entries whose true gradient is ~0 from dividing roundoff
    by roundoff.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numerical_grad(
    f: Callable[[], float], t: Tensor, h: float = 1e-5, indices=None
) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``t.data``, perturbed in place.

    With ``indices`` (flat positions) only those entries are computed; the
    rest stay NaN.
    """
    flat = t.data.reshape(-1)
    grad = np.full(flat.shape, np.nan)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(t.shape)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    Returns the relative error per parameter name. ``max_entries`` caps how
    many entries of each tensor are perturbed (chosen by ``rng``).
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    scalar = lambda: float(loss_fn().data)  # noqa: E731
    rng = rng or np.random.default_rng(0)
    errors: dict[str, float] = {}
    for name, p in params.items():
        idx = None
        if max_entries is not None and p.size > max_entries:
            idx = np.sort(rng.choice(p.size, size=max_entries, replace=False))
        num = numerical_grad(scalar, p, h=h, indices=idx)
        a = analytic[name].reshape(-1)
        n = num.reshape(-1)
        if idx is not None:
            a, n = a[idx], n[idx]
        errors[name] = relative_error(a, n)
    for p in params.values():
        p.grad = None
    return errors
