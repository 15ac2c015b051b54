"""Single-layer LSTM as one fused tape node with hand-written BPTT."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptySequence, ShapeMismatch
from .tensor import Tensor, _make, _sigmoid as _sig, as_tensor, getitem

GATES = ("i", "f", "g", "o")


@dataclass
class LstmParams:
    """Gate weights stacked in ``i, f, g, o`` order.

    ``W`` is ``(4h, d_in)``, ``U`` is ``(4h, h)`` and ``b`` is ``(4h,)``; the
    per-gate blocks are exposed through :meth:`gate`.
    """

    W: Tensor
    U: Tensor
    b: Tensor

    def __post_init__(self) -> None:
        four_h, d_in = self.W.shape
        if four_h % 4:
            raise ShapeMismatch(f"W rows must be 4*hidden, got {four_h}")
        h = four_h // 4
        if self.U.shape != (4 * h, h) or self.b.shape != (4 * h,):
            raise ShapeMismatch(
                f"inconsistent LSTM shapes W={self.W.shape} U={self.U.shape} b={self.b.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(W_gate, U_gate, b_gate)`` views for one of ``i, f, g, o``."""
        h = self.hidden_dim
        k = GATES.index(name)
        sl = slice(k * h, (k + 1) * h)
        return self.W.data[sl], self.U.data[sl], self.b.data[sl]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmParams":
        bound = 1.0 / np.sqrt(hidden_dim)
        u = lambda *s: Tensor(rng.uniform(-bound, bound, size=s), requires_grad=True)  # noqa: E731
        return cls(u(4 * hidden_dim, input_dim), u(4 * hidden_dim, hidden_dim), u(4 * hidden_dim))


def lstm_states(x: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    """All hidden states for ``x`` of shape ``(B, L, d_in)``; zero initial state."""
    x, W, U, b = as_tensor(x), as_tensor(W), as_tensor(U), as_tensor(b)
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (B, L, d_in), got {x.shape}")
    B, L, d_in = x.shape
    if L < 1:
        raise EmptySequence("LSTM needs at least one time step")
    if W.shape[1] != d_in:
        raise ShapeMismatch(f"input dim {d_in} does not match W {W.shape}")
    h_dim = U.shape[1]

    xw = x.data @ W.data.T + b.data  # (B, L, 4h)
    Ut = U.data.T
    H = np.empty((B, L, h_dim))
    C = np.empty((B, L, h_dim))
    acts = np.empty((B, L, 4 * h_dim))
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    for t in range(L):
        z = xw[:, t] + h @ Ut
        a = acts[:, t]
        a[:, : 2 * h_dim] = _sig(z[:, : 2 * h_dim])
        a[:, 2 * h_dim : 3 * h_dim] = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        a[:, 3 * h_dim :] = _sig(z[:, 3 * h_dim :])
        i, f, g, o = np.split(a, 4, axis=1)
        c = f * c + i * g
        h = o * np.tanh(c)
        C[:, t] = c
        H[:, t] = h

    def bw(dH):
        tanhC = np.tanh(C)
        dZ = np.empty((B, L, 4 * h_dim))
        dh_next = np.zeros((B, h_dim))
        dc_next = np.zeros((B, h_dim))
        Ud = U.data
        for t in range(L - 1, -1, -1):
            i, f, g, o = np.split(acts[:, t], 4, axis=1)
            c_prev = C[:, t - 1] if t > 0 else 0.0
            dh = dH[:, t] + dh_next
            tc = tanhC[:, t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dZ[:, t]
            dz[:, :h_dim] = dc * g * i * (1.0 - i)
            dz[:, h_dim : 2 * h_dim] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * h_dim : 3 * h_dim] = dc * i * (1.0 - g * g)
            dz[:, 3 * h_dim :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ Ud
        flat = dZ.reshape(-1, 4 * h_dim)
        gx = (dZ @ W.data) if x.requires_grad else None
        gW = flat.T @ x.data.reshape(-1, d_in) if W.requires_grad else None
        gU = None
        if U.requires_grad:
            H_prev = np.concatenate([np.zeros((B, 1, h_dim)), H[:, :-1]], axis=1)
            gU = flat.T @ H_prev.reshape(-1, h_dim)
        gb = flat.sum(axis=0) if b.requires_grad else None
        return gx, gW, gU, gb

    return _make(H, (x, W, U, b), bw, "lstm")


def lstm_forward(seq: Tensor, p: LstmParams, lengths=None) -> tuple[Tensor, Tensor]:
    """Run the LSTM over ``seq`` and return ``(states, final_hidden)``.

    ``seq`` is ``(L, d_in)`` or ``(B, L, d_in)``. For batched input padded at
    the end, ``lengths`` selects each sample's last real step; padding after
    that step cannot influence it because the recurrence is causal.
    """
    seq = as_tensor(seq)
    single = seq.ndim == 2
    if single:
        if seq.shape[0] < 1:
            raise EmptySequence("LSTM needs at least one time step")
        seq = seq.reshape(1, *seq.shape)
    states = lstm_states(seq, p.W, p.U, p.b)
    if single:
        states = states.reshape(states.shape[1:])
        return states, getitem(states, -1)
    B, L = seq.shape[:2]
    if lengths is None:
        return states, getitem(states, (slice(None), -1))
    lengths = np.asarray(lengths)
    if lengths.shape != (B,) or lengths.min() < 1 or lengths.max() > L:
        raise ShapeMismatch(f"bad lengths {lengths} for batch of shape {seq.shape}")
    return states, getitem(states, (np.arange(B), lengths - 1))
