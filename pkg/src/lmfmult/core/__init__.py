"""Tensor numerics, reverse-mode autodiff, primitive layers and optimizers."""
from .functional import conv1d, dropout, layer_norm, linear, log_softmax, softmax
from .gradcheck import check_gradients, numerical_grad, relative_error
from .lstm import LstmParams, lstm_forward, lstm_states
from .optim import OptimizerState, global_grad_norm, optimizer_step, zero_grad
from .tensor import (
    Tensor,
    absolute,
    add,
    concat,
    div,
    exp,
    getitem,
    log,
    matmul,
    mean,
    mul,
    power,
    relu,
    reshape,
    sigmoid,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)


def backward(loss: Tensor) -> None:
    """Functional spelling of ``loss.backward()``."""
    loss.backward()


__all__ = [
    "LstmParams", "OptimizerState", "Tensor", "absolute", "add", "backward",
    "check_gradients", "concat", "conv1d", "div", "dropout", "exp", "getitem",
    "global_grad_norm", "layer_norm", "linear", "log", "log_softmax", "lstm_forward",
    "lstm_states", "matmul", "mean", "mul", "numerical_grad", "optimizer_step",
    "power", "relative_error", "relu", "reshape", "sigmoid", "softmax", "stack",
    "sub", "swapaxes", "tanh", "transpose", "tsum", "zero_grad",
]
