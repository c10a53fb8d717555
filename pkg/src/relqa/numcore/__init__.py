"""Minimal float64 tensor core with reverse-mode autodiff."""
from relqa.numcore.checkpoint import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint
from relqa.numcore.layers import BiLSTM, FeedForward, Linear, bilstm
from relqa.numcore.params import Param, ParamStore, adam_step, glorot
from relqa.numcore.tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    broadcast_rows,
    concat,
    cross_entropy,
    dropout,
    elementwise,
    group_max,
    matmul,
    max_along,
    mean,
    mul,
    reshape,
    sigmoid,
    softmax_rows,
    split,
    spmm,
    sub,
    sum_all,
    take,
    take_rows,
    tanh,
    transpose,
)

__all__ = [
    "BiLSTM", "FeedForward", "Linear", "Param", "ParamStore", "Tape", "Tensor",
    "active_tape", "adam_step", "add", "as_tensor", "bilstm", "broadcast_rows", "concat",
    "cross_entropy", "dropout", "dump_checkpoint", "elementwise", "glorot", "group_max",
    "load_checkpoint", "matmul", "max_along", "mean", "mul", "parse_checkpoint", "reshape",
    "save_checkpoint", "sigmoid", "softmax_rows", "split", "spmm", "sub", "sum_all", "take",
    "take_rows", "tanh", "transpose",
]
