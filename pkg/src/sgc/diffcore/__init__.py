from .engine import (
    Node, Parameter, add, backward, bce_with_logits, concat, constant,
    dropout, init_uniform, leaf, matmul, mean, mul, relu, row_sum, scale,
    select_cols, select_rows, sigmoid, squared_error, sub, tanh, total_sum,
)
from .optim import SGD, Adam, adam_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Node", "Parameter", "add", "backward", "bce_with_logits", "concat",
    "constant", "dropout", "init_uniform", "leaf", "matmul", "mean", "mul",
    "relu", "row_sum", "scale", "select_cols", "select_rows", "sigmoid",
    "squared_error", "sub", "tanh", "total_sum",
    "SGD", "Adam", "adam_step", "load_checkpoint", "save_checkpoint",
]
