"""From-scratch numeric substrate: dense ops, BiLSTM, Adam, gradient checking."""

from stacksql.numerics.backend import active_backend, available_backends, set_backend
from stacksql.numerics.linalg import (
    NumericError,
    ShapeError,
    dropout_mask,
    matmul,
    sigmoid,
    sigmoid_bce,
    softmax_ce,
    softmax_rows,
    uniform_init,
)
from stacksql.numerics.lstm import (
    BiLstmParams,
    LstmParams,
    bilstm_batch_backward,
    bilstm_batch_forward,
    bilstm_final_rows,
    bilstm_final_rows_backward,
    bilstm_forward,
    init_bilstm,
)
from stacksql.numerics.optim import AdamState, adam_step, init_adam
from stacksql.numerics.gradcheck import grad_check

__all__ = [
    "AdamState",
    "BiLstmParams",
    "LstmParams",
    "NumericError",
    "ShapeError",
    "active_backend",
    "adam_step",
    "available_backends",
    "bilstm_batch_backward",
    "bilstm_batch_forward",
    "bilstm_final_rows",
    "bilstm_final_rows_backward",
    "bilstm_forward",
    "dropout_mask",
    "grad_check",
    "init_adam",
    "init_bilstm",
    "matmul",
    "set_backend",
    "sigmoid",
    "sigmoid_bce",
    "softmax_ce",
    "softmax_rows",
    "uniform_init",
]
