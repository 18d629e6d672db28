"""Small differentiable numeric engine used by the graph models."""
from .checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import GradcheckReport, gradcheck, relative_error
from .gru import gru_cell, init_gru
from .params import DTYPES, ParamStore, adam_step
from .rng import RNG_ALGORITHM, make_rng
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    cos,
    gather_rows,
    log_softmax,
    matmul,
    mul,
    scale,
    segment_sum,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sub,
    sum_rows,
    tanh,
)
