"""CLASSP: threshold-gated, power-p decayed per-weight learning rates for continual learning."""

__version__ = "0.1.0"

from .errors import ConfigError, DimensionError, FormatError, NumericError, UsageError
from .numeric import Pcg32, elementwise, finite_diff_grad, matmul, rand_normal
from .mlp import GradientSet, MLPParams, cross_entropy_loss, init_mlp, mlp_backward, mlp_forward, param_count, predict
from .optim import (
    AdamConfig,
    ClasspConfig,
    ClasspState,
    EwcState,
    adagrad_step,
    adam_step,
    aux_memory_count,
    classp_step,
    ewc_fisher_diag,
    ewc_penalized_grads,
    make_optimizer,
    sgd_step,
    update_sparsity,
)
from .data import Dataset, Phase, TaskSequence, load_idx, make_blobs, permute_features, split_classes
from .harness import RunConfig, accuracy, forgetting_rate, run_sequence
