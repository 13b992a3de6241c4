"""Fisher-whitened dense networks: structured natural-gradient training in numpy.

Each dense layer carries a non-learned whitening map S, the inverse square
root of a damped local Fisher estimate of its inputs. Plain gradient descent
on the whitened parameterization then takes natural-gradient steps in the
original one. The package provides the linear-algebra kernels, the layer and
training machinery, dataset helpers, and an experiment CLI.
"""

from .activations import ActivationKind, activation_apply, activation_v
from .data import Dataset, gen_blobs, load_idx, split_train_val, write_metrics
from .fisher import (
    FisherEstimate,
    FisherState,
    SolverKind,
    fisher_refresh,
    local_fisher,
    whiten,
)
from .linalg import (
    SolverError,
    SpdSolveReport,
    damp_spd,
    db_sqrt,
    gram_channels,
    gram_mean,
    jacobi_eigh,
    ns_invsqrt,
    random_spd,
    spd_invsqrt_oracle,
)
from .network import (
    DenseLayer,
    ForwardTrace,
    MLPModel,
    backward,
    build_mlp,
    forward,
    softmax_xent_l2,
)
from .training import (
    MetricsRow,
    OptimizerConfig,
    OptimizerKind,
    evaluate,
    init_velocities,
    lemma1_equivalence_check,
    sgd_step,
    sngd_train_step,
    train_run,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "activation_apply",
    "activation_v",
    "Dataset",
    "gen_blobs",
    "load_idx",
    "split_train_val",
    "write_metrics",
    "FisherEstimate",
    "FisherState",
    "SolverKind",
    "fisher_refresh",
    "local_fisher",
    "whiten",
    "SolverError",
    "SpdSolveReport",
    "damp_spd",
    "db_sqrt",
    "gram_channels",
    "gram_mean",
    "jacobi_eigh",
    "ns_invsqrt",
    "random_spd",
    "spd_invsqrt_oracle",
    "DenseLayer",
    "ForwardTrace",
    "MLPModel",
    "backward",
    "build_mlp",
    "forward",
    "softmax_xent_l2",
    "MetricsRow",
    "OptimizerConfig",
    "OptimizerKind",
    "evaluate",
    "init_velocities",
    "lemma1_equivalence_check",
    "sgd_step",
    "sngd_train_step",
    "train_run",
    "__version__",
]
