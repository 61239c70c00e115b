"""Pool-based active learning for regression with dropout networks.

A dropout feed-forward network supplies stochastic predictions; their
empirical covariance yields a GP whose posterior variance scores candidate
pool points, with rank-1 conditioning updates enabling diverse batch
selection without retraining the network.
"""

from .acquisition import (
    AcquisitionRequest,
    AcquisitionResult,
    Strategy,
    acquire,
    select_mcdue,
    select_mstep_nngp,
    select_nngp,
    select_random,
)
from .gp_approx import (
    CovEstimate,
    GPState,
    build_gp_state,
    empirical_covariance,
    posterior_covariance,
    rank_one_update,
)
from .harness import (
    Dataset,
    DolanMoreTable,
    RunRecord,
    Splits,
    SyntheticOracle,
    dolan_more,
    load_csv,
    make_synthetic_oracle,
    metrics,
    run_active_learning,
    split,
)
from .nn_core import (
    LayerSpec,
    Network,
    TrainConfig,
    TrainReport,
    forward,
    forward_batch,
    init_network,
    loss_and_gradient,
    lr_at_epoch,
    train,
)
from .stochastic_inference import (
    DropoutMask,
    SampleMatrix,
    mc_mean,
    mc_variance,
    sample_passes,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionRequest",
    "AcquisitionResult",
    "CovEstimate",
    "Dataset",
    "DolanMoreTable",
    "DropoutMask",
    "GPState",
    "LayerSpec",
    "Network",
    "RunRecord",
    "SampleMatrix",
    "Splits",
    "Strategy",
    "SyntheticOracle",
    "TrainConfig",
    "TrainReport",
    "acquire",
    "build_gp_state",
    "dolan_more",
    "empirical_covariance",
    "forward",
    "forward_batch",
    "init_network",
    "load_csv",
    "loss_and_gradient",
    "lr_at_epoch",
    "make_synthetic_oracle",
    "mc_mean",
    "mc_variance",
    "metrics",
    "posterior_covariance",
    "rank_one_update",
    "run_active_learning",
    "sample_passes",
    "select_mcdue",
    "select_mstep_nngp",
    "select_nngp",
    "select_random",
    "split",
    "train",
]
