"""Shaping training sets of supervised learners around steep target regions.

Two complementary tools: derivative-guided resampling, which concentrates
extra training points where a local sensitivity score is large, and local
variance weighting, which reweights an existing dataset by the unbiased
variance of labels over each point's nearest neighbours.  Small dense
networks, an analytic two-species reaction benchmark and paired-seed
experiment protocols round out the package.
"""

from .bateman import (
    BatemanParams,
    SingularityError,
    aeg_ael,
    analytic_solve,
    bateman_oracle,
    euler_solve,
    generate_dataset,
)
from .dataset import (
    DomainBox,
    LabeledDataset,
    WeightedDataset,
    grid_sample,
    inject_label_noise,
    load_csv,
    one_hot,
    save_csv,
    two_moons,
    uniform_sample,
    with_uniform_weights,
)
from .derivatives import (
    MultiIndex,
    OracleFn,
    SensitivityConfig,
    UnsupportedOrderError,
    cubic_oracle,
    enumerate_multi_indices,
    gb_bound_1d,
    partial_derivative,
    polynomial_oracle,
    quadratic_oracle,
    runge_oracle,
    sensitivity_closed_form_order2,
    stack_oracles,
    tanh_oracle,
    taylor_sensitivity,
)
from .experiments import (
    BatemanConfig,
    HyperGridConfig,
    LabelNoiseConfig,
    RunSummary,
    Toy1dConfig,
    VbswToyConfig,
    run_bateman,
    run_hyper_grid,
    run_label_noise,
    run_toy_1d,
    run_vbsw_toy,
)
from .gmm import (
    EmConfig,
    GmmModel,
    LowAcceptanceError,
    fit_weighted_em,
    gmm_pdf,
    sample_truncated,
)
from .models import (
    DivergenceError,
    Metrics,
    MlpModel,
    MlpSpec,
    TrainConfig,
    evaluate,
    feature_extract,
    fit_linear_head,
    init_params,
    lipschitz_upper_bound,
    loss_and_gradients,
    train,
)
from .tbs import FlatFunctionError, TbsConfig, baseline_augment, tbs_augment
from .vbsw import (
    KnnIndex,
    VbswConfig,
    feature_space_vbsw,
    local_variance,
    rescale_normalize,
    vbsw_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BatemanConfig",
    "BatemanParams",
    "DivergenceError",
    "DomainBox",
    "EmConfig",
    "FlatFunctionError",
    "GmmModel",
    "HyperGridConfig",
    "KnnIndex",
    "LabelNoiseConfig",
    "LabeledDataset",
    "LowAcceptanceError",
    "Metrics",
    "MlpModel",
    "MlpSpec",
    "MultiIndex",
    "OracleFn",
    "RunSummary",
    "SensitivityConfig",
    "SingularityError",
    "TbsConfig",
    "Toy1dConfig",
    "TrainConfig",
    "UnsupportedOrderError",
    "VbswConfig",
    "VbswToyConfig",
    "WeightedDataset",
    "aeg_ael",
    "analytic_solve",
    "baseline_augment",
    "bateman_oracle",
    "cubic_oracle",
    "enumerate_multi_indices",
    "euler_solve",
    "evaluate",
    "feature_extract",
    "feature_space_vbsw",
    "fit_linear_head",
    "fit_weighted_em",
    "gb_bound_1d",
    "generate_dataset",
    "gmm_pdf",
    "grid_sample",
    "init_params",
    "inject_label_noise",
    "lipschitz_upper_bound",
    "load_csv",
    "local_variance",
    "loss_and_gradients",
    "one_hot",
    "partial_derivative",
    "polynomial_oracle",
    "quadratic_oracle",
    "rescale_normalize",
    "run_bateman",
    "run_hyper_grid",
    "run_label_noise",
    "run_toy_1d",
    "run_vbsw_toy",
    "runge_oracle",
    "sample_truncated",
    "save_csv",
    "sensitivity_closed_form_order2",
    "stack_oracles",
    "tanh_oracle",
    "taylor_sensitivity",
    "tbs_augment",
    "train",
    "two_moons",
    "uniform_sample",
    "vbsw_weights",
    "with_uniform_weights",
]
