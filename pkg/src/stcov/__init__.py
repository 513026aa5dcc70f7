"""Space-time covariance estimation with asymptotic joint-normality diagnostics."""

from .asymcov import (
    CrossCovModel,
    SigmaMatrix,
    fourth_cumulant,
    gaussian_fourth_moment,
    pair_product_cov,
    sigma_block_subsample,
    sigma_kernel_theoretical,
    sigma_lattice_plugin,
    sigma_station_gaussian,
)
from .datasets import (
    FULL_3D,
    SPACE_TIME,
    IsotropicLag,
    LagSet,
    LatticeDataset,
    PointDataset,
    RegionSpec,
    SpaceTimeLag,
    StationDataset,
    lattice_pair_set,
    load_point_csv,
    load_station_csv,
    save_point_csv,
    save_station_csv,
    spatial_pairs,
    station_lag_pairs,
    station_to_lattice,
)
from .diagnostics import ReplicateMatrix, mardia_kurtosis, mardia_skewness, replicate_cov
from .estimators import (
    CovEstimate,
    KernelSpec,
    default_bandwidth,
    estimate_intensity,
    kernel_cov_r3,
    kernel_cov_st,
    mean_correct,
    moment_cov_lattice,
    moment_cov_station,
)
from .harness import (
    ExperimentConfig,
    Report,
    emit_report,
    run_kernel_consistency,
    run_table1,
    station_ghat_replicates,
)
from .simulate import (
    GaussianFieldSpec,
    VarModelSpec,
    build_var_model,
    cross_cov,
    sample_poisson,
    simulate_gaussian_field,
    simulate_separable_field_st,
    simulate_var,
    simulate_var_batch,
    stationary_cov,
)

__version__ = "0.1.0"
