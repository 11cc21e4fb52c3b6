"""Distance covariance, distance correlation and tests of independence."""
from .core import (
    CenteredMatrix,
    DCovSummary,
    DegenerateDataError,
    InternalConsistencyError,
    affine_rescale,
    dcov_stats,
    dcov_via_T,
    distance_stats,
    double_center,
    normalized_statistic,
    rank_transform,
)
from .inference import (
    CriticalTable,
    TestReport,
    chi2_bound_test,
    load_critical_table,
    permutation_test,
    rank_test,
)
from .resampling import JackknifeReport, influence, influence_order, jackknife, studentize
from .sample import DataError, DistanceMatrix, Sample, distance_matrix, load_csv
from .theory import (
    BrownianKernel,
    BvnCurve,
    brownian_cov_mc,
    bvn_curve,
    bvn_dcor,
    constant_C,
    gp_sample,
    pairwise_expectation_form,
)

__version__ = "0.1.0"
