"""Small-area estimation of survey domain proportions.

Direct (Hajek / Horvitz-Thompson), regression-synthetic, EBLUP and three
design-based composite estimators with their MSE estimators, plus a
Labor-Force-Survey style Monte Carlo harness measuring estimator accuracy.
"""

from .areamodels import (
    AreaLevelData,
    FhFit,
    ModelError,
    MomentConvergenceError,
    eblup,
    eblup_mse,
    fh_fit,
    fit_sigma_v2_moments,
    gls_beta,
    regression_synthetic,
)
from .bootstrap import (
    BootstrapConfig,
    BootstrapVariance,
    ReplicateWeightSet,
    bootstrap_variance,
    make_replicate_weights,
)
from .composites import (
    CompositeInputs,
    OracleComposite,
    SsdSolution,
    adaptive_ssd,
    linear_combination,
    mse_composition,
    mse_difference,
    optimal_lambda,
    oracle_optimal_composite,
    risk_curve,
    ssd_weight,
    variance_ratio_composite,
)
from .direct import (
    DirectEstimates,
    EmptyDomainError,
    domain_direct_estimates,
    hajek_proportion,
    hajek_variance_general,
    hajek_variance_simplified,
    ht_proportion,
)
from .harness import (
    ReplicateSet,
    SimConfig,
    SimulationResult,
    expected_domain_sample_sizes,
    run_simulation,
)
from .pipeline import ESTIMATOR_TAGS, SampleEstimates, compute_sample_estimates
from .population import (
    DomainFrame,
    GeneratorConfig,
    Population,
    PopulationDataError,
    STUDY_VARIABLES,
    domain_truths,
    generate_synthetic_population,
    load_population,
    write_population,
)
from .reporting import (
    AccuracyReport,
    DomainClasses,
    accuracy,
    classify_domains,
    read_records,
    render_report,
    write_records,
    write_simulation_outputs,
)
from .sampling import (
    DesignError,
    EnumeratedDesign,
    IndependentPairwise,
    Sample,
    SampleDesignConfig,
    draw_sample,
    inclusion_probabilities,
    read_sample,
    write_sample,
)
from .smoothing import (
    GvfFit,
    SmoothingError,
    VarianceTriple,
    combine_variances,
    gvf_fit,
    gvf_predict,
)

__version__ = "0.1.0"
