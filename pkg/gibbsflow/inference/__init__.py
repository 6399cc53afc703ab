from .sampler import SamplerConfig, PosteriorSample, mh_sample, mh_sample_batch
from .diagnostics import EffectiveSampleSize, effective_sample_size
from .mestimator import (
    OptimizerConfig,
    MEstimate,
    minimize_risk,
    bootstrap_estimates,
    bias_corrected_estimate,
    corrected_mestimate,
)
from .credible import (
    CredibleInterval,
    CoverageMode,
    quantile,
    equal_tailed_interval,
    marginal_intervals,
    coverage_event,
)
from .gps import (
    GpsConfig,
    GpsResult,
    bootstrap_resample,
    empirical_coverage,
    coverage_curve,
    sa_step,
    stochastic_approximation,
    gps_calibrate,
)
