"""Weak mean-shift detection in CHARN time series.

A likelihood-ratio statistic for local mean shifts, its asymptotic power,
and detection strategies that maximise the estimated power over candidate
break locations.
"""

from .baselines import CusumOutcome, cusum_statistic
from .detect import (
    CandidateSets,
    DetectionConfig,
    DetectionResult,
    build_candidates,
    derive_priors,
    detect,
    detect_s1,
    detect_s2,
    detect_s3,
    s1_scan,
)
from .errors import (
    CharnError,
    ConfigError,
    DegenerateSampleError,
    DegenerateVarianceError,
    DomainError,
    EstimationError,
    LogDomainError,
    ParseError,
    ReplicationError,
    SimulationDivergenceError,
    UnusableScoreError,
    VolatilityFloorError,
)
from .estimation import FitResult, fit_gamma0, fit_psi, neg_loglik
from .io import detrend_ma, load_csv, save_csv
from .lr_test import TestOutcome, central_statistic, loglik_ratio, mu_hat, test_statistic, z_alpha
from .model_core import (
    CharnSpec,
    LagState,
    MeanShiftParams,
    Segmentation,
    TimeSeries,
    evaluate,
    omega,
    residuals,
    simulate,
    simulate_with_init,
)
from .montecarlo import (
    LanSummary,
    LocationSummary,
    RateResult,
    Scenario,
    empirical_size_power,
    lan_diagnostic,
    location_estimate_mean,
    mix_seed,
    summarize_locations,
)
from .noise import GaussianNoise, KdeConfig, KernelDensityNoise, ShiftedExponentialNoise, kde_fit
from .power import (
    PowerEvaluator,
    PowerResult,
    PowerSurface,
    estimate_beta,
    estimated_power,
    power_surface,
    theoretical_power,
)

__version__ = "0.1.0"
