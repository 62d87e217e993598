"""Joint post-data sampling for the bivariate normal: Bayesian conditionals for the
means and variances, a fiducial conditional for the correlation."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    REFERENCE_PRIOR,
    REFERENCE_SUMMARY,
    ModelParams,
    Observation,
    ObservationSet,
    PriorSpec,
    SufficientStats,
    compute_sufficient_stats,
    synthesize_matching_dataset,
)
from .analysis import gelman_rubin, summarize  # noqa: E402
from .sampler import SamplerConfig, ScanPolicy, TruncPolicy, run_chain, run_multi_chain  # noqa: E402

__all__ = [
    "REFERENCE_PRIOR",
    "REFERENCE_SUMMARY",
    "ModelParams",
    "Observation",
    "ObservationSet",
    "PriorSpec",
    "SamplerConfig",
    "ScanPolicy",
    "SufficientStats",
    "TruncPolicy",
    "compute_sufficient_stats",
    "gelman_rubin",
    "run_chain",
    "run_multi_chain",
    "summarize",
    "synthesize_matching_dataset",
]
