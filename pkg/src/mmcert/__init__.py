"""Certified robustness for multi-modal ensembles built on independent per-modality subsampling."""

__version__ = "0.1.0"

from .baseline import CombinedSpec, ra_alpha_star, ra_certify, ra_subsample
from .classification import (
    CertificateDecision,
    certified_radius_curve,
    certify,
    certify_exact,
    certify_fast,
    ensemble_predict,
)
from .combinatorics import ATTACKS, CertTerms, ModalitySpec, binom, cert_terms
from .confidence import ProbBoundPair, VoteCounts, beta_quantile, clopper_pearson
from .datafiles import RunConfig, load_config
from .errors import ConfigError, DataError, EnumerationLimitError, InfeasibleBudgetError, MMCertError, NumericError
from .sampling import monte_carlo_votes, subsample
from .segmentation import (
    ElementVotes,
    SegmentationTally,
    alpha_star,
    certified_metrics,
    certify_elements,
    holm_select,
    tally,
)

__all__ = [
    "__version__",
    "ATTACKS", "ModalitySpec", "CertTerms", "binom", "cert_terms",
    "VoteCounts", "ProbBoundPair", "beta_quantile", "clopper_pearson",
    "CertificateDecision", "certify", "certify_exact", "certify_fast", "certified_radius_curve", "ensemble_predict",
    "ElementVotes", "SegmentationTally", "alpha_star", "holm_select", "certify_elements", "tally", "certified_metrics",
    "subsample", "monte_carlo_votes",
    "CombinedSpec", "ra_certify", "ra_alpha_star", "ra_subsample",
    "RunConfig", "load_config",
    "MMCertError", "ConfigError", "InfeasibleBudgetError", "DataError", "NumericError", "EnumerationLimitError",
]
