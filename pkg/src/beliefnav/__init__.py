"""Belief-space navigation toolkit.

Exact collision probabilities between Gaussian-uncertain circular bodies,
EKF state estimation that accounts for uncertain landmark locations, and
eps-safe planning over probabilistic roadmaps.
"""

from .linalg import Gaussian, gaussian_difference, gaussian_pdf, mahalanobis_sq, sym_eig, sym_sqrt
from .quadform import (
    QuadFormCanonical,
    SeriesResult,
    canonicalize,
    cdf,
    pdf,
    series_coefficients,
    terms_needed,
    truncation_bound,
)

__version__ = "0.1.0"

__all__ = [
    "Gaussian",
    "QuadFormCanonical",
    "SeriesResult",
    "canonicalize",
    "cdf",
    "gaussian_difference",
    "gaussian_pdf",
    "mahalanobis_sq",
    "pdf",
    "series_coefficients",
    "sym_eig",
    "sym_sqrt",
    "terms_needed",
    "truncation_bound",
    "__version__",
]
