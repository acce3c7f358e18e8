"""Density estimation for mixed compositional and interval-bounded data.

Multivariate Bernstein polynomial mixtures with a Dirichlet process prior on
the mixing measure: domain handling, kernel math, the polynomial operators,
the truncated mixture model, a blocked Gibbs sampler, posterior estimators,
simulation benchmarks, and a CLI.
"""

from .domain import BlockIndex, Dataset, DomainSpec, MixedPoint
from .errors import DmbppError

__all__ = ["BlockIndex", "Dataset", "DomainSpec", "MixedPoint", "DmbppError"]
