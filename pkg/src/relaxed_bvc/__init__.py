"""Relaxed Byzantine vector consensus: geometry, protocols and bound experiments."""
from .deltastar import DeltaStarResult, delta_star
from .errors import ConfigurationError, DegenerateSimplexError, SolverError, UsageError
from .geometry import affine_rank, hull_distance, hull_membership
from .hulls import PLAIN, DeltaRelaxed, KRelaxed, Plain, incenter, inradius, psi_find_point

__version__ = "0.1.0"

__all__ = [
    "DeltaStarResult", "delta_star",
    "ConfigurationError", "DegenerateSimplexError", "SolverError", "UsageError",
    "affine_rank", "hull_distance", "hull_membership",
    "PLAIN", "DeltaRelaxed", "KRelaxed", "Plain", "incenter", "inradius", "psi_find_point",
]
