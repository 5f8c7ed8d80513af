"""Monte-Carlo checks of boundary estimates for Brownian paths in constrained domains."""

from .brownian import FirstPassageLaw, sample_path, sample_paths
from .capacity import RieszKernel, capacity_value, minimize_energy, riesz_energy
from .geometry import Domain, exterior_ball_radius, parse_domain, singular_set
from .reflect import DiscretePathSpace, simulate_rou

__version__ = "0.1.0"

__all__ = [
    "Domain", "parse_domain", "exterior_ball_radius", "singular_set",
    "FirstPassageLaw", "sample_path", "sample_paths",
    "RieszKernel", "riesz_energy", "minimize_energy", "capacity_value",
    "DiscretePathSpace", "simulate_rou",
]
