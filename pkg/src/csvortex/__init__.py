"""Numerical construction of mixed-type vortex solutions of rank-2 self-dual
Chern-Simons systems, together with the verification battery for every
numerically checkable ingredient (blow-up profiles, kernel/projection algebra,
contraction iteration, flux asymptotics)."""

__version__ = "0.1.0"

from csvortex.model import GaugeModel, cartan_pair, center_vortices, lambda_of

__all__ = ["GaugeModel", "cartan_pair", "center_vortices", "lambda_of", "__version__"]
