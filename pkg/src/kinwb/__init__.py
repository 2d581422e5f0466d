"""Well-balanced, asymptotic-preserving solvers for 1D kinetic transport.

The package couples a finite-volume prediction step (unified-gas-kinetic
fluxes) with per-cell steady boundary-value problems built from elementary
exponential/polynomial modes of the steady transport operator.  Three models
are supported: neutron transport, kinetic chemotaxis and grey radiative
transfer, together with their macroscopic limit solvers.
"""

from kinwb.grid import Mesh1D, Quadrature, gauss_legendre_quadrature, uniform_mesh

__version__ = "0.1.0"

__all__ = [
    "Mesh1D",
    "Quadrature",
    "gauss_legendre_quadrature",
    "uniform_mesh",
    "__version__",
]
