"""Model parameters, boundary data, sources and the chemical-field solver.

All three kinetic models share the velocity interval ``V = [-1, 1]`` with
``|V| = 2``.  Distribution arrays are laid out ``f[i, m]`` with ``i`` the
cell index and ``m`` the ordinate position (ascending ``mu``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from kinwb.grid import Mesh1D
from kinwb.linalg import solve_tridiagonal

V_MEASURE = 2.0  # |V| for V = [-1, 1]

SPECULAR = "specular"
INFLOW = "inflow"


@dataclass(frozen=True)
class ChemotaxisParams:
    """Constants of the run-and-tumble model and its chemical field."""

    chi_s: float = 1.0
    delta: float = 1.0
    d_s: float = 15.0      # diffusivity of the chemical substance
    alpha: float = 3.0
    beta: float = 60.0
    eps: float = 1.0

    def __post_init__(self):
        for name in ("chi_s", "delta", "d_s", "alpha", "beta", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.eps > 1.0:
            raise ValueError("eps must lie in (0, 1]")


@dataclass(frozen=True)
class RadiativeParams:
    """Grey radiative transfer constants."""

    sigma: float = 1.0
    a: float = 0.01372
    c: float = 29.98
    c_v: float = 0.01
    eps: float = 1.0

    def __post_init__(self):
        for name in ("sigma", "a", "c", "c_v", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class NeutronParams:
    """Neutron transport constants; ``source`` is an isotropic q(x)."""

    sigma_t: float = 1.0
    sigma_a: float = 0.0
    source: Callable[[np.ndarray], np.ndarray] = field(
        default=lambda x: np.zeros_like(x))
    eps: float = 1.0

    def __post_init__(self):
        if self.sigma_t <= 0:
            raise ValueError("sigma_t must be positive")
        if self.sigma_a < 0:
            raise ValueError("sigma_a must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class BoundaryCondition:
    """Per-side boundary data.

    ``left``/``right`` are ``"specular"`` or ``"inflow"``.  For an inflow
    side the per-ordinate data array (length 2N) must be given; only the
    entries at inflow ordinates are used (``mu > 0`` on the left, ``mu < 0``
    on the right).  ``s_left``/``s_right`` are the Dirichlet values of the
    chemical field.
    """

    left: str = SPECULAR
    right: str = SPECULAR
    inflow_left: Optional[np.ndarray] = None
    inflow_right: Optional[np.ndarray] = None
    s_left: float = 0.0
    s_right: float = 0.0

    def __post_init__(self):
        for side, data in (("left", self.inflow_left),
                           ("right", self.inflow_right)):
            kind = getattr(self, side)
            if kind not in (SPECULAR, INFLOW):
                raise ValueError(f"unknown boundary kind {kind!r}")
            if kind == INFLOW and data is None:
                raise ValueError(f"{side} inflow requires per-ordinate data")


def tumble_phi(u, p: ChemotaxisParams):
    """Tumbling bias ``phi(u) = -chi_s * tanh(u / delta)``."""
    return -p.chi_s * np.tanh(np.asarray(u, dtype=float) / p.delta)


def chemo_rate(mu, eps: float, sigma_half, p: ChemotaxisParams):
    """Relaxation rate ``1 + eps * phi(mu * sigma_half)``.

    ``sigma_half`` may be scalar or an edge/cell array; the result broadcasts
    as ``outer(sigma_half, mu)``.
    """
    return 1.0 + eps * tumble_phi(np.multiply.outer(sigma_half, mu), p)


def radiative_source(x, mu, sigma: float):
    """Angular source ``q(x, v) = v|v| + sigma x (|v| - 1/2)``."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return mu * np.abs(mu) + sigma * x * (np.abs(mu) - 0.5)


def chemo_initial_f(x, v):
    """Initial distribution, product of Gaussians in x and in v.

    Implemented exactly as stated: note that the x-factor
    ``exp(-10(x-0.65)^2 - 10(x+0.65)^2)`` is a single Gaussian centered at 0
    with amplitude ``exp(-8.45)``, so the overall scale is ~5e-8.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    gx = np.exp(-10.0 * (x - 0.65) ** 2 - 10.0 * (x + 0.65) ** 2)
    gv = np.exp(-20.0 * (v - 0.5) ** 2 - 20.0 * (v + 0.5) ** 2)
    return 5.0 * gx * gv


def chemo_initial_f_bumps(x, v):
    """Two-bump variant: sum of Gaussians at x = +-0.65, v = +-0.5.

    O(1) initial data used by the figure-scale studies; the product form
    above stays the default.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    gx = np.exp(-10.0 * (x - 0.65) ** 2) + np.exp(-10.0 * (x + 0.65) ** 2)
    gv = np.exp(-20.0 * (v - 0.5) ** 2) + np.exp(-20.0 * (v + 0.5) ** 2)
    return 5.0 * gx * gv


def _s_system(dt_inv: float, rho: np.ndarray, s_old: Optional[np.ndarray],
              p: ChemotaxisParams, bc: BoundaryCondition, dx: float):
    """Assemble the backward-Euler rows for the chemical field.

    ``dt_inv = 1/dt`` (0 recovers the steady equation).  Dirichlet wall
    values enter through ghost elimination ``S_ghost = 2 S_b - S_edge``.
    """
    n = rho.size
    k = p.d_s / (dx * dx)
    diag = np.full(n, dt_inv + p.alpha + 2.0 * k)
    lower = np.full(n, -k)
    upper = np.full(n, -k)
    rhs = p.beta * rho + (dt_inv * s_old if s_old is not None else 0.0)
    rhs = np.array(rhs, dtype=float)
    diag[0] += k          # ghost elimination adds one k to the diagonal
    diag[-1] += k
    rhs[0] += 2.0 * k * bc.s_left
    rhs[-1] += 2.0 * k * bc.s_right
    return lower, diag, upper, rhs


def update_chemical_field(s: np.ndarray, rho: np.ndarray, dt: float,
                          p: ChemotaxisParams, bc: BoundaryCondition,
                          mesh: Mesh1D) -> np.ndarray:
    """One backward-Euler step of ``dS/dt - d_s Lap(S) + alpha S = beta rho``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if s.shape != rho.shape or s.size != mesh.n_cells:
        raise ValueError("S and rho must share the mesh")
    lower, diag, upper, rhs = _s_system(1.0 / dt, rho, s, p, bc, mesh.dx)
    return solve_tridiagonal(lower, diag, upper, rhs)


def steady_chemical_field(rho: np.ndarray, p: ChemotaxisParams,
                          bc: BoundaryCondition, mesh: Mesh1D) -> np.ndarray:
    """Solve ``-d_s Lap(S) + alpha S = beta rho`` (used for the initial S)."""
    lower, diag, upper, rhs = _s_system(0.0, rho, None, p, bc, mesh.dx)
    return solve_tridiagonal(lower, diag, upper, rhs)


def apply_boundary(f: np.ndarray, bc: BoundaryCondition, quad) -> tuple:
    """Ghost rows for the two domain boundaries.

    Specular walls mirror the adjacent cell in ``mu``; inflow walls take the
    prescribed data at inflow ordinates and copy the adjacent cell at
    outflow ordinates (those entries never feed an upwind flux).
    """
    if bc.left == SPECULAR:
        ghost_left = f[0][::-1].copy()
    else:
        ghost_left = f[0].copy()
        ghost_left[quad.pos] = np.asarray(bc.inflow_left)[quad.pos]
    if bc.right == SPECULAR:
        ghost_right = f[-1][::-1].copy()
    else:
        ghost_right = f[-1].copy()
        ghost_right[quad.neg] = np.asarray(bc.inflow_right)[quad.neg]
    return ghost_left, ghost_right


def interface_grad_S(s: np.ndarray, mesh: Mesh1D) -> np.ndarray:
    """Edge gradients ``sigma_{i+1/2} = (S_{i+1} - S_i)/dx``.

    Returns an array of length ``n_cells + 1``; the two domain-edge entries
    copy the nearest interior value.
    """
    n = s.size
    sigma = np.empty(n + 1)
    sigma[1:n] = np.diff(s) / mesh.dx
    sigma[0] = sigma[1]
    sigma[n] = sigma[n - 1]
    return sigma


def time_step_size(eps: float, dx: float, model: str,
                   c: float | None = None) -> float:
    """Stability-driven time step.

    chemotaxis/neutron: ``dt = dx^2`` if ``eps < dx^2`` else ``eps*dx``;
    radiative: ``dt = 0.95 dx^2/c`` if ``eps < 0.95 dx/c`` else
    ``0.95 eps dx/c``.
    """
    if eps <= 0 or dx <= 0:
        raise ValueError("eps and dx must be positive")
    if model in ("chemotaxis", "neutron"):
        return dx * dx if eps < dx * dx else eps * dx
    if model == "radiative":
        if c is None or c <= 0:
            raise ValueError("radiative time step needs the light speed c")
        return 0.95 * dx * dx / c if eps < 0.95 * dx / c else 0.95 * eps * dx / c
    raise ValueError(f"unknown model {model!r}")
