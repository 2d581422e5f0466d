"""Macroscopic reference solvers for the three vanishing mean-free-path limits.

These provide the comparison curves for the kinetic runs: a drift-diffusion
(Keller-Segel type) step for chemotaxis, a nonlinear ``T^4`` diffusion step
for radiative transfer, and a linear diffusion step for neutron transport.
The drift stencil of the chemotaxis limit matches the one that emerges from
the kinetic flux expansion (arithmetic edge averaging of the density), so
the asymptotic cross-checks are identities rather than approximations.
"""

from __future__ import annotations

import numpy as np

from kinwb.grid import Mesh1D, Quadrature
from kinwb.linalg import solve_tridiagonal
from kinwb.models import (
    V_MEASURE,
    BoundaryCondition,
    ChemotaxisParams,
    NeutronParams,
    RadiativeParams,
    interface_grad_S,
    tumble_phi,
    update_chemical_field,
)


class LimitSolverError(RuntimeError):
    """Stability or positivity violation in a limit solver."""


def drift_velocity(sigma_edges: np.ndarray, quad: Quadrature,
                   p: ChemotaxisParams) -> np.ndarray:
    """Edge drift ``u = (1/|V|) sum_m w_m mu_m phi(mu_m sigma)``."""
    phi = tumble_phi(np.multiply.outer(sigma_edges, quad.mu), p)
    return np.sum(quad.w * quad.mu * phi, axis=-1) / V_MEASURE


def keller_segel_step(rho: np.ndarray, s: np.ndarray, dt: float,
                      p: ChemotaxisParams, quad: Quadrature, mesh: Mesh1D,
                      bc: BoundaryCondition):
    """One explicit drift-diffusion step plus the implicit chemical update.

    No-flux walls; requires ``dt <= dx^2`` (diffusion coefficient 1/3 plus
    drift leave margin).  Returns ``(rho_new, s_new)``.
    """
    dx = mesh.dx
    if dt > dx * dx * (1.0 + 1e-12):
        raise LimitSolverError(f"dt = {dt} violates dt <= dx^2 = {dx*dx}")
    sigma = interface_grad_S(s, mesh)
    u = drift_velocity(sigma, quad, p)
    flux = np.zeros(mesh.n_cells + 1)
    flux[1:-1] = (u[1:-1] * 0.5 * (rho[:-1] + rho[1:])
                  + (rho[1:] - rho[:-1]) / (3.0 * dx))
    rho_new = rho + (dt / dx) * np.diff(flux)
    s_new = update_chemical_field(s, rho_new, dt, p, bc, mesh)
    return rho_new, s_new


def nonlinear_diffusion_step(t_field: np.ndarray, dt: float,
                             p: RadiativeParams, q_moment: np.ndarray,
                             mesh: Mesh1D, bc: BoundaryCondition,
                             n_corrections: int = 40,
                             dirichlet_left: float | None = None) -> np.ndarray:
    """Semi-implicit step of ``a dT^4/dt + C_v dT/dt = d/dx(ac/(3 sigma) dT^4/dx) + <q>``.

    The step is implicit in ``u = T^4`` (the diffusion matrix is then exact
    and constant-coefficient); only the heat-capacity term is linearized,
    ``T ~ T_* + (u - T_*^4)/(4 T_*^3)``, with the coefficient lagged at the
    latest iterate and corrected to a fixed point.  ``dirichlet_left`` pins
    the wall temperature on the left (ghost elimination); walls default to
    zero flux.
    """
    if np.any(t_field < 0):
        raise LimitSolverError("temperature must be nonnegative")
    dx = mesh.dx
    n = t_field.size
    kappa = p.a * p.c / (3.0 * p.sigma)
    k = kappa / (dx * dx)
    u_old = t_field ** 4
    diag = np.full(n, p.a / dt)
    lower = np.full(n, -k)
    upper = np.full(n, -k)
    diag[:-1] += k
    diag[1:] += k
    if dirichlet_left is not None:
        diag[0] += 2.0 * k
    t_iter = t_field.copy()
    for it in range(max(2, n_corrections)):
        t3 = np.maximum(t_iter, 1e-300) ** 3
        lag = p.c_v / (4.0 * t3 * dt)
        rhs = (p.a * u_old / dt + q_moment
               + p.c_v * (t_field - 0.75 * t_iter) / dt)
        if dirichlet_left is not None:
            rhs = rhs.copy()
            rhs[0] += 2.0 * k * dirichlet_left ** 4
        u_new = solve_tridiagonal(lower, diag + lag, upper, rhs)
        if np.any(u_new < 0):
            raise LimitSolverError(
                f"negative radiative energy (min {u_new.min():.3e}) in the "
                "nonlinear diffusion step")
        t_new = u_new ** 0.25
        change = np.max(np.abs(t_new - t_iter))
        t_iter = t_new
        if it >= 1 and change <= 1e-12 * (1.0 + np.max(t_new)):
            return t_iter
    raise LimitSolverError(
        f"nonlinear diffusion correction stalled (last change {change:.3e})")


def nonlinear_diffusion_residual(t_new: np.ndarray, t_old: np.ndarray,
                                 dt: float, p: RadiativeParams,
                                 q_moment: np.ndarray, mesh: Mesh1D,
                                 dirichlet_left: float | None = None) -> float:
    """Max residual of the nonlinear update (diagnostic for the fixed point)."""
    dx = mesh.dx
    kappa = p.a * p.c / (3.0 * p.sigma)
    t4 = t_new ** 4
    flux = np.zeros(t_new.size + 1)
    flux[1:-1] = kappa * (t4[1:] - t4[:-1]) / dx
    if dirichlet_left is not None:
        flux[0] = kappa * (t4[0] - (2.0 * dirichlet_left ** 4 - t4[0])) / dx
    res = (p.a * (t4 - t_old ** 4) / dt + p.c_v * (t_new - t_old) / dt
           - np.diff(flux) / dx - q_moment)
    return float(np.max(np.abs(res)))


def neutron_diffusion_step(rho: np.ndarray, dt: float, p: NeutronParams,
                           mesh: Mesh1D) -> np.ndarray:
    """Explicit step of ``drho/dt = d/dx(rho_x/(3 sigma_t)) - sigma_a rho + q``.

    Zero-flux walls; requires ``dt <= (3 sigma_t / 2) dx^2``.
    """
    dx = mesh.dx
    limit = 1.5 * p.sigma_t * dx * dx
    if dt > limit * (1.0 + 1e-12):
        raise LimitSolverError(f"dt = {dt} violates dt <= {limit}")
    flux = np.zeros(rho.size + 1)
    flux[1:-1] = (rho[1:] - rho[:-1]) / (3.0 * p.sigma_t * dx)
    q = p.source(mesh.centers)
    return rho + dt * (np.diff(flux) / dx - p.sigma_a * rho + q)
