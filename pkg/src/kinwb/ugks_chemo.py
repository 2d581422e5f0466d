"""Finite-volume prediction step for the chemotaxis and neutron models.

The interface flux integrates the local integral solution of the kinetic
equation over one time step, which yields per-ordinate coefficients A, B, C
multiplying the upwind value, the weighted interface moment and its
half-cell slopes.  The neutron model reuses the same machinery with the
constant rate ``sigma_t`` in place of ``1 + eps*phi`` and explicit
absorption/source terms.

Array shapes: ``f[i, m]`` over ``n_cells`` cells, ``f_ext`` with one ghost
row per side, per-edge arrays of length ``n_cells + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kinwb.expcoeffs import bracket_g, bracket_h, one_minus_exp
from kinwb.grid import Mesh1D, Quadrature
from kinwb.models import (
    SPECULAR,
    V_MEASURE,
    BoundaryCondition,
    ChemotaxisParams,
    NeutronParams,
    apply_boundary,
    chemo_rate,
    interface_grad_S,
    tumble_phi,
)


class CoefficientError(ValueError):
    """Raised when ``1 + eps*phi <= 0`` (model validity violated)."""


@dataclass(frozen=True)
class ChemoFluxCoeffs:
    """Flux coefficients, broadcastable against ``(edge, ordinate)`` data."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class InterfaceMoments:
    """Upwind interface moments of the weighted distribution.

    ``t1_left``/``t1_right`` are the adjacent-cell moments evaluated with the
    same edge rate, so ``dl * dx/2 == t1_half - t1_left`` exactly.
    """

    t1_half: np.ndarray
    t1_left: np.ndarray
    t1_right: np.ndarray
    dl: np.ndarray
    dr: np.ndarray


def _coeffs_from_rate(lam, eps: float, dt: float) -> ChemoFluxCoeffs:
    """A, B, C for relaxation rate ``lam`` (cancellation-safe)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0.0):
        raise CoefficientError(
            f"nonpositive relaxation rate (min {lam.min():.3e}); "
            "requires eps*chi_s < 1"
        )
    z = lam * dt / (eps * eps)
    a = eps * one_minus_exp(z) / (dt * lam)
    b = bracket_h(z) / (eps * lam)
    c = bracket_g(z) / (lam * lam)
    return ChemoFluxCoeffs(a=a, b=b, c=c)


def ugks_coeffs_chemo(mu, eps: float, dt: float, sigma_half,
                      p: ChemotaxisParams) -> ChemoFluxCoeffs:
    """Coefficients for the chemotaxis flux at one edge (or many)."""
    return _coeffs_from_rate(chemo_rate(mu, eps, sigma_half, p), eps, dt)


def ugks_coeffs_neutron(eps: float, dt: float,
                        sigma_t: float) -> ChemoFluxCoeffs:
    """Coefficients for the neutron flux (rate ``sigma_t``, scalar)."""
    return _coeffs_from_rate(np.asarray(sigma_t, dtype=float), eps, dt)


def interface_moments(f_ext: np.ndarray, quad: Quadrature, rate: np.ndarray,
                      dx: float) -> InterfaceMoments:
    """Upwind interface moments and their half-cell slopes.

    ``rate`` has shape ``(n_edges, n_ordinates)`` (or is broadcastable to
    it) and carries the ``1 + eps*phi`` weight of the moment operator.
    """
    w = quad.w
    pos = quad.pos
    left = f_ext[:-1]   # cell left of each edge
    right = f_ext[1:]
    wr = w * np.broadcast_to(rate, left.shape)
    t1_left = 0.5 * np.sum(wr * left, axis=1)
    t1_right = 0.5 * np.sum(wr * right, axis=1)
    upwind = np.where(pos, left, right)
    t1_half = 0.5 * np.sum(wr * upwind, axis=1)
    half_dx = 0.5 * dx
    return InterfaceMoments(
        t1_half=t1_half,
        t1_left=t1_left,
        t1_right=t1_right,
        dl=(t1_half - t1_left) / half_dx,
        dr=(t1_right - t1_half) / half_dx,
    )


def micro_flux_chemo(f_ext: np.ndarray, moments: InterfaceMoments,
                     coeffs: ChemoFluxCoeffs, quad: Quadrature) -> np.ndarray:
    """Per-ordinate edge flux ``Phi[e, m]``."""
    mu = quad.mu
    pos = quad.pos
    f_up = np.where(pos, f_ext[:-1], f_ext[1:])
    delta = np.where(pos, moments.dl[:, None], moments.dr[:, None])
    return (coeffs.a * mu * f_up
            + coeffs.b * mu * moments.t1_half[:, None]
            + coeffs.c * mu * mu * delta)


def macro_flux_chemo(f_ext: np.ndarray, moments: InterfaceMoments,
                     coeffs: ChemoFluxCoeffs, quad: Quadrature) -> np.ndarray:
    """Ordinate-integrated edge flux ``F[e]``."""
    w, mu, pos, neg = quad.w, quad.mu, quad.pos, quad.neg
    shape = f_ext[:-1].shape
    a = np.broadcast_to(coeffs.a, shape)
    b = np.broadcast_to(coeffs.b, shape)
    c = np.broadcast_to(coeffs.c, shape)
    upwind_term = (np.sum((w * mu * a * f_ext[1:])[:, neg], axis=1)
                   + np.sum((w * mu * a * f_ext[:-1])[:, pos], axis=1))
    b_term = moments.t1_half * np.sum(w * mu * b, axis=1)
    c_neg = np.sum((w * mu * mu * c)[:, neg], axis=1)
    c_pos = np.sum((w * mu * mu * c)[:, pos], axis=1)
    return (upwind_term + b_term
            + moments.dr * c_neg + moments.dl * c_pos) / V_MEASURE


def flux_sigma_edges(s: np.ndarray, mesh: Mesh1D,
                     bc: BoundaryCondition) -> np.ndarray:
    """Edge gradients of S for the flux; zero at specular walls.

    A specular wall is a mirror plane, so the odd extension of S forces a
    vanishing gradient there; this is also what makes the discrete boundary
    flux vanish exactly.
    """
    sigma = interface_grad_S(s, mesh)
    if bc.left == SPECULAR:
        sigma[0] = 0.0
    if bc.right == SPECULAR:
        sigma[-1] = 0.0
    return sigma


def tumble_term(f: np.ndarray, sigma_cell: np.ndarray, quad: Quadrature,
                p: ChemotaxisParams) -> np.ndarray:
    """Explicit reorientation term of the distribution update.

    ``sigma_cell[i]`` is the right-edge gradient attached to cell ``i``.
    """
    phi = tumble_phi(np.multiply.outer(sigma_cell, quad.mu), p)
    gain = 0.5 * np.sum(quad.w * phi * f, axis=1)
    return gain[:, None] - phi * f


def predict_chemo(f: np.ndarray, s: np.ndarray, dt: float,
                  p: ChemotaxisParams, quad: Quadrature, mesh: Mesh1D,
                  bc: BoundaryCondition):
    """One prediction step; returns ``(rho_new, f_new)``.

    Density update by conservative flux differencing; the stiff relaxation
    in the distribution update is implicit and solved pointwise.
    """
    eps = p.eps
    sigma = flux_sigma_edges(s, mesh, bc)
    ghost_l, ghost_r = apply_boundary(f, bc, quad)
    f_ext = np.vstack([ghost_l, f, ghost_r])
    rate = chemo_rate(quad.mu, eps, sigma, p)
    coeffs = _coeffs_from_rate(rate, eps, dt)
    moments = interface_moments(f_ext, quad, rate, mesh.dx)
    phi_flux = micro_flux_chemo(f_ext, moments, coeffs, quad)
    f_flux = macro_flux_chemo(f_ext, moments, coeffs, quad)

    rho = 0.5 * np.sum(quad.w * f, axis=1)
    rho_new = rho - (dt / mesh.dx) * np.diff(f_flux)

    tumble = tumble_term(f, sigma[1:], quad, p)
    r = dt / (eps * eps)
    f_new = (f - (dt / mesh.dx) * np.diff(phi_flux, axis=0)
             + r * rho_new[:, None] + (dt / eps) * tumble) / (1.0 + r)
    return rho_new, f_new


def predict_neutron(f: np.ndarray, dt: float, p: NeutronParams,
                    quad: Quadrature, mesh: Mesh1D, bc: BoundaryCondition):
    """One prediction step for the neutron model; returns ``(rho_new, f_new)``.

    Scattering at rate ``sigma_t`` is implicit; absorption and the isotropic
    source are explicit.
    """
    eps = p.eps
    ghost_l, ghost_r = apply_boundary(f, bc, quad)
    f_ext = np.vstack([ghost_l, f, ghost_r])
    coeffs = _coeffs_from_rate(np.asarray(p.sigma_t, dtype=float), eps, dt)
    rate = np.full((mesh.n_cells + 1, quad.n_ordinates), p.sigma_t)
    moments = interface_moments(f_ext, quad, rate, mesh.dx)
    phi_flux = micro_flux_chemo(f_ext, moments, coeffs, quad)
    f_flux = macro_flux_chemo(f_ext, moments, coeffs, quad)

    rho = 0.5 * np.sum(quad.w * f, axis=1)
    q = p.source(mesh.centers)
    balance = q - p.sigma_a * rho
    rho_new = rho - (dt / mesh.dx) * np.diff(f_flux) + dt * balance

    r = p.sigma_t * dt / (eps * eps)
    f_new = (f - (dt / mesh.dx) * np.diff(phi_flux, axis=0)
             + r * rho_new[:, None] + dt * balance[:, None]) / (1.0 + r)
    return rho_new, f_new
