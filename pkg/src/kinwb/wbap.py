"""Combined two-stage step: prediction, per-cell steady problems, update.

One step advances the state by (a) a prediction step, (b) steady
boundary-value problems on every interior cell ``[x_i, x_{i+1}]`` fed with
the blend ``(1-alpha) f^n + alpha f_pred`` as inflow, (c) interface values
taken from the cell outflows, and (d) a per-ordinate implicit transport
update whose flux uses those interface values.  Boundary edges take their
missing inflow from the domain boundary condition directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from kinwb.grid import Mesh1D, Quadrature
from kinwb.models import (
    SPECULAR,
    V_MEASURE,
    BoundaryCondition,
    ChemotaxisParams,
    NeutronParams,
    RadiativeParams,
    apply_boundary,
    chemo_rate,
    update_chemical_field,
)
from kinwb.steady_cell import (
    SharedCellSolver,
    solve_boundary_cell,
    solve_cells_chemo,
    spectral_basis_from_rates,
)
from kinwb.ugks_chemo import flux_sigma_edges, predict_chemo, predict_neutron
from kinwb.ugks_rad import RadMacroState, predict_rad, relax_psi

__all__ = [
    "alpha_blend",
    "stable_alpha",
    "residue_norm",
    "macro_flux_J",
    "apply_boundary",
    "ChemoWBAP",
    "NeutronWBAP",
    "RadWBAP",
]


def alpha_blend(eps: float, dt: float) -> float:
    """Inflow blending weight ``min(1, dt/eps)``."""
    if eps <= 0 or dt <= 0:
        raise ValueError("eps and dt must be positive")
    return min(1.0, dt / eps)


def stable_alpha(eps: float, dt: float, lam_max: float) -> float:
    """Blending weight with the transport-update stability floor.

    The implicit share must satisfy ``(1 - alpha) * lam <= 1`` or the
    update's explicit part amplifies.  The floor only activates for the
    radiative time-step rule in the window where the parabolic step keeps
    the CFL number above one while ``dt/eps`` is still small; elsewhere it
    reduces to ``min(1, dt/eps)``.
    """
    alpha = alpha_blend(eps, dt)
    if lam_max > 1.0:
        alpha = max(alpha, 1.0 - 1.0 / lam_max)
    return alpha


def residue_norm(f_new: np.ndarray, f_old: np.ndarray, quad: Quadrature,
                 mesh: Mesh1D) -> float:
    """L2-in-x norm of the ordinate-averaged absolute one-step change."""
    per_cell = np.sum(quad.w * np.abs(f_new - f_old), axis=1)
    return float(np.sqrt(mesh.dx * np.sum(per_cell ** 2)))


def macro_flux_J(f: np.ndarray, quad: Quadrature, eps: float = 1.0) -> np.ndarray:
    """First angular moment ``J_i = (1/(|V| eps)) sum_m w_m mu_m f_{i,m}``."""
    return np.sum(quad.w * quad.mu * f, axis=-1) / (V_MEASURE * eps)


def _interface_values(blended: np.ndarray, left_vals: np.ndarray,
                      right_vals: np.ndarray, boundary_fhat,
                      quad: Quadrature) -> np.ndarray:
    """Assemble ``fhat[e, m]`` for all edges from cell outflows.

    Interface values live at the steady-cell endpoints, which are mesh cell
    centers; the two outermost entries come from half-width boundary cells
    anchored at the walls (``boundary_fhat``).
    """
    n_cells, m_ord = blended.shape
    fhat = np.empty((n_cells + 1, m_ord))
    fhat[1:-1] = np.where(quad.pos, right_vals, left_vals)
    fhat[0], fhat[-1] = boundary_fhat(blended)
    return fhat


def _transport_update(f: np.ndarray, fhat: np.ndarray, alpha: float,
                      lam: np.ndarray, quad: Quadrature) -> np.ndarray:
    """Pointwise-implicit update of (2.3)-type with signed ``lam``."""
    up_pos = (f * (1.0 - (1.0 - alpha) * lam) + lam * fhat[:-1]) \
        / (1.0 + alpha * lam)
    up_neg = (f * (1.0 + (1.0 - alpha) * lam) - lam * fhat[1:]) \
        / (1.0 - alpha * lam)
    return np.where(quad.pos, up_pos, up_neg)


def _wbap_update(f, f_tilde, cell_solver, boundary_fhat, alpha, lam, quad,
                 repeat_steady: bool):
    blended = (1.0 - alpha) * f + alpha * f_tilde
    left_vals, right_vals = cell_solver(blended)
    fhat = _interface_values(blended, left_vals, right_vals, boundary_fhat,
                             quad)
    f_new = _transport_update(f, fhat, alpha, lam, quad)
    if repeat_steady:
        blended = (1.0 - alpha) * f + alpha * f_new
        left_vals, right_vals = cell_solver(blended)
        fhat = _interface_values(blended, left_vals, right_vals,
                                 boundary_fhat, quad)
        f_new = _transport_update(f, fhat, alpha, lam, quad)
    return f_new


def _boundary_fhat_factory(quad, bc, basis_left, basis_right, dx,
                           part_left=None, part_right=None):
    """Boundary interface values from half-width wall cells.

    The left cell spans ``[x_wall, x_0]`` and supplies the ``mu > 0``
    interface entry at the wall edge evaluated at ``x_0``; mirrored on the
    right.  Specular walls are imposed as exact reflection rows.
    """
    half = 0.5 * dx

    def boundary_fhat(blended):
        sol_l = solve_boundary_cell(
            basis_left, part_left, side="left", wall_kind=bc.left,
            wall_inflow=bc.inflow_left, interior_inflow=blended[0], dx=half)
        sol_r = solve_boundary_cell(
            basis_right, part_right, side="right", wall_kind=bc.right,
            wall_inflow=bc.inflow_right, interior_inflow=blended[-1], dx=half)
        return sol_l.eval(half), sol_r.eval(0.0)

    return boundary_fhat


@dataclass
class ChemoWBAP:
    """Stepper for the chemotaxis model."""

    p: ChemotaxisParams
    quad: Quadrature
    mesh: Mesh1D
    bc: BoundaryCondition
    repeat_steady: bool = False

    def step(self, f: np.ndarray, s: np.ndarray, dt: float):
        """Advance ``(f, S)``; returns ``(f_new, s_new, rho_new)``."""
        p, quad, mesh, bc = self.p, self.quad, self.mesh, self.bc
        rho_tilde, f_tilde = predict_chemo(f, s, dt, p, quad, mesh, bc)
        del rho_tilde
        sigma = flux_sigma_edges(s, mesh, bc)
        sigma_cells = sigma[1:-1]  # one interior edge per steady cell
        lam = quad.mu * dt / (p.eps * mesh.dx)
        alpha = stable_alpha(p.eps, dt, float(np.max(np.abs(lam))))

        def cell_solver(blended):
            return solve_cells_chemo(quad, p.eps, sigma_cells, p,
                                     blended[:-1], blended[1:], mesh.dx)

        basis_l = spectral_basis_from_rates(
            quad, chemo_rate(quad.mu, p.eps, sigma[0], p), p.eps)
        basis_r = spectral_basis_from_rates(
            quad, chemo_rate(quad.mu, p.eps, sigma[-1], p), p.eps)
        boundary = _boundary_fhat_factory(quad, bc, basis_l, basis_r, mesh.dx)
        f_new = _wbap_update(f, f_tilde, cell_solver, boundary, alpha, lam,
                             quad, self.repeat_steady)
        rho_new = 0.5 * np.sum(quad.w * f_new, axis=1)
        s_new = update_chemical_field(s, rho_new, dt, p, bc, mesh)
        return f_new, s_new, rho_new


@dataclass
class NeutronWBAP:
    """Stepper for the neutron model (shared steady basis, Picard on rho)."""

    p: NeutronParams
    quad: Quadrature
    mesh: Mesh1D
    bc: BoundaryCondition
    repeat_steady: bool = False
    picard_tol: float = 1e-9
    picard_max: int = 8

    def __post_init__(self):
        rates = np.full(self.quad.n_ordinates, self.p.sigma_t)
        self._solver = SharedCellSolver(self.quad, rates, self.p.eps,
                                        self.mesh.dx)
        mesh = self.mesh
        centers = mesh.centers
        edges_mid = 0.5 * (centers[:-1] + centers[1:])
        self._q_mid = self.p.source(edges_mid)
        self._q_slope = (self.p.source(centers[1:])
                         - self.p.source(centers[:-1])) / mesh.dx
        # half-width wall cells: midpoints a quarter cell from the walls
        self._q_wall_mid = self.p.source(
            np.array([mesh.x_min + 0.25 * mesh.dx,
                      mesh.x_max - 0.25 * mesh.dx]))
        hw = 0.5 * mesh.dx
        self._q_wall_slope = np.array([
            (self.p.source(np.array([mesh.x_min + hw]))[0]
             - self.p.source(np.array([mesh.x_min]))[0]) / hw,
            (self.p.source(np.array([mesh.x_max]))[0]
             - self.p.source(np.array([mesh.x_max - hw]))[0]) / hw,
        ])

    def _steady_cells(self, blended):
        """Cell outflows with the absorption term folded in by Picard."""
        p, quad = self.p, self.quad
        w = quad.w
        m_ord = quad.n_ordinates
        rho_b = 0.5 * (w * blended).sum(axis=1)
        rho0 = 0.5 * (rho_b[:-1] + rho_b[1:])
        rho1 = (rho_b[1:] - rho_b[:-1]) / self.mesh.dx
        ones = np.ones(m_ord)
        for _ in range(self.picard_max if p.sigma_a > 0 else 1):
            q0 = (self._q_mid - p.sigma_a * rho0)[:, None] * ones
            q1 = (self._q_slope - p.sigma_a * rho1)[:, None] * ones
            left, right, center = self._solver.solve(
                blended[:-1], blended[1:], q0, q1)
            rho0_new = 0.5 * (w * center).sum(axis=1)
            rho1_new = (0.5 * (w * right).sum(axis=1)
                        - 0.5 * (w * left).sum(axis=1)) / self.mesh.dx
            change = np.max(np.abs(rho0_new - rho0))
            rho0, rho1 = rho0_new, rho1_new
            if p.sigma_a == 0 or change < self.picard_tol * (1.0 + np.max(
                    np.abs(rho0))):
                break
        return left, right

    def _boundary_fhat(self, blended):
        p, quad = self.p, self.quad
        builder = self._solver.builder
        ones = np.ones(quad.n_ordinates)
        rho_b = 0.5 * (quad.w * blended).sum(axis=1)
        half = 0.5 * self.mesh.dx
        parts = []
        for idx, (q_mid, q_slope, rho_w) in enumerate(
                zip(self._q_wall_mid, self._q_wall_slope,
                    (rho_b[0], rho_b[-1]))):
            q0 = (q_mid - p.sigma_a * rho_w) * ones
            q1 = q_slope * ones
            parts.append(builder.build(q0, q1))
        basis = self._solver.basis
        sol_l = solve_boundary_cell(
            basis, parts[0], side="left", wall_kind=self.bc.left,
            wall_inflow=self.bc.inflow_left, interior_inflow=blended[0],
            dx=half)
        sol_r = solve_boundary_cell(
            basis, parts[1], side="right", wall_kind=self.bc.right,
            wall_inflow=self.bc.inflow_right, interior_inflow=blended[-1],
            dx=half)
        return sol_l.eval(half), sol_r.eval(0.0)

    def step(self, f: np.ndarray, dt: float):
        """Advance ``f``; returns ``(f_new, rho_new)``."""
        p, quad = self.p, self.quad
        _, f_tilde = predict_neutron(f, dt, p, quad, self.mesh, self.bc)
        lam = quad.mu * dt / (p.eps * self.mesh.dx)
        alpha = stable_alpha(p.eps, dt, float(np.max(np.abs(lam))))
        f_new = _wbap_update(f, f_tilde, self._steady_cells,
                             self._boundary_fhat, alpha, lam, quad,
                             self.repeat_steady)
        rho_new = 0.5 * np.sum(quad.w * f_new, axis=1)
        return f_new, rho_new


@dataclass
class RadWBAP:
    """Stepper for grey radiative transfer."""

    p: RadiativeParams
    quad: Quadrature
    mesh: Mesh1D
    bc: BoundaryCondition
    source: Optional[Callable] = None  # q(x, mu); None means zero
    repeat_steady: bool = False

    def __post_init__(self):
        p, quad, mesh = self.p, self.quad, self.mesh
        rates = np.full(quad.n_ordinates, p.sigma)
        self._solver = SharedCellSolver(quad, rates, p.eps, mesh.dx)
        centers = mesh.centers
        builder = self._solver.builder
        if self.source is None:
            self.q_cell = np.zeros((mesh.n_cells, quad.n_ordinates))
            self._q0 = np.zeros((mesh.n_cells - 1, quad.n_ordinates))
            self._q1 = np.zeros_like(self._q0)
            self._part_walls = (None, None)
        else:
            self.q_cell = self.source(centers[:, None], quad.mu[None, :])
            mids = 0.5 * (centers[:-1] + centers[1:])
            self._q0 = self.source(mids[:, None], quad.mu[None, :])
            self._q1 = (self.source(centers[1:, None], quad.mu[None, :])
                        - self.source(centers[:-1, None], quad.mu[None, :])) \
                / mesh.dx
            hw = 0.5 * mesh.dx
            parts = []
            for mid, lo in ((mesh.x_min + 0.25 * mesh.dx, mesh.x_min),
                            (mesh.x_max - 0.25 * mesh.dx, mesh.x_max - hw)):
                q0 = self.source(np.full(quad.n_ordinates, mid), quad.mu)
                q1 = (self.source(np.full(quad.n_ordinates, lo + hw), quad.mu)
                      - self.source(np.full(quad.n_ordinates, lo), quad.mu)) \
                    / hw
                parts.append(builder.build(q0, q1))
            self._part_walls = tuple(parts)

    def _steady_cells(self, blended):
        left, right, _ = self._solver.solve(blended[:-1], blended[1:],
                                            self._q0, self._q1)
        return left, right

    def step(self, i: np.ndarray, macro: RadMacroState, dt: float):
        """Advance ``(I, macro)``; returns ``(i_new, macro_new)``."""
        p, quad, mesh = self.p, self.quad, self.mesh
        i_tilde, macro_tilde = predict_rad(i, macro, dt, p, quad, mesh,
                                           self.bc, self.q_cell)
        del macro_tilde
        lam = p.c * quad.mu * dt / (p.eps * mesh.dx)
        alpha = stable_alpha(p.eps, dt, float(np.max(np.abs(lam))))
        boundary = _boundary_fhat_factory(
            quad, self.bc, self._solver.basis, self._solver.basis, mesh.dx,
            part_left=self._part_walls[0], part_right=self._part_walls[1])
        i_new = _wbap_update(i, i_tilde, self._steady_cells, boundary, alpha,
                             lam, quad, self.repeat_steady)
        rho_new = np.sum(quad.w * i_new, axis=1)
        psi_new = relax_psi(macro.psi, rho_new, dt, p)
        return i_new, RadMacroState(rho=rho_new, psi=psi_new)
