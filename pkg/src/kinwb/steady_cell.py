"""Exact-in-cell steady transport solver built from elementary modes.

On one cell the discrete-ordinate steady equation

    mu_m f_m'(x) = (1/eps) * ( (1/|V|) sum_n w_n r_n f_n  -  r_m f_m ) + s_m(x)

is solved analytically.  The homogeneous solutions are exponential modes
``l_m exp(-zeta (x - anchor)/eps)`` with ``zeta`` an eigenvalue of the matrix
``E = U^{-1}(R - W_r/|V|)``; a (near-)degenerate zero pair is realised as a
constant and a linear polynomial mode instead.  Affine sources get a
polynomial particular solution of degree <= 3 (the cubic terms absorb the
quadrature-level incompatibility of the source with the discrete moment
operator).  Inflow data on both edges then fixes the 2N free coefficients.

Exponential modes are anchored at the edge where they are largest, so no
basis evaluation inside the cell exceeds one in magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from kinwb.grid import Quadrature
from kinwb.models import SPECULAR, V_MEASURE, ChemotaxisParams, chemo_rate

DISPERSION_TOL = 1e-9
INFLOW_TOL = 1e-9
COND_LIMIT = 1e12


class SpectralError(RuntimeError):
    """Eigenstructure of the steady operator could not be validated."""


class SteadyCellError(RuntimeError):
    """A cell boundary-value problem failed (singular / ill-conditioned)."""


class ParticularError(RuntimeError):
    """No valid polynomial particular solution could be constructed."""


# ---------------------------------------------------------------------------
# Case matrix and dispersion relation
# ---------------------------------------------------------------------------

def case_matrix_from_rates(quad: Quadrature, rates: np.ndarray) -> np.ndarray:
    """``E = U^{-1} (R - W_r / |V|)`` with ``W_r`` the rank-1 weight matrix."""
    r = np.asarray(rates, dtype=float)
    e = np.diag(r) - (quad.w * r)[None, :] / V_MEASURE
    return e / quad.mu[:, None]


def build_case_matrix(quad: Quadrature, eps: float, sigma_half: float,
                      phi: Optional[Callable]) -> np.ndarray:
    """Steady-operator matrix for rate ``1 + eps*phi(mu*sigma_half)``."""
    rates = _rates_from_phi(quad, eps, sigma_half, phi)
    if np.any(rates <= 0):
        raise SpectralError("1 + eps*phi(mu*sigma) must be positive")
    return case_matrix_from_rates(quad, rates)


def _rates_from_phi(quad, eps, sigma_half, phi):
    if phi is None:
        return np.ones_like(quad.mu)
    return 1.0 + eps * np.asarray(phi(quad.mu * sigma_half), dtype=float)


def dispersion_function(zeta, quad: Quadrature, rates: np.ndarray):
    """``(1/|V|) sum_m w_m r_m / (r_m - mu_m zeta) - 1`` and its derivative."""
    zeta = np.asarray(zeta, dtype=float)
    den = rates - np.multiply.outer(zeta, quad.mu)
    if np.any(np.abs(den) < 1e-13):
        raise SpectralError("zeta too close to a pole r_m / mu_m")
    val = np.sum(quad.w * rates / den, axis=-1) / V_MEASURE - 1.0
    dval = np.sum(quad.w * rates * quad.mu / den ** 2, axis=-1) / V_MEASURE
    return val, dval


def dispersion_residual(zeta: float, quad: Quadrature, eps: float,
                        sigma_half: float, phi: Optional[Callable]) -> float:
    """Value of the secular function at ``zeta`` (zero at a true root)."""
    rates = _rates_from_phi(quad, eps, sigma_half, phi)
    val, _ = dispersion_function(zeta, quad, rates)
    return float(val)


# ---------------------------------------------------------------------------
# Spectral basis
# ---------------------------------------------------------------------------

@dataclass
class SpectralBasis:
    """Elementary-solution basis of one steady cell.

    Mode ordering in every coefficient/matrix: exponential modes by
    ascending ``zeta``, then the constant mode, then the linear mode.
    """

    quad: Quadrature
    rates: np.ndarray
    eps: float
    zetas: np.ndarray        # exponential roots only, ascending
    eigvecs: np.ndarray      # closed-form l_m = 1/(r_m - mu_m*zeta), [M, n_exp]
    has_const: bool
    has_linear: bool

    @property
    def n_modes(self) -> int:
        return self.zetas.size + int(self.has_const) + int(self.has_linear)

    def _exp_factors(self, x_rel: float, dx: float) -> np.ndarray:
        # anchor: left edge for zeta > 0, right edge for zeta < 0
        shift = np.where(self.zetas > 0, x_rel, x_rel - dx)
        return np.exp(-self.zetas * shift / self.eps)

    def matrix(self, x_rel: float, dx: float) -> np.ndarray:
        """Mode values at ``x_rel`` (distance from the left edge), [M, n_modes]."""
        cols = [self.eigvecs * self._exp_factors(x_rel, dx)[None, :]]
        k = 1.0 / self.rates
        if self.has_const:
            cols.append(k[:, None])
        if self.has_linear:
            lin = k * x_rel - self.eps * self.quad.mu * k * k
            cols.append(lin[:, None])
        return np.hstack(cols)

    def derivative_matrix(self, x_rel: float, dx: float) -> np.ndarray:
        """d/dx of :meth:`matrix` at ``x_rel``."""
        factors = self._exp_factors(x_rel, dx)
        cols = [self.eigvecs * (-(self.zetas / self.eps) * factors)[None, :]]
        if self.has_const:
            cols.append(np.zeros((self.rates.size, 1)))
        if self.has_linear:
            cols.append((1.0 / self.rates)[:, None])
        return np.hstack(cols)


def _polish_roots(zetas: np.ndarray, quad: Quadrature,
                  rates: np.ndarray) -> np.ndarray:
    """Newton-refine real roots of the dispersion relation."""
    z = zetas.copy()
    if z.size == 0:
        return z
    scale = max(1.0, np.max(np.abs(z)))
    for _ in range(12):
        den = rates - np.multiply.outer(z, quad.mu)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.sum(quad.w * rates / den, axis=-1) / V_MEASURE - 1.0
            dval = np.sum(quad.w * rates * quad.mu / den ** 2,
                          axis=-1) / V_MEASURE
            step = val / dval
        if not np.all(np.isfinite(step)):
            break
        z = z - step
        if np.max(np.abs(step)) < 1e-13 * scale:
            break
    return z


def _classify_roots(quad, rates, eps, zetas, norm_e):
    """Split raw eigenvalues into exponential roots and the zero multiplicity.

    Zero is always an analytic root; it is double exactly when the weighted
    drift moment ``sum w mu / r`` vanishes, in which case the eigensolver
    resolves the defective pair only to ``sqrt(machine eps) * ||E||``.
    Roots below that resolution are replaced by the polynomial mode pair.
    A candidate must also lie well below the smallest pole ``r_m / mu_m``:
    strong drift compresses the pole structure and creates genuinely small
    simple roots that must stay exponential.
    """
    mags = np.abs(zetas)
    scale = mags.max()
    pole_floor = 0.5 * np.min(np.abs(rates / quad.mu))
    thresh = min(max(20.0 * np.sqrt(np.finfo(float).eps) * norm_e,
                     1e-12 * max(scale, 1.0)),
                 pole_floor)
    near = mags < thresh
    n_near = int(near.sum())
    if n_near > 2:
        raise SpectralError(
            f"{n_near} near-zero dispersion roots (threshold {thresh:.3e}); "
            "cannot build the polynomial mode pair"
        )
    kept = zetas[~near]
    if np.any(np.abs(kept.imag) > 1e-6 * max(scale, 1.0)):
        raise SpectralError("complex dispersion roots beyond tolerance")
    exp_roots = np.sort(_polish_roots(np.sort(kept.real), quad, rates))
    if exp_roots.size:
        val, _ = dispersion_function(exp_roots, quad, rates)
        if np.max(np.abs(val)) > DISPERSION_TOL:
            raise SpectralError(
                f"dispersion residual {np.max(np.abs(val)):.3e} exceeds "
                f"{DISPERSION_TOL}"
            )
    eigvecs = 1.0 / (rates[:, None] - np.multiply.outer(quad.mu, exp_roots))
    return SpectralBasis(
        quad=quad,
        rates=rates,
        eps=eps,
        zetas=exp_roots,
        eigvecs=eigvecs,
        has_const=n_near >= 1,
        has_linear=n_near == 2,
    )


def spectral_basis_from_rates(quad: Quadrature, rates: np.ndarray,
                              eps: float) -> SpectralBasis:
    """Eigen-decompose one cell's steady operator and classify its modes."""
    rates = np.asarray(rates, dtype=float)
    e = case_matrix_from_rates(quad, rates)
    zetas = np.linalg.eigvals(e)
    norm_e = float(np.linalg.norm(e, np.inf))
    return _classify_roots(quad, rates, eps, zetas, norm_e)


def spectral_basis(quad: Quadrature, eps: float, sigma_half: float,
                   phi: Optional[Callable]) -> SpectralBasis:
    """Basis for the chemotaxis-style rate ``1 + eps*phi(mu*sigma_half)``."""
    return spectral_basis_from_rates(
        quad, _rates_from_phi(quad, eps, sigma_half, phi), eps)


def spectral_basis_chemo(quad: Quadrature, eps: float, sigma_half: float,
                         p: ChemotaxisParams) -> SpectralBasis:
    return spectral_basis_from_rates(
        quad, chemo_rate(quad.mu, eps, sigma_half, p), eps)


# ---------------------------------------------------------------------------
# Particular solutions for affine sources
# ---------------------------------------------------------------------------

@dataclass
class PolynomialParticular:
    """``f^p_m(x) = sum_k p[k, m] * (x - x_center)^k`` with degree <= 3."""

    p: np.ndarray  # [4, M] or [batch, 4, M]

    def eval(self, x_bar):
        p = self.p
        return ((p[..., 3, :] * x_bar + p[..., 2, :]) * x_bar
                + p[..., 1, :]) * x_bar + p[..., 0, :]

    def derivative(self, x_bar):
        p = self.p
        return (3.0 * p[..., 3, :] * x_bar + 2.0 * p[..., 2, :]) * x_bar \
            + p[..., 1, :]


class ParticularBuilder:
    """Constructs particular solutions for sources ``s = eps*(q0 + q1*x_bar)``.

    Matching powers of ``x_bar`` gives a chain of singular linear systems in
    the collision operator ``L``; the one-dimensional kernel (the constant
    mode) and, when ``sum w mu / r = 0``, a cubic kernel correction provide
    exactly the freedom needed to meet the solvability constraints, so the
    construction is exact for any affine source.
    """

    def __init__(self, quad: Quadrature, rates: np.ndarray, eps: float):
        rates = np.asarray(rates, dtype=float)
        self.quad = quad
        self.rates = rates
        self.eps = eps
        self.lmat = (quad.w * rates)[None, :] / V_MEASURE - np.diag(rates)
        self.pinv = np.linalg.pinv(self.lmat)
        self.kernel = 1.0 / rates
        mu, w = quad.mu, quad.w
        self.u1 = float(w @ (mu / rates))
        self.lk = self.pinv @ (mu * self.kernel)
        self.t_coef = float(w @ (mu * self.lk))
        self._wm = w * mu
        self._degenerate = abs(self.u1) <= 1e-10 * float(
            w @ np.abs(mu / rates))

    def build(self, q0: np.ndarray, q1: np.ndarray) -> PolynomialParticular:
        """Particular solution for source data ``q0 + q1*(x - x_c)``.

        Accepts ``[M]`` vectors or ``[batch, M]`` stacks.
        """
        eps, w, mu, k = self.eps, self.quad.w, self.quad.mu, self.kernel
        s0 = eps * np.atleast_2d(np.asarray(q0, dtype=float))
        s1 = eps * np.atleast_2d(np.asarray(q1, dtype=float))
        nb = s0.shape[0]
        p = np.zeros((nb, 4, s0.shape[1]))
        if not (np.any(s0) or np.any(s1)):
            return self._reshape(p, q0)

        sum_s1 = s1 @ w
        sum_s0 = s0 @ w
        if self._degenerate:
            if abs(self.t_coef) < 1e-300:
                raise ParticularError("degenerate transport coefficient")
            delta = sum_s1 / (6.0 * eps * self.t_coef)
            p[:, 3] = delta[:, None] * k
            p2_perp = 3.0 * eps * delta[:, None] * self.lk
            sa = (eps * (2.0 * mu * p2_perp - s1)) @ (self.pinv.T @ self._wm)
            gamma = (sum_s0 - sa) / (2.0 * eps * self.t_coef)
            p[:, 2] = p2_perp + gamma[:, None] * k
            p[:, 1] = (eps * (2.0 * mu * p[:, 2] - s1)) @ self.pinv.T
        else:
            gamma = sum_s1 / (2.0 * self.u1)
            p[:, 2] = gamma[:, None] * k
            p1_perp = (eps * (2.0 * mu * p[:, 2] - s1)) @ self.pinv.T
            gamma_b = (sum_s0 - p1_perp @ self._wm) / self.u1
            p[:, 1] = p1_perp + gamma_b[:, None] * k
        p[:, 0] = (eps * (mu * p[:, 1] - s0)) @ self.pinv.T
        return self._reshape(p, q0)

    @staticmethod
    def _reshape(p, q0):
        if np.asarray(q0).ndim == 1:
            return PolynomialParticular(p=p[0])
        return PolynomialParticular(p=p)

    def residual(self, part: PolynomialParticular, q0, q1, x_bar) -> float:
        """Max substitution residual of the particular solution at ``x_bar``."""
        res = 0.0
        for xb in np.atleast_1d(x_bar):
            f = part.eval(xb)
            df = part.derivative(xb)
            lf = (self.quad.w * self.rates * f).sum(axis=-1) / V_MEASURE
            rhs = (lf[..., None] - self.rates * f) / self.eps \
                + self.eps * (np.asarray(q0) + np.asarray(q1) * xb)
            res = max(res, float(np.max(np.abs(self.quad.mu * df - rhs))))
        return res


def particular_solution(q0: np.ndarray, q1: np.ndarray, quad: Quadrature,
                        rates: np.ndarray, eps: float) -> PolynomialParticular:
    """One-shot particular solution for source ``eps*(q0 + q1*(x - x_c))``."""
    return ParticularBuilder(quad, rates, eps).build(q0, q1)


# ---------------------------------------------------------------------------
# Cell boundary-value problem
# ---------------------------------------------------------------------------

@dataclass
class CellSolution:
    """Solved steady cell: basis coefficients plus the particular part."""

    basis: SpectralBasis
    particular: Optional[PolynomialParticular]
    coeffs: np.ndarray
    dx: float
    cond: Optional[float] = None

    def eval(self, x_rel: float) -> np.ndarray:
        f = self.basis.matrix(x_rel, self.dx) @ self.coeffs
        if self.particular is not None:
            f = f + self.particular.eval(x_rel - 0.5 * self.dx)
        return f

    def derivative(self, x_rel: float) -> np.ndarray:
        df = self.basis.derivative_matrix(x_rel, self.dx) @ self.coeffs
        if self.particular is not None:
            df = df + self.particular.derivative(x_rel - 0.5 * self.dx)
        return df


def _bvp_matrix(basis: SpectralBasis, dx: float):
    b_left = basis.matrix(0.0, dx)
    b_right = basis.matrix(dx, dx)
    m = np.where(basis.quad.pos[:, None], b_left, b_right)
    return m, b_left, b_right


def solve_cell_bvp(basis: SpectralBasis,
                   particular: Optional[PolynomialParticular],
                   inflow_left: np.ndarray, inflow_right: np.ndarray,
                   dx: float, check_condition: bool = True) -> CellSolution:
    """Match the inflow data on both edges and return the solved cell."""
    if not (np.all(np.isfinite(inflow_left))
            and np.all(np.isfinite(inflow_right))):
        raise SteadyCellError("inflow data must be finite")
    m, _, _ = _bvp_matrix(basis, dx)
    rhs = np.where(basis.quad.pos, inflow_left, inflow_right).astype(float)
    if particular is not None:
        half = 0.5 * dx
        rhs = rhs - np.where(basis.quad.pos, particular.eval(-half),
                             particular.eval(half))
    cond = None
    if check_condition:
        cond = float(np.linalg.cond(m))
        if cond > COND_LIMIT:
            raise SteadyCellError(
                f"cell system condition {cond:.3e} exceeds {COND_LIMIT:.0e} "
                f"(dx/eps = {dx / basis.eps:.3e}, "
                f"{basis.zetas.size} exponential modes)"
            )
    try:
        coeffs = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SteadyCellError(f"singular cell system: {exc}") from exc
    sol = CellSolution(basis=basis, particular=particular, coeffs=coeffs,
                       dx=dx, cond=cond)
    _check_inflow(sol, inflow_left, inflow_right)
    return sol


def _check_inflow(sol: CellSolution, inflow_left, inflow_right):
    pos, neg = sol.basis.quad.pos, sol.basis.quad.neg
    scale = 1.0 + max(np.max(np.abs(inflow_left)), np.max(np.abs(inflow_right)))
    err = max(
        np.max(np.abs((sol.eval(0.0) - inflow_left)[pos]), initial=0.0),
        np.max(np.abs((sol.eval(sol.dx) - inflow_right)[neg]), initial=0.0),
    )
    if err > INFLOW_TOL * scale:
        raise SteadyCellError(
            f"inflow reproduction error {err:.3e} exceeds {INFLOW_TOL}")


def cell_outflow(sol: CellSolution):
    """Edge values ``(f(x_left), f(x_right))``; outflow ordinates are the
    ``mu < 0`` entries of the first and the ``mu > 0`` entries of the second.
    """
    return sol.eval(0.0), sol.eval(sol.dx)


def solve_boundary_cell(basis: SpectralBasis,
                        particular: Optional[PolynomialParticular],
                        side: str, wall_kind: str,
                        wall_inflow: Optional[np.ndarray],
                        interior_inflow: np.ndarray,
                        dx: float) -> CellSolution:
    """Steady problem on a half cell touching a domain wall.

    ``side`` names the wall end ('left' or 'right').  The interior end
    carries ordinary inflow rows fed by the adjacent cell data; the wall end
    carries either prescribed inflow rows or exact specular-reflection rows
    ``f(x_w, mu) = f(x_w, -mu)``.
    """
    quad = basis.quad
    pos, neg = quad.pos, quad.neg
    b_left = basis.matrix(0.0, dx)
    b_right = basis.matrix(dx, dx)
    half = 0.5 * dx
    part_left = particular.eval(-half) if particular is not None else 0.0
    part_right = particular.eval(half) if particular is not None else 0.0

    m = np.empty_like(b_left)
    rhs = np.empty(quad.n_ordinates)
    if side == "left":
        m[neg] = b_right[neg]
        rhs[neg] = (interior_inflow - part_right)[neg]
        if wall_kind == SPECULAR:
            m[pos] = b_left[pos] - b_left[::-1][pos]
            rhs[pos] = -(part_left - _reflected(part_left))[pos] \
                if particular is not None else 0.0
        else:
            m[pos] = b_left[pos]
            rhs[pos] = (np.asarray(wall_inflow) - part_left)[pos]
    elif side == "right":
        m[pos] = b_left[pos]
        rhs[pos] = (interior_inflow - part_left)[pos]
        if wall_kind == SPECULAR:
            m[neg] = b_right[neg] - b_right[::-1][neg]
            rhs[neg] = -(part_right - _reflected(part_right))[neg] \
                if particular is not None else 0.0
        else:
            m[neg] = b_right[neg]
            rhs[neg] = (np.asarray(wall_inflow) - part_right)[neg]
    else:
        raise ValueError(f"unknown side {side!r}")
    try:
        coeffs = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SteadyCellError(f"singular boundary cell system: {exc}") from exc
    resid = np.max(np.abs(m @ coeffs - rhs))
    if resid > INFLOW_TOL * (1.0 + np.max(np.abs(rhs))):
        raise SteadyCellError(
            f"boundary cell solve residual {resid:.3e} exceeds {INFLOW_TOL}")
    return CellSolution(basis=basis, particular=particular, coeffs=coeffs,
                        dx=dx)


def _reflected(values):
    return np.asarray(values)[..., ::-1]


def cell_residual(sol: CellSolution, q0, q1, x_rel_samples) -> float:
    """Max substitution residual of the full solution at given points."""
    basis = sol.basis
    quad, rates, eps = basis.quad, basis.rates, basis.eps
    res = 0.0
    for x in np.atleast_1d(x_rel_samples):
        f = sol.eval(float(x))
        df = sol.derivative(float(x))
        lf = float((quad.w * rates * f).sum()) / V_MEASURE
        xb = float(x) - 0.5 * sol.dx
        rhs = (lf - rates * f) / eps + eps * (np.asarray(q0)
                                              + np.asarray(q1) * xb)
        res = max(res, float(np.max(np.abs(quad.mu * df - rhs))))
    return res


# ---------------------------------------------------------------------------
# Batched drivers used by the combined scheme
# ---------------------------------------------------------------------------

class SharedCellSolver:
    """Batch solver for many cells sharing one basis (constant rates).

    The boundary matrix is factored once; per step the cells differ only in
    their inflow data and affine source, so each solve is two triangular
    substitutions.
    """

    def __init__(self, quad: Quadrature, rates: np.ndarray, eps: float,
                 dx: float):
        self.quad = quad
        self.eps = eps
        self.dx = dx
        self.basis = spectral_basis_from_rates(quad, rates, eps)
        m, b_left, b_right = _bvp_matrix(self.basis, dx)
        self.b_left = b_left
        self.b_right = b_right
        self.b_center = self.basis.matrix(0.5 * dx, dx)
        cond = float(np.linalg.cond(m))
        if cond > COND_LIMIT:
            raise SteadyCellError(
                f"shared cell system condition {cond:.3e} exceeds 1e12")
        self.lu = lu_factor(m)
        self.builder = ParticularBuilder(quad, rates, eps)

    def solve(self, inflow_left: np.ndarray, inflow_right: np.ndarray,
              q0=None, q1=None):
        """Solve all cells; returns ``(left_vals, right_vals, center_vals)``.

        ``inflow_*`` are ``[n_cells, M]``; ``q0``/``q1`` likewise or None.
        """
        pos = self.quad.pos
        rhs = np.where(pos, inflow_left, inflow_right)
        part = None
        if q0 is not None:
            part = self.builder.build(q0, q1)
            half = 0.5 * self.dx
            rhs = rhs - np.where(pos, part.eval(-half), part.eval(half))
        coeffs = lu_solve(self.lu, rhs.T)
        left = (self.b_left @ coeffs).T
        right = (self.b_right @ coeffs).T
        center = (self.b_center @ coeffs).T
        if part is not None:
            half = 0.5 * self.dx
            left = left + part.eval(-half)
            right = right + part.eval(half)
            center = center + part.eval(0.0)
        self._check_batch(left, right, inflow_left, inflow_right)
        return left, right, center

    def _check_batch(self, left, right, inflow_left, inflow_right):
        pos, neg = self.quad.pos, self.quad.neg
        scale = 1.0 + max(np.max(np.abs(inflow_left)),
                          np.max(np.abs(inflow_right)))
        err_l = np.abs(left[:, pos] - inflow_left[:, pos]).max(initial=0.0)
        err_r = np.abs(right[:, neg] - inflow_right[:, neg]).max(initial=0.0)
        if max(err_l, err_r) > INFLOW_TOL * scale:
            raise SteadyCellError(
                f"batched inflow reproduction error "
                f"{max(err_l, err_r):.3e} exceeds {INFLOW_TOL}")


def solve_cells_chemo(quad: Quadrature, eps: float, sigma_cells: np.ndarray,
                      p: ChemotaxisParams, inflow_left: np.ndarray,
                      inflow_right: np.ndarray, dx: float):
    """Per-cell steady solves with cell-dependent drift rates.

    Eigendecompositions are batched across cells; basis assembly and the
    final linear solves are stacked.  Returns ``(left_vals, right_vals)``.
    """
    n_cells = sigma_cells.size
    m_ord = quad.n_ordinates
    rates = chemo_rate(quad.mu, eps, sigma_cells, p)
    if np.any(rates <= 0):
        raise SteadyCellError("1 + eps*phi <= 0 in a steady cell")
    wr = (quad.w * rates) / V_MEASURE
    e = -np.repeat(wr[:, None, :], m_ord, axis=1)
    idx = np.arange(m_ord)
    e[:, idx, idx] += rates
    e /= quad.mu[None, :, None]
    zetas_all = np.linalg.eigvals(e)
    norms_e = np.abs(e).sum(axis=2).max(axis=1)

    mats = np.empty((n_cells, m_ord, m_ord))
    rhs = np.where(quad.pos, inflow_left, inflow_right).astype(float)
    b_lefts = np.empty_like(mats)
    b_rights = np.empty_like(mats)
    for c in range(n_cells):
        basis = _basis_from_eigs(quad, rates[c], eps, zetas_all[c], norms_e[c])
        b_lefts[c] = basis.matrix(0.0, dx)
        b_rights[c] = basis.matrix(dx, dx)
        mats[c] = np.where(quad.pos[:, None], b_lefts[c], b_rights[c])
    try:
        coeffs = np.linalg.solve(mats, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise SteadyCellError(f"singular chemo cell system: {exc}") from exc
    left = np.einsum("cmn,cn->cm", b_lefts, coeffs)
    right = np.einsum("cmn,cn->cm", b_rights, coeffs)
    scale = 1.0 + max(np.max(np.abs(inflow_left)),
                      np.max(np.abs(inflow_right)))
    err = max(np.abs(left[:, quad.pos] - inflow_left[:, quad.pos]).max(),
              np.abs(right[:, quad.neg] - inflow_right[:, quad.neg]).max())
    if err > INFLOW_TOL * scale:
        raise SteadyCellError(
            f"chemo batched inflow reproduction error {err:.3e}")
    return left, right


def _basis_from_eigs(quad, rates, eps, zetas, norm_e) -> SpectralBasis:
    """Classify precomputed eigenvalues into a basis (batch helper)."""
    return _classify_roots(quad, rates, eps, zetas, norm_e)
