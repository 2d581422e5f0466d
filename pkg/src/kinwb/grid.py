"""Uniform 1D meshes and Gauss-Legendre discrete-ordinate quadratures.

Ordinate storage convention (fixed, relied upon by the steady-cell matrices):
the ``2N`` nodes are stored in ascending order, so positions ``0..N-1`` hold
the negative ordinates and ``N..2N-1`` the positive ones.  Reflection
``mu -> -mu`` is the index map ``k -> 2N-1-k`` (``array[::-1]``), exact
because the negative half is constructed as the mirror of the positive half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_NEWTON_TOL = 1e-14
_NEWTON_MAX_ITER = 100


class QuadratureError(RuntimeError):
    """Raised when the Legendre root search fails to converge."""


@dataclass(frozen=True)
class Mesh1D:
    """Uniform cell-centered mesh on ``[x_min, x_max]`` with ``n_cells`` cells."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError(f"n_cells must be >= 2, got {self.n_cells}")
        if not self.x_max > self.x_min:
            raise ValueError(
                f"degenerate interval [{self.x_min}, {self.x_max}]"
            )

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx


@dataclass(frozen=True)
class Quadrature:
    """Symmetric velocity quadrature ``{mu_m, w_m}`` on ``[-1, 1]``.

    ``mu`` is ascending with no zero node; weights sum to 2 and second
    moments to 2/3.
    """

    mu: np.ndarray
    w: np.ndarray
    pos: np.ndarray = field(init=False)  # mask of positive ordinates
    neg: np.ndarray = field(init=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.w, dtype=float)
        mu.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "w", w)
        pos = mu > 0
        neg = mu < 0
        pos.setflags(write=False)
        neg.setflags(write=False)
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "neg", neg)

    @property
    def n_half(self) -> int:
        return self.mu.size // 2

    @property
    def n_ordinates(self) -> int:
        return self.mu.size

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """Map per-ordinate data ``g(mu)`` to ``g(-mu)`` (last axis)."""
        return values[..., ::-1]


def _legendre_and_derivative(n: int, x: np.ndarray):
    """Evaluate P_n and P_n' by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre_quadrature(n_half: int) -> Quadrature:
    """2N-point Gauss-Legendre rule on [-1, 1] for ``N = n_half``.

    Nodes are found by Newton iteration on the degree-2N Legendre polynomial
    starting from Chebyshev estimates, converged to 1e-14; weights use
    ``w = 2 / ((1 - x^2) P'(x)^2)``.  The rule is assembled from the positive
    half so the symmetry ``mu[-m] = -mu[m]``, ``w[-m] = w[m]`` is exact.
    """
    if n_half < 1:
        raise ValueError(f"n_half must be >= 1, got {n_half}")
    n = 2 * n_half
    # Chebyshev initial guesses for the positive roots (descending in k).
    k = np.arange(1, n_half + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    else:
        raise QuadratureError(
            f"Legendre root search did not reach {_NEWTON_TOL} for 2N={n}"
        )
    _, dp = _legendre_and_derivative(n, x)
    w_pos = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x_pos = x[order]
    w_pos = w_pos[order]
    mu = np.concatenate([-x_pos[::-1], x_pos])
    w = np.concatenate([w_pos[::-1], w_pos])
    return Quadrature(mu=mu, w=w)


def uniform_mesh(x_min: float, x_max: float, n_cells: int) -> Mesh1D:
    """Uniform mesh with validated bounds (see :class:`Mesh1D`)."""
    return Mesh1D(x_min=float(x_min), x_max=float(x_max), n_cells=int(n_cells))
