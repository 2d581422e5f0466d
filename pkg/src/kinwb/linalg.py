"""Small linear-algebra helpers shared by the solvers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray,
                      upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``M u = rhs`` for tridiagonal ``M``.

    ``lower[i]`` multiplies ``u[i-1]`` in row ``i`` (``lower[0]`` ignored),
    ``upper[i]`` multiplies ``u[i+1]`` (``upper[-1]`` ignored).
    """
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def tridiagonal_as_dense(lower: np.ndarray, diag: np.ndarray,
                         upper: np.ndarray) -> np.ndarray:
    """Dense counterpart of the banded system (testing / diagnostics)."""
    n = diag.size
    m = np.diag(diag)
    m += np.diag(upper[:-1], 1)
    m += np.diag(lower[1:], -1)
    return m
