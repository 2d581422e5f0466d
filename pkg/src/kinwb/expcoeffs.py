"""Cancellation-safe evaluation of the exponential flux-coefficient brackets.

All helpers take ``z >= 0`` (typically ``z = rate * dt / eps^2``) and switch
to truncated alternating series below a per-function threshold where the
direct expression loses precision.
"""

from __future__ import annotations

import numpy as np


def one_minus_exp(z):
    """``1 - exp(-z)`` via ``expm1``."""
    return -np.expm1(-np.asarray(z, dtype=float))


def _series(z, first_j, first_term, ratio, n_terms=26):
    """Sum ``t_j`` from ``j = first_j`` with ``t_{j+1} = t_j * ratio(j)``."""
    term = first_term(z)
    acc = term.copy()
    for j in range(first_j, first_j + n_terms):
        term = term * ratio(z, j)
        acc += term
    return acc


def bracket_h(z):
    """``h(z) = 1 - (1 - exp(-z)) / z``  (-> z/2 as z -> 0)."""
    z = np.asarray(z, dtype=float)
    direct = 1.0 - one_minus_exp(z) / np.where(z == 0.0, 1.0, z)
    series = _series(z, 1, lambda z: z / 2.0,
                     lambda z, j: -z / (j + 2.0), n_terms=10)
    return np.where(z < 0.01, series, direct)


def bracket_g(z):
    """``g(z) = (2/z)(1 - exp(-z)) - (1 + exp(-z))``  (-> -z^2/6)."""
    z = np.asarray(z, dtype=float)
    zs = np.where(z == 0.0, 1.0, z)
    direct = 2.0 * one_minus_exp(z) / zs - (1.0 + np.exp(-z))
    series = _series(z, 2, lambda z: -z * z / 6.0,
                     lambda z, j: -z * j / ((j - 1.0) * (j + 2.0)))
    return np.where(z < 0.5, series, direct)


def bracket_k(z):
    """``k(z) = 1 - (1 + z) exp(-z)``  (-> z^2/2)."""
    z = np.asarray(z, dtype=float)
    direct = one_minus_exp(z) - z * np.exp(-z)
    series = _series(z, 2, lambda z: z * z / 2.0,
                     lambda z, j: -z * j / ((j - 1.0) * (j + 1.0)))
    return np.where(z < 0.05, series, direct)


def bracket_m(z):
    """``m(z) = 1 - (1 + z) exp(-z) - z^2/2``  (-> -z^3/3)."""
    z = np.asarray(z, dtype=float)
    direct = one_minus_exp(z) - z * np.exp(-z) - 0.5 * z * z
    series = _series(z, 3, lambda z: -(z ** 3) / 3.0,
                     lambda z, j: -z * j / ((j - 1.0) * (j + 1.0)))
    return np.where(z < 1.0, series, direct)
