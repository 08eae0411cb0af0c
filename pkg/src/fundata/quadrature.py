"""Trapezoidal quadrature on one- and two-dimensional grids."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Weights w such that ``w @ f`` is the trapezoid rule on ``grid``.

    A single-point grid gets weight 1 (point evaluation).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.ones(1)
    d = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def grid_weights(grids: Sequence[np.ndarray]) -> np.ndarray:
    """Product trapezoid weights with shape (M1[, M2])."""
    w = trapezoid_weights(grids[0])
    for g in grids[1:]:
        w = np.multiply.outer(w, trapezoid_weights(g))
    return w


def inner_product(f: np.ndarray, g: np.ndarray, grids: Sequence[np.ndarray]) -> np.ndarray:
    """L2 inner products between the rows of ``f`` and ``g``.

    ``f`` has shape (A, *grid) and ``g`` shape (B, *grid); the result is (A, B).
    """
    w = grid_weights(grids).ravel()
    f = f.reshape(f.shape[0], -1)
    g = g.reshape(g.shape[0], -1)
    return (f * w) @ g.T


def gram_matrix(values: np.ndarray, grids: Sequence[np.ndarray]) -> np.ndarray:
    return inner_product(values, values, grids)


def orthonormalize_rows(values: np.ndarray, grids: Sequence[np.ndarray]) -> np.ndarray:
    """Modified Gram-Schmidt of the rows under the trapezoid inner product."""
    shape = values.shape
    w = grid_weights(grids).ravel()
    rows = values.reshape(shape[0], -1).astype(float).copy()
    for i in range(rows.shape[0]):
        for _ in range(2):  # reorthogonalize once for stability
            for k in range(i):
                rows[i] -= ((rows[i] * w) @ rows[k]) * rows[k]
        norm = np.sqrt((rows[i] * w) @ rows[i])
        if norm <= 1e-12 * max(1.0, np.sqrt((rows[i] ** 2).sum())):
            raise ValueError(f"function {i} is linearly dependent on the previous ones")
        rows[i] /= norm
    return rows.reshape(shape)
