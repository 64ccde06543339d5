"""B-spline log-baseline: basis, difference penalty, sum-to-zero constraint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

GRID_SIZE = 2001


def bspline_design(t, knots: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate all B-splines on ``knots`` at ``t`` by the Cox-de Boor recursion.

    Returns an array of shape ``(len(t), len(knots) - degree - 1)``. The last
    knot span is closed on the right so the basis is a partition of unity on
    ``[knots[degree], knots[-degree-1]]``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    knots = np.asarray(knots, dtype=float)
    n_spans = len(knots) - 1
    B = np.zeros((len(t), n_spans))
    for k in range(n_spans):
        if knots[k] < knots[k + 1]:
            B[:, k] = (knots[k] <= t) & (t < knots[k + 1])
    # right end point belongs to the last nonempty span
    last = max(k for k in range(n_spans) if knots[k] < knots[k + 1])
    B[t == knots[last + 1], last] = 1.0
    for p in range(1, degree + 1):
        nxt = np.zeros((len(t), n_spans - p))
        for k in range(n_spans - p):
            left = knots[k + p] - knots[k]
            right = knots[k + p + 1] - knots[k + 1]
            if left > 0:
                nxt[:, k] += (t - knots[k]) / left * B[:, k]
            if right > 0:
                nxt[:, k] += (knots[k + p + 1] - t) / right * B[:, k + 1]
        B = nxt
    return B


@dataclass(frozen=True)
class SplineBasis:
    degree: int
    num_basis: int
    horizon: float
    knots: np.ndarray
    constraint_transform: np.ndarray

    def _check(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.horizon) or np.any(~np.isfinite(t)):
            raise ValueError(f"spline evaluation outside [0, {self.horizon}]")
        return t

    def evaluate(self, t) -> np.ndarray:
        return bspline_design(self._check(t), self.knots, self.degree)

    def evaluate_constrained(self, t) -> np.ndarray:
        """Basis in the identifiable (sum-to-zero) coordinates, K - 1 columns."""
        return self.evaluate(t) @ self.constraint_transform


def equidistant_knots(horizon: float, K: int, degree: int) -> np.ndarray:
    interior = np.linspace(0.0, horizon, K - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.full(degree + 1, float(horizon))])


def build_basis(horizon: float, K: int = 10, degree: int = 3, grid_size: int = GRID_SIZE) -> SplineBasis:
    """Equidistant B-spline basis on ``[0, horizon]`` with K functions.

    The constraint transform spans the orthogonal complement of the vector of
    basis means over a dense grid, so ``B(t) @ C`` has zero mean in ``t``.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if K < degree + 1:
        raise ValueError(f"need K >= degree + 1 = {degree + 1}, got K={K}")
    knots = equidistant_knots(horizon, K, degree)
    grid = np.linspace(0.0, horizon, grid_size)
    means = bspline_design(grid, knots, degree).mean(axis=0)
    C = null_space(means[None, :])
    return SplineBasis(degree, K, float(horizon), knots, C)


def eval_basis(basis: SplineBasis, t: float) -> np.ndarray:
    return basis.evaluate(t)[0]


def difference_matrix(K: int, order: int) -> np.ndarray:
    return np.diff(np.eye(K), n=order, axis=0)


@dataclass(frozen=True)
class PenaltyMatrix:
    order: int
    matrix: np.ndarray

    def quadratic(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)
        return float(alpha @ self.matrix @ alpha)

    def constrained(self, basis: SplineBasis) -> np.ndarray:
        C = basis.constraint_transform
        S = C.T @ self.matrix @ C
        return 0.5 * (S + S.T)


def build_penalty(K: int, order: int = 2) -> PenaltyMatrix:
    if order < 0:
        raise ValueError("penalty order must be nonnegative")
    if order >= K:
        raise ValueError(f"penalty order {order} must be smaller than K={K}")
    D = difference_matrix(K, order)
    return PenaltyMatrix(order, D.T @ D)
