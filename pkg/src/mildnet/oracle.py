"""Certified brute-force maximization of G over the unit ball for d_eff <= 3.

G is ``sum_i beta_i ||x_i||``-Lipschitz in ``u`` and positively homogeneous,
so its maximum over the ball sits on the sphere and any sphere grid with
covering radius ``rho`` brackets the true maximum within ``sum(beta) * rho``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, UnsupportedDimensionError
from .network import MaskSeries

CHUNK = 1 << 15


@dataclass
class OracleResult:
    value: float
    u: np.ndarray
    gap: float
    evaluations: int

    @property
    def upper(self) -> float:
        return self.value + self.gap


def fibonacci_sphere(N: int) -> np.ndarray:
    """``N`` nearly uniform points on S^2 (spherical Fibonacci lattice)."""
    k = np.arange(N) + 0.5
    z = 1.0 - 2.0 * k / N
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(N)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def fibonacci_covering_bound(N: int) -> float:
    # conservative; the true covering radius is roughly 1.9/sqrt(N)
    return 2.0 * math.sqrt(math.pi / N)


def _sphere_grid(d_eff: int, resolution: int):
    if d_eff == 1:
        return np.array([[-1.0], [1.0]]), 0.0
    if d_eff == 2:
        t = 2.0 * math.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(t), np.sin(t)], axis=1), math.pi / resolution
    if d_eff == 3:
        return fibonacci_sphere(resolution), fibonacci_covering_bound(resolution)
    raise UnsupportedDimensionError(f"oracle supports mask supports of size <= 3, got {d_eff}")


def oracle_max_g(beta, data, masks: MaskSeries, s: int = 0,
                 resolution: int = 100_000) -> OracleResult:
    """Grid maximum of G on mask ``s`` with a certified gap to the true maximum."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ContractError("beta must be nonnegative")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    supp = masks.support(s)
    grid, radius = _sphere_grid(supp.size, resolution)
    Xs = data.X[:, supp]
    w = beta * data.y
    best, best_k = -1.0, 0
    for start in range(0, grid.shape[0], CHUNK):
        vals = np.abs(np.maximum(grid[start:start + CHUNK] @ Xs.T, 0.0) @ w)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_k = float(vals[j]), start + j
    u = np.zeros(masks.d)
    u[supp] = grid[best_k]
    return OracleResult(best, u, float(beta.sum()) * radius, grid.shape[0])


def subset_lower_bound(beta, data, masks: MaskSeries, s: int = 0) -> tuple[float, np.ndarray]:
    """Best G over ``u = +-normalize(sum_{i in S} beta_i y_i x_i)`` for all subsets S.

    Only a lower bound on the maximum; limited to ``n <= 12``.
    """
    n = data.n
    if n > 12:
        raise ValueError("subset enumeration is limited to n <= 12")
    beta = np.asarray(beta, dtype=float)
    Xs = masks.apply(s, data.X)
    w = beta * data.y
    S = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
    U = S @ (w[:, None] * Xs)
    norms = np.linalg.norm(U, axis=1)
    U = U[norms > 0] / norms[norms > 0, None]
    if U.shape[0] == 0:
        u = np.zeros(masks.d)
        u[masks.support(s)[0]] = 1.0
        return 0.0, u
    U = np.concatenate([U, -U])
    vals = np.abs(np.maximum(U @ Xs.T, 0.0) @ w)
    j = int(np.argmax(vals))
    return float(vals[j]), U[j]


def linear_max(beta, data) -> float:
    """``max_{||u|| <= 1} |sum_i y_i beta_i u^T x_i| = ||sum_i y_i beta_i x_i||``."""
    beta = np.asarray(beta, dtype=float)
    return float(np.linalg.norm((beta * data.y) @ data.X))
