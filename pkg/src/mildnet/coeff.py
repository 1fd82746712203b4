"""Regularizer coefficient updates.

For each mask ``s`` the coefficients of the neurons reading through that
mask, ``lam[s]``, must stay at distance at least ``lam0 / (8K)`` from the span
of the activation-pattern vectors ``q_i[s]``.  That separation is what forces
a small neuron to exist on every mask once the gradient is small.  The update
moves each block by at most ``lam0 / (2K)`` and only downward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhaustedError, CapacityError, InvariantViolation
from .loss import CoeffVector, sgn
from .network import MaskSeries, NetParams, preactivations

SEPARATION_RTOL = 1e-9


@dataclass
class QBlock:
    s: int
    neurons: np.ndarray
    q: np.ndarray  # (n, Q)

    @property
    def width(self) -> int:
        return self.q.shape[1]


@dataclass
class BlockUpdate:
    s: int
    case: int  # 1 = unchanged, 2 = shifted
    v: np.ndarray
    projection_old: float
    residual_ortho: float
    separation: float


@dataclass
class CoeffUpdate:
    lam: CoeffVector
    blocks: list = field(default_factory=list)

    @property
    def cases(self):
        return [b.case for b in self.blocks]


def build_q_blocks(params: NetParams, data, masks: MaskSeries) -> list[QBlock]:
    """One block per mask with entries ``y_i sgn(a_j) relu(sgn(a_j) u_j^T (x_i * phi_s))``."""
    n, m = data.n, params.m
    per_mask = -(-m // masks.period) if m else 0
    need = n + 1
    if m < need * masks.period:
        raise CapacityError(
            f"m={m} neurons give at most {per_mask} per mask; need {need} per mask "
            f"(m >= {need * masks.period})")
    P = preactivations(params, masks, data.X)
    signs = sgn(params.alpha)
    Q = data.y[:, None] * signs[None, :] * np.maximum(P * signs[None, :], 0.0)
    return [QBlock(s, idx, Q[:, idx]) for s in range(masks.period)
            for idx in [masks.neurons_of(s, m)]]


def _sign_fix(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))  # first coordinate of largest magnitude
    return -v if v[k] < 0 else v


def find_orthogonal_unit(block) -> tuple[np.ndarray, float]:
    """Unit vector orthogonal to every row of the block's q-matrix.

    Returns the right singular vector of the smallest singular value (a
    null direction, since the block has more columns than rows) and the
    achieved residual ``max_i |v . q_i| / max(1, ||q_i||)``.  An all-zero
    block yields the first canonical direction.
    """
    q = block.q if isinstance(block, QBlock) else np.atleast_2d(np.asarray(block, dtype=float))
    n, width = q.shape
    if width <= n:
        raise CapacityError(f"block has {width} columns for {n} rows; need more columns")
    if n == 0 or not np.any(q):
        v = np.zeros(width)
        v[0] = 1.0
        return v, 0.0
    _, _, vh = np.linalg.svd(q, full_matrices=True)
    v = _sign_fix(vh[-1] / np.linalg.norm(vh[-1]))
    scale = np.maximum(1.0, np.linalg.norm(q, axis=1))
    return v, float(np.max(np.abs(q @ v) / scale))


def span_distance(rho: np.ndarray, q: np.ndarray) -> float:
    """``min_p ||rho - sum_i p_i q_i||`` via a dense least-squares solve."""
    if q.shape[0] == 0 or not np.any(q):
        return float(np.linalg.norm(rho))
    p, *_ = np.linalg.lstsq(q.T, rho, rcond=None)
    return float(np.linalg.norm(rho - q.T @ p))


def shift_block(rho_old: np.ndarray, v: np.ndarray, step: float) -> np.ndarray:
    """Case-2 move: lower ``rho`` along whichever sign part of ``v`` is heavier."""
    pos = np.where(v > 0, v, 0.0)
    if float(pos @ pos) >= 0.5:
        return rho_old - step * pos
    return rho_old + step * np.where(v < 0, v, 0.0)


def update_coefficients(lam_old: CoeffVector, blocks: list[QBlock], K: int) -> CoeffVector:
    """New coefficient vector; see :func:`apply_coefficient_update` for details."""
    return apply_coefficient_update(lam_old, blocks, K).lam


def apply_coefficient_update(lam_old: CoeffVector, blocks: list[QBlock], K: int) -> CoeffUpdate:
    """Apply the per-block case rule and verify its three guarantees.

    Case 1 (``|v . lam_old[s]| >= lam0/(8K)``) keeps the block.  Case 2
    shifts it along the positive part of ``v`` (downward) or the negative
    part of ``v`` (added, hence also downward), whichever carries at least
    half of ``v``'s squared mass.
    """
    lam0 = lam_old.lam0
    sep = lam0 / (8 * K)
    step = lam0 / (2 * K)
    lam = lam_old.lam.copy()
    records = []
    for block in blocks:
        v, resid = find_orthogonal_unit(block)
        rho_old = lam_old.lam[block.neurons]
        proj = float(v @ rho_old)
        if abs(proj) >= sep:
            case, rho = 1, rho_old.copy()
        else:
            case, rho = 2, shift_block(rho_old, v, step)
        lam[block.neurons] = rho
        dist = span_distance(rho, block.q)
        if dist < sep * (1 - SEPARATION_RTOL):
            raise InvariantViolation(
                f"mask {block.s}: span distance {dist!r} below lam0/(8K)={sep!r} "
                f"(orthogonality residual {resid:.2e})")
        records.append(BlockUpdate(block.s, case, v, proj, resid, dist))

    if np.any(lam > lam_old.lam):
        raise InvariantViolation("coefficient update increased some lambda_j")
    if np.max(np.abs(lam - lam_old.lam), initial=0.0) > step * (1 + 1e-12):
        raise InvariantViolation("coefficient update moved some lambda_j by more than lam0/(2K)")
    if np.any(lam < lam0 / 2 - 1e-12 * lam0):
        raise BudgetExhaustedError(
            f"lambda_min={lam.min()!r} fell below lam0/2={lam0 / 2!r}; too many updates for K={K}")
    return CoeffUpdate(CoeffVector(lam, lam0), records)
