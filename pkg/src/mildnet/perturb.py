"""ReLU-correlation objective G, its two solvers, and the inactive-neuron step.

``G(u; s) = |sum_i beta_i y_i relu(u^T (x_i * phi_s))|`` measures how much the
loss could drop if a fresh neuron pointing along ``u`` were switched on at
mask ``s``.  Training stops once every mask has ``G <= 5 lam0`` (up to the
solver's budget); otherwise a small neuron on the best mask is replaced.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InfeasibleSolverError, InvariantViolation, StaleGDError
from .loss import LOGISTIC, LossSpec, _lam_array, betas_from_pre, loss_from_pre, sgn
from .network import MaskSeries, NetParams, preactivations

DEFAULT_GRID_CAP = 100_000_000
CHUNK = 1 << 16
DROP_RTOL = 1e-9


@dataclass
class DirectionCandidate:
    s: int
    v: np.ndarray
    g: float
    solver: str
    budget: float
    raw_g: float | None = None
    degenerate: bool = False
    evaluations: int = 0
    extra: dict = field(default_factory=dict)


def _masked_points(data, masks: MaskSeries, s: int) -> np.ndarray:
    return masks.apply(s, data.X)


def g_objective(u, s: int, beta, data, masks: MaskSeries) -> float:
    """``|sum_i beta_i y_i relu(u^T (x_i * phi_s))|``."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ContractError("beta must be nonnegative")
    if data.n == 0:
        return 0.0
    act = np.maximum(_masked_points(data, masks, s) @ np.asarray(u, dtype=float), 0.0)
    return float(abs((beta * data.y) @ act))


def _g_many(U: np.ndarray, Xs: np.ndarray, w: np.ndarray) -> np.ndarray:
    # rows of U are candidate directions; w = beta * y
    return np.abs(np.maximum(U @ Xs.T, 0.0) @ w)


# -- exhaustive grid ----------------------------------------------------------

def grid_spec(n: int, r: int, lam0: float) -> tuple[float, int, int]:
    """Step ``h``, half-width ``k_max`` and total point count of the grid."""
    h = lam0 / (max(n, 1) * math.sqrt(r))
    k_max = math.ceil(1.0 / h)
    return h, k_max, (2 * k_max + 1) ** r


def solve_exhaustive(s: int, beta, data, masks: MaskSeries, lam0: float,
                     cap: int = DEFAULT_GRID_CAP) -> DirectionCandidate:
    """Grid argmax of G over the mask's ``r`` coordinates.

    The grid is ``{k h : |k| <= ceil(1/h)}^r`` with ``h = lam0 / (n sqrt(r))``.
    Nonzero points are scaled to unit norm before evaluation, which by
    homogeneity only rescales G.  Ties go to the lowest grid index.
    """
    beta = np.asarray(beta, dtype=float)
    supp = masks.support(s)
    r = supp.size
    n = data.n
    h, k_max, total = grid_spec(n, r, lam0)
    if total > cap:
        raise InfeasibleSolverError(
            f"exhaustive grid has {total:.3g} points (cap {cap:.3g}); "
            "use the randomized solver instead")
    Xs = data.X[:, supp] if n else np.zeros((0, r))
    w = beta * data.y if n else np.zeros(0)
    side = 2 * k_max + 1
    best_val, best_pt = -1.0, None
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(start + CHUNK, total))
        coords = (np.stack(np.unravel_index(idx, (side,) * r), axis=1) - k_max) * h
        norms = np.linalg.norm(coords, axis=1)
        nz = norms > 0
        coords[nz] /= norms[nz, None]
        vals = _g_many(coords, Xs, w) if n else np.zeros(len(idx))
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_pt = float(vals[j]), coords[j]
    v = np.zeros(masks.d)
    if np.linalg.norm(best_pt) == 0:
        best_pt = np.eye(r)[0]  # G(0) = 0 = best only when G vanishes everywhere
    v[supp] = best_pt
    budget = float(np.sum(beta * np.linalg.norm(Xs, axis=1)) * h * math.sqrt(r)) if n else 0.0
    return DirectionCandidate(s, v, g_objective(v, s, beta, data, masks), "exhaustive",
                              budget, evaluations=total)


# -- randomized directions ----------------------------------------------------

def solve_random_directions(beta, data, M: int, r_pert: float, rng_seed,
                            chunk: int = 4096) -> DirectionCandidate:
    """Random-feature search for a good direction (fully connected net only).

    Draws ``2M`` directions ``omega_j`` uniformly on the sphere, tilts each by
    ``r_pert * a_j * v_j`` where ``v_j`` is the normalized correlation
    aggregate over the half-space ``omega_j^T x >= 0``, and keeps the tilted
    candidate with the largest objective.  ``raw_g`` is that objective for
    the unnormalized candidate; ``g`` and ``v`` refer to its normalization.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 0 < r_pert < 1:
        raise ValueError("r_pert must lie in (0, 1)")
    beta = np.asarray(beta, dtype=float)
    X, y = data.X, data.y
    d = X.shape[1]
    w = beta * y
    wX = w[:, None] * X
    rng = np.random.default_rng(rng_seed)
    best_raw, best_c = -1.0, None
    any_nonzero = False
    total = 2 * M
    for start in range(0, total, chunk):
        k = min(chunk, total - start)
        omega = rng.standard_normal((k, d))
        omega /= np.linalg.norm(omega, axis=1, keepdims=True)
        a = np.where(np.arange(start, start + k) < M, 1.0, -1.0)
        agg = (X @ omega.T >= 0).T.astype(float) @ wX
        norms = np.linalg.norm(agg, axis=1)
        nz = norms > 0
        any_nonzero |= bool(np.any(nz))
        agg[nz] /= norms[nz, None]
        cands = omega + r_pert * a[:, None] * agg
        vals = _g_many(cands, X, w)
        j = int(np.argmax(vals))
        if vals[j] > best_raw:
            best_raw, best_c = float(vals[j]), cands[j]
    if not any_nonzero:
        v = np.zeros(d)
        v[0] = 1.0
        return DirectionCandidate(0, v, 0.0, "random", math.nan, raw_g=0.0,
                                  degenerate=True, evaluations=total)
    v = best_c / np.linalg.norm(best_c)
    g = float(abs(w @ np.maximum(X @ v, 0.0)))
    return DirectionCandidate(0, v, g, "random", math.nan, raw_g=best_raw,
                              evaluations=total,
                              extra={"raw_norm": float(np.linalg.norm(best_c))})


# -- perturbation -------------------------------------------------------------

@dataclass
class PerturbRecord:
    params: NetParams
    neuron: int
    loss_before: float
    loss_after: float
    g: float

    @property
    def drop(self) -> float:
        return self.loss_before - self.loss_after


def find_inactive(params: NetParams, masks: MaskSeries, s: int, n: int) -> int | None:
    """Smallest-index neuron on mask ``s`` with ``|alpha_j| <= 1/(2 sqrt(n))``."""
    idx = masks.neurons_of(s, params.m)
    small = idx[np.abs(params.alpha[idx]) <= 1.0 / (2.0 * math.sqrt(n))]
    return int(small[0]) if small.size else None


def perturb_with_record(params: NetParams, lam0: float, cand: DirectionCandidate, data,
                        masks: MaskSeries, loss: LossSpec = LOGISTIC, *, lam) -> PerturbRecord:
    n = data.n
    if lam0 < math.sqrt(n) * (1 - 1e-12):
        raise ContractError(f"lam0={lam0!r} must be at least sqrt(n)={math.sqrt(n)!r}")
    if not cand.g > 5 * lam0:
        raise ContractError(f"candidate value {cand.g!r} does not exceed 5*lam0={5 * lam0!r}")
    lam_arr = _lam_array(lam, params.m)
    P = preactivations(params, masks, data.X)
    L_before = loss_from_pre(params.alpha, P, data.y, lam_arr, loss)
    beta = betas_from_pre(params.alpha, P, data.y, loss)
    g_now = g_objective(cand.v, cand.s, beta, data, masks)
    if abs(g_now - cand.g) > 1e-9 * max(1.0, cand.g):
        raise ContractError("candidate was computed for a different parameter state")

    j = find_inactive(params, masks, cand.s, n)
    if j is None:
        raise StaleGDError(f"no neuron on mask {cand.s} with |alpha| <= 1/(2 sqrt(n))")
    S = float((beta * data.y) @ np.maximum(_masked_points(data, masks, cand.s) @ cand.v, 0.0))
    alpha = params.alpha.copy()
    dirs = params.dirs.copy()
    alpha[j] = float(sgn(S)) / math.sqrt(lam0)
    dirs[j] = float(sgn(alpha[j])) * cand.v
    dirs[j] /= np.linalg.norm(dirs[j])
    new = NetParams(alpha, dirs)

    P[:, j] = _masked_points(data, masks, cand.s) @ dirs[j]
    L_after = loss_from_pre(alpha, P, data.y, lam_arr, loss)
    slack = DROP_RTOL * max(1.0, abs(L_before))
    if L_after - L_before > -g_now / lam0 + 4 + slack:
        raise InvariantViolation(
            f"perturbation changed the loss by {L_after - L_before!r}, "
            f"more than -g/lam0 + 4 = {-g_now / lam0 + 4!r}")
    if L_before - L_after < 1 - DROP_RTOL:
        raise InvariantViolation(f"perturbation dropped the loss by only {L_before - L_after!r}")
    return PerturbRecord(new, j, L_before, L_after, g_now)


def perturb_inactive(params: NetParams, lam0: float, cand: DirectionCandidate, data,
                     masks: MaskSeries, loss: LossSpec = LOGISTIC, *, lam) -> NetParams:
    """Replace a small neuron on ``cand.s`` by ``sgn(S) / sqrt(lam0)`` along ``cand.v``.

    ``lam`` is the current coefficient vector; it is needed to evaluate the
    loss before and after, which is asserted to drop by at least 1.
    """
    return perturb_with_record(params, lam0, cand, data, masks, loss, lam=lam).params


def check_termination(cands, lam0: float) -> bool:
    return all(c.g <= 5 * lam0 for c in cands)


def write_candidates_csv(cands, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mask", "solver", "g", "budget"])
        for c in cands:
            writer.writerow([c.s, c.solver, repr(float(c.g)), repr(float(c.budget))])
