"""Full-batch gradient descent on the neuron magnitudes with directions frozen.

The step size ``1 / (72 max(L_entry, 2n))`` keeps every multiplicative update
factor of ``alpha_j`` inside ``[1/2, 3/2]``: signs never change, and each
step decreases the loss by at least ``||grad||^2 / (144 max(L_entry, 2n))``.
Every one of these facts is checked on every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, NonConvergenceError
from .loss import LOGISTIC, LossSpec, _lam_array
from .network import MaskSeries, NetParams, preactivations, scores_from_pre

LOSS_SLACK = 1e-12


@dataclass
class GDTrace:
    eta: float
    threshold: float
    L_entry: float
    n: int
    signs: np.ndarray
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    max_step_ratio: float = 0.0
    alphas: list | None = None

    @property
    def iterations(self) -> int:
        return len(self.losses) - 1

    @property
    def final_grad_norm(self) -> float:
        return self.grad_norms[-1]

    @property
    def rate_bound(self) -> float:
        """``144 L_entry max(L_entry, 2n) / T`` (infinite for T = 0)."""
        T = self.iterations
        if T == 0:
            return math.inf
        return 144 * self.L_entry * max(self.L_entry, 2 * self.n) / T

    def min_sq_grad(self) -> float:
        T = self.iterations
        return min(g * g for g in self.grad_norms[:T]) if T else math.inf

    def rows(self):
        for t, (L, g) in enumerate(zip(self.losses, self.grad_norms)):
            yield {"iteration": t, "loss": L, "grad_norm": g}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["iteration", "loss", "grad_norm"])
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})


def step_size(L0: float, n: int) -> float:
    scale = max(float(L0), 2.0 * n)
    if scale <= 0:
        raise ValueError("step size undefined when both the loss and n are zero")
    return 1.0 / (72.0 * scale)


def grad_threshold(lam0: float, K: int, n: int) -> float:
    """Stopping tolerance ``lam0 / (16 K sqrt(n))`` on the gradient norm."""
    return lam0 / (16.0 * K * math.sqrt(n)) if n else math.inf


def iteration_cap(L_entry: float, n: int, threshold: float) -> int:
    """Steps after which the rate bound forces the tolerance to have been met."""
    return math.ceil(144.0 * L_entry * max(L_entry, 2 * n) / threshold ** 2) + 1


def run_inner_gd(params: NetParams, lam, data, masks: MaskSeries,
                 loss: LossSpec = LOGISTIC, lam0: float | None = None, K: int = 1,
                 max_iters: int | None = None, threshold: float | None = None,
                 certify_small_neurons: bool = False, record_alphas: bool = False):
    """Descend on ``alpha`` until ``||grad|| <= threshold``.

    ``threshold`` defaults to :func:`grad_threshold`.  With
    ``certify_small_neurons`` the exit state is also checked for a small
    neuron on every mask, which is only guaranteed when ``lam`` came out of a
    coefficient update for the current directions and signs.

    Returns the updated parameters (same directions) and the trace.  Raises
    :class:`NonConvergenceError` with the partial trace once ``max_iters``
    (default: the rate-bound cap) steps have been taken.
    """
    n, m = data.n, params.m
    lam_arr = _lam_array(lam, m)
    if lam0 is None:
        lam0 = float(getattr(lam, "lam0", np.max(lam_arr, initial=0.0)))
    if threshold is None:
        threshold = grad_threshold(lam0, K, n)
    y = data.y
    P = preactivations(params, masks, data.X)
    alpha = params.alpha.copy()

    def evaluate(a):
        z = -y * scores_from_pre(a, P)
        L = float(np.sum(loss.value(z))) + float(lam_arr @ (a * a))
        beta = loss.deriv(z)
        g = -2.0 * ((beta * y) @ np.maximum(P * a, 0.0)) + 2.0 * lam_arr * a
        return L, g

    L, g = evaluate(alpha)
    eta = step_size(L, n)
    decrease_scale = 144.0 * max(L, 2.0 * n)
    cap = max_iters if max_iters is not None else iteration_cap(L, n, threshold)
    trace = GDTrace(eta=eta, threshold=threshold, L_entry=L, n=n, signs=np.sign(alpha),
                    alphas=[alpha.copy()] if record_alphas else None)
    trace.losses.append(L)

    while True:
        gnorm = float(np.linalg.norm(g))
        trace.grad_norms.append(gnorm)
        if gnorm <= threshold:
            break
        if trace.iterations >= cap:
            raise NonConvergenceError(
                f"inner GD did not reach ||grad|| <= {threshold:.3e} within {cap} steps "
                f"(last {gnorm:.3e})", trace=trace)
        new = alpha - eta * g
        if np.any(np.sign(new) != np.sign(alpha)):
            raise InvariantViolation(f"sign change at step {trace.iterations}")
        nz = alpha != 0
        if np.any(nz):
            ratio = float(np.max(np.abs(new[nz] - alpha[nz]) / np.abs(alpha[nz])))
            trace.max_step_ratio = max(trace.max_step_ratio, ratio)
            if ratio > 0.5:
                raise InvariantViolation(
                    f"step {trace.iterations} moved some alpha_j by {ratio:.3f} of its size")
        L_new, g_new = evaluate(new)
        required = L - gnorm * gnorm / decrease_scale
        if L_new > required + LOSS_SLACK * max(1.0, abs(L)):
            raise InvariantViolation(
                f"step {trace.iterations}: loss {L_new!r} exceeds sufficient-decrease "
                f"target {required!r}")
        alpha, L, g = new, L_new, g_new
        trace.losses.append(L)
        if record_alphas:
            trace.alphas.append(alpha.copy())

    if trace.iterations and trace.min_sq_grad() > trace.rate_bound * (1 + 1e-12):
        raise InvariantViolation("rate bound min ||grad||^2 <= 144 L max(L, 2n) / T violated")

    if certify_small_neurons and n:
        small = sum(float(np.min(alpha[masks.neurons_of(s, m)] ** 2))
                    for s in range(masks.period))
        bound = (8.0 * K / lam0) ** 2 * trace.final_grad_norm ** 2
        if small > bound * (1 + 1e-9) + 1e-300 or small > 1.0 / (4 * n) * (1 + 1e-9):
            raise InvariantViolation(
                f"exit state lacks a small neuron per mask: sum of minima {small!r}, "
                f"bound {bound!r}, 1/(4n)={1 / (4 * n)!r}")
    return params.with_alpha(alpha), trace
