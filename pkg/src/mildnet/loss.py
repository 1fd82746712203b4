"""Regularized empirical loss and its gradient in the magnitude coordinates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeError
from .network import MaskSeries, NetParams, preactivations, scores_from_pre


def _softplus(z):
    # log(1 + e^z) without overflow for large |z|
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LossSpec:
    """A univariate margin loss: convex, non-decreasing, C^2, with ``l`` and
    ``l'`` both 1-Lipschitz and ``l'(z) <= exp(expbound_a * z)``."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    expbound_a: float
    deriv_at_zero: float


LOGISTIC = LossSpec(
    name="logistic",
    value=_softplus,
    deriv=_sigmoid,
    expbound_a=1.0,
    deriv_at_zero=0.5,
)


@dataclass
class CoeffVector:
    lam: np.ndarray
    lam0: float

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)
        self.lam0 = float(self.lam0)

    @classmethod
    def constant(cls, m: int, lam0: float) -> "CoeffVector":
        return cls(np.full(m, float(lam0)), lam0)

    def in_range(self, rtol: float = 1e-12) -> bool:
        lo, hi = self.lam0 / 2, self.lam0
        slack = rtol * self.lam0
        return bool(np.all(self.lam >= lo - slack) and np.all(self.lam <= hi + slack))

    def copy(self) -> "CoeffVector":
        return CoeffVector(self.lam.copy(), self.lam0)


def _lam_array(lam, m: int) -> np.ndarray:
    arr = lam.lam if isinstance(lam, CoeffVector) else np.asarray(lam, dtype=float).reshape(-1)
    if arr.shape[0] != m:
        raise ShapeError(f"{arr.shape[0]} coefficients for {m} neurons")
    return arr


def _check_data(params: NetParams, data, masks: MaskSeries):
    if data.X.shape[0] and data.X.shape[1] != masks.d:
        raise ShapeError(f"data dimension {data.X.shape[1]} != mask dimension {masks.d}")
    if params.d != masks.d:
        raise ShapeError(f"parameter dimension {params.d} != mask dimension {masks.d}")


# Kernels over precomputed pre-activations P (n, m).  Inner GD keeps P fixed
# because directions do not move there.

def loss_from_pre(alpha, P, y, lam, loss: LossSpec = LOGISTIC) -> float:
    data_term = float(np.sum(loss.value(-y * scores_from_pre(alpha, P)))) if len(y) else 0.0
    return data_term + float(np.dot(lam, alpha * alpha))


def betas_from_pre(alpha, P, y, loss: LossSpec = LOGISTIC) -> np.ndarray:
    return loss.deriv(-y * scores_from_pre(alpha, P))


def grad_from_pre(alpha, P, y, lam, loss: LossSpec = LOGISTIC) -> np.ndarray:
    beta = betas_from_pre(alpha, P, y, loss)
    return -2.0 * ((beta * y) @ np.maximum(P * alpha, 0.0)) + 2.0 * lam * alpha


def empirical_loss(params: NetParams, lam, data, masks: MaskSeries,
                   loss: LossSpec = LOGISTIC) -> float:
    """``sum_i l(-y_i f(x_i)) + sum_j lam_j alpha_j^2``.

    Under the balanced parameterization this equals the symmetric form
    ``1/2 sum_j lam_j (a_j^2 + ||w_j||^2)``.
    """
    _check_data(params, data, masks)
    lam = _lam_array(lam, params.m)
    P = preactivations(params, masks, data.X)
    return loss_from_pre(params.alpha, P, data.y, lam, loss)


def grad_alpha(params: NetParams, lam, data, masks: MaskSeries,
               loss: LossSpec = LOGISTIC) -> np.ndarray:
    """Gradient of :func:`empirical_loss` with respect to the magnitudes."""
    _check_data(params, data, masks)
    lam = _lam_array(lam, params.m)
    P = preactivations(params, masks, data.X)
    return grad_from_pre(params.alpha, P, data.y, lam, loss)


def per_sample_derivs(params: NetParams, data, masks: MaskSeries,
                      loss: LossSpec = LOGISTIC) -> np.ndarray:
    """``beta_i = l'(-y_i f(x_i))`` for every sample."""
    _check_data(params, data, masks)
    P = preactivations(params, masks, data.X)
    return betas_from_pre(params.alpha, P, data.y, loss)


def sgn(x):
    """Sign with ``sgn(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)
