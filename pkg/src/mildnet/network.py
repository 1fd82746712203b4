"""Masked one-hidden-layer ReLU networks.

A mask series is a periodic list of binary vectors; neuron ``j`` (0-indexed)
reads its input through mask ``j % period``.  With ``r == d`` the single mask
is all-ones and the network is an ordinary fully connected two-layer net;
with ``r < d`` each mask is a width-``r`` window and the network is a
one-dimensional convolution with ``d - r + 1`` positions.

Neuron weights are stored in balanced form: a signed magnitude ``alpha_j``
and a unit direction ``u_j``, so that ``a_j = alpha_j`` and
``w_j = alpha_j * u_j``.  The hidden weight vector is never stored.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvalidTopologyError, ShapeError

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class MaskSeries:
    d: int
    r: int
    masks: np.ndarray = field(repr=False)

    @property
    def period(self) -> int:
        return self.d - self.r + 1

    @property
    def is_fnn(self) -> bool:
        return self.r == self.d

    def mask_of(self, j):
        """Mask index owning neuron ``j`` (works elementwise on arrays)."""
        return np.asarray(j) % self.period

    def neuron_masks(self, m: int) -> np.ndarray:
        return np.arange(m) % self.period

    def support(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.masks[s])

    def neurons_of(self, s: int, m: int) -> np.ndarray:
        return np.arange(s, m, self.period)

    def apply(self, s: int, x: np.ndarray) -> np.ndarray:
        """Hadamard product of ``x`` (shape (d,) or (n, d)) with mask ``s``."""
        return x * self.masks[s]


def build_mask_series(d: int, r: int) -> MaskSeries:
    """Sliding-window mask series with window width ``r`` over ``d`` inputs."""
    d, r = int(d), int(r)
    if d < 1 or r < 1 or r > d:
        raise InvalidTopologyError(f"need 1 <= r <= d, got d={d}, r={r}")
    period = d - r + 1
    masks = np.zeros((period, d))
    for k in range(period):
        masks[k, k:k + r] = 1.0
    masks.setflags(write=False)
    return MaskSeries(d=d, r=r, masks=masks)


@dataclass
class NetParams:
    alpha: np.ndarray
    dirs: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        self.dirs = np.atleast_2d(np.asarray(self.dirs, dtype=float))
        if self.dirs.shape[0] != self.alpha.shape[0]:
            raise ShapeError(
                f"{self.alpha.shape[0]} magnitudes but {self.dirs.shape[0]} directions")
        norms = np.linalg.norm(self.dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise ContractError(f"direction {bad} has norm {norms[bad]!r}, expected 1")

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    @property
    def d(self) -> int:
        return self.dirs.shape[1]

    @property
    def a(self) -> np.ndarray:
        return self.alpha.copy()

    @property
    def w(self) -> np.ndarray:
        """Materialized hidden weights ``alpha_j * u_j`` (for export only)."""
        return self.alpha[:, None] * self.dirs

    def copy(self) -> "NetParams":
        return NetParams(self.alpha.copy(), self.dirs.copy())

    def with_alpha(self, alpha) -> "NetParams":
        out = NetParams.__new__(NetParams)
        out.alpha = np.asarray(alpha, dtype=float).copy()
        out.dirs = self.dirs
        return out


@dataclass
class Teacher:
    """A member of the bounded teacher class: sum |c_j| = 1, unit ``v_j``."""

    coeffs: np.ndarray
    dirs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        self.dirs = np.atleast_2d(np.asarray(self.dirs, dtype=float))
        if self.dirs.shape[0] != self.coeffs.shape[0]:
            raise ShapeError("teacher coefficient/direction count mismatch")

    def check(self, tol: float = 1e-12) -> None:
        total = float(np.abs(self.coeffs).sum())
        if abs(total - 1.0) > tol:
            raise ContractError(f"teacher coefficients sum to {total!r} in abs value, need 1")
        norms = np.linalg.norm(self.dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ContractError("teacher directions must be unit vectors")

    def to_dict(self) -> dict:
        return {"coeffs": self.coeffs.tolist(), "dirs": self.dirs.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Teacher":
        return cls(np.array(payload["coeffs"], dtype=float), np.array(payload["dirs"], dtype=float))


def _as_points(x, d: int):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != d:
        raise ShapeError(f"points have dimension {X.shape[1]}, network expects {d}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > 1.0 + UNIT_TOL):
        warnings.warn("input outside the unit ball; guarantees assume ||x|| <= 1",
                      RuntimeWarning, stacklevel=3)
    return X, single


def effective_dirs(dirs: np.ndarray, masks: MaskSeries) -> np.ndarray:
    """Directions with each row multiplied by its neuron's mask.

    ``u_j^T (x * phi_j) == (u_j * phi_j)^T x``, so masking the direction once
    is cheaper than masking every input.
    """
    if dirs.shape[1] != masks.d:
        raise ShapeError(f"directions have dimension {dirs.shape[1]}, masks expect {masks.d}")
    return dirs * masks.masks[masks.neuron_masks(dirs.shape[0])]


def preactivations(params: NetParams, masks: MaskSeries, X: np.ndarray) -> np.ndarray:
    """Matrix ``P[i, j] = u_j^T (x_i * phi_j)`` of shape (n, m)."""
    return np.asarray(X, dtype=float) @ effective_dirs(params.dirs, masks).T


def scores_from_pre(alpha: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Network outputs given precomputed pre-activations."""
    return np.maximum(P * alpha, 0.0) @ alpha


def forward(params: NetParams, masks: MaskSeries, x):
    """Network output ``sum_j alpha_j * relu(alpha_j * u_j^T (x * phi_j))``.

    ``x`` may be a single point of shape (d,) or a batch of shape (n, d); the
    return value is a float or an array of n floats accordingly.
    """
    X, single = _as_points(x, masks.d)
    if params.d != masks.d:
        raise ShapeError(f"parameters have dimension {params.d}, masks expect {masks.d}")
    out = scores_from_pre(params.alpha, preactivations(params, masks, X))
    return float(out[0]) if single else out


def teacher_eval(h: Teacher, masks: MaskSeries, x):
    """Teacher output ``sum_j c_j * relu(v_j^T (x * phi_j))``."""
    h.check()
    X, single = _as_points(x, masks.d)
    if h.dirs.shape[1] != masks.d:
        raise ShapeError("teacher dimension does not match the mask series")
    pre = X @ effective_dirs(h.dirs, masks).T
    out = np.maximum(pre, 0.0) @ h.coeffs
    return float(out[0]) if single else out
