import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mildnet.data import Dataset
from mildnet.loss import (LOGISTIC, CoeffVector, empirical_loss, grad_alpha, per_sample_derivs,
                          sgn)
from mildnet.network import NetParams, build_mask_series, forward, preactivations

from conftest import random_data, random_params


def test_zero_alpha_single_point():
    ms = build_mask_series(2, 2)
    p = NetParams([0.0], [[1.0, 0.0]])
    ds = Dataset([[0.3, 0.1]], [1.0])
    assert empirical_loss(p, [1.0], ds, ms) == pytest.approx(math.log(2), rel=1e-15)


def test_regularizer_only():
    ms = build_mask_series(2, 2)
    p = NetParams([1.0], [[1.0, 0.0]])
    assert empirical_loss(p, [2.0], Dataset.empty(2), ms) == 2.0


def test_loss_matches_resummation(rng):
    ms = build_mask_series(6, 4)
    p = random_params(rng, 9, ms)
    ds = random_data(rng, 11, 6)
    lam = rng.uniform(1, 2, 9)
    ref = sum(math.log1p(math.exp(-ds.y[i] * forward(p, ms, ds.X[i]))) for i in range(11))
    ref += sum(lam[j] * p.alpha[j] ** 2 for j in range(9))
    assert empirical_loss(p, lam, ds, ms) == pytest.approx(ref, rel=1e-12)


def test_symmetric_form_agrees(rng):
    ms = build_mask_series(4, 2)
    p = random_params(rng, 6, ms)
    ds = random_data(rng, 5, 4)
    lam = rng.uniform(1, 2, 6)
    data_term = empirical_loss(p, np.zeros(6), ds, ms)
    half_form = 0.5 * np.sum(lam * (p.a ** 2 + np.linalg.norm(p.w, axis=1) ** 2))
    assert empirical_loss(p, lam, ds, ms) == pytest.approx(data_term + half_form, rel=1e-13)


def test_grad_regularizer_only():
    ms = build_mask_series(1, 1)
    p = NetParams([0.5], [[1.0]])
    np.testing.assert_allclose(grad_alpha(p, [2.0], Dataset.empty(1), ms), [2.0])


def test_grad_zero_at_zero_alpha(rng):
    ms = build_mask_series(4, 3)
    p = random_params(rng, 6, ms)
    p = NetParams(np.zeros(6), p.dirs)
    ds = random_data(rng, 7, 4)
    np.testing.assert_array_equal(grad_alpha(p, np.ones(6), ds, ms), np.zeros(6))


def _smooth_instance(rng, n, d, r, m, kink=1e-6):
    # resample until no ReLU argument sits near its kink
    ms = build_mask_series(d, r)
    while True:
        p = random_params(rng, m, ms)
        ds = random_data(rng, n, d)
        if np.all(np.abs(preactivations(p, ms, ds.X) * p.alpha) >= kink):
            return p, ds, ms


def _fd_grad(p, lam, ds, ms, h=1e-6):
    g = np.zeros(p.m)
    for j in range(p.m):
        up, dn = p.alpha.copy(), p.alpha.copy()
        up[j] += h
        dn[j] -= h
        g[j] = (empirical_loss(p.with_alpha(up), lam, ds, ms)
                - empirical_loss(p.with_alpha(dn), lam, ds, ms)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(10))
def test_grad_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p, ds, ms = _smooth_instance(rng, 8, 5, 3, 12)
    lam = rng.uniform(0.5, 1.0, 12)
    g = grad_alpha(p, lam, ds, ms)
    fd = _fd_grad(p, lam, ds, ms)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-8)


@given(seed=st.integers(0, 2**32 - 1))
def test_factored_gradient_form(seed):
    rng = np.random.default_rng(seed)
    ms = build_mask_series(5, 2)
    p = random_params(rng, 8, ms)
    ds = random_data(rng, 6, 5)
    lam = rng.uniform(1, 2, 8)
    beta = per_sample_derivs(p, ds, ms)
    P = preactivations(p, ms, ds.X)
    s = sgn(p.alpha)
    inner = (beta * ds.y) @ (s * np.maximum(s * P, 0.0))
    factored = 2 * (lam - inner) * p.alpha
    np.testing.assert_allclose(grad_alpha(p, lam, ds, ms), factored, rtol=1e-10, atol=1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_locally_lipschitz(seed):
    rng = np.random.default_rng(seed)
    ms = build_mask_series(4, 4)
    n, m = 10, 12
    p = random_params(rng, m, ms)
    ds = random_data(rng, n, 4)
    lam0 = 3.0
    lam = rng.uniform(lam0 / 2, lam0, m)
    # perturbation with |delta_j| <= |alpha_j| / 2
    delta = rng.uniform(-0.5, 0.5, m) * np.abs(p.alpha)
    q = p.with_alpha(p.alpha + delta)
    lhs = np.linalg.norm(grad_alpha(q, lam, ds, ms) - grad_alpha(p, lam, ds, ms))
    a2 = np.linalg.norm(p.alpha) ** 2
    rhs = 12 * np.linalg.norm(delta) * math.sqrt(n * n * a2 * a2 + n * n + lam0 * lam0)
    assert lhs <= rhs


@given(scale=st.floats(1.0, 1e3), seed=st.integers(0, 1000))
def test_coercivity_lower_bound(scale, seed):
    rng = np.random.default_rng(seed)
    ms = build_mask_series(3, 2)
    p = random_params(rng, 6, ms)
    p = p.with_alpha(scale * p.alpha)
    ds = random_data(rng, 4, 3)
    cv = CoeffVector(rng.uniform(1.0, 2.0, 6), 2.0)
    assert empirical_loss(p, cv, ds, ms) >= 1.0 * np.sum(p.alpha ** 2)


def test_betas_at_zero_output():
    ms = build_mask_series(3, 3)
    p = NetParams([0.0, 0.0], [[1, 0, 0], [0, 1, 0]])
    ds = Dataset([[0.1, 0.2, 0.3], [0.0, -0.5, 0.1]], [1.0, -1.0])
    np.testing.assert_array_equal(per_sample_derivs(p, ds, ms), [0.5, 0.5])


def test_betas_shrink_as_margin_grows():
    ms = build_mask_series(1, 1)
    ds = Dataset([[1.0]], [1.0])
    vals = [per_sample_derivs(NetParams([a], [[1.0]]), ds, ms)[0] for a in (0.5, 1, 2, 4, 8)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-20


def test_betas_match_pointwise(rng):
    ms = build_mask_series(4, 2)
    p = random_params(rng, 6, ms)
    ds = random_data(rng, 9, 4)
    ref = [1 / (1 + math.exp(ds.y[i] * forward(p, ms, ds.X[i]))) for i in range(9)]
    np.testing.assert_allclose(per_sample_derivs(p, ds, ms), ref, rtol=1e-13)


def test_logistic_assumptions():
    z = np.linspace(-40, 40, 4001)
    v, dv = LOGISTIC.value(z), LOGISTIC.deriv(z)
    assert np.all(np.diff(v) >= 0)
    assert np.all(np.diff(dv) >= 0)  # convex
    assert np.all(dv <= np.exp(LOGISTIC.expbound_a * z) + 1e-300)
    assert np.max(np.abs(np.diff(dv)) / np.diff(z)) <= 0.25 + 1e-9
    assert LOGISTIC.deriv_at_zero == LOGISTIC.deriv(np.array([0.0]))[0] == 0.5


def test_logistic_stable_far_out():
    assert LOGISTIC.value(np.array([800.0]))[0] == 800.0
    assert LOGISTIC.value(np.array([-800.0]))[0] == 0.0
    assert np.isfinite(LOGISTIC.deriv(np.array([-800.0, 800.0]))).all()


def test_coeff_vector_range():
    cv = CoeffVector.constant(4, 2.0)
    assert cv.in_range()
    assert not CoeffVector([0.9, 2.0], 2.0).in_range()
