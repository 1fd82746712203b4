"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are echoed in the terminal
summary (and printed directly under ``pytest -s``).
"""
import math
import time

import numpy as np
import pytest

from mildnet.data import (Dataset, generate_dataset, generate_linear_margin_dataset,
                          generate_teacher, sample_unit_ball)
from mildnet.driver import TrainConfig, bound_report, report_dict, train
from mildnet.errors import MildnetError
from mildnet.loss import empirical_loss, grad_alpha
from mildnet.network import Teacher, build_mask_series, preactivations
from mildnet.oracle import linear_max, oracle_max_g
from mildnet.perturb import solve_exhaustive, solve_random_directions

from conftest import ACCEPTANCE, dead_network, random_data, random_params


def verdict(num, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {name} -- {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


# -- 1 ------------------------------------------------------------------------

def test_criterion_01_gradient_finite_differences():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, done = 0.0, 0
    while done < 200:
        n = int(rng.integers(1, 21))
        d = int(rng.integers(1, 11))
        r = int(rng.integers(1, d + 1))
        ms = build_mask_series(d, r)
        m = int(rng.integers(1, 61))
        p = random_params(rng, m, ms)
        ds = random_data(rng, n, d)
        if np.min(np.abs(preactivations(p, ms, ds.X) * p.alpha)) < 1e-6:
            continue  # too close to a ReLU kink for a two-sided difference
        lam = rng.uniform(0.5, 2.0, m)
        g = grad_alpha(p, lam, ds, ms)
        fd = np.empty(m)
        h = 1e-6
        for j in range(m):
            up, dn = p.alpha.copy(), p.alpha.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (empirical_loss(p.with_alpha(up), lam, ds, ms)
                     - empirical_loss(p.with_alpha(dn), lam, ds, ms)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300)))
        done += 1
    elapsed = time.perf_counter() - t0
    verdict(1, "gradient vs central differences", worst <= 1e-5 and elapsed < 10,
            f"200 configs, worst rel err {worst:.2e} (tol 1e-5), {elapsed:.1f}s (< 10s)")


# -- 2-5: twenty full runs ----------------------------------------------------

class StepAudit:
    """Independent per-step re-check of every inner-GD trajectory."""

    def __init__(self):
        self.steps = self.sign = self.ratio = self.mono = self.rate = self.traces = 0

    def __call__(self, trace):
        A = np.array(trace.alphas)
        self.traces += 1
        self.steps += len(A) - 1
        if len(A) > 1:
            prev, nxt = A[:-1], A[1:]
            self.sign += int(np.sum(np.sign(nxt) != np.sign(prev)))
            self.ratio += int(np.sum(np.abs(nxt - prev) > np.abs(prev) / 2))
        self.mono += int(np.sum(np.diff(trace.losses) > 0))
        if trace.iterations and trace.min_sq_grad() > trace.rate_bound:
            self.rate += 1


def _standard_fixture(seed):
    r = 3 if seed % 2 == 0 else 10
    h = generate_teacher(10, r, 2, seed)
    ds = generate_dataset(h, 100, 0.1, 5, seed, r=r)
    return ds, build_mask_series(10, r)


@pytest.fixture(scope="module")
def twenty_runs():
    audit = StepAudit()
    reports, failures = [], []
    for seed in range(20):
        ds, ms = _standard_fixture(seed)
        cfg = TrainConfig(init_seed=seed, solver_seed=1000 + seed)
        try:
            reports.append(train(cfg, ds, ms, gd_observer=audit))
        except MildnetError as exc:  # includes InvariantViolation
            failures.append(f"seed {seed}: {type(exc).__name__}: {exc}")
    return reports, failures, audit


def test_criterion_02_sign_and_step(twenty_runs):
    reports, failures, audit = twenty_runs
    bad = audit.sign + audit.ratio + len(failures)
    verdict(2, "sign preservation and |d alpha| <= |alpha|/2", bad == 0 and len(reports) == 20,
            f"{len(reports)}/20 runs, {audit.steps} GD steps, sign violations {audit.sign}, "
            f"step violations {audit.ratio}, aborted runs {len(failures)}")


def test_criterion_03_monotone_and_rate(twenty_runs):
    reports, failures, audit = twenty_runs
    verdict(3, "monotone inner loss and rate bound", audit.mono + audit.rate + len(failures) == 0,
            f"{audit.traces} traces, loss increases {audit.mono}, rate-bound violations "
            f"{audit.rate}")


def test_criterion_04_coefficient_invariants(twenty_runs):
    reports, failures, _ = twenty_runs
    calls = bad = 0
    for rep in reports:
        lam0, K = rep.config.lam0, rep.K
        for rec in rep.records:
            calls += 1
            ok = (rec.max_lam_increase <= 0
                  and rec.max_lam_step <= lam0 / (2 * K) * (1 + 1e-12)
                  and rec.min_separation >= lam0 / (8 * K) * (1 - 1e-9)
                  and lam0 / 2 <= rec.lam_min and rec.lam_max <= lam0)
            bad += not ok
    verdict(4, "coefficient update invariants", bad == 0 and not failures,
            f"{calls} updates checked, {bad} violations")


@pytest.fixture(scope="module")
def adversarial_runs():
    n = 200
    lam0 = math.sqrt(n)
    out = []
    for seed in range(3):
        ds, p, lam = dead_network(n, lam0, seed=seed)
        ms = build_mask_series(3, 3)
        out.append((train(TrainConfig(lam0=lam0), ds, ms, init=(p, lam)), ds, ms))
    return out


def test_criterion_05_perturbation_decrease(twenty_runs, adversarial_runs):
    reports, failures, _ = twenty_runs
    all_reps = reports + [r for r, _, _ in adversarial_runs]
    drops = [rec.loss_post - rec.loss_after_perturb
             for rep in all_reps for rec in rep.records if rec.perturbed_mask is not None]
    within_K = all(rep.k0 <= rep.K for rep in all_reps)
    std = sum(rep.perturbations for rep in reports)
    ok = within_K and all(dr >= 1 - 1e-9 for dr in drops) and len(drops) > 0 and not failures
    verdict(5, "perturbation drops loss by >= 1; k0 <= K", ok,
            f"{len(drops)} perturbations ({std} in the 20 standard runs, where 5*lam0 > n "
            f"makes G <= 5*lam0 automatic), min drop "
            f"{min(drops) if drops else float('nan'):.3f}, k0 <= K in all {len(all_reps)} runs")


# -- 6 ------------------------------------------------------------------------

def test_criterion_06_exhaustive_vs_oracle():
    rng = np.random.default_rng(6)
    ms = build_mask_series(3, 3)
    n = 8
    ds = Dataset(sample_unit_ball(rng, n, 3), np.where(rng.random(n) < 0.5, -1.0, 1.0))
    lam0 = math.sqrt(n) * math.log(n)
    t0 = time.perf_counter()
    ok_count, worst = 0, -math.inf
    for _ in range(50):
        beta = rng.random(n)
        cand = solve_exhaustive(0, beta, ds, ms, lam0)
        orc = oracle_max_g(beta, ds, ms, 0, 1_000_000)
        ok_count += cand.g >= orc.value - lam0
        worst = max(worst, orc.value - cand.g)
    elapsed = time.perf_counter() - t0
    verdict(6, "exhaustive solver within lam0 of oracle", ok_count == 50 and elapsed < 120,
            f"{ok_count}/50, largest shortfall {worst:.3e} vs lam0={lam0:.3f}, {elapsed:.1f}s")


# -- 7 ------------------------------------------------------------------------

GAMMA7, DELTA7, D7 = 0.3, 0.05, 3


def lemma_parameters(n, gamma=GAMMA7, delta=DELTA7, d=D7):
    """``(eps0, r_pert, M_min)`` for the lemma at sample size n, or None if infeasible."""
    eps0 = n ** (-1 / 3)
    gap = gamma - 4 * eps0
    if gap <= 0 or n < math.log(6 / delta) / (2 * eps0 ** 2):
        return None
    r = gap / (32 * d)
    M = max(math.log(4 * n / delta) / gamma ** 2,
            4 * math.log(6 * n / delta) / (r * r * gap * gap))
    return eps0, r, math.ceil(M)


def cheapest_lemma_instance():
    best = None
    for n in np.unique(np.logspace(math.log10(2371), 7, 400).astype(int)):
        pars = lemma_parameters(int(n))
        if pars is None:
            continue
        cost = 2 * pars[2] * int(n)  # candidate-sample products per trial
        if best is None or cost < best[0]:
            best = (cost, int(n), pars)
    return best


def test_criterion_07_lemma9():
    cost, n, (eps0, r_pert, M) = cheapest_lemma_instance()
    # measure solver throughput on the lemma's own n with a small M
    ds = generate_linear_margin_dataset(D7, n, GAMMA7, 7)
    beta = np.random.default_rng(7).random(n)
    probe_M = 2000
    t0 = time.perf_counter()
    solve_random_directions(beta, ds, probe_M, r_pert, 0)
    per_pair = (time.perf_counter() - t0) / (2 * probe_M * n)
    projected = 100 * cost * per_pair
    if projected <= 300:
        hits = 0
        for trial in range(100):
            b = np.random.default_rng(100 + trial).random(n)
            cand = solve_random_directions(b, ds, M, r_pert, trial)
            hits += cand.raw_g >= r_pert * (GAMMA7 - 4 * eps0) / 8 * linear_max(b, ds)
        verdict(7, "Lemma 9 randomized solver", hits >= 95, f"{hits}/100 (n={n}, M={M})")
    else:
        verdict(7, "Lemma 9 randomized solver", False,
                f"not runnable in 5 min: gamma-4*eps0 > 0 needs n >= 2371; cheapest "
                f"conforming instance n={n}, M={M:.3g}, r_pert={r_pert:.3g} costs "
                f"{cost:.3g} candidate-point products per trial; measured "
                f"{per_pair:.2e}s each gives a projected {projected:.3g}s for 100 trials")


# -- 8 ------------------------------------------------------------------------

def _certified_d3_runs():
    runs = []
    for r, E, seed in [(3, 0, 0), (3, 4, 1), (2, 0, 2), (2, 4, 3), (1, 2, 4)]:
        h = generate_teacher(3, r, 1, seed)
        ds = generate_dataset(h, 60, 0.2, E, seed, r=r)
        runs.append((ds, build_mask_series(3, r), None))
    n = 200
    ds, p, lam = dead_network(n, math.sqrt(n))
    teacher = Teacher([1.0], [[1.0, 0.0, 0.0]])
    ms = build_mask_series(3, 3)
    gamma = float(np.min(ds.y * np.maximum(ds.X[:, 0], 0.0)))
    ds = Dataset(ds.X, ds.y, gamma=gamma, E=0, teacher=teacher, r=3)
    runs.append((ds, ms, (p, lam)))
    return runs


def test_criterion_08_surrogate_inequality():
    bad, lines = 0, []
    for ds, ms, init in _certified_d3_runs():
        assert ds.margin_count(ms) >= ds.n - ds.E
        cfg = TrainConfig(lam0=math.sqrt(ds.n)) if init else TrainConfig()
        rep = train(cfg, ds, ms, init=init)
        out = bound_report(rep, ds, ds.gamma, ds.E, masks=ms)
        holds = out["sum_loss_deriv"] <= out["surrogate_rhs"] * (1 + 1e-9)
        bad += not holds
        lines.append(f"r={ms.r},E={ds.E}: {out['sum_loss_deriv']:.2f}<={out['surrogate_rhs']:.2f}")
    verdict(8, "sum l' <= (oracle g_max + 2E)/gamma", bad == 0,
            f"{len(lines)} terminated runs, {bad} violations; " + "; ".join(lines))


# -- 9 ------------------------------------------------------------------------

def test_criterion_09_end_to_end():
    t0 = time.perf_counter()
    rows = []
    for seed in range(5):
        ds = generate_linear_margin_dataset(10, 200, 0.3, seed)
        held = generate_linear_margin_dataset(10, 1000, 0.3, 10_000 + seed, witness_seed=seed)
        ms = build_mask_series(10, 10)
        cfg = TrainConfig(init_seed=seed, solver_seed=500 + seed)
        rep = train(cfg, ds, ms, heldout=held)
        assert rep.params.m == 201
        rows.append((rep.train_error, rep.test_error))
    elapsed = time.perf_counter() - t0
    ok = all(tr <= 0.05 and te <= 0.10 for tr, te in rows) and elapsed < 600
    verdict(9, "end-to-end learning on separable data", ok,
            "train/test per seed " + ", ".join(f"{tr:.3f}/{te:.3f}" for tr, te in rows)
            + f"; {elapsed:.1f}s")


# -- 10 -----------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    from mildnet.driver import write_report_json, write_trace_csv
    same = True
    cases = [
        (generate_dataset(generate_teacher(3, 3, 1, 4), 50, 0.4, 0, 4), build_mask_series(3, 3)),
        (generate_linear_margin_dataset(6, 40, 0.2, 2), build_mask_series(6, 6)),
    ]
    for c, (ds, ms) in enumerate(cases):
        blobs = []
        for rep_i in range(2):
            rep = train(TrainConfig(init_seed=7, solver_seed=8, M=200), ds, ms)
            bound_report(rep, ds, ds.gamma, ds.E, masks=ms)
            jp, cp = tmp_path / f"{c}_{rep_i}.json", tmp_path / f"{c}_{rep_i}.csv"
            write_report_json(rep, jp)
            write_trace_csv(rep, cp)
            blobs.append((jp.read_bytes(), cp.read_bytes()))
        same &= blobs[0] == blobs[1]
    verdict(10, "byte-identical report and trace", same,
            f"{len(cases)} configurations (exhaustive and randomized solver) run twice")
