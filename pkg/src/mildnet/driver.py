"""End-to-end training: coefficient update, inner GD, direction search, perturbation.

The outer loop runs at most ``K`` times.  Each pass that does not terminate
perturbs one neuron and drops the loss by at least 1, and the loss starts
below ``K``, so exceeding ``K`` passes means a bug and is reported as one.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .coeff import apply_coefficient_update, build_q_blocks
from .errors import ContractError, InfeasibleSolverError, InvariantViolation, StaleGDError
from .gd import GDTrace, grad_threshold, run_inner_gd
from .loss import LOGISTIC, CoeffVector, LossSpec, empirical_loss, per_sample_derivs
from .network import MaskSeries, NetParams, build_mask_series, forward
from .oracle import oracle_max_g
from .perturb import (DEFAULT_GRID_CAP, check_termination, grid_spec, perturb_with_record,
                      solve_exhaustive, solve_random_directions)

REPORT_VERSION = "1"
CLAIM1_SLACK = 1e-9
LOSSES = {"logistic": LOGISTIC}


@dataclass
class TrainConfig:
    lam0: float | None = None
    C: float | None = None
    m: int | None = None
    solver: str = "auto"  # auto | exhaustive | random
    M: int = 1000
    r_pert: float = 0.01
    init_seed: int = 0
    solver_seed: int = 1
    grid_cap: int = DEFAULT_GRID_CAP
    max_inner_iters: int | None = None
    stale_retries: int = 3
    loss: str = "logistic"
    delta: float = 0.05
    oracle_resolution: int = 100_000

    def resolved(self, n: int, masks: MaskSeries) -> "TrainConfig":
        """Copy with data-dependent defaults filled in and invariants checked."""
        out = TrainConfig(**asdict(self))
        if out.lam0 is None:
            # sqrt(n) ln(n) drops below sqrt(n) for n <= e
            out.lam0 = max(math.sqrt(n) * math.log(n), math.sqrt(n)) if n else 1.0
        if out.C is None:
            out.C = out.lam0
        if out.m is None:
            out.m = (n + 1) * masks.period
        if out.lam0 < math.sqrt(n) * (1 - 1e-12):
            raise ContractError(f"lam0={out.lam0} is below sqrt(n)={math.sqrt(n)}")
        if out.C < out.lam0:
            raise ContractError(f"C={out.C} must be at least lam0={out.lam0}")
        if out.m < (n + 1) * masks.period:
            raise ContractError(f"m={out.m} below (n+1)(d-r+1)={(n + 1) * masks.period}")
        if out.solver not in ("auto", "exhaustive", "random"):
            raise ContractError(f"unknown solver {out.solver!r}")
        if out.loss not in LOSSES:
            raise ContractError(f"unknown loss {out.loss!r}")
        return out

    @classmethod
    def field_types(cls) -> dict:
        hints = {"lam0": float, "C": float, "m": int, "solver": str, "M": int,
                 "r_pert": float, "init_seed": int, "solver_seed": int, "grid_cap": int,
                 "max_inner_iters": int, "stale_retries": int, "loss": str,
                 "delta": float, "oracle_resolution": int}
        assert set(hints) == {f.name for f in fields(cls)}
        return hints


@dataclass
class OuterRecord:
    outer_k: int
    inner_T: int
    loss_pre: float
    loss_post: float
    grad_norm: float
    perturbed_mask: int | None
    g_value: float
    lam_min: float
    lam_max: float
    loss_after_perturb: float | None = None
    perturbed_neuron: int | None = None
    retries: int = 0
    coeff_cases: list = field(default_factory=list)
    min_separation: float = math.inf
    max_lam_step: float = 0.0
    max_lam_increase: float = 0.0


@dataclass
class TrainReport:
    config: TrainConfig
    n: int
    d: int
    r: int
    K: int
    k0: int
    L0: float
    params: NetParams
    lam: CoeffVector
    records: list
    candidates: list
    certificates: dict
    train_error: float
    test_error: float | None = None
    gd_traces: list = field(default_factory=list, repr=False)
    ops: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    @property
    def perturbations(self) -> int:
        return sum(1 for r in self.records if r.perturbed_mask is not None)


# -- initialization -----------------------------------------------------------

def compute_K(L0: float, n: int) -> int:
    return max(math.ceil(L0), 2 * n)


def init_params(config: TrainConfig, data, masks: MaskSeries, rng_seed: int | None = None,
                loss: LossSpec = LOGISTIC):
    """Initial ``(params, lam, K)`` for a resolved config.

    ``|alpha_j(0)| = min(1, sqrt(n / (4 m lam0)))`` so the regularizer is at
    most ``n/4``; signs alternate between consecutive neurons of each mask.
    """
    n, m, lam0 = data.n, config.m, config.lam0
    rng = np.random.default_rng(config.init_seed if rng_seed is None else rng_seed)
    mag = min(1.0, math.sqrt(n / (4.0 * m * lam0))) if n else 1.0
    j = np.arange(m)
    alpha = mag * np.where((j // masks.period) % 2 == 0, 1.0, -1.0)
    dirs = np.zeros((m, masks.d))
    for s in range(masks.period):
        idx = masks.neurons_of(s, m)
        supp = masks.support(s)
        g = rng.standard_normal((idx.size, supp.size))
        dirs[np.ix_(idx, supp)] = g / np.linalg.norm(g, axis=1, keepdims=True)
    params = NetParams(alpha, dirs)
    lam = CoeffVector.constant(m, lam0)
    L0 = empirical_loss(params, lam, data, masks, loss)
    return params, lam, compute_K(L0, n)


# -- direction search ---------------------------------------------------------

def choose_solver(config: TrainConfig, n: int, masks: MaskSeries) -> str:
    if config.solver != "auto":
        return config.solver
    _, _, total = grid_spec(n, masks.r, config.lam0)
    if total <= config.grid_cap:
        return "exhaustive"
    if masks.is_fnn:
        return "random"
    raise InfeasibleSolverError(
        f"exhaustive grid of {total:.3g} points exceeds the cap and the randomized "
        "solver needs a fully connected net")


def find_candidates(solver: str, beta, data, masks: MaskSeries, config: TrainConfig):
    if solver == "random":
        if not masks.is_fnn:
            raise ContractError("the randomized solver requires r == d")
        cand = solve_random_directions(beta, data, config.M, config.r_pert, config.solver_seed)
        cand.budget = float(config.C)  # not certified; the configured C stands in
        return [cand]
    return [solve_exhaustive(s, beta, data, masks, config.lam0, cap=config.grid_cap)
            for s in range(masks.period)]


# -- training -----------------------------------------------------------------

def train(config: TrainConfig, data, masks: MaskSeries, loss: LossSpec | None = None,
          init: tuple | None = None, heldout=None, gd_observer=None) -> TrainReport:
    """Run the outer loop to termination and certify the final state.

    ``init`` may supply ``(params, lam)`` to start from (``K`` is recomputed
    from their loss); otherwise :func:`init_params` is used.  ``gd_observer``,
    if given, is called with each inner-GD trace including its full ``alpha``
    path, which is dropped afterwards.
    """
    n = data.n
    if n == 0:
        raise ContractError("training needs at least one sample")
    cfg = config.resolved(n, masks)
    loss = loss or LOSSES[cfg.loss]
    if init is None:
        params, lam, K = init_params(cfg, data, masks, loss=loss)
    else:
        params, lam = init[0].copy(), init[1].copy()
        if params.m != cfg.m:
            raise ContractError(f"init has {params.m} neurons, config says m={cfg.m}")
        K = compute_K(empirical_loss(params, lam, data, masks, loss), n)
    L0 = empirical_loss(params, lam, data, masks, loss)
    solver = choose_solver(cfg, n, masks)
    base_thr = grad_threshold(cfg.lam0, K, n)

    records, traces = [], []
    ops = {"gd_steps": 0, "gd_flops": 0, "svd_flops": 0, "solver_flops": 0,
           "coeff_calls": 0}
    prev_L = None
    k = 0
    while True:
        if k >= K:
            raise InvariantViolation(f"outer loop reached K={K} without terminating")
        lam_prev = lam
        upd = apply_coefficient_update(lam, build_q_blocks(params, data, masks), K)
        lam = upd.lam
        ops["coeff_calls"] += 1
        ops["svd_flops"] += sum(n * masks.neurons_of(s, params.m).size ** 2
                                for s in range(masks.period))
        L_k = empirical_loss(params, lam, data, masks, loss)
        if prev_L is not None and L_k > prev_L - 1 + CLAIM1_SLACK * max(1.0, abs(prev_L)):
            raise InvariantViolation(
                f"outer iteration {k}: loss {L_k!r} did not drop by 1 from {prev_L!r}")
        prev_L = L_k

        thr = base_thr
        T_sum = 0
        for attempt in range(cfg.stale_retries + 1):
            params, trace = run_inner_gd(params, lam, data, masks, loss, cfg.lam0, K,
                                         max_iters=cfg.max_inner_iters, threshold=thr,
                                         certify_small_neurons=True,
                                         record_alphas=gd_observer is not None)
            if gd_observer is not None:
                gd_observer(trace)
                trace.alphas = None
            traces.append(trace)
            T_sum += trace.iterations
            ops["gd_steps"] += trace.iterations
            ops["gd_flops"] += trace.iterations * n * params.m
            beta = per_sample_derivs(params, data, masks, loss)
            cands = find_candidates(solver, beta, data, masks, cfg)
            ops["solver_flops"] += sum(c.evaluations for c in cands) * n * masks.r
            gs = [c.g for c in cands]
            rec = OuterRecord(
                outer_k=k, inner_T=T_sum,
                loss_pre=L_k, loss_post=trace.losses[-1], grad_norm=trace.final_grad_norm,
                perturbed_mask=None, g_value=float(max(gs)),
                lam_min=float(lam.lam.min()), lam_max=float(lam.lam.max()), retries=attempt,
                coeff_cases=upd.cases,
                min_separation=float(min(b.separation for b in upd.blocks)),
                max_lam_step=float(np.max(np.abs(lam_prev.lam - lam.lam))),
                max_lam_increase=float(np.max(lam.lam - lam_prev.lam)))
            if check_termination(cands, cfg.lam0):
                records.append(rec)
                break
            best = int(np.argmax(gs))
            try:
                pr = perturb_with_record(params, cfg.lam0, cands[best], data, masks, loss,
                                         lam=lam)
            except StaleGDError:
                thr /= 2.0
                continue
            rec.perturbed_mask = cands[best].s
            rec.perturbed_neuron = pr.neuron
            rec.loss_after_perturb = pr.loss_after
            records.append(rec)
            params = pr.params
            break
        else:
            raise StaleGDError(f"no inactive neuron after {cfg.stale_retries} retries")
        if records[-1].perturbed_mask is None:
            break
        k += 1

    if ops["coeff_calls"] > K:
        raise InvariantViolation("more coefficient updates than K")
    certs = certify(params, lam, data, masks, loss, cfg, K, cands, traces[-1])
    report = TrainReport(
        config=cfg, n=n, d=masks.d, r=masks.r, K=K, k0=k, L0=L0, params=params, lam=lam,
        records=records, candidates=cands, certificates=certs,
        train_error=training_error(params, data, masks),
        test_error=None if heldout is None else test_error_estimate(params, heldout, masks),
        gd_traces=traces, ops=ops)
    report.ops["corollary_terms"] = corollary_terms(masks.d, masks.r, K, params.m, n, cfg.lam0)
    return report


def certify(params, lam, data, masks, loss, cfg, K, cands, trace: GDTrace) -> dict:
    """Termination certificates, each asserted."""
    n, lam0 = data.n, cfg.lam0
    grad_ok = trace.final_grad_norm <= grad_threshold(lam0, K, n)
    a_norm = float(np.linalg.norm(params.alpha))
    a_bound = 2.0 * math.sqrt(K / lam0)
    if a_norm > a_bound * (1 + 1e-12):
        raise InvariantViolation(f"||alpha||={a_norm!r} exceeds 2 sqrt(K/lam0)={a_bound!r}")
    balance = float(np.max(np.abs(np.linalg.norm(params.w, axis=1) - np.abs(params.a))))
    if balance > 1e-12:
        raise InvariantViolation(f"balancedness off by {balance!r}")
    if not lam.in_range():
        raise InvariantViolation("lambda left [lam0/2, lam0]")
    per_mask = {int(c.s): float(c.g) for c in cands}
    budget = max(float(c.budget) for c in cands)
    return {
        "grad_norm": float(trace.final_grad_norm),
        "grad_threshold": grad_threshold(lam0, K, n),
        "grad_within_threshold": bool(grad_ok),
        "g_per_mask": per_mask,
        "g_max": max(per_mask.values()),
        "solver_budget": budget,
        "max_G_certificate": 5 * lam0 + budget,
        "alpha_norm": a_norm,
        "alpha_norm_bound": a_bound,
        "balance_error": balance,
    }


# -- metrics ------------------------------------------------------------------

def training_error(params: NetParams, data, masks: MaskSeries) -> float:
    """Fraction of samples with ``y_i f(x_i) <= 0`` (an output of 0 counts as wrong)."""
    if data.n == 0:
        return 0.0
    f = forward(params, masks, data.X)
    return float(np.mean(data.y * f <= 0))


def test_error_estimate(params: NetParams, heldout, masks: MaskSeries) -> float:
    return training_error(params, heldout, masks)


def corollary_terms(d, r, K, m, n, lam0) -> dict:
    return {"dKm2": float(d * K * m * m), "dKn_r2": float(d * K * n ** (r / 2)),
            "nK5_over_lam0": float(n * K ** 5 / lam0)}


def theorem3_bound(C: float, E: int, gamma: float, n: int, loss: LossSpec = LOGISTIC) -> float:
    return (C + 2 * E) / (loss.deriv_at_zero * gamma * n)


def theorem5_bound(lam0, C, E, gamma, n, K, loss: LossSpec = LOGISTIC, delta=0.05) -> float:
    l0, a = loss.deriv_at_zero, loss.expbound_a
    first = (5 * lam0 + C + 2 * E) / (gamma * n * l0)
    middle = ((30 * lam0 + 6 * C + 12 * E) * math.log(n) / (a * gamma * lam0)
              + 3.0 / (4.0 * math.sqrt(n * K * lam0))) * 4 * math.sqrt(2) / (l0 * math.sqrt(n))
    return first + middle + math.sqrt(math.log(1 / delta) / (2 * n)) / l0


def bound_report(report: TrainReport, data, gamma: float, E: int,
                 loss: LossSpec | None = None, C: float | None = None,
                 masks: MaskSeries | None = None, delta: float | None = None) -> dict:
    """Bound values and the surrogate inequality at the final state.

    ``C`` is the bound on ``max_u G`` fed to the training-error bound; it
    defaults to the termination certificate ``5 lam0 + budget``.
    """
    cfg = report.config
    loss = loss or LOSSES[cfg.loss]
    delta = cfg.delta if delta is None else delta
    n = data.n
    masks = masks or build_mask_series(report.d, report.r)
    if C is None:
        C = report.certificates["max_G_certificate"]
    t3 = theorem3_bound(C, E, gamma, n, loss)
    beta = per_sample_derivs(report.params, data, masks, loss)
    sum_deriv = float(beta.sum())
    out = {"theorem3_bound": t3, "theorem3_C": float(C), "theorem3_vacuous": bool(t3 > 1),
           "sum_loss_deriv": sum_deriv}
    if masks.r <= 3:
        res = [oracle_max_g(beta, data, masks, s, cfg.oracle_resolution)
               for s in range(masks.period)]
        g_val = max(o.value for o in res)
        g_up = max(o.upper for o in res)
        out["surrogate_source"] = "oracle"
    else:
        g_val = report.certificates["g_max"]
        g_up = g_val + report.certificates["solver_budget"]
        out["surrogate_source"] = "solver-certified only"
    rhs = (g_up + 2 * E) / gamma
    out.update({"g_max": g_val, "g_max_upper": g_up, "surrogate_rhs": rhs,
                "surrogate_holds": bool(sum_deriv <= rhs * (1 + 1e-9)),
                "surrogate_rhs_value_only": (g_val + 2 * E) / gamma,
                "surrogate_holds_value_only": bool(sum_deriv <= (g_val + 2 * E) / gamma * (1 + 1e-9))})
    t5 = theorem5_bound(cfg.lam0, cfg.C, E, gamma, n, report.K, loss, delta)
    out.update({"theorem5_bound": t5, "theorem5_vacuous": bool(t5 > 1), "delta": delta})
    ops = report.ops
    out["ops_measured"] = float(ops["gd_flops"] + ops["svd_flops"] + ops["solver_flops"])
    out["ops_corollary"] = float(sum(ops["corollary_terms"].values()))
    report.bounds = out
    return out


# -- serialization ------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def report_dict(report: TrainReport) -> dict:
    return _clean({
        "version": REPORT_VERSION,
        "config": asdict(report.config),
        "seeds": {"init": report.config.init_seed, "solver": report.config.solver_seed},
        "n": report.n, "d": report.d, "r": report.r, "m": report.params.m,
        "K": report.K, "k0": report.k0, "L0": report.L0,
        "perturbations": report.perturbations,
        "certificates": report.certificates,
        "errors": {"train": report.train_error, "test": report.test_error},
        "bounds": report.bounds,
        "ops": report.ops,
        "records": [asdict(r) for r in report.records],
    })


def write_report_json(report: TrainReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


TRACE_COLUMNS = ["outer_k", "inner_T", "loss_pre", "loss_post", "grad_norm",
                 "perturbed_mask", "g_value", "lam_min", "lam_max"]


def write_trace_csv(report: TrainReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec in report.records:
            row = []
            for col in TRACE_COLUMNS:
                v = getattr(rec, col)
                row.append("" if v is None else repr(float(v)) if isinstance(v, float) else v)
            w.writerow(row)


def save_params(params: NetParams, masks: MaskSeries, path) -> None:
    payload = {"d": masks.d, "r": masks.r, "alpha": params.alpha.tolist(),
               "dirs": params.dirs.tolist()}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_params(path):
    with open(path) as fh:
        payload = json.load(fh)
    return NetParams(payload["alpha"], payload["dirs"]), build_mask_series(payload["d"], payload["r"])
