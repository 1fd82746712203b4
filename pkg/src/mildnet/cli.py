"""Command line interface: ``mildnet {gen-data,train,eval,oracle-check,sweep}``."""
from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from .driver import (TrainConfig, bound_report, load_params, save_params, train,
                     training_error, write_report_json, write_trace_csv)
from .errors import MildnetError
from .network import build_mask_series
from .oracle import oracle_max_g
from .perturb import solve_exhaustive


def _config_from(args) -> TrainConfig:
    types = TrainConfig.field_types()
    values = {}
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep "C" and "M" as written
        if not parser.read(args.config):
            raise MildnetError(f"cannot read config {args.config}")
        section = parser["train"] if parser.has_section("train") else parser.defaults()
        for key, raw in section.items():
            if key not in types:
                raise MildnetError(f"unknown config key {key!r}")
            values[key] = types[key](raw)
    for key in types:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return TrainConfig(**values)


def _add_config_flags(p):
    p.add_argument("--config", help="INI file with a [train] section")
    for key, typ in TrainConfig.field_types().items():
        p.add_argument(f"--{key}", type=typ, default=None)


def _load(path, r=None):
    ds = data_mod.load_dataset(path)
    r = r or ds.r or ds.d
    return ds, build_mask_series(ds.d, r)


def cmd_gen_data(args) -> int:
    if args.kind == "linear":
        ds = data_mod.generate_linear_margin_dataset(args.d, args.n, args.gamma, args.seed,
                                                     witness_seed=args.witness_seed)
    else:
        teacher = data_mod.generate_teacher(args.d, args.r or args.d, args.m_teacher,
                                            args.teacher_seed)
        ds = data_mod.generate_dataset(teacher, args.n, args.gamma, args.E, args.seed,
                                       r=args.r or args.d)
    data_mod.save_dataset(ds, args.out)
    print(f"wrote {args.out} (n={ds.n}, d={ds.d}, E={ds.E})")
    return 0


def cmd_train(args) -> int:
    ds, masks = _load(args.data, args.r)
    held = data_mod.load_dataset(args.heldout) if args.heldout else None
    cfg = _config_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = train(cfg, ds, masks, heldout=held)
    elapsed = time.perf_counter() - t0
    if ds.gamma is not None:
        bound_report(report, ds, ds.gamma, ds.E, masks=masks)
    write_report_json(report, out / "report.json")
    write_trace_csv(report, out / "trace.csv")
    save_params(report.params, masks, out / "params.json")
    (out / "report.timing.json").write_text(json.dumps({"wall_clock_s": elapsed}) + "\n")
    if not args.no_plot:
        from .plotting import plot_training
        plot_training(report, out / "training.png")
    print(f"k0={report.k0} K={report.K} perturbations={report.perturbations} "
          f"train_error={report.train_error:.4f}"
          + ("" if report.test_error is None else f" test_error={report.test_error:.4f}"))
    return 0


def cmd_eval(args) -> int:
    params, masks = load_params(args.params)
    ds = data_mod.load_dataset(args.data)
    print(json.dumps({"error": training_error(params, ds, masks), "n": ds.n}))
    return 0


def cmd_oracle_check(args) -> int:
    if args.data:
        ds, masks = _load(args.data, args.r)
    else:
        rng = np.random.default_rng(args.seed)
        X = data_mod.sample_unit_ball(rng, args.n, args.d)
        ds = data_mod.Dataset(X, np.where(rng.random(args.n) < 0.5, -1.0, 1.0))
        masks = build_mask_series(args.d, args.r or args.d)
    cfg = TrainConfig(lam0=args.lam0).resolved(ds.n, masks)
    rng = np.random.default_rng(args.seed + 1)
    rows = []
    for trial in range(args.trials):
        beta = rng.random(ds.n)
        for s in range(masks.period):
            cand = solve_exhaustive(s, beta, ds, masks, cfg.lam0)
            orc = oracle_max_g(beta, ds, masks, s, args.resolution)
            rows.append({"trial": trial, "mask": s, "solver_value": cand.g,
                         "oracle_value": orc.value, "oracle_gap": orc.gap, "lam0": cfg.lam0,
                         "budget": cand.budget,
                         "ok": int(cand.g >= orc.value - cfg.lam0)})
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    if not args.no_plot:
        from .plotting import plot_oracle_check
        plot_oracle_check(rows, Path(args.out).with_suffix(".png"))
    ok = sum(r["ok"] for r in rows)
    print(f"{ok}/{len(rows)} within lam0 of the oracle")
    return 0 if ok == len(rows) else 1


def _floats(text):
    return [float(v) for v in text.split(",")] if text else [None]


def cmd_sweep(args) -> int:
    ds, masks = _load(args.data, args.r)
    held = data_mod.load_dataset(args.heldout) if args.heldout else None
    base = _config_from(args)
    cols = ["lam0", "M", "r_pert", "k0", "K", "perturbations", "train_error", "test_error",
            "final_loss", "status"]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for lam0, M, rp in itertools.product(_floats(args.lam0_grid), _floats(args.M_grid),
                                             _floats(args.r_pert_grid)):
            cfg = replace(base, lam0=lam0 if lam0 is not None else base.lam0,
                          M=int(M) if M is not None else base.M,
                          r_pert=rp if rp is not None else base.r_pert)
            try:
                rep = train(cfg, ds, masks, heldout=held)
                w.writerow([repr(rep.config.lam0), rep.config.M, repr(rep.config.r_pert),
                            rep.k0, rep.K, rep.perturbations, repr(rep.train_error),
                            "" if rep.test_error is None else repr(rep.test_error),
                            repr(rep.records[-1].loss_post), "ok"])
            except MildnetError as exc:
                w.writerow([lam0, M, rp, "", "", "", "", "", "", type(exc).__name__])
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mildnet")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--kind", choices=["teacher", "linear"], default="teacher")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--r", type=int)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--gamma", type=float, required=True)
    g.add_argument("--E", type=int, default=0)
    g.add_argument("--m-teacher", dest="m_teacher", type=int, default=3)
    g.add_argument("--teacher-seed", dest="teacher_seed", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--witness-seed", dest="witness_seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train and write report, trace, params, figure")
    t.add_argument("--data", required=True)
    t.add_argument("--heldout")
    t.add_argument("--r", type=int, help="window width (defaults to the dataset's)")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--no-plot", action="store_true")
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="misclassification rate of saved params")
    e.add_argument("--params", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle-check", help="exhaustive solver vs certified oracle (d <= 3)")
    o.add_argument("--data")
    o.add_argument("--d", type=int, default=3)
    o.add_argument("--r", type=int)
    o.add_argument("--n", type=int, default=8)
    o.add_argument("--lam0", type=float)
    o.add_argument("--trials", type=int, default=50)
    o.add_argument("--resolution", type=int, default=1_000_000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)
    o.add_argument("--no-plot", action="store_true")
    o.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("sweep", help="grid over lam0, M, r_pert")
    s.add_argument("--data", required=True)
    s.add_argument("--heldout")
    s.add_argument("--r", type=int)
    s.add_argument("--lam0-grid", dest="lam0_grid")
    s.add_argument("--M-grid", dest="M_grid")
    s.add_argument("--r-pert-grid", dest="r_pert_grid")
    s.add_argument("--out", required=True)
    _add_config_flags(s)
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MildnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
