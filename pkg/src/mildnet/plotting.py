"""Figures written next to the CLI's CSV/JSON outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_training(report, path) -> None:
    """Inner-GD loss curves (one per outer pass) and per-pass G values."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    offset = 0
    for k, tr in enumerate(report.gd_traces):
        t = np.arange(len(tr.losses)) + offset
        ax1.plot(t, tr.losses, lw=1.2, label=f"pass {k}" if k < 6 else None)
        offset += len(tr.losses)
    ax1.set_xlabel("GD step (cumulative)")
    ax1.set_ylabel("regularized loss")
    ax1.set_yscale("log")
    if report.gd_traces:
        ax1.legend(fontsize=7, frameon=False)

    ks = [r.outer_k for r in report.records]
    ax2.plot(ks, [r.g_value for r in report.records], "o-", ms=4, label="max G")
    ax2.axhline(5 * report.config.lam0, color="k", ls="--", lw=0.8, label="5 lam0")
    ax2.set_xlabel("outer iteration")
    ax2.set_ylabel("G")
    ax2.legend(fontsize=7, frameon=False)
    _save(fig, path)


def plot_oracle_check(rows, path) -> None:
    """Solver value against the oracle bracket, one point per trial."""
    fig, ax = plt.subplots(figsize=(4.5, 4))
    orc = np.array([r["oracle_value"] for r in rows])
    sol = np.array([r["solver_value"] for r in rows])
    lam0 = rows[0]["lam0"] if rows else 0.0
    ax.scatter(orc, sol, s=12)
    if rows:
        lo, hi = 0.0, float(max(orc.max(), sol.max())) * 1.05 + 1e-12
        ax.plot([lo, hi], [lo, hi], "k-", lw=0.8)
        ax.plot([lo, hi], [lo - lam0, hi - lam0], "r--", lw=0.8, label="oracle - lam0")
        ax.legend(fontsize=7, frameon=False)
    ax.set_xlabel("oracle max G")
    ax.set_ylabel("solver G")
    _save(fig, path)
