"""Synthetic datasets with known margin certificates, and CSV persistence.

Two generators are provided.  :func:`generate_dataset` labels ball-uniform
points with a random teacher network and keeps only points where the teacher
is at least ``gamma`` away from zero, then corrupts ``E`` labels.
:func:`generate_linear_margin_dataset` keeps points with ``|v^T x| >= 2*gamma``
for a fixed unit ``v``; the teacher ``0.5*relu(v^T x) - 0.5*relu(-v^T x)``
certifies margin ``gamma`` for it, and the constant witness ``v`` certifies
the random-feature margin used by the randomized direction solver.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetParseError, GenerationError, ShapeError
from .network import MaskSeries, Teacher, build_mask_series, teacher_eval

NORM_TOL = 1e-12
HEADER_PREFIX = "# mildnet-dataset v1"


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    gamma: float | None = None
    E: int = 0
    seed: int | None = None
    corrupted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    teacher: Teacher | None = None
    r: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1) if self.X.size else self.X.reshape(0, 0)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.corrupted = np.asarray(self.corrupted, dtype=int).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ShapeError(f"{self.X.shape[0]} points but {self.y.shape[0]} labels")

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def validate(self) -> None:
        if self.n and np.any(np.linalg.norm(self.X, axis=1) > 1 + NORM_TOL):
            raise ShapeError("all points must satisfy ||x|| <= 1")
        if np.any(np.abs(self.y) != 1):
            raise ShapeError("labels must be -1 or +1")
        if self.corrupted.size != self.E:
            raise ShapeError(f"corrupted set has {self.corrupted.size} entries, E={self.E}")

    def margin_count(self, masks: MaskSeries | None = None) -> int:
        """Number of samples with ``y_i h(x_i) >= gamma`` under the stored teacher."""
        if self.teacher is None or self.gamma is None:
            raise ValueError("dataset carries no teacher certificate")
        masks = masks or build_mask_series(self.d, self.r or self.d)
        h = teacher_eval(self.teacher, masks, self.X)
        return int(np.sum(self.y * h >= self.gamma))


def _seed_streams(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def sample_unit_sphere(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    g = rng.standard_normal((k, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    return g / norms


def sample_unit_ball(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    radius = rng.random(k) ** (1.0 / d)
    return sample_unit_sphere(rng, k, d) * radius[:, None]


def generate_teacher(d: int, r: int, m_teacher: int, rng_seed: int) -> Teacher:
    """Random teacher with unit directions on each unit's mask support."""
    if m_teacher < 1:
        raise ValueError("m_teacher must be >= 1")
    masks = build_mask_series(d, r)
    rng = np.random.default_rng(rng_seed)
    dirs = np.zeros((m_teacher, d))
    for j in range(m_teacher):
        supp = masks.support(j % masks.period)
        dirs[j, supp] = sample_unit_sphere(rng, 1, supp.size)[0]
    coeffs = rng.standard_normal(m_teacher)
    coeffs = coeffs / np.abs(coeffs).sum()
    return Teacher(coeffs, dirs)


def _reject_sample(rng, d, n, keep, max_draws):
    accepted = []
    count = drawn = 0
    batch = max(256, 4 * n)
    while count < n:
        if drawn >= max_draws:
            rate = count / drawn if drawn else 0.0
            raise GenerationError(
                f"rejection budget of {max_draws} draws exhausted with {count}/{n} accepted "
                f"(acceptance rate {rate:.3g})", acceptance_rate=rate)
        X = sample_unit_ball(rng, batch, d)
        drawn += batch
        ok = X[keep(X)]
        accepted.append(ok)
        count += ok.shape[0]
    X = np.concatenate(accepted)[:n]
    return X, count / drawn


def _corrupt(rng, y, E):
    n = y.shape[0]
    idx = np.sort(rng.choice(n, size=E, replace=False)) if E else np.zeros(0, dtype=int)
    y = y.copy()
    y[idx] = -y[idx]
    return y, idx


def generate_dataset(teacher: Teacher, n: int, gamma: float, E: int, rng_seed: int,
                     r: int | None = None, max_draws: int = 10_000_000) -> Dataset:
    """Teacher-labelled sample with margin ``gamma`` and ``E`` flipped labels.

    ``r`` is the window width the teacher was built for (defaults to the
    fully connected case).
    """
    d = teacher.dirs.shape[1]
    r = d if r is None else r
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if not 0 <= E <= n:
        raise ValueError("E must lie in [0, n]")
    masks = build_mask_series(d, r)
    points_rng, corrupt_rng = _seed_streams(rng_seed, 2)

    def keep(X):
        return np.abs(teacher_eval(teacher, masks, X)) >= gamma

    X, rate = _reject_sample(points_rng, d, n, keep, max_draws)
    y = np.where(teacher_eval(teacher, masks, X) > 0, 1.0, -1.0) if n else np.zeros(0)
    y, idx = _corrupt(corrupt_rng, y, E)
    return Dataset(X, y, gamma=gamma, E=E, seed=rng_seed, corrupted=idx, teacher=teacher,
                   r=r, meta={"kind": "teacher", "acceptance_rate": rate})


def linear_witness(d: int, witness_seed: int) -> np.ndarray:
    return sample_unit_sphere(np.random.default_rng(witness_seed), 1, d)[0]


def generate_linear_margin_dataset(d: int, n: int, gamma: float, rng_seed: int,
                                   witness_seed: int | None = None,
                                   max_draws: int = 10_000_000) -> Dataset:
    """Points with ``y * v^T x >= 2 * gamma`` for a fixed unit ``v``.

    The witness ``v`` is drawn from ``witness_seed`` (defaults to
    ``rng_seed``), so held-out samples from the same distribution can be drawn
    by reusing ``witness_seed`` with a different ``rng_seed``.
    """
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    witness_seed = rng_seed if witness_seed is None else witness_seed
    v = linear_witness(d, witness_seed)
    rng = np.random.default_rng(rng_seed)
    X, rate = _reject_sample(rng, d, n, lambda X: np.abs(X @ v) >= 2 * gamma, max_draws)
    y = np.where(X @ v > 0, 1.0, -1.0)
    teacher = Teacher(np.array([0.5, -0.5]), np.stack([v, -v]))
    return Dataset(X, y, gamma=gamma, E=0, seed=rng_seed, teacher=teacher, r=d,
                   meta={"kind": "linear", "witness": v.tolist(),
                         "witness_seed": witness_seed, "acceptance_rate": rate})


# -- persistence --------------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".sidecar.json")


def _fmt_header(ds: Dataset) -> str:
    gamma = "none" if ds.gamma is None else repr(float(ds.gamma))
    seed = "none" if ds.seed is None else str(int(ds.seed))
    return f"{HEADER_PREFIX}, d={ds.d}, n={ds.n}, gamma={gamma}, E={ds.E}, seed={seed}"


def save_dataset(ds: Dataset, path) -> None:
    """Write ``path`` (CSV) and its sidecar (teacher, corrupted indices)."""
    path = Path(path)
    lines = [_fmt_header(ds)]
    for yi, xi in zip(ds.y, ds.X):
        lines.append(",".join([str(int(yi))] + [repr(float(v)) for v in xi]))
    path.write_text("\n".join(lines) + "\n")
    side = {
        "corrupted": ds.corrupted.tolist(),
        "r": ds.r,
        "teacher": None if ds.teacher is None else ds.teacher.to_dict(),
        "meta": ds.meta,
    }
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def _parse_header(line: str) -> dict:
    if not line.startswith(HEADER_PREFIX):
        raise DatasetParseError(f"expected header starting with {HEADER_PREFIX!r}", line=1)
    fields = {}
    for part in line[len(HEADER_PREFIX):].split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise DatasetParseError(f"malformed header field {part!r}", line=1)
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    missing = {"d", "n", "gamma", "E", "seed"} - fields.keys()
    if missing:
        raise DatasetParseError(f"header missing fields {sorted(missing)}", line=1)
    try:
        return {
            "d": int(fields["d"]),
            "n": int(fields["n"]),
            "gamma": None if fields["gamma"] == "none" else float(fields["gamma"]),
            "E": int(fields["E"]),
            "seed": None if fields["seed"] == "none" else int(fields["seed"]),
        }
    except ValueError as exc:
        raise DatasetParseError(f"bad header value: {exc}", line=1) from None


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_text().splitlines()
    if not raw:
        raise DatasetParseError("empty file", line=1)
    head = _parse_header(raw[0])
    d, n = head["d"], head["n"]
    X = np.zeros((n, d))
    y = np.zeros(n)
    rows = [(k + 2, line) for k, line in enumerate(raw[1:]) if line.strip()]
    if len(rows) != n:
        raise DatasetParseError(f"header says n={n} but found {len(rows)} rows",
                                line=len(raw))
    for i, (lineno, line) in enumerate(rows):
        parts = line.split(",")
        if len(parts) != d + 1:
            raise DatasetParseError(f"expected {d + 1} fields, got {len(parts)}", line=lineno)
        try:
            y[i] = int(parts[0])
            X[i] = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DatasetParseError(str(exc), line=lineno) from None
        if y[i] not in (-1, 1):
            raise DatasetParseError(f"label {parts[0]!r} is not -1 or +1", line=lineno)
        if not math.isfinite(float(np.linalg.norm(X[i]))) or np.linalg.norm(X[i]) > 1 + NORM_TOL:
            raise DatasetParseError("point lies outside the unit ball", line=lineno)
    corrupted = np.zeros(0, dtype=int)
    teacher = None
    r = None
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        payload = json.loads(side.read_text())
        corrupted = np.array(payload.get("corrupted", []), dtype=int)
        teacher = Teacher.from_dict(payload["teacher"]) if payload.get("teacher") else None
        r = payload.get("r")
        meta = payload.get("meta", {})
    if corrupted.size != head["E"]:
        raise DatasetParseError(
            f"sidecar lists {corrupted.size} corrupted indices but header says E={head['E']}",
            line=1)
    return Dataset(X, y, gamma=head["gamma"], E=head["E"], seed=head["seed"],
                   corrupted=corrupted, teacher=teacher, r=r, meta=meta)
