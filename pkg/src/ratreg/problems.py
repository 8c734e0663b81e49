"""Reproducible test problems with prescribed smoothness and noise level.

Random numbers come from numpy's counter-based Philox bit generator seeded
with ``SeedSequence([seed, stream])``.  Stream 0 draws the source element
``w``, stream 1 the noise direction, so a fixed seed gives the same ``w``
and the same noise direction for every noise level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linop import (DenseOperator, DiagonalOperator, LinearOperator, load_operator,
                    range_projector, read_vector, save_operator, write_vector)

STREAM_SOURCE = 0
STREAM_NOISE = 1


def rng(seed: int, stream: int) -> np.random.Generator:
    """Philox generator for ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class NoiseSpec:
    delta: float
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0.0):
            raise ValueError(f"noise level must be positive, got {self.delta}")


@dataclass(frozen=True)
class InverseProblem:
    """Operator, exact solution, exact and noisy data.

    ``mu`` and ``w`` are set only for problems built from a source
    condition ``x_true = (A*A)^mu w``.
    """

    op: LinearOperator
    x_true: np.ndarray
    y_exact: np.ndarray
    y_noisy: np.ndarray
    delta: float = 0.0
    mu: float | None = None
    w: np.ndarray | None = None
    seed: int = 0
    kind: str = "diagonal"
    params: dict = field(default_factory=dict)


def add_noise(y, noise: NoiseSpec, op: LinearOperator) -> np.ndarray:
    """Add noise of norm exactly ``noise.delta`` inside the closure of range(A)."""
    y = np.asarray(y, dtype=np.float64)
    e = rng(noise.seed, STREAM_NOISE).standard_normal(op.shape[0])
    e = range_projector(op)(e)
    nrm = np.linalg.norm(e)
    if nrm == 0.0:
        raise ValueError("noise direction vanished after projection onto range(A)")
    return y + (noise.delta / nrm) * e


def unit_source(m: int, seed: int) -> np.ndarray:
    w = rng(seed, STREAM_SOURCE).standard_normal(m)
    return w / np.linalg.norm(w)


def _seed(noise, seed):
    if seed is not None:
        return int(seed)
    return noise.seed if noise is not None else 0


def make_diagonal_problem(m: int, decay_s: float, mu: float, noise: NoiseSpec | None = None,
                          seed: int | None = None, w=None) -> InverseProblem:
    """Diagonal problem ``sigma_i = i^-s`` with ``x_true_i = sigma_i^(2 mu) w_i``.

    Parameters
    ----------
    noise : NoiseSpec or None
        None means exact data.
    seed : int, optional
        Problem seed; defaults to ``noise.seed`` (0 without noise).
    w : array_like, optional
        Source element; drawn uniformly from the unit sphere if omitted.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if not decay_s > 0 or not mu > 0:
        raise ValueError("decay_s and mu must be positive")
    seed = _seed(noise, seed)
    sig = np.arange(1, m + 1, dtype=np.float64) ** (-float(decay_s))
    op = DiagonalOperator(sig)
    w = unit_source(m, seed) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (m,):
        raise ValueError(f"w must have length {m}")
    x = sig ** (2.0 * mu) * w
    y = sig * x
    y_noisy = y.copy() if noise is None else add_noise(y, noise, op)
    return InverseProblem(op, x, y, y_noisy, 0.0 if noise is None else noise.delta,
                          float(mu), w, seed, "diagonal", {"m": m, "s": float(decay_s)})


def gravity_matrix(m: int, depth_d: float = 0.25) -> np.ndarray:
    """Midpoint discretization of ``d (d^2 + (s-t)^2)^(-3/2)`` on [0,1]^2."""
    t = (np.arange(1, m + 1) - 0.5) / m
    diff = t[:, None] - t[None, :]
    return depth_d * (depth_d**2 + diff**2) ** -1.5 / m


def make_gravity_problem(m: int, depth_d: float = 0.25, noise: NoiseSpec | None = None,
                         seed: int | None = None) -> InverseProblem:
    """Dense, severely ill-posed gravity-surveying problem."""
    if m < 8:
        raise ValueError("m must be >= 8")
    if not depth_d > 0:
        raise ValueError("depth must be positive")
    seed = _seed(noise, seed)
    op = DenseOperator(gravity_matrix(m, depth_d))
    t = (np.arange(1, m + 1) - 0.5) / m
    x = np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)
    y = op.apply(x)
    y_noisy = y.copy() if noise is None else add_noise(y, noise, op)
    return InverseProblem(op, x, y, y_noisy, 0.0 if noise is None else noise.delta,
                          None, None, seed, "gravity", {"m": m, "d": float(depth_d)})


def with_noise(problem: InverseProblem, noise: NoiseSpec) -> InverseProblem:
    """Same exact problem, fresh noisy data."""
    y_noisy = add_noise(problem.y_exact, noise, problem.op)
    return InverseProblem(problem.op, problem.x_true, problem.y_exact, y_noisy, noise.delta,
                          problem.mu, problem.w, problem.seed, problem.kind, dict(problem.params))


# --- bundle persistence ----------------------------------------------------

def save_problem(problem: InverseProblem, directory) -> Path:
    """Write a problem bundle (``problem.json`` plus CSV vectors)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "type": problem.kind,
        **problem.params,
        "mu": problem.mu,
        "delta": float(problem.delta),
        "seed": int(problem.seed),
        "operator": save_operator(problem.op, d),
    }
    (d / "problem.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    write_vector(d / "x_true.csv", problem.x_true)
    write_vector(d / "y_exact.csv", problem.y_exact)
    write_vector(d / "y_noisy.csv", problem.y_noisy)
    if problem.w is not None:
        write_vector(d / "w.csv", problem.w)
    return d


def load_problem(directory) -> InverseProblem:
    d = Path(directory)
    meta = json.loads((d / "problem.json").read_text())
    op = load_operator(meta["operator"], d)
    w = read_vector(d / "w.csv") if (d / "w.csv").exists() else None
    params = {k: meta[k] for k in ("m", "s", "d") if k in meta}
    return InverseProblem(op, read_vector(d / "x_true.csv"), read_vector(d / "y_exact.csv"),
                          read_vector(d / "y_noisy.csv"), float(meta.get("delta", 0.0)),
                          meta.get("mu"), w, int(meta.get("seed", 0)), meta.get("type", "diagonal"),
                          params)
