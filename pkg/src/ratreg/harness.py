"""Convergence-rate studies over noise sweeps.

For every (mu, delta, seed) cell a diagonal problem with source exponent mu
is generated, solved with discrepancy stopping, and the error
``||x_{n*} - x_true||`` recorded.  Per mu, the mean log error over seeds is
regressed on log delta; the expected slope is ``mu / (mu + 1/2)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.stats

from .problems import NoiseSpec, make_diagonal_problem, with_noise
from .stopping import (DataConditionError, DiscrepancyConfig, ExhaustionError, make_schedule,
                       run_with_discrepancy)

CSV_COLUMNS = ("method", "mu", "delta", "seed", "n_star", "error", "residual_at_stop",
               "sigma_n", "effective_rank")
SLOPE_BAND = 0.15
SLOPE_CEILING = 1.05


def default_deltas() -> list[float]:
    return [float(d) for d in np.logspace(-2, -6, 9)]


@dataclass(frozen=True)
class RateStudyConfig:
    method: str = "agg"
    mu_list: tuple[float, ...] = (0.5,)
    delta_list: tuple[float, ...] = tuple(default_deltas())
    seeds_per_cell: int = 5
    seed_base: int = 0
    schedule: dict = field(default_factory=lambda: {"kind": "constant_floor", "c0": 1.0})
    tau: float = 1.5
    tau2: float = 3.0
    max_n: int = 200
    m: int = 400
    decay_s: float = 1.0
    path: str = "nested"

    def __post_init__(self):
        d = tuple(float(v) for v in self.delta_list)
        object.__setattr__(self, "delta_list", d)
        object.__setattr__(self, "mu_list", tuple(float(v) for v in self.mu_list))
        if any(v <= 0 for v in d) or any(b >= a for a, b in zip(d, d[1:])):
            raise ValueError("delta_list must be positive and strictly decreasing")
        if any(mu <= 0 for mu in self.mu_list):
            raise ValueError("all mu must be positive")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RateStudyConfig":
        known = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in d.items() if k in known}
        for k in ("mu_list", "delta_list"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


@dataclass
class SlopeFit:
    mu: float
    slope: float
    intercept: float
    r2: float
    stderr: float
    n_points: int

    @property
    def theoretical(self) -> float:
        return self.mu / (self.mu + 0.5)

    @property
    def band(self) -> tuple[float, float]:
        return (self.theoretical - SLOPE_BAND, SLOPE_CEILING)

    @property
    def within_band(self) -> bool:
        lo, hi = self.band
        return lo <= self.slope <= hi

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(theoretical=self.theoretical, band=list(self.band),
                 within_band=self.within_band,
                 confidence_95=[self.slope - 1.96 * self.stderr, self.slope + 1.96 * self.stderr])
        return d


@dataclass
class RateStudyResult:
    config: RateStudyConfig
    rows: list[dict]
    fits: dict[float, SlopeFit]
    dropped: dict[str, int]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "method": self.config.method,
            "config": asdict(self.config),
            "cells": len(self.rows),
            "dropped": dict(self.dropped),
            "slopes": {f"{mu:g}": fit.to_dict() for mu, fit in self.fits.items()},
        }

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "rates.csv", out / "summary.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def fit_slope(points) -> tuple[float, float, float]:
    """Least-squares line through ``(log delta, log error)`` pairs.

    Returns ``(slope, intercept, r2)``; ``r2`` is 1 for data without spread.
    """
    slope, intercept, r2, _ = _fit(points)
    return slope, intercept, r2


def _fit(points):
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 points")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0.0:
        raise ValueError("all abscissae coincide")
    if np.ptp(y) == 0.0:
        return 0.0, float(y[0]), 1.0, 0.0
    res = scipy.stats.linregress(x, y)
    return float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr)


def _cell(args):
    cfg, mu, delta, seed = args
    base = make_diagonal_problem(cfg.m, cfg.decay_s, mu, seed=seed)
    prob = with_noise(base, NoiseSpec(delta, seed))
    disc = DiscrepancyConfig(delta, cfg.tau, cfg.tau2, cfg.max_n)
    sched = None
    if cfg.method != "cgne":
        spec = dict(cfg.schedule)
        kind = spec.pop("kind")
        length = cfg.max_n if cfg.method == "agg" else cfg.max_n // 2 + 1
        sched = make_schedule(kind, spec, delta=delta, mu_star=mu + 0.5, n=length)
    try:
        tr = run_with_discrepancy(cfg.method, prob.op, prob.y_noisy, sched, disc, path=cfg.path)
    except DataConditionError:
        return "data_condition", None
    except ExhaustionError:
        return "exhaustion", None
    k = tr.stop_index
    return "ok", {
        "method": cfg.method, "mu": mu, "delta": delta, "seed": seed, "n_star": k,
        "error": float(np.linalg.norm(tr.solution - prob.x_true)),
        "residual_at_stop": tr.residual_norms[k],
        "sigma_n": tr.sigma_values[k] if tr.sigma_values else float("nan"),
        "effective_rank": tr.effective_ranks[k] if tr.effective_ranks else k,
    }


def run_rate_study(config: RateStudyConfig, workers: int = 1) -> RateStudyResult:
    """Run every cell and fit one slope per mu.

    Cells are enumerated in (mu, delta, seed) order and results collected in
    that order, so the output does not depend on ``workers``.
    """
    cells = [(config, mu, d, config.seed_base + j)
             for mu in config.mu_list for d in config.delta_list
             for j in range(config.seeds_per_cell)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell, cells, chunksize=4))
    else:
        outcomes = [_cell(c) for c in cells]
    rows, dropped = [], {"data_condition": 0, "exhaustion": 0}
    for status, row in outcomes:
        if status == "ok":
            rows.append(row)
        else:
            dropped[status] += 1
    fits = {}
    for mu in config.mu_list:
        pts = []
        for d in config.delta_list:
            errs = [r["error"] for r in rows if r["mu"] == mu and r["delta"] == d]
            if errs:
                pts.append((math.log(d), float(np.mean(np.log(errs)))))
        if len(pts) >= 3:
            s, b, r2, se = _fit(pts)
            fits[mu] = SlopeFit(mu, s, b, r2, se, len(pts))
    return RateStudyResult(config, rows, fits, dropped)
