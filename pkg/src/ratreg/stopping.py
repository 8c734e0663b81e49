"""Discrepancy-principle stopping and parameter schedules.

The discrepancy principle stops at the first index n* with
``rho_{n*} < tau * delta``, where ``rho_0 = ||y||`` (iterate x_0 = 0).  The
data condition ``||y|| >= tau2 * delta`` guarantees ``n* >= 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classical import AlphaSchedule, SolveTrace, achieved_c_it, cgne, sigma, sigma_hat
from .linop import LinearOperator
from .ratkrylov import (ORTHO_TOL, RationalBasis, aggregate, ratcg, solve_on_basis)

#: Relative spacing that keeps floored parameters pairwise distinct.
EPS_SEP = 1e-6

SOLVERS = ("agg", "ratcg", "cgne")
SCHEDULE_KINDS = ("constant_floor", "geometric_floor", "delta_scaled")


class DataConditionError(ValueError):
    """``||y|| < tau2 * delta``: more noise than signal."""


class ExhaustionError(RuntimeError):
    """No index up to the cap satisfies the discrepancy principle."""

    def __init__(self, message: str, trace: SolveTrace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DiscrepancyConfig:
    delta: float
    tau: float = 1.5
    tau2: float = 3.0
    max_n: int = 100
    reorthogonalize: bool = False

    def __post_init__(self):
        if not (1.0 < self.tau < self.tau2):
            raise ValueError(f"need 1 < tau < tau2, got tau={self.tau}, tau2={self.tau2}")
        if not (math.isfinite(self.delta) and self.delta > 0.0):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")


def check_signal_condition(y_noisy, config: DiscrepancyConfig) -> bool:
    return bool(np.linalg.norm(y_noisy) >= config.tau2 * config.delta)


def _canonical(solver: str) -> str:
    s = {"aggregate": "agg", "aggregation": "agg"}.get(solver, solver)
    if s not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    return s


class _NestedLeastSquares:
    """Residuals of least squares over a growing nested space.

    Solution-space directions come from the same rational Arnoldi process as
    :func:`ratkrylov.build_basis`; their images are orthonormalized a second
    time so each new residual costs one projection.
    """

    def __init__(self, op: LinearOperator, y, steps):
        self.op, self.y, self.steps = op, y, steps
        self.yt = op.apply_adjoint(y)
        self.q, self.imgs, self.e = [], [], []
        self.kinds = []
        self.r = y.copy()
        self.stalled = not np.any(self.yt)

    def extend(self) -> float:
        j = len(self.kinds)
        kind, param = self.steps[j]
        self.kinds.append(f"{kind}({param})")
        if self.stalled:
            return self._append(None)
        src = self.yt if not self.q else self.q[-1]
        if kind == "tikhonov":
            v = self.op.normal_solve(src, param)
        else:
            v = src if not self.q else self.op.apply_adjoint(self.op.apply(src))
        before = np.linalg.norm(v)
        for _ in range(2):
            for u in self.q:
                v = v - (u @ v) * u
        after = np.linalg.norm(v)
        if before == 0.0 or after <= ORTHO_TOL * before:
            self.stalled = True
            return self._append(None)
        return self._append(v / after)

    def _append(self, v):
        if v is None:
            self.imgs.append(np.zeros_like(self.y))
            return float(np.linalg.norm(self.r))
        self.q.append(v)
        c = self.op.apply(v)
        self.imgs.append(c)
        cn = np.linalg.norm(c)
        for _ in range(2):
            for u in self.e:
                c = c - (u @ c) * u
        if cn > 0.0 and np.linalg.norm(c) > 1e-10 * cn:
            u = c / np.linalg.norm(c)
            self.e.append(u)
            self.r = self.r - (u @ self.r) * u
        return float(np.linalg.norm(self.r))

    @property
    def rank(self) -> int:
        return len(self.e)

    def solution(self, n: int) -> np.ndarray:
        cols = np.zeros((self.op.shape[1], n))
        for j, v in enumerate(self.q[:n]):  # columns past a stall stay zero
            cols[:, j] = v
        basis = RationalBasis(cols, tuple(self.kinds[:n]), np.column_stack(self.imgs[:n]), True)
        coef, _ = solve_on_basis(basis, self.y, "qr")
        return cols @ coef


def _steps(solver, schedule, cap):
    if solver == "agg":
        return [("tikhonov", a) for a in schedule.alphas[:cap]]
    return [("krylov_power", j // 2) if j % 2 == 0 else ("tikhonov", schedule.alphas[j // 2])
            for j in range(cap)]


def run_with_discrepancy(solver: str, op: LinearOperator, y_noisy, schedule: AlphaSchedule | None,
                         config: DiscrepancyConfig, path: str = "nested") -> SolveTrace:
    """Run ``solver`` until the discrepancy principle fires.

    Parameters
    ----------
    solver : {"agg", "ratcg", "cgne"}
    path : {"nested", "qr", "gram", "factorized"}
        ``nested`` grows one space and updates the residual incrementally;
        the other labels recompute every index from scratch through the
        corresponding :mod:`ratkrylov` path.  Ignored for CGNE.

    Raises
    ------
    DataConditionError
        ``||y|| < tau2 * delta``.
    ExhaustionError
        ``max_n`` (or the end of the schedule) reached without stopping;
        carries the partial trace.
    """
    solver = _canonical(solver)
    y = np.asarray(y_noisy, dtype=np.float64)
    if not check_signal_condition(y, config):
        raise DataConditionError(
            f"||y|| = {np.linalg.norm(y):.6g} < tau2*delta = {config.tau2 * config.delta:.6g}")
    thr = config.tau * config.delta

    if solver == "cgne":
        tr = cgne(op, y, config.max_n, tau_delta=thr, reorthogonalize=config.reorthogonalize,
                  keep_iterates=False)
        tr.effective_ranks = list(range(len(tr.residual_norms)))
        if tr.residual_norms[-1] < thr:
            tr.stop_index = len(tr.residual_norms) - 1
            return tr
        raise ExhaustionError(f"cgne: no stop within {len(tr.residual_norms) - 1} steps", tr)

    if schedule is None:
        raise ValueError(f"{solver} needs a parameter schedule")
    cap_sched = len(schedule) if solver == "agg" else 2 * len(schedule) + 1
    cap = min(config.max_n, cap_sched)
    sig = sigma if solver == "agg" else sigma_hat
    tr = SolveTrace(solver, residual_norms=[float(np.linalg.norm(y))],
                    sigma_values=[0.0], effective_ranks=[0])

    if path == "nested":
        space = _NestedLeastSquares(op, y, _steps(solver, schedule, cap))
        for n in range(1, cap + 1):
            rho = space.extend()
            tr.residual_norms.append(rho)
            tr.sigma_values.append(sig(schedule, n))
            tr.effective_ranks.append(space.rank)
            if rho < thr:
                tr.stop_index = n
                tr.final_iterate = space.solution(n)
                return tr
            if space.stalled:
                tr.breakdown_index = n
                break
    else:
        method = aggregate if solver == "agg" else ratcg
        for n in range(1, cap + 1):
            res = method(op, y, schedule, n, path=path, reorthogonalize=True)
            tr.residual_norms.append(res.residual_norm)
            tr.sigma_values.append(sig(schedule, n))
            tr.effective_ranks.append(res.effective_rank)
            if res.residual_norm < thr:
                tr.stop_index = n
                tr.final_iterate = res.x
                return tr
    why = "schedule exhausted" if cap < config.max_n else f"max_n={config.max_n} reached"
    if tr.breakdown_index is not None:
        why = f"space stopped growing at n={tr.breakdown_index}"
    raise ExhaustionError(f"{solver}: no stop ({why})", tr)


def check_sandwich(trace: SolveTrace, tau_delta: float) -> bool:
    """``rho_{n*-1} >= tau delta > rho_{n*}`` on the stored residuals."""
    k = trace.stop_index
    if k is None or k < 1:
        return False
    r = trace.residual_norms
    return bool(r[k - 1] >= tau_delta > r[k])


# --- schedules ---------------------------------------------------------------

def make_schedule(kind: str, params: dict, delta: float | None = None,
                  mu_star: float | None = None, n: int = 100) -> AlphaSchedule:
    """Construct a floored parameter schedule of length ``n``.

    ``constant_floor``: ``alpha_i = c0 (1 + i eps)``;
    ``geometric_floor``: ``alpha_i = max(alpha1 q^(i-1), c0 (1 + i eps))``;
    ``delta_scaled``: ``alpha_i = max(C delta^(1/mu_star), c0) (1 + i eps)``
    (``c0`` optional), with ``eps = 1e-6``.  The returned schedule carries
    the achieved constant ``c_it``.
    """
    if n < 1:
        raise ValueError("schedule length must be >= 1")
    i = np.arange(1, n + 1, dtype=np.float64)
    if kind == "constant_floor":
        c0 = float(params.get("c0", 1.0))
        if c0 <= 0:
            raise ValueError("c0 must be positive")
        alphas = c0 * (1.0 + i * EPS_SEP)
        floor = c0
    elif kind == "geometric_floor":
        c0 = float(params.get("c0", 1.0))
        a1 = float(params.get("alpha1", 1.0))
        q = float(params.get("q", 0.5))
        if c0 <= 0 or a1 <= 0:
            raise ValueError("c0 and alpha1 must be positive")
        if not 0.0 < q < 1.0:
            raise ValueError(f"need 0 < q < 1, got q={q}")
        alphas = np.maximum(a1 * q ** (i - 1), c0 * (1.0 + i * EPS_SEP))
        floor = c0
    elif kind == "delta_scaled":
        if delta is None or mu_star is None or not delta > 0 or not mu_star > 0:
            raise ValueError("delta_scaled needs positive delta and mu_star")
        base = float(params.get("C", 1.0)) * delta ** (1.0 / mu_star)
        if base <= 0:
            raise ValueError("C must be positive")
        if params.get("c0") is not None:
            if float(params["c0"]) <= 0:
                raise ValueError("c0 must be positive")
            base = max(base, float(params["c0"]))
        alphas = base * (1.0 + i * EPS_SEP)
        floor = base
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    alphas = tuple(float(a) for a in alphas)
    return AlphaSchedule(alphas, c0=floor, c_it=achieved_c_it(alphas), theorem_mode=True)


_SHORT = {"constant": "constant_floor", "geometric": "geometric_floor", "delta": "delta_scaled"}
_POSITIONAL = {"constant_floor": ("c0",), "geometric_floor": ("alpha1", "q", "c0"),
               "delta_scaled": ("C", "c0")}


def parse_schedule(text: str) -> tuple[str, dict]:
    """Parse ``kind:v1,v2,...`` such as ``geometric:8,0.5,1``.

    Positional values are ``c0`` (constant), ``alpha1,q,c0`` (geometric) and
    ``C[,c0]`` (delta).  Both short and full kind names are accepted.
    """
    kind, _, rest = text.partition(":")
    kind = _SHORT.get(kind.strip(), kind.strip())
    if kind not in _POSITIONAL:
        raise ValueError(f"unknown schedule kind in {text!r}")
    vals = [float(v) for v in rest.split(",") if v.strip()] if rest else []
    names = _POSITIONAL[kind]
    if len(vals) > len(names):
        raise ValueError(f"too many values for {kind}: {text!r}")
    return kind, dict(zip(names, vals))


def load_config(source) -> dict:
    """Read ``{tau, tau2, max_n, schedule: {kind, alpha1, q, c0, C}}`` from JSON.

    ``source`` is a path or an already-parsed dict.  Unknown top-level keys
    are kept so other subcommands can share one file.
    """
    cfg = dict(source) if isinstance(source, dict) else json.loads(Path(source).read_text())
    sched = cfg.get("schedule")
    if isinstance(sched, str):
        kind, params = parse_schedule(sched)
        cfg["schedule"] = {"kind": kind, **params}
    elif isinstance(sched, dict) and "kind" in sched:
        cfg["schedule"] = {**sched, "kind": _SHORT.get(sched["kind"], sched["kind"])}
    return cfg
