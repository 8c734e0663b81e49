"""Classical building blocks: Tikhonov, iterated Tikhonov, CGNE.

Also hosts the iterated-Tikhonov residual functions

    g_n(lam)     = prod_{i<=n} (lam / alpha_i + 1)^-1
    ghat_n(lam)  = g_{floor(n/2)}(lam)

and the partial sums ``sigma_n = sum_{k<=n} 1 / alpha_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linop import LinearOperator

#: Relative threshold on ``||A*(y - A x_k)||`` at which CGNE declares breakdown.
CGNE_BREAKDOWN_TOL = 1e-13


class ScheduleError(ValueError):
    """Invalid regularization-parameter schedule or index."""


@dataclass(frozen=True)
class AlphaSchedule:
    """Positive, pairwise distinct regularization parameters alpha_1, alpha_2, ...

    ``c0`` is the uniform lower bound (checked only when ``theorem_mode``),
    ``c_it`` the constant in ``1/alpha_n <= c_it * sigma_{n-1}`` (checked when
    given).
    """

    alphas: tuple[float, ...]
    c0: float | None = None
    c_it: float | None = None
    theorem_mode: bool = False

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        object.__setattr__(self, "alphas", a)
        if not a:
            raise ScheduleError("schedule is empty")
        if any(not math.isfinite(v) or v <= 0.0 for v in a):
            raise ScheduleError("all alphas must be finite and positive")
        if len(set(a)) != len(a):
            raise ScheduleError("alphas must be pairwise distinct")
        if self.theorem_mode:
            if self.c0 is None or self.c0 <= 0.0:
                raise ScheduleError("theorem mode needs a positive c0")
            if min(a) < self.c0:
                raise ScheduleError(f"alpha below floor c0={self.c0}")
        if self.c_it is not None:
            achieved = achieved_c_it(a)
            if achieved > self.c_it * (1.0 + 1e-12):
                raise ScheduleError(
                    f"1/alpha_n <= c_it*sigma_(n-1) violated: need c_it >= {achieved}")

    def __len__(self):
        return len(self.alphas)

    def __getitem__(self, i):
        return self.alphas[i]

    def head(self, n: int) -> np.ndarray:
        _check_n(self, n)
        return np.asarray(self.alphas[:n])


def achieved_c_it(alphas) -> float:
    """Smallest c with ``1/alpha_n <= c * sigma_{n-1}`` for all n >= 2."""
    a = np.asarray(alphas, dtype=np.float64)
    if a.size < 2:
        return 0.0
    partial = np.cumsum(1.0 / a)[:-1]
    return float(np.max((1.0 / a[1:]) / partial))


def _check_n(schedule: AlphaSchedule, n: int) -> None:
    if n < 0 or n > len(schedule):
        raise ScheduleError(f"index n={n} outside schedule of length {len(schedule)}")


def tikhonov(op: LinearOperator, y_noisy, alpha: float) -> np.ndarray:
    """``x_alpha = (A*A + alpha I)^-1 A* y``."""
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return op.normal_solve(op.apply_adjoint(y_noisy), alpha)


def iterated_tikhonov(op: LinearOperator, y_noisy, schedule: AlphaSchedule, n: int):
    """Run ``n`` steps of non-stationary iterated Tikhonov from x_0 = 0.

    Returns
    -------
    iterates, residuals : list of ndarray
        ``x_k`` and ``y - A x_k`` for k = 1..n.
    """
    _check_n(schedule, n)
    y = np.asarray(y_noisy, dtype=np.float64)
    rhs = op.apply_adjoint(y)
    x = np.zeros(op.shape[1])
    iterates, residuals = [], []
    for a in schedule.alphas[:n]:
        x = op.normal_solve(a * x + rhs, a)
        iterates.append(x)
        residuals.append(y - op.apply(x))
    return iterates, residuals


def eval_g(schedule: AlphaSchedule, n: int, lam):
    """Residual function of n iterated-Tikhonov steps at ``lam`` (scalar or array)."""
    _check_n(schedule, n)
    lam = np.asarray(lam, dtype=np.float64)
    out = np.ones_like(lam)
    for a in schedule.alphas[:n]:
        out = out / (lam / a + 1.0)
    return out if out.ndim else float(out)


def eval_g_hat(schedule: AlphaSchedule, n: int, lam):
    """RatCG variant: the product runs only up to floor(n/2)."""
    return eval_g(schedule, n // 2, lam)


def sigma(schedule: AlphaSchedule, n: int) -> float:
    _check_n(schedule, n)
    return float(math.fsum(1.0 / a for a in schedule.alphas[:n]))


def sigma_hat(schedule: AlphaSchedule, n: int) -> float:
    return sigma(schedule, n // 2)


@dataclass
class SolveTrace:
    """Per-iteration record of a solver run.

    ``residual_norms[k]`` is ``||A x_k - y||`` with ``x_0 = 0`` so the list
    always starts with ``||y||``.
    """

    method_tag: str
    residual_norms: list[float] = field(default_factory=list)
    sigma_values: list[float] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None
    stop_index: int | None = None
    breakdown_index: int | None = None
    effective_ranks: list[int] = field(default_factory=list)
    final_iterate: np.ndarray | None = None

    @property
    def solution(self) -> np.ndarray | None:
        """Iterate at the stopping index, else the last one computed."""
        if self.iterates and self.stop_index is not None:
            return self.iterates[self.stop_index]
        return self.final_iterate

    def to_dict(self) -> dict:
        return {
            "method": self.method_tag,
            "residual_norms": [float(r) for r in self.residual_norms],
            "sigma_values": [float(s) for s in self.sigma_values],
            "stop_index": self.stop_index,
            "breakdown_index": self.breakdown_index,
            "effective_ranks": list(self.effective_ranks),
        }


def cgne(op: LinearOperator, rhs, max_iter: int, tau_delta: float | None = None,
         reorthogonalize: bool = False, keep_iterates: bool = True) -> SolveTrace:
    """Conjugate gradients on the normal equations (CGLS form).

    Iterate k minimizes ``||A x - rhs||`` over the Krylov space
    ``span{A*rhs, (A*A) A*rhs, ...}`` of dimension k.  Stops after
    ``max_iter`` steps, as soon as the residual drops below ``tau_delta``,
    or at breakdown (``||A* r_k|| <= 1e-13 ||A* rhs||``), in which case
    ``breakdown_index = k + 1``.

    ``reorthogonalize`` keeps the normal-equation residuals mutually
    orthogonal (modified Gram-Schmidt against all previous ones).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    b = np.asarray(rhs, dtype=np.float64)
    x = np.zeros(op.shape[1])
    r = b.copy()
    s = op.apply_adjoint(r)
    s0 = float(np.linalg.norm(s))
    trace = SolveTrace("cgne", residual_norms=[float(np.linalg.norm(r))],
                       iterates=[x.copy()] if keep_iterates else None)
    if s0 == 0.0:
        # rhs orthogonal to range(A): every Krylov space is trivial
        trace.breakdown_index = 1
        trace.final_iterate = x
        return trace
    gamma = s0 * s0
    p = s.copy()
    basis = [s / s0] if reorthogonalize else None
    for k in range(1, max_iter + 1):
        q = op.apply(p)
        qq = float(q @ q)
        if qq == 0.0:
            trace.breakdown_index = k
            break
        step = gamma / qq
        x = x + step * p
        r = r - step * q
        trace.residual_norms.append(float(np.linalg.norm(r)))
        if keep_iterates:
            trace.iterates.append(x.copy())
        if tau_delta is not None and trace.residual_norms[-1] < tau_delta:
            break
        s = op.apply_adjoint(r)
        if basis is not None:
            for v in basis:
                s = s - (v @ s) * v
        gamma_new = float(s @ s)
        if math.sqrt(gamma_new) <= CGNE_BREAKDOWN_TOL * s0:
            trace.breakdown_index = k + 1
            break
        if basis is not None:
            basis.append(s / math.sqrt(gamma_new))
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    trace.final_iterate = x
    return trace


@dataclass(frozen=True)
class BoundReport:
    """Empirical constant ``max_grid |g_n(lam) lam^nu| * sigma_n^nu``."""

    n: int
    nu: float
    value: float
    argmax: float
    bound: float | None
    bounded: bool


def check_hanke_groetsch(schedule: AlphaSchedule, n: int, nu: float, grid,
                         bound: float | None = None) -> BoundReport:
    """Evaluate the iterated-Tikhonov moment bound on a grid.

    No closed-form constant is attempted; ``bounded`` is true when the
    empirical constant is finite and, if ``bound`` is given, does not
    exceed it.
    """
    if nu < 0 or nu >= n:
        raise ValueError(f"need 0 <= nu < n, got nu={nu}, n={n}")
    lam = np.asarray(grid, dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("grid must be non-negative")
    vals = np.abs(eval_g(schedule, n, lam) * lam**nu) * sigma(schedule, n) ** nu
    i = int(np.argmax(vals))
    value = float(vals[i])
    ok = math.isfinite(value) and (bound is None or value <= bound)
    return BoundReport(n, float(nu), value, float(lam[i]), bound, ok)


def half_line_grid(n_points: int = 10**4, lo: float = 1e-8, hi: float = 1e8) -> np.ndarray:
    """Zero plus log-spaced points on ``[lo, hi]``, standing in for lam >= 0.

    A uniform grid on ``[0, ||A||^2]`` under-resolves the maximizer once it
    moves toward 0 and truncates it when early alphas are large.
    """
    return np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), n_points - 1)])
