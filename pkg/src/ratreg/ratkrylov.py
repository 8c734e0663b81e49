"""Aggregation and RatCG: least squares over rational Krylov spaces.

The aggregation iterate minimizes ``||A x - y||`` over
``span{x_alpha_1, ..., x_alpha_n}`` (Tikhonov solutions); the RatCG iterate
over the interleaved space ``span{yt, x_alpha_1, (A*A) yt, x_alpha_2, ...}``
with ``yt = A* y``.  Two ways to reach the same minimizer are implemented:

* direct: build a basis of the space, solve the small least-squares problem
  either through the Gram system (``path="gram"``) or an orthogonal
  factorization of the image columns (``path="qr"``);
* factorized: k iterated-Tikhonov steps, then n CGNE steps on the
  iterated-Tikhonov residual, adding the two contributions
  (k = n for aggregation, k = floor(n/2) for RatCG).

Basis construction
------------------
``basis="plain"`` forms the textbook vectors ``x_alpha_i`` and
``(A*A)^j yt``.  With schedules whose parameters sit close together (the
floored schedules separate them by 1e-6) these are numerically dependent
long before the space is exhausted.  The default ``basis="orthonormal"``
spans the identical nested spaces but generates each new direction by
applying ``(A*A + alpha_i I)^-1`` (or ``A*A``) to the latest orthonormal
vector, followed by two passes of classical Gram-Schmidt.  Partial
fractions show the spans agree for pairwise distinct alphas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .classical import AlphaSchedule, _check_n, cgne, iterated_tikhonov, tikhonov
from .linop import LinearOperator

#: Relative norm below which a freshly orthogonalized direction counts as dependent.
ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class RationalBasis:
    """Basis vectors (columns), their labels and their images under A."""

    vectors: np.ndarray
    kinds: tuple[str, ...]
    images: np.ndarray
    orthonormal: bool = False

    def __len__(self):
        return len(self.kinds)


@dataclass(frozen=True)
class AggregationResult:
    x: np.ndarray
    coefficients: np.ndarray | None
    residual: np.ndarray
    residual_norm: float
    effective_rank: int
    path: str
    method: str = "agg"
    n: int = 0
    breakdown: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "path": self.path,
            "residual_norm": self.residual_norm,
            "effective_rank": self.effective_rank,
            "breakdown": self.breakdown,
            "coefficients": None if self.coefficients is None
            else [float(c) for c in self.coefficients],
        }


def aggregation_steps(schedule: AlphaSchedule, n: int) -> list[tuple[str, float | int]]:
    _check_n(schedule, n)
    return [("tikhonov", a) for a in schedule.alphas[:n]]


def ratcg_steps(schedule: AlphaSchedule, n: int) -> list[tuple[str, float | int]]:
    """Interleaved order yt, x_alpha_1, (A*A) yt, x_alpha_2, ...

    Uses floor(n/2) Tikhonov vectors and ceil(n/2) Krylov powers.
    """
    _check_n(schedule, n // 2)
    return [("krylov_power", j // 2) if j % 2 == 0 else ("tikhonov", schedule.alphas[j // 2])
            for j in range(n)]


def _label(kind, param) -> str:
    return f"{kind}({param:g})" if kind == "tikhonov" else f"{kind}({param})"


def build_basis(op: LinearOperator, y_noisy, steps, orthonormal: bool = True) -> RationalBasis:
    """Form the basis described by ``steps`` (see :func:`aggregation_steps`)."""
    yt = op.apply_adjoint(y_noisy)
    p = op.shape[1]
    cols = np.zeros((p, len(steps)))
    if not orthonormal:
        for j, (kind, param) in enumerate(steps):
            if kind == "tikhonov":
                cols[:, j] = op.normal_solve(yt, param)
            else:
                v = yt
                for _ in range(param):
                    v = op.apply_adjoint(op.apply(v))
                cols[:, j] = v
    elif np.any(yt):
        last = None
        for j, (kind, param) in enumerate(steps):
            src = yt if last is None else last
            if kind == "tikhonov":
                v = op.normal_solve(src, param)
            else:
                v = src if last is None else op.apply_adjoint(op.apply(src))
            before = np.linalg.norm(v)
            for _ in range(2):
                v = v - cols[:, :j] @ (cols[:, :j].T @ v)
            after = np.linalg.norm(v)
            if before == 0.0 or after <= ORTHO_TOL * before:
                break  # the space stopped growing; remaining columns stay zero
            last = v / after
            cols[:, j] = last
    images = np.column_stack([op.apply(c) for c in cols.T]) if steps else np.zeros((op.shape[0], 0))
    kinds = tuple(_label(k, v) for k, v in steps)
    return RationalBasis(cols, kinds, images, orthonormal)


def detect_breakdown(basis: RationalBasis, tol: float = 1e-10) -> int:
    """Numerical rank of the image columns (column-pivoted QR, relative ``tol``).

    The space breaks down at index ``rank + 1`` when ``rank < len(basis)``.
    """
    c = basis.images
    if c.size == 0:
        return 0
    _, r, _ = scipy.linalg.qr(c, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > tol * d[0]))


def _solve_qr(c, y, tol):
    n = c.shape[1]
    coef = np.zeros(n)
    if n == 0:
        return coef, 0
    q, r, piv = scipy.linalg.qr(c, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d[0] == 0.0:
        return coef, 0
    rank = int(np.count_nonzero(d > tol * d[0]))
    sol = scipy.linalg.solve_triangular(r[:rank, :rank], q[:, :rank].T @ y)
    coef[piv[:rank]] = sol
    return coef, rank


def _solve_gram(c, y, tol):
    n = c.shape[1]
    if n == 0:
        return np.zeros(0), 0
    gram = c.T @ c
    z = c.T @ y
    evals, evecs = np.linalg.eigh(gram)
    top = evals[-1]
    if top <= 0.0:
        return np.zeros(n), 0
    keep = evals > max(tol * tol, n * np.finfo(float).eps) * top
    v = evecs[:, keep]
    coef = v @ ((v.T @ z) / evals[keep])
    return coef, int(np.count_nonzero(keep))


def solve_on_basis(basis: RationalBasis, y_noisy, path: str = "qr", tol: float = 1e-10):
    """Least-squares coefficients of ``y`` on the image columns.

    Near-dependent columns are truncated (relative ``tol``); the returned
    coefficients then live on the retained subspace.
    """
    y = np.asarray(y_noisy, dtype=np.float64)
    if path == "qr":
        return _solve_qr(basis.images, y, tol)
    if path == "gram":
        return _solve_gram(basis.images, y, tol)
    raise ValueError(f"unknown path {path!r}; expected 'qr' or 'gram'")


def _direct(op, y_noisy, steps, n, path, basis, tol, method):
    y = np.asarray(y_noisy, dtype=np.float64)
    if basis not in ("orthonormal", "plain"):
        raise ValueError(f"unknown basis {basis!r}")
    b = build_basis(op, y, steps, orthonormal=basis == "orthonormal")
    coef, rank = solve_on_basis(b, y, path, tol)
    x = b.vectors @ coef
    res = y - op.apply(x)
    return AggregationResult(x, coef, res, float(np.linalg.norm(res)), rank, path,
                             method, n, rank < n)


def aggregate(op: LinearOperator, y_noisy, schedule: AlphaSchedule, n: int,
              path: str = "qr", basis: str = "orthonormal", tol: float = 1e-10,
              reorthogonalize: bool = True) -> AggregationResult:
    """Aggregation iterate: least squares over n Tikhonov solutions."""
    if path == "factorized":
        return factorized_aggregate(op, y_noisy, schedule, n, reorthogonalize)
    return _direct(op, y_noisy, aggregation_steps(schedule, n), n, path, basis, tol, "agg")


def ratcg(op: LinearOperator, y_noisy, schedule: AlphaSchedule, n: int,
          path: str = "qr", basis: str = "orthonormal", tol: float = 1e-10,
          reorthogonalize: bool = True) -> AggregationResult:
    """RatCG iterate: least squares over the interleaved Tikhonov/Krylov space."""
    if path == "factorized":
        return factorized_ratcg(op, y_noisy, schedule, n, reorthogonalize)
    return _direct(op, y_noisy, ratcg_steps(schedule, n), n, path, basis, tol, "ratcg")


def _factorized(op, y_noisy, schedule, k, n, reorthogonalize, method):
    y = np.asarray(y_noisy, dtype=np.float64)
    if n < 1:
        raise ValueError("n must be >= 1")
    if k > 0:
        iterates, residuals = iterated_tikhonov(op, y, schedule, k)
        x_it, y_hat = iterates[-1], residuals[-1]
    else:
        x_it, y_hat = np.zeros(op.shape[1]), y
    tr = cgne(op, y_hat, n, reorthogonalize=reorthogonalize, keep_iterates=False)
    x = x_it + tr.final_iterate
    res = y - op.apply(x)
    rank = n if tr.breakdown_index is None else min(n, tr.breakdown_index - 1)
    return AggregationResult(x, None, res, float(np.linalg.norm(res)), rank,
                             "factorized", method, n, tr.breakdown_index is not None
                             and tr.breakdown_index <= n)


def factorized_aggregate(op: LinearOperator, y_noisy, schedule: AlphaSchedule, n: int,
                         reorthogonalize: bool = True) -> AggregationResult:
    """n iterated-Tikhonov steps, then n CGNE steps on their residual."""
    _check_n(schedule, n)
    return _factorized(op, y_noisy, schedule, n, n, reorthogonalize, "agg")


def factorized_ratcg(op: LinearOperator, y_noisy, schedule: AlphaSchedule, n: int,
                     reorthogonalize: bool = True) -> AggregationResult:
    """floor(n/2) iterated-Tikhonov steps, then n CGNE steps on their residual."""
    _check_n(schedule, n // 2)
    return _factorized(op, y_noisy, schedule, n // 2, n, reorthogonalize, "ratcg")


def tikhonov_basis_residuals(op: LinearOperator, y_noisy, schedule: AlphaSchedule, n: int):
    """Residual norms of the individual Tikhonov solutions x_alpha_1..x_alpha_n."""
    y = np.asarray(y_noisy, dtype=np.float64)
    return [float(np.linalg.norm(y - op.apply(tikhonov(op, y, a)))) for a in schedule.alphas[:n]]
