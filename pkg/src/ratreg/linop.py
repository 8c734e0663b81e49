"""Linear forward operators with adjoint, norm and spectral access.

Two realizations are provided.  :class:`DiagonalOperator` works directly in
singular coordinates (``A = diag(sigma)``, singular vectors are the canonical
basis), :class:`DenseOperator` wraps an explicit ``m x p`` matrix.  Both are
immutable; every method is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg


class DimensionError(ValueError):
    """A vector does not match the operator's domain or range."""


class LinearOperator:
    """Base class: a bounded real matrix ``A`` mapping R^p to R^m."""

    shape: tuple[int, int]

    def apply(self, x):
        raise NotImplementedError

    def apply_adjoint(self, y):
        raise NotImplementedError

    def norm(self) -> float:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    def spectral(self) -> "SvdDecomposition":
        """Singular system of the operator (identity vectors for diagonals)."""
        raise NotImplementedError

    def normal_solve(self, rhs, alpha: float) -> np.ndarray:
        """Solve ``(A*A + alpha I) x = rhs``."""
        raise NotImplementedError

    def _check_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise DimensionError(
                f"expected vector of length {self.shape[1]}, got shape {x.shape}")
        return x

    def _check_range(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.shape[0],):
            raise DimensionError(
                f"expected vector of length {self.shape[0]}, got shape {y.shape}")
        return y


@dataclass(frozen=True)
class SvdDecomposition:
    """``A = U diag(s) V^T`` with ``s`` non-increasing."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def rank(self, rtol: float | None = None) -> int:
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        if rtol is None:
            rtol = max(self.left_vectors.shape[0], self.right_vectors.shape[0]) * np.finfo(float).eps
        return int(np.count_nonzero(s > rtol * s[0]))


class DiagonalOperator(LinearOperator):
    """``A = diag(sigma)`` with ``sigma`` positive and non-increasing."""

    def __init__(self, singular_values):
        s = np.array(singular_values, dtype=np.float64).ravel()
        if s.size == 0:
            raise ValueError("diagonal operator needs at least one singular value")
        if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
            raise ValueError("singular values must be finite and positive")
        if np.any(np.diff(s) > 0.0):
            raise ValueError("singular values must be non-increasing")
        s.setflags(write=False)
        self.singular_values = s
        self.shape = (s.size, s.size)

    def __repr__(self):
        return f"DiagonalOperator(m={self.shape[0]}, sigma_1={self.singular_values[0]:.3g})"

    def apply(self, x):
        return self.singular_values * self._check_domain(x)

    def apply_adjoint(self, y):
        return self.singular_values * self._check_range(y)

    def norm(self) -> float:
        return float(self.singular_values[0])

    def to_dense(self) -> np.ndarray:
        return np.diag(self.singular_values)

    def spectral(self) -> SvdDecomposition:
        eye = np.eye(self.shape[0])
        return SvdDecomposition(self.singular_values.copy(), eye, eye)

    def normal_solve(self, rhs, alpha: float) -> np.ndarray:
        rhs = self._check_domain(rhs)
        return rhs / (self.singular_values**2 + alpha)


class DenseOperator(LinearOperator):
    """Explicit ``m x p`` real matrix."""

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("dense operator needs a non-empty 2-d matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a.setflags(write=False)
        self.entries = a
        self.shape = a.shape

    def __repr__(self):
        return f"DenseOperator(shape={self.shape})"

    def apply(self, x):
        return self.entries @ self._check_domain(x)

    def apply_adjoint(self, y):
        return self.entries.T @ self._check_range(y)

    def norm(self) -> float:
        return float(self.spectral().singular_values[0])

    def to_dense(self) -> np.ndarray:
        return self.entries.copy()

    @cached_property
    def _svd(self) -> SvdDecomposition:
        return svd(self)

    def spectral(self) -> SvdDecomposition:
        return self._svd

    @cached_property
    def _gram(self) -> np.ndarray:
        return self.entries.T @ self.entries

    def normal_solve(self, rhs, alpha: float) -> np.ndarray:
        rhs = self._check_domain(rhs)
        m = self._gram + alpha * np.eye(self.shape[1])
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(m), rhs)


def apply(op: LinearOperator, x) -> np.ndarray:
    return op.apply(x)


def apply_adjoint(op: LinearOperator, y) -> np.ndarray:
    return op.apply_adjoint(y)


def operator_norm(op: LinearOperator) -> float:
    return op.norm()


def svd(op: DenseOperator | LinearOperator) -> SvdDecomposition:
    """Thin SVD of a dense operator.

    Raises
    ------
    RuntimeError
        If LAPACK fails to converge (gesdd, then the slower gesvd).
    """
    a = op.to_dense()
    try:
        u, s, vt = scipy.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"SVD did not converge for {op!r}") from exc
    return SvdDecomposition(s, u, vt.T)


def range_projector(op: LinearOperator):
    """Return a function projecting onto the closure of range(A)."""
    if isinstance(op, DiagonalOperator):
        return lambda v: np.asarray(v, dtype=np.float64).copy()
    dec = op.spectral()
    u = dec.left_vectors[:, : dec.rank()]
    return lambda v: u @ (u.T @ np.asarray(v, dtype=np.float64))


# --- persistence -----------------------------------------------------------

def save_operator(op: LinearOperator, directory: Path) -> dict:
    """Write ``op`` into ``directory``; return its JSON descriptor.

    Diagonal operators are described inline, dense ones go to
    ``operator.mtx`` (Matrix Market array format).
    """
    directory = Path(directory)
    if isinstance(op, DiagonalOperator):
        return {"type": "diagonal", "sigma": [float(s) for s in op.singular_values]}
    path = directory / "operator.mtx"
    scipy.io.mmwrite(str(path), op.to_dense(), field="real", precision=17, symmetry="general")
    return {"type": "dense", "file": "operator.mtx"}


def load_operator(descriptor: dict, directory: Path) -> LinearOperator:
    kind = descriptor.get("type")
    if kind == "diagonal":
        return DiagonalOperator(descriptor["sigma"])
    if kind == "dense":
        mat = scipy.io.mmread(str(Path(directory) / descriptor.get("file", "operator.mtx")))
        return DenseOperator(np.asarray(mat))
    raise ValueError(f"unknown operator type {kind!r}")


def write_vector(path: Path, v) -> None:
    """Single-column CSV, full round-trip precision."""
    v = np.asarray(v, dtype=np.float64).ravel()
    Path(path).write_text("".join(f"{x!r}\n" for x in v.tolist()))


def read_vector(path: Path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=1, delimiter=",")
