"""Orthogonal-polynomial diagnostics for aggregation and RatCG.

The aggregation residual is ``p_n(AA*) g_n(AA*) y`` where ``p_n`` is the
degree-n polynomial with ``p_n(0) = 1`` orthogonal with respect to the
discrete measure

    d beta_n = sum_i lam_i g_n(lam_i)^2 <y, u_i>^2 delta_{lam_i},

``lam_i = sigma_i^2``.  RatCG uses ``ghat_n = g_{floor(n/2)}`` instead.  This
module builds those measures, recovers the polynomials through a Lanczos
(Stieltjes) process with full reorthogonalization, extracts roots as
Jacobi-matrix eigenvalues and checks the root inequalities, the energy
identity and the residual factorization numerically.

Polynomials are carried as roots: ``p_k(x) = prod_j (1 - x / lam_jk)``.
The only monomial-coefficient computation is :func:`w_polynomial`, capped
at degree 12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
from numpy.polynomial import polynomial as npoly

from .classical import AlphaSchedule, eval_g, eval_g_hat
from .linop import DiagonalOperator, LinearOperator
from .ratkrylov import aggregate, ratcg

WEIGHT_TOL = 1e-14
DEGREE_CAP = 12
NU_VALUES = (0.5, 1.0, 2.0)


class DegenerateMeasureError(ValueError):
    """The measure has too few points of increase for the requested degree."""


# --- measures ----------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteMeasure:
    nodes: np.ndarray
    weights: np.ndarray
    kappa: int

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def inner(self, f, g) -> float:
        return float(np.sum(self.weights * f * g))


def spectral_data(op: LinearOperator, y):
    """Nodes ``lam_i = sigma_i^2`` (ascending, positive) and ``<y, u_i>``.

    Returns ``(lam, coef, u)`` with ``u`` the matching left singular vectors
    (``None`` for diagonal operators, where they are canonical).
    """
    y = np.asarray(y, dtype=np.float64)
    if isinstance(op, DiagonalOperator):
        s = op.singular_values
        return (s**2)[::-1].copy(), y[::-1].copy(), None
    dec = op.spectral()
    r = dec.rank()
    u = dec.left_vectors[:, :r][:, ::-1]
    return (dec.singular_values[:r] ** 2)[::-1].copy(), u.T @ y, u


def measure_from_spectrum(lam, coef, gvals) -> DiscreteMeasure:
    lam = np.asarray(lam, dtype=np.float64)
    w = lam * np.asarray(gvals) ** 2 * np.asarray(coef) ** 2
    top = w.max() if w.size else 0.0
    if not top > 0.0:
        raise DegenerateMeasureError("measure has zero mass (data orthogonal to range)")
    kappa = int(np.count_nonzero(w > WEIGHT_TOL * top))
    return DiscreteMeasure(lam, w, kappa)


def _gfun(schedule, n, hatted):
    if n == 0 or schedule is None:
        if n != 0:
            raise ValueError("schedule required for n > 0")
        return lambda lam: np.ones_like(lam)
    f = eval_g_hat if hatted else eval_g
    return lambda lam: f(schedule, n, lam)


def residual_measure(op: LinearOperator, y, schedule: AlphaSchedule | None, n: int,
                     hatted: bool = False) -> DiscreteMeasure:
    """Measure ``d beta_n`` (``hatted`` selects the RatCG variant)."""
    lam, coef, _ = spectral_data(op, y)
    return measure_from_spectrum(lam, coef, _gfun(schedule, n, hatted)(lam))


# --- polynomials -------------------------------------------------------------

@dataclass(frozen=True)
class ResidualPolynomial:
    """Orthogonal polynomial normalized to ``p(0) = 1``.

    ``a`` and ``b`` are the Jacobi coefficients of the first ``degree``
    recurrence steps; ``orthonormal_at_zero`` is the value at 0 of the
    orthonormal version, i.e. the factor removed by normalization.
    ``weighted_values[i] = sqrt(w_i) p(lam_i)`` comes straight from the
    Lanczos vectors.  Evaluating the product form at nodes beyond the
    smallest root cancels badly once roots have converged to nodes, so node
    values should be taken from here.
    """

    degree: int
    a: np.ndarray
    b: np.ndarray
    roots: np.ndarray
    orthonormal_at_zero: float
    weighted_values: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.ones_like(x)
        for r in self.roots:
            out = out * (1.0 - x / r)
        return out

    @property
    def derivative_at_zero(self) -> float:
        return -math.fsum(1.0 / r for r in self.roots)

    @property
    def smallest_root(self) -> float:
        return float(self.roots[0]) if self.degree else math.inf


def jacobi_coefficients(measure: DiscreteMeasure, k_max: int):
    """Lanczos on ``diag(nodes)`` started from ``sqrt(weights)``.

    Returns ``a`` and ``b`` (length k_max each; ``b[-1]`` is the next
    off-diagonal) and the Lanczos vectors ``q_0..q_kmax`` as columns.  The
    last vector is zero when the measure is exhausted at degree k_max.
    """
    x = measure.nodes
    q = np.sqrt(measure.weights)
    q = q / np.linalg.norm(q)
    basis = [q]
    a, b = [], []
    for j in range(k_max):
        v = x * basis[-1]
        a.append(float(basis[-1] @ v))
        for _ in range(2):
            for u in basis:
                v = v - (u @ v) * u
        bj = float(np.linalg.norm(v))
        small = bj <= 1e-14 * x.max()
        if small and j < k_max - 1:
            raise DegenerateMeasureError(f"Lanczos breakdown at degree {j + 1}")
        b.append(0.0 if small else bj)
        basis.append(np.zeros_like(v) if small else v / bj)
    return np.asarray(a), np.asarray(b), np.column_stack(basis)


def poly_roots(p: ResidualPolynomial) -> np.ndarray:
    """Roots as eigenvalues of the symmetric tridiagonal Jacobi matrix."""
    if p.degree < 1:
        raise ValueError("degree must be >= 1")
    return _jacobi_roots(p.a, p.b, p.degree)


def _jacobi_roots(a, b, k):
    if k == 1:
        return np.array([a[0]])
    return np.sort(scipy.linalg.eigvalsh_tridiagonal(a[:k], b[:k - 1], tol=1e-12))


def orthonormal_residual_polys(measure: DiscreteMeasure, k_max: int) -> list[ResidualPolynomial]:
    """Normalized orthogonal polynomials of degrees ``0..k_max``."""
    if k_max > measure.kappa:
        raise DegenerateMeasureError(
            f"degree {k_max} exceeds the number of points of increase ({measure.kappa})")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    a, b, q = jacobi_coefficients(measure, max(k_max, 1))
    # orthonormal values at 0 via the three-term recurrence (0 lies left of
    # every node, where forward evaluation is stable)
    vals = [1.0 / math.sqrt(measure.mass)]
    prev = 0.0
    for j in range(k_max):
        if b[j] == 0.0:
            vals.append(math.inf)
            break
        nxt = (-a[j] * vals[-1] - (b[j - 1] * prev if j else 0.0)) / b[j]
        prev = vals[-1]
        vals.append(nxt)
    out = []
    for k in range(k_max + 1):
        roots = _jacobi_roots(a, b, k) if k else np.zeros(0)
        wv = q[:, k] / vals[k]
        out.append(ResidualPolynomial(k, a[:k].copy(), b[:max(k - 1, 0)].copy(), roots,
                                      vals[k], wv))
    return out


def _coeffs_from_roots(roots) -> np.ndarray:
    """Ascending monomial coefficients of ``prod (1 - x/r)``."""
    c = np.array([1.0])
    for r in roots:
        c = np.concatenate([c, [0.0]]) - np.concatenate([[0.0], c]) / r
    return c


@dataclass(frozen=True)
class WPolynomial:
    """``w(x) = (p_prev(x) - p_curr(x)) / x`` with ``pi = w(0)``."""

    degree: int
    coefficients: np.ndarray
    pi_value: float
    pi_from_roots: float
    roots: np.ndarray
    all_real: bool

    @property
    def smallest_root(self) -> float:
        return float(self.roots[0]) if self.roots.size else math.inf

    def __call__(self, x):
        return npoly.polyval(np.asarray(x, dtype=np.float64), self.coefficients)


def w_polynomial(p_prev: ResidualPolynomial, p_curr: ResidualPolynomial) -> WPolynomial:
    """Deflated difference of two normalized residual polynomials.

    ``pi`` is taken from the coefficients and cross-checked against the root
    sums ``p_prev'(0) - p_curr'(0)``; a disagreement beyond 1e-8 relative
    raises.
    """
    if p_curr.degree != p_prev.degree + 1:
        raise ValueError("p_curr must have degree one higher than p_prev")
    if p_curr.degree > DEGREE_CAP:
        raise ValueError(f"degree cap {DEGREE_CAP} exceeded")
    cp = _coeffs_from_roots(p_prev.roots)
    cc = _coeffs_from_roots(p_curr.roots)
    diff = np.concatenate([cp, [0.0]]) - cc
    if np.all(np.abs(diff[1:]) <= 1e-15 * np.abs(cc).max()):
        raise ValueError("polynomials coincide; the difference quotient is zero")
    coef = diff[1:]
    pi_c = float(coef[0])
    pi_r = p_prev.derivative_at_zero - p_curr.derivative_at_zero
    if not math.isclose(pi_c, pi_r, rel_tol=1e-8, abs_tol=1e-300):
        raise ArithmeticError(f"pi mismatch: coefficients {pi_c}, root sums {pi_r}")
    roots, real = _real_roots(coef, p_prev, p_curr)
    return WPolynomial(coef.size - 1, coef, pi_c, pi_r, roots, real)


def _real_roots(coef, p_prev, p_curr):
    if coef.size < 2:
        return np.zeros(0), True
    raw = npoly.polyroots(coef)
    real = bool(np.all(np.abs(raw.imag) <= 1e-8 * np.maximum(np.abs(raw.real), 1e-300)))
    roots = np.sort(raw.real)
    # polish against the product form, which is better conditioned than coefficients
    f = lambda x: float(p_prev(x) - p_curr(x))
    polished = []
    for r in roots:
        lo, hi = r * (1 - 1e-6), r * (1 + 1e-6)
        if r > 0 and f(lo) * f(hi) < 0:
            r = scipy.optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        polished.append(r)
    return np.sort(np.asarray(polished)), real


# --- reports -----------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    n: int | None
    margin: float | None
    status: str  # "pass", "fail" or "skipped"
    detail: str = ""

    def to_dict(self) -> dict:
        m = self.margin
        return {"name": self.name, "n": self.n,
                "margin": None if m is None or not math.isfinite(m) else float(m),
                "status": self.status, "detail": self.detail}


@dataclass
class DiagnosticReport:
    title: str
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, name, n, margin, ok, detail=""):
        self.checks.append(CheckResult(name, n, margin, "pass" if ok else "fail", detail))

    def skip(self, name, n, detail="degenerate"):
        self.checks.append(CheckResult(name, n, None, "skipped", detail))

    def extend(self, other: "DiagnosticReport"):
        self.checks.extend(other.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.status == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        counts = {s: sum(c.status == s for c in self.checks) for s in ("pass", "fail", "skipped")}
        return {"title": self.title, "passed": self.passed, "counts": counts,
                "checks": [c.to_dict() for c in self.checks]}

    def table(self) -> str:
        lines = [self.title, f"{'check':<28}{'n':>4}  {'margin':>12}  status"]
        for c in self.checks:
            m = "" if c.margin is None else f"{c.margin:12.3e}"
            lines.append(f"{c.name:<28}{'' if c.n is None else c.n:>4}  {m:>12}  {c.status}"
                         + (f"  ({c.detail})" if c.detail else ""))
        return "\n".join(lines)


def _rel(a, b):
    return a / b if b else a


def polynomial_properties(measure: DiscreteMeasure, k_max: int, n: int | None = None,
                          slack: float = 1e-10, n_grid: int = 100) -> DiagnosticReport:
    """Orthogonality, normalization, root location, interlacing and the
    classical bounds on ``[0, lam_1k]`` for degrees ``1..k_max``."""
    rep = DiagnosticReport("polynomial properties")
    k_max = min(k_max, DEGREE_CAP)
    if k_max < 1 or measure.kappa < 1:
        rep.skip("orthogonality", n)
        return rep
    k_max = min(k_max, measure.kappa)
    polys = orthonormal_residual_polys(measure, k_max)
    vals = [p.weighted_values for p in polys]
    norms = [float(np.linalg.norm(v)) for v in vals]
    worst = 0.0
    for j in range(k_max + 1):
        for k in range(j):
            if norms[j] and norms[k]:  # a zero vector means p_j vanishes on every node
                worst = max(worst, abs(float(vals[j] @ vals[k])) / (norms[j] * norms[k]))
    rep.add("orthogonality", n, worst, worst <= 1e-10)
    norm0 = max(abs(float(p(0.0)) - 1.0) for p in polys)
    rep.add("normalization", n, norm0, norm0 <= 1e-12)
    top = measure.nodes.max()
    loc = min(min(p.roots[0], top * (1 + 1e-10) - p.roots[-1]) for p in polys[1:])
    rep.add("root_location", n, _rel(loc, top), loc > 0)
    for k in range(1, k_max):
        rep.add("interlacing", n, _interlace_margin(polys[k].roots, polys[k + 1].roots),
                _interlace_margin(polys[k].roots, polys[k + 1].roots) >= -slack,
                f"k={k}")
    for p in polys[1:]:
        k, l1, d = p.degree, p.roots[0], abs(p.derivative_at_zero)
        rep.add("en_ia", n, _rel(l1 - 1.0 / d, l1), l1 >= (1.0 / d) * (1 - slack), f"k={k}")
        x = np.linspace(0.0, l1, n_grid)
        pv = p(x)
        rep.add("en_ii", n, 1.0 - np.abs(pv).max(), np.all(np.abs(pv) <= 1 + slack), f"k={k}")
        q = np.where(x > 0, (1 - pv) / np.where(x > 0, x, 1.0), d)
        ok = np.all(q >= -slack * d) and np.all(q <= d * (1 + slack))
        rep.add("en_iii", n, _rel(min(q.min(), d - q.max()), d), bool(ok), f"k={k}")
        xs = np.linspace(0.0, l1 * (1 - 1e-6), n_grid)
        base = p(xs) ** 2 * l1 / (l1 - xs)
        rep.add("bound_one", n, 1.0 - base.max(), base.max() <= 1 + slack, f"k={k}")
        for nu in NU_VALUES:
            lhs = base * xs**nu
            rhs = nu**nu * d ** (-nu)
            rep.add("bound_two", n, _rel(rhs - lhs.max(), rhs), lhs.max() <= rhs * (1 + slack),
                    f"k={k}, nu={nu:g}")
    return rep


def _interlace_margin(r_k, r_k1) -> float:
    """Smallest relative gap in ``r_k1[i] < r_k[i] < r_k1[i+1]``."""
    m = math.inf
    for i, lam in enumerate(r_k):
        m = min(m, (lam - r_k1[i]) / lam, (r_k1[i + 1] - lam) / r_k1[i + 1])
    return m


def _alpha_for(schedule, n, hatted):
    if not hatted:
        return schedule.alphas[n - 1]
    return schedule.alphas[n // 2 - 1] if n % 2 == 0 else math.inf


def check_root_lemmas(op: LinearOperator, y, schedule: AlphaSchedule, n_max: int,
                      hatted: bool = False, slack: float = 1e-8) -> DiagnosticReport:
    """Numerical check of the root inequalities for ``2 <= n <= n_max``.

    Per n: within-measure interlacing, monotonicity of the roots in the
    measure index, the smallest root of ``w_{n-1}`` against the residual
    polynomial roots (two bounds), the ``e^2`` growth bound for the smallest
    root and ``lam_1k >= 1/|p_k'(0)|``.  Indices beyond the number of
    points of increase are reported as skipped.
    """
    tag = "ratcg" if hatted else "agg"
    rep = DiagnosticReport(f"root lemmas ({tag})")
    if n_max > DEGREE_CAP:
        raise ValueError(f"n_max above degree cap {DEGREE_CAP}")
    lam, coef, _ = spectral_data(op, y)
    norm2 = float(lam.max()) if lam.size else 0.0
    gf = eval_g_hat if hatted else eval_g
    prev = None
    for n in range(1, n_max + 1):
        meas = measure_from_spectrum(lam, coef, gf(schedule, n, lam))
        if n > meas.kappa:
            if n >= 2:
                rep.skip("root_lemmas", n, f"degenerate: kappa={meas.kappa}")
            prev = None
            continue
        cur = orthonormal_residual_polys(meas, n)
        if prev is None:
            prev = cur
            continue
        for k in range(1, n):
            m = _interlace_margin(cur[k].roots, cur[k + 1].roots)
            rep.add("interlacing", n, m, m >= -slack, f"k={k}")
        strict = not (hatted and n % 2 == 1)
        for k in range(1, n):
            m = float(np.min((prev[k].roots - cur[k].roots) / prev[k].roots))
            rep.add("cross_monotone", n, m, m >= -slack, f"k={k}")
        w = w_polynomial(prev[n - 1], cur[n])
        rep.add("pi_positive", n, w.pi_value, w.pi_value > 0)
        rep.add("w_real_roots", n, None, w.all_real and w.roots.size == n - 1)
        mu1 = w.smallest_root
        l_n1 = cur[n - 1].roots[0]
        rep.add("lalala", n, _rel(mu1 - l_n1, mu1), l_n1 <= mu1 * (1 + slack))
        lo = min(prev[n - 1].roots[0], cur[n].roots[1])
        rep.add("anoy", n, _rel(mu1 - lo, mu1), lo <= mu1 * (1 + slack))
        a = _alpha_for(schedule, n, hatted)
        factor = math.e**2 * max((norm2 / a) ** 2, 1.0)
        lhs = prev[n - 1].roots[0]
        rep.add("interlace2", n, _rel(factor * l_n1 - lhs, lhs), lhs <= factor * l_n1 * (1 + slack))
        for p in cur[1:]:
            l1, inv = p.roots[0], 1.0 / abs(p.derivative_at_zero)
            rep.add("en_ia", n, _rel(l1 - inv, l1), l1 >= inv * (1 - slack), f"k={p.degree}")
        if not strict:
            m = float(np.max(np.abs(prev[n - 1].roots - cur[n - 1].roots) / prev[n - 1].roots))
            rep.add("odd_step_equal", n, m, m <= slack)
        prev = cur
    if not rep.checks:
        rep.skip("root_lemmas", None, "degenerate: fewer than two points of increase")
    return rep


def _solver(hatted):
    return ratcg if hatted else aggregate


def check_energy_identity(op: LinearOperator, y, schedule: AlphaSchedule, n: int,
                          hatted: bool = False, tol: float = 1e-8) -> DiagnosticReport:
    """Compare ``||A w_{n-1}(AA*) g_{n-1}(AA*) y||^2`` (node sum) with
    ``pi (rho_{n-1}^2 - rho_n^2) + c ||A* r_n||^2`` (solver residuals).

    ``c = alpha_n^-2``; for RatCG ``alpha_k^-2`` when n = 2k and 0 when n is
    odd.
    """
    tag = "ratcg" if hatted else "agg"
    rep = DiagnosticReport(f"energy identity ({tag})")
    if n < 2 or n > DEGREE_CAP:
        raise ValueError(f"need 2 <= n <= {DEGREE_CAP}")
    lam, coef, _ = spectral_data(op, y)
    gf = eval_g_hat if hatted else eval_g
    m_prev = measure_from_spectrum(lam, coef, gf(schedule, n - 1, lam))
    m_cur = measure_from_spectrum(lam, coef, gf(schedule, n, lam))
    if n > m_cur.kappa:
        rep.skip("energy_identity", n, f"degenerate: kappa={m_cur.kappa}")
        return rep
    p_prev = orthonormal_residual_polys(m_prev, n - 1)[n - 1]
    p_cur = orthonormal_residual_polys(m_cur, n)[n]
    w = w_polynomial(p_prev, p_cur)
    # sqrt(lam) g_{n-1} |y_i| w(lam_i): Lanczos node values above the
    # smallest root, the coefficient form below it where the difference
    # quotient would cancel
    ratio = gf(schedule, n - 1, lam) / gf(schedule, n, lam)
    wv = (p_prev.weighted_values - ratio * p_cur.weighted_values) / lam
    low = lam < p_cur.smallest_root
    wv[low] = np.sqrt(m_prev.weights[low]) * w(lam[low])
    lhs = float(np.sum(wv**2))
    solve = _solver(hatted)
    r_prev = solve(op, y, schedule, n - 1)
    r_cur = solve(op, y, schedule, n)
    a = _alpha_for(schedule, n, hatted)
    c = 0.0 if math.isinf(a) else a**-2
    ares = float(np.linalg.norm(op.apply_adjoint(r_cur.residual))) ** 2
    rhs = w.pi_value * (r_prev.residual_norm**2 - r_cur.residual_norm**2) + c * ares
    scale = max(abs(lhs), abs(rhs), np.finfo(float).tiny)
    err = abs(lhs - rhs) / scale
    rep.add("energy_identity", n, err, err <= tol, f"lhs={lhs:.6e} rhs={rhs:.6e} c={c:.3g}")
    rep.add("energy_sign", n, lhs, lhs >= 0 and rhs >= -tol * scale)
    return rep


def verify_residual_factorization(op: LinearOperator, y, schedule: AlphaSchedule, n: int,
                                  hatted: bool = False, tol: float = 1e-8,
                                  n_competitors: int = 50, seed: int = 0) -> DiagnosticReport:
    """Rebuild the solver residual as ``p_n(lam) g(lam) <y, u_i>`` per node.

    The mismatch is measured relative to ``||y||``.  Also checks that no
    random competitor polynomial with ``p(0) = 1`` (plus the fixed
    ``(1 - lam/||A||^2)^n``) gives a smaller weighted residual; that margin
    is the squared-residual gap relative to ``||y||^2``.
    """
    tag = "ratcg" if hatted else "agg"
    rep = DiagnosticReport(f"residual factorization ({tag})")
    if n < 1 or n > DEGREE_CAP:
        raise ValueError(f"need 1 <= n <= {DEGREE_CAP}")
    y = np.asarray(y, dtype=np.float64)
    lam, coef, u = spectral_data(op, y)
    gv = (eval_g_hat if hatted else eval_g)(schedule, n, lam)
    meas = measure_from_spectrum(lam, coef, gv)
    res = _solver(hatted)(op, y, schedule, n).residual
    res_spec = res[::-1] if u is None else u.T @ res
    ynorm = float(np.linalg.norm(y))
    if n > meas.kappa:
        # past breakdown the residual vanishes on the range
        err = float(np.linalg.norm(res_spec)) / ynorm
        rep.add("factorization", n, err, err <= tol, "beyond kappa: zero residual on range")
        return rep
    p = orthonormal_residual_polys(meas, n)[n]
    model = np.sign(coef) * p.weighted_values / np.sqrt(lam)
    err = float(np.linalg.norm(res_spec - model)) / ynorm
    rep.add("factorization", n, err, err <= tol)
    best = float(np.sum((model) ** 2))
    rng = np.random.default_rng(seed)
    lo, hi = float(lam.min()), float(lam.max())
    worst = math.inf
    comps = [np.full(n, hi)]
    comps += [np.exp(rng.uniform(np.log(lo), np.log(hi), n)) for _ in range(n_competitors)]
    for roots in comps:
        pv = np.ones_like(lam)
        for r in roots:
            pv = pv * (1 - lam / r)
        val = float(np.sum((pv * gv * coef) ** 2))
        worst = min(worst, (val - best) / ynorm**2)
    rep.add("optimality", n, worst, worst >= -tol)
    return rep
