import math

import numpy as np
import pytest

from ratreg.classical import AlphaSchedule
from ratreg.linop import DenseOperator, DiagonalOperator
from ratreg.polydiag import (DegenerateMeasureError, DiscreteMeasure, check_energy_identity,
                             check_root_lemmas, orthonormal_residual_polys, poly_roots,
                             polynomial_properties, residual_measure,
                             verify_residual_factorization, w_polynomial)
from ratreg.problems import NoiseSpec, make_diagonal_problem, make_gravity_problem
from ratreg.ratkrylov import aggregate
from ratreg.stopping import make_schedule


def _measure(nodes, weights):
    return DiscreteMeasure(np.asarray(nodes, float), np.asarray(weights, float), len(nodes))


def test_measure_examples():
    op = DiagonalOperator([2.0, 1.0])  # lambda = (1, 4) after sorting
    m = residual_measure(op, [1.0, 1.0], None, 0)
    np.testing.assert_allclose(m.nodes, [1.0, 4.0])
    np.testing.assert_allclose(m.weights, [1.0, 4.0])
    assert residual_measure(op, [0.0, 1.0], None, 0).kappa == 1
    m1 = residual_measure(op, [1.0, 1.0], AlphaSchedule((1.0,)), 1)
    assert m1.weights[0] == pytest.approx(0.25)
    with pytest.raises(DegenerateMeasureError):
        residual_measure(op, [0.0, 0.0], None, 0)


def test_two_node_polynomials():
    polys = orthonormal_residual_polys(_measure([1, 4], [1, 1]), 2)
    # first moment 5/2; p2 interpolates zeros at both nodes
    np.testing.assert_allclose(poly_roots(polys[1]), [2.5], rtol=1e-14)
    assert polys[1].derivative_at_zero == pytest.approx(-0.4, rel=1e-14)
    np.testing.assert_allclose(polys[1]([0.0, 1.0]), [1.0, 0.6], rtol=1e-14)
    np.testing.assert_allclose(poly_roots(polys[2]), [1.0, 4.0], rtol=1e-12)
    with pytest.raises(DegenerateMeasureError):
        orthonormal_residual_polys(_measure([1, 4], [1, 1]), 3)


def test_single_node():
    polys = orthonormal_residual_polys(_measure([3.0], [2.0]), 1)
    np.testing.assert_allclose(polys[1].roots, [3.0])


def test_three_equal_nodes():
    polys = orthonormal_residual_polys(_measure([1, 2, 4], [1, 1, 1]), 2)
    assert polys[1].roots[0] == pytest.approx(7 / 3, rel=1e-14)
    # moment conditions give x^2 - 36/7 x + 5
    np.testing.assert_allclose(polys[2].roots, [(18 - math.sqrt(79)) / 7, (18 + math.sqrt(79)) / 7],
                               rtol=1e-13)
    assert polys[2].roots[0] < 7 / 3 < polys[2].roots[1]


def test_orthogonality_dense_oracle(rng):
    nodes = np.sort(rng.uniform(0.01, 1, 12))
    w = rng.uniform(0.1, 1, 12)
    polys = orthonormal_residual_polys(_measure(nodes, w), 6)
    # dense oracle: Gram-Schmidt on monomials in the weighted inner product
    v = np.vander(nodes, 7, increasing=True) * np.sqrt(w)[:, None]
    q, _ = np.linalg.qr(v)
    for k in range(1, 7):
        ref = q[:, k] / np.sqrt(w)
        mine = polys[k](nodes)
        c = (ref @ mine) / (ref @ ref)
        np.testing.assert_allclose(mine, c * ref, atol=1e-8 * np.abs(mine).max())


def test_w_polynomial_examples():
    m = _measure([1, 4], [1, 1])
    p = orthonormal_residual_polys(m, 2)
    with pytest.raises(ValueError):
        w_polynomial(p[1], p[1])
    w = w_polynomial(p[1], p[2])
    # (1 - 2x/5 - (1-x)(1-x/4)) / x = 0.85 - x/4
    assert w.pi_value == pytest.approx(0.85, rel=1e-12)
    np.testing.assert_allclose(w.roots, [3.4], rtol=1e-12)


def test_check_root_lemmas_two_node_family():
    op = DiagonalOperator([2.0, 1.0])
    for al in ((1.0, 2.0, 4.0), (4.0, 2.0, 1.0)):
        rep = check_root_lemmas(op, [1.0, 1.0], AlphaSchedule(al), 2)
        assert rep.passed and any(c.status == "pass" for c in rep.checks)


def test_rank_one_skipped():
    op = DiagonalOperator([1.0, 0.5])
    rep = check_root_lemmas(op, [1.0, 0.0], AlphaSchedule((1.0, 0.5, 0.25)), 3)
    assert rep.passed and all(c.status == "skipped" for c in rep.checks)
    rep = check_energy_identity(op, [1.0, 0.0], AlphaSchedule((1.0, 0.5)), 2)
    assert [c.status for c in rep.checks] == ["skipped"]


def test_energy_identity_three_nodes():
    op = DiagonalOperator([1.0, 0.6, 0.2])
    y = [1.0, -0.5, 0.8]
    for hatted in (False, True):
        sch = AlphaSchedule((2.0, 1.0, 0.5))
        rep = check_energy_identity(op, y, sch, 2, hatted=hatted)
        assert rep.passed, rep.table()
        lhs = rep.checks[1].margin
        assert lhs >= 0


def test_ratcg_odd_step_has_no_alpha_term():
    op = DiagonalOperator(np.geomspace(1, 0.05, 8))
    rep = check_energy_identity(op, np.ones(8), AlphaSchedule((2.0, 1.0, 0.5)), 3, hatted=True)
    assert "c=0" in rep.checks[0].detail and rep.passed


def test_residual_factorization_n1_formula():
    op = DiagonalOperator([1.0, 0.5, 0.25])
    y = np.array([1.0, 2.0, -1.0])
    alpha = 0.7
    sch = AlphaSchedule((alpha,))
    r = aggregate(op, y, sch, 1)
    a = op.to_dense()
    xa = np.linalg.solve(a.T @ a + alpha * np.eye(3), a.T @ y)
    gamma = (a @ xa) @ (y - a @ xa) / (alpha * np.linalg.norm(a @ xa) ** 2)
    lam = op.singular_values**2
    model = (1 - gamma * lam) * alpha / (lam + alpha) * y
    np.testing.assert_allclose(r.residual, model, atol=1e-12)
    assert verify_residual_factorization(op, y, sch, 1).passed


def test_factorization_at_breakdown():
    op = DenseOperator(np.diag([1.0, 0.5, 0.0]))
    rep = verify_residual_factorization(op, np.array([1.0, 1.0, 0.0]),
                                        AlphaSchedule((1.0, 0.5, 0.25)), 3)
    assert rep.passed


def test_full_suite_gravity():
    p = make_gravity_problem(32, noise=NoiseSpec(1e-3, 0))
    sch = make_schedule("geometric_floor", {"alpha1": 8, "q": 0.5, "c0": 1}, n=12)
    for hatted in (False, True):
        rep = check_root_lemmas(p.op, p.y_noisy, sch, 6, hatted=hatted)
        for n in range(2, 7):
            rep.extend(check_energy_identity(p.op, p.y_noisy, sch, n, hatted))
            rep.extend(verify_residual_factorization(p.op, p.y_noisy, sch, n, hatted))
        assert rep.passed, rep.table()


def test_polynomial_properties_random():
    p = make_diagonal_problem(20, 1.0, 0.5, NoiseSpec(1e-3, 3))
    sch = make_schedule("constant_floor", {"c0": 0.1}, n=8)
    rep = polynomial_properties(residual_measure(p.op, p.y_noisy, sch, 4), 8)
    assert rep.passed, rep.table()
    names = {c.name for c in rep.checks}
    assert {"orthogonality", "interlacing", "en_iii", "bound_two"} <= names
