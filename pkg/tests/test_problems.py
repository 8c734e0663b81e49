import json

import numpy as np
import pytest

from ratreg.linop import DenseOperator
from ratreg.problems import (NoiseSpec, add_noise, gravity_matrix, load_problem,
                             make_diagonal_problem, make_gravity_problem, save_problem)


def test_diagonal_examples():
    p = make_diagonal_problem(2, 1.0, 0.5, w=[1.0, 0.0])
    np.testing.assert_allclose(p.op.singular_values, [1.0, 0.5])
    np.testing.assert_allclose(p.x_true, [1.0, 0.0])
    np.testing.assert_allclose(p.y_exact, [1.0, 0.0])
    p = make_diagonal_problem(3, 1.0, 1.0, w=[0.0, 0.0, 1.0])
    np.testing.assert_allclose(p.x_true, [0, 0, 1 / 9], rtol=1e-15)
    np.testing.assert_allclose(p.y_exact, [0, 0, 1 / 27], rtol=1e-15)
    assert np.array_equal(p.y_noisy, p.y_exact)


def test_source_condition_and_noise_norm():
    p = make_diagonal_problem(50, 1.5, 0.75, NoiseSpec(1e-3, 4))
    s = p.op.singular_values
    assert np.linalg.norm(p.w) == pytest.approx(1.0, rel=1e-15)
    np.testing.assert_allclose(s ** 1.5 * p.w, p.x_true, rtol=1e-14)
    assert np.linalg.norm(p.y_noisy - p.y_exact) / 1e-3 == pytest.approx(1.0, abs=1e-12)


def test_add_noise_examples():
    from ratreg.linop import DiagonalOperator
    op = DiagonalOperator([1.0, 0.5])
    a = add_noise([1.0, 0.0], NoiseSpec(0.1, 3), op)
    b = add_noise([1.0, 0.0], NoiseSpec(0.1, 3), op)
    assert np.linalg.norm(a - [1.0, 0.0]) == pytest.approx(0.1, rel=1e-12)
    assert np.array_equal(a, b)
    # range(A) = span(e1) for diag(1, 0) embedded densely
    c = add_noise([0.0, 0.0], NoiseSpec(0.1, 3), DenseOperator(np.diag([1.0, 0.0])))
    assert c[1] == 0.0 and abs(c[0]) == pytest.approx(0.1)


def test_same_seed_same_direction_across_delta():
    a = make_diagonal_problem(20, 1, 0.5, NoiseSpec(1e-2, 9))
    b = make_diagonal_problem(20, 1, 0.5, NoiseSpec(1e-4, 9))
    np.testing.assert_allclose((a.y_noisy - a.y_exact) / 1e-2, (b.y_noisy - b.y_exact) / 1e-4,
                               rtol=1e-10)
    np.testing.assert_array_equal(a.w, b.w)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(0.0)
    with pytest.raises(ValueError):
        make_diagonal_problem(1, 1, 1)


def test_gravity_entries():
    a = gravity_matrix(8, 0.25)
    # K(s1, t1) = 0.25 * 0.0625^(-3/2) = 16, divided by m = 8
    assert a[0, 0] == pytest.approx(2.0, rel=1e-15)
    np.testing.assert_array_equal(a, a.T)
    p = make_gravity_problem(8)
    assert np.array_equal(p.y_noisy, p.y_exact) and p.mu is None and p.w is None
    with pytest.raises(ValueError):
        make_gravity_problem(4)


def test_bundle_roundtrip_and_determinism(tmp_path):
    for make in (lambda: make_diagonal_problem(30, 1, 0.5, NoiseSpec(1e-3, 2)),
                 lambda: make_gravity_problem(16, noise=NoiseSpec(1e-3, 2))):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        save_problem(make(), d1)
        save_problem(make(), d2)
        for f in sorted(d1.iterdir()):
            assert f.read_bytes() == (d2 / f.name).read_bytes(), f.name
        back = load_problem(d1)
        orig = make()
        np.testing.assert_array_equal(back.y_noisy, orig.y_noisy)
        np.testing.assert_array_equal(back.op.to_dense(), orig.op.to_dense())
        meta = json.loads((d1 / "problem.json").read_text())
        assert meta["delta"] == 1e-3 and meta["seed"] == 2
