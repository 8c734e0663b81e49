import numpy as np
import pytest

from ratreg.linop import (DenseOperator, DiagonalOperator, DimensionError, apply, apply_adjoint,
                          load_operator, operator_norm, range_projector, read_vector,
                          save_operator, svd, write_vector)


def test_apply_examples():
    assert np.array_equal(apply(DiagonalOperator([2, 1]), [1, 1]), [2, 1])
    assert np.array_equal(apply(DiagonalOperator([3]), [0]), [0])
    # hand product: [[1,2],[3,4]] (1,1) = (3,7)
    assert np.array_equal(apply(DenseOperator([[1, 2], [3, 4]]), [1, 1]), [3, 7])


def test_adjoint_examples():
    assert np.array_equal(apply_adjoint(DiagonalOperator([2, 1]), [1, 1]), [2, 1])
    # transpose product by hand: first row of A^T = (1, 2)
    assert np.array_equal(apply_adjoint(DenseOperator([[1, 2], [3, 4]]), [1, 0]), [1, 2])
    assert np.array_equal(apply_adjoint(DenseOperator([[1, 2], [3, 4]]), [0, 0]), [0, 0])


def test_norm_examples():
    assert operator_norm(DiagonalOperator([2, 1])) == 2.0
    assert operator_norm(DenseOperator([[3, 0], [0, 4]])) == pytest.approx(4.0, rel=1e-12)
    # symmetric permutation has eigenvalues +-1
    assert operator_norm(DenseOperator([[0, 1], [1, 0]])) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("mat, expected", [
    ([[2, 0], [0, 1]], [2, 1]),
    ([[0, 1], [1, 0]], [1, 1]),        # orthogonal matrix
    ([[1, 1], [1, 1]], [2, 0]),        # rank one, trace 2
])
def test_svd_examples(mat, expected):
    dec = svd(DenseOperator(mat))
    np.testing.assert_allclose(dec.singular_values, expected, atol=1e-14)
    a = np.asarray(mat, float)
    rec = dec.left_vectors @ np.diag(dec.singular_values) @ dec.right_vectors.T
    assert np.linalg.norm(a - rec) <= 1e-10 * np.linalg.norm(a, 2)
    np.testing.assert_allclose(dec.left_vectors.T @ dec.left_vectors, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(dec.right_vectors.T @ dec.right_vectors, np.eye(2), atol=1e-12)


def test_rank_one_svd_rank():
    assert svd(DenseOperator([[1, 1], [1, 1]])).rank() == 1


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply(DiagonalOperator([1, 2][::-1]), [1.0])
    with pytest.raises(DimensionError):
        apply_adjoint(DenseOperator(np.ones((3, 2))), [1.0, 2.0])


@pytest.mark.parametrize("bad", [[], [1, -1], [1, 2], [1, np.inf]])
def test_diagonal_validation(bad):
    with pytest.raises(ValueError):
        DiagonalOperator(bad)


def test_dense_validation():
    with pytest.raises(ValueError):
        DenseOperator([[np.nan]])
    with pytest.raises(ValueError):
        DenseOperator([1, 2, 3])


def test_diagonal_matches_dense_embedding(rng):
    s = np.sort(rng.uniform(0.1, 1, 6))[::-1]
    d, e = DiagonalOperator(s), DenseOperator(np.diag(s))
    x = rng.standard_normal(6)
    np.testing.assert_allclose(d.apply(x), e.apply(x), rtol=0, atol=1e-14)
    np.testing.assert_allclose(d.apply_adjoint(x), e.apply_adjoint(x), rtol=0, atol=1e-14)
    np.testing.assert_allclose(d.normal_solve(x, 0.3), e.normal_solve(x, 0.3), rtol=1e-13)


def test_range_projector_rank_deficient():
    op = DenseOperator(np.diag([1.0, 0.0]))
    np.testing.assert_allclose(range_projector(op)([3.0, 4.0]), [3.0, 0.0], atol=1e-15)


def test_roundtrip_files(tmp_path, rng):
    dense = DenseOperator(rng.standard_normal((4, 3)))
    desc = save_operator(dense, tmp_path)
    assert (tmp_path / "operator.mtx").read_text().startswith(
        "%%MatrixMarket matrix array real general")
    np.testing.assert_array_equal(load_operator(desc, tmp_path).to_dense(), dense.to_dense())
    diag = DiagonalOperator([1.0, 0.5])
    assert save_operator(diag, tmp_path) == {"type": "diagonal", "sigma": [1.0, 0.5]}
    v = rng.standard_normal(5)
    write_vector(tmp_path / "v.csv", v)
    np.testing.assert_array_equal(read_vector(tmp_path / "v.csv"), v)
