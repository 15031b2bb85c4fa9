import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsnag.problems import quadratic_instance
from rsnag.smoothness import (
    DenseModel,
    DiagonalModel,
    DiagPlusLowRankModel,
    GramPlusRidgeModel,
    PowerIterationError,
    apply,
    diag_ratio,
    effective_rank,
    quad_form,
    spectral_norm,
)


def test_spectral_norm_convex_diag_instance():
    d = 1000
    diag = np.full(d, 1.0 / (d - 2))
    diag[0], diag[-1] = 1.0, 0.0
    assert spectral_norm(DiagonalModel(diag)) == pytest.approx(1.0, rel=1e-10)


def test_spectral_norm_scaled_identity():
    assert spectral_norm(DenseModel(2.5 * np.eye(6))) == pytest.approx(2.5, rel=1e-12)


def test_spectral_norm_dense_diag():
    assert spectral_norm(DenseModel(np.diag([3.0, 2.0, 1.0]))) == pytest.approx(3.0, rel=1e-10)


def test_spectral_norm_is_cached():
    m = DenseModel(np.diag([3.0, 2.0, 1.0]))
    first = m.L
    m.matrix[0, 0] = 100.0  # cache must not be recomputed
    assert m.L == first


def test_spectral_norm_zero_matrix_errors():
    with pytest.raises(PowerIterationError, match="zero"):
        spectral_norm(DiagonalModel(np.zeros(4)))


def test_spectral_norm_nonconvergence_names_form():
    # a 2-cycle of equal-magnitude eigenvalues cannot converge in one step
    m = DenseModel(np.diag([1.0, 0.999999]))
    with pytest.raises(PowerIterationError, match="dense"):
        spectral_norm(m, max_iter=1)


def test_effective_rank_examples():
    assert effective_rank(quadratic_instance("ConvexDiag", 100).smoothness) == pytest.approx(2.0, rel=1e-12)
    assert effective_rank(DenseModel(np.eye(7))) == pytest.approx(7.0)
    e1 = np.zeros(5)
    e1[0] = 1.0
    assert effective_rank(DenseModel(np.outer(e1, e1))) == pytest.approx(1.0)


def test_diag_ratio_examples():
    assert diag_ratio(quadratic_instance("SCDense", 1000).smoothness) == pytest.approx(0.002, rel=1e-10)
    assert diag_ratio(DenseModel(np.eye(4))) == pytest.approx(1.0)
    assert diag_ratio(DenseModel(np.diag([3.0, 2.0, 1.0]))) == pytest.approx(1.0)


def test_apply_examples():
    np.testing.assert_array_equal(apply(DiagonalModel([2.0, 3.0]), np.ones(2)), [2.0, 3.0])
    gram = GramPlusRidgeModel(np.array([[2.0, 0.0]]), 0.0)
    np.testing.assert_allclose(apply(gram, np.array([1.0, 0.0])), [1.0, 0.0])
    dense = quadratic_instance("ConvexDense", 10).smoothness
    np.testing.assert_allclose(apply(dense, np.ones(10)), np.zeros(10), atol=1e-14)


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        apply(DiagonalModel([1.0, 2.0]), np.ones(3))
    with pytest.raises(ValueError, match="dimension"):
        quad_form(DenseModel(np.eye(2)), np.ones(3))


def test_quad_form_examples():
    m = DenseModel(np.diag([3.0, 2.0, 1.0]))
    assert quad_form(m, np.zeros(3)) == 0.0
    assert quad_form(m, np.array([1.0, 0.0, 0.0])) == 3.0
    e1 = np.array([1.0, 0.0, 0.0])
    assert quad_form(DenseModel(np.outer(e1, e1)), np.array([0.0, 1.0, 0.0])) == 0.0


def test_gram_plus_ridge_closed_forms():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((7, 4))
    m = GramPlusRidgeModel(A, 0.3)
    n = 7
    assert m.trace() == pytest.approx(np.sum(A**2) / (4 * n) + 0.3 * 4, rel=1e-14)
    np.testing.assert_allclose(m.diagonal(), np.sum(A**2, axis=0) / (4 * n) + 0.3, rtol=1e-14)
    np.testing.assert_allclose(m.materialize(), A.T @ A / (4 * n) + 0.3 * np.eye(4), rtol=1e-14)


def test_diag_plus_low_rank_diagonal_matches_materialized():
    m = quadratic_instance("SCDense", 12).smoothness
    np.testing.assert_allclose(m.diagonal(), np.diag(m.materialize()), rtol=1e-14)
    assert m.trace() == pytest.approx(np.trace(m.materialize()), rel=1e-14)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        DiagonalModel([1.0])
    with pytest.raises(ValueError):
        DiagonalModel([1.0, -1.0])
    with pytest.raises(ValueError, match="symmetric"):
        DenseModel([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="unit norm"):
        DiagPlusLowRankModel(np.ones(3), [(1.0, np.ones(3))])
    with pytest.raises(ValueError, match="mu"):
        DiagonalModel([1.0, 1.0], mu=-1.0)


def _random_model(seed, d):
    rng = np.random.default_rng(seed)
    kind = seed % 4
    if kind == 0:
        B = rng.standard_normal((d, d))
        return DenseModel(B @ B.T / d)
    if kind == 1:
        return DiagonalModel(rng.uniform(0, 2, d) + 1e-3)
    if kind == 2:
        u = rng.standard_normal(d)
        return DiagPlusLowRankModel(rng.uniform(0.1, 1, d), [(rng.uniform(0.5, 3), u / np.linalg.norm(u))])
    return GramPlusRidgeModel(rng.standard_normal((d + 3, d)), rng.uniform(0, 0.5))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(2, 30))
def test_model_properties(seed, d):
    m = _random_model(seed, d)
    rng = np.random.default_rng(seed + 1)
    v, w = rng.standard_normal(d), rng.standard_normal(d)
    lhs, rhs = v @ m.matvec(w), w @ m.matvec(v)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    assert quad_form(m, v) >= -1e-12 * (v @ v)
    eig = np.linalg.eigvalsh(m.materialize())[-1]
    assert m.L == pytest.approx(eig, rel=1e-8)
    re, dr = effective_rank(m), diag_ratio(m)
    assert 1 - 1e-10 <= re <= d * (1 + 1e-10)
    assert 1 / d - 1e-10 <= dr <= 1 + 1e-10
    assert dr >= re / d - 1e-10
