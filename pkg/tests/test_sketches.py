import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsnag.problems import quadratic_instance
from rsnag.sketches import (
    Family,
    SketchDistribution,
    beta,
    constants,
    ell,
    enumerate_coordinate_moment,
    exact_interaction_moment,
    omega,
    optimal_r,
    oracle_factor,
    q_at_one,
    sample,
    sample_many,
)
from rsnag.smoothness import DenseModel, DiagonalModel

RANDOM = [Family.HAAR, Family.COORDINATE, Family.GAUSSIAN]


def _rank_one(d):
    e1 = np.zeros(d)
    e1[0] = 1.0
    return DenseModel(np.outer(e1, e1))


def test_distribution_validation():
    with pytest.raises(ValueError, match="d must be >= 2"):
        SketchDistribution(Family.HAAR, 1, 1)
    with pytest.raises(ValueError, match="r = d"):
        SketchDistribution(Family.IDENTITY, 5, 2)
    with pytest.raises(ValueError):
        SketchDistribution(Family.GAUSSIAN, 5, 6)
    with pytest.raises(ValueError):
        SketchDistribution(Family.COORDINATE, 5, 0)


def test_sample_requires_generator():
    with pytest.raises(TypeError):
        sample(SketchDistribution(Family.HAAR, 4, 2), 123)


def test_identity_sample():
    P = sample(SketchDistribution.identity(5), np.random.default_rng(0))
    np.testing.assert_array_equal(P, np.eye(5))


def test_haar_full_rank_is_orthogonal():
    P = sample(SketchDistribution(Family.HAAR, 6, 6), np.random.default_rng(1))
    np.testing.assert_allclose(P @ P.T, np.eye(6), atol=1e-12)


@pytest.mark.parametrize("family", [Family.HAAR, Family.COORDINATE])
@pytest.mark.parametrize("d,r", [(7, 1), (7, 3), (12, 12)])
def test_orthogonal_families_have_scaled_orthonormal_columns(family, d, r):
    Ps = sample_many(SketchDistribution(family, d, r), np.random.default_rng(2), 50)
    for P in Ps:
        np.testing.assert_allclose(P.T @ P, (d / r) * np.eye(r), atol=1e-12)
        PPt = P @ P.T
        np.testing.assert_allclose(PPt @ PPt, (d / r) * PPt, atol=1e-11)


def test_coordinate_structure():
    d, r = 9, 4
    for P in sample_many(SketchDistribution(Family.COORDINATE, d, r), np.random.default_rng(3), 100):
        nz = np.nonzero(P)
        assert len(nz[0]) == r
        assert sorted(nz[1]) == list(range(r))
        assert len(set(nz[0])) == r
        np.testing.assert_allclose(P[nz], math.sqrt(d / r))


def test_coordinate_frequencies_uniform():
    Ps = sample_many(SketchDistribution(Family.COORDINATE, 3, 1), np.random.default_rng(4), 30_000)
    freq = (Ps[:, :, 0] != 0).mean(axis=0)
    np.testing.assert_allclose(freq, 1 / 3, atol=0.02)


def test_sampling_is_reproducible():
    dist = SketchDistribution(Family.HAAR, 8, 3)
    a = sample(dist, np.random.default_rng(9))
    b = sample(dist, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_haar_rank_one_matches_qr_sampler():
    # the r = 1 shortcut must have the same law as sign-corrected QR
    dist = SketchDistribution(Family.HAAR, 5, 1)
    G = np.random.default_rng(11).standard_normal((1, 5, 1))
    Q, R = np.linalg.qr(G)
    expected = Q[0] * np.sign(R[0, 0, 0]) * math.sqrt(5)
    np.testing.assert_allclose(sample(dist, np.random.default_rng(11)), expected, atol=1e-14)


def test_omega_values():
    assert omega(SketchDistribution(Family.HAAR, 1000, 1)) == 1000
    assert omega(SketchDistribution(Family.GAUSSIAN, 2, 1)) == 4
    assert omega(SketchDistribution(Family.COORDINATE, 6, 6)) == 1
    assert omega(SketchDistribution.identity(6)) == 1


def test_ell_values():
    assert ell(SketchDistribution(Family.HAAR, 6, 6), DenseModel(np.diag([3.0, 2, 1, 1, 1, 1]))) == pytest.approx(1.0)
    assert ell(SketchDistribution(Family.COORDINATE, 3, 1), DenseModel(np.diag([3.0, 2.0, 1.0]))) == pytest.approx(3.0)
    assert ell(SketchDistribution(Family.GAUSSIAN, 5, 1), _rank_one(5)) == pytest.approx(3.0)
    assert ell(SketchDistribution.identity(5), _rank_one(5)) == 1.0


def test_beta_only_for_haar():
    assert beta(SketchDistribution(Family.HAAR, 10, 3)) == pytest.approx(10 * 7 / (12 * 9))
    assert beta(SketchDistribution(Family.GAUSSIAN, 10, 3)) is None


def test_ell_checked_against_moment():
    # ell L is the top eigenvalue of E[P P^T Lam P P^T] for diagonal-dominated Lam
    m = DenseModel(np.diag([3.0, 2.0, 1.0]))
    top = np.linalg.eigvalsh(exact_interaction_moment(SketchDistribution(Family.COORDINATE, 3, 1), m))[-1]
    assert top == pytest.approx(ell(SketchDistribution(Family.COORDINATE, 3, 1), m) * m.L)


def test_oracle_factor_values():
    sc = quadratic_instance("SCDense", 1000).smoothness
    assert oracle_factor(SketchDistribution.identity(1000), sc) == 1000
    haar = oracle_factor(SketchDistribution(Family.HAAR, 1000, 1), sc)
    assert haar == pytest.approx(1000 * math.sqrt(4 / 1002), rel=1e-10)
    assert haar == pytest.approx(63.182, abs=5e-4)
    diag = quadratic_instance("SCDiag", 40).smoothness
    assert oracle_factor(SketchDistribution(Family.COORDINATE, 40, 1), diag) == pytest.approx(40)


def test_constants_bundle():
    c = constants(SketchDistribution(Family.GAUSSIAN, 10, 2), _rank_one(10))
    assert c.omega == pytest.approx(13 / 2)
    assert c.ell == pytest.approx(4 / 2)
    assert c.beta is None
    assert c.oracle_factor == pytest.approx(math.sqrt(13 / 2 * 2) * 2)


def test_q_rank_one_relation():
    d = 30
    m = _rank_one(d)
    assert q_at_one(Family.COORDINATE, d, m) == pytest.approx(d)
    assert q_at_one(Family.HAAR, d, m) == pytest.approx(math.sqrt(3 / (d + 2)) * d, rel=1e-12)


def test_q_colon_cancer_row():
    # a model with L = 1 and trace 6.7435 at d = 2000
    d, reff = 2000, 6.7435
    diag = np.full(d, (reff - 1.0) / (d - 1))
    diag[0] = 1.0
    assert q_at_one(Family.HAAR, d, DiagonalModel(diag)) == pytest.approx(132.1725, abs=5e-4)


def test_optimal_r_examples():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((12, 12))
    m = DenseModel(B @ B.T)
    assert optimal_r(Family.GAUSSIAN, 12, m) == 1
    assert optimal_r(Family.COORDINATE, 20, quadratic_instance("SCDiag", 20).smoothness) == 1
    assert optimal_r(Family.HAAR, 10, DenseModel(np.eye(10))) == 1
    assert optimal_r(Family.IDENTITY, 10, m) == 10


def test_coordinate_factor_constant_in_r_for_unit_diag_ratio():
    m = quadratic_instance("SCDiag", 25).smoothness
    facs = [oracle_factor(SketchDistribution(Family.COORDINATE, 25, r), m) for r in range(1, 26)]
    np.testing.assert_allclose(facs, 25.0, rtol=1e-12)


def test_exact_moment_examples():
    m = DenseModel(np.diag([3.0, 2.0, 1.0]))
    # each single-column sketch sqrt(3) e_i gives 9 Lam_ii e_i e_i^T; average over i
    by_hand = np.diag([9.0, 6.0, 3.0])
    got = exact_interaction_moment(SketchDistribution(Family.COORDINATE, 3, 1), m)
    np.testing.assert_allclose(got, by_hand, atol=1e-14)
    np.testing.assert_allclose(enumerate_coordinate_moment(3, 1, m.materialize()), by_hand, atol=1e-14)
    np.testing.assert_allclose(exact_interaction_moment(SketchDistribution(Family.HAAR, 3, 3), m), m.materialize())
    g = exact_interaction_moment(SketchDistribution(Family.GAUSSIAN, 2, 1), DenseModel(np.eye(2)))
    np.testing.assert_allclose(g, 4 * np.eye(2))


def test_exact_moment_guard():
    with pytest.raises(ValueError, match="materialize"):
        exact_interaction_moment(SketchDistribution(Family.HAAR, 201, 1), DiagonalModel(np.ones(201)))


@pytest.mark.parametrize("d,r", [(4, 2), (6, 3), (8, 1), (8, 5)])
def test_coordinate_enumeration_matches_closed_form(d, r):
    rng = np.random.default_rng(d * 10 + r)
    B = rng.standard_normal((d, d))
    m = DenseModel(B @ B.T)
    np.testing.assert_allclose(
        enumerate_coordinate_moment(d, r, m.materialize()),
        exact_interaction_moment(SketchDistribution(Family.COORDINATE, d, r), m),
        atol=1e-12,
        rtol=0,
    )


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(2, 40), data=st.data())
def test_constant_ordering(seed, d, data):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((d, rng.integers(1, d + 1)))
    m = DenseModel(B @ B.T)
    r = data.draw(st.integers(1, d))
    for fam in RANDOM:
        dist = SketchDistribution(fam, d, r)
        om, el = omega(dist), ell(dist, m)
        assert om >= d / r * (1 - 1e-12)
        assert 1 - 1e-12 <= el <= om * (1 + 1e-12)
        assert om * el >= 1 - 1e-12
    qh, qc, qg = (q_at_one(f, d, m) for f in RANDOM)
    assert qg == pytest.approx((1 + 2 / d) * qh, rel=1e-12)
    assert qh <= math.sqrt(3) * qc + 1e-12
    assert math.sqrt(d) * (1 - 1e-12) <= qc <= d * (1 + 1e-12)
