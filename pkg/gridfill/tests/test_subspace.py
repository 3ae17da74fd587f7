import os
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from ..subspace import *
from ..subspace import _tangent_basis
from ..utils import *
from ..sampling import generate_toy_instance, generate_tuned_constraints, uniform_entries

DATADIR = os.path.join(os.path.dirname(__file__), 'data')


def random_T(n1=20, n2=8, r=2, seed=0):
    M = generate_toy_instance(n1, n2, r, seed)
    return M, SubspaceT(truncated_svd(M, r=r))


def test_svd_signs():
    """Is the largest entry of every left vector positive, and does it reconstruct M?"""
    M = -generate_toy_instance(12, 5, 3, seed=4)
    factors = truncated_svd(M, r=3)
    for k in range(3):
        u = factors.left_vectors[:, k]
        assert(u[np.argmax(np.abs(u))] > 0)
    assert_allclose(factors.reconstruct(), M, atol=1e-10)
    again = truncated_svd(M, r=3)
    assert(np.array_equal(again.left_vectors, factors.left_vectors))


def test_svd_rank_errors():
    M = generate_toy_instance(6, 4, 2, seed=1)
    for r in (0, 5, 3):
        with pytest.raises(InvalidRankError):
            truncated_svd(M, r=r)
    with pytest.raises(InvalidRankError):
        truncated_svd(np.zeros((3, 3)))
    with pytest.raises(InvalidInputError):
        truncated_svd(np.array([[1.0, np.nan], [0.0, 1.0]]))
    assert(truncated_svd(M).rank == 2)


def test_svd_known_factors():
    factors = truncated_svd(np.diag([3.0, 1.0]), r=2)
    assert_allclose(factors.singular_values, [3.0, 1.0])
    assert_allclose(factors.left_vectors, np.eye(2), atol=1e-12)
    assert_allclose(factors.right_vectors, np.eye(2), atol=1e-12)

    M = np.outer([1.0, 2.0], [1.0, 1.0])
    factors = truncated_svd(M, r=1)
    assert_almost_equal(factors.singular_values[0], np.sqrt(10))
    assert_allclose(factors.reconstruct(), M, atol=1e-12)


def test_svd_matches_eigendecomposition():
    M = np.random.default_rng(9).normal(size=(6, 4))
    factors = truncated_svd(M, r=4)
    eigenvalues = np.linalg.eigvalsh(M.T @ M)[::-1]
    assert_allclose(factors.singular_values ** 2, eigenvalues, rtol=1e-10)
    assert_allclose(factors.reconstruct(), M, atol=1e-10)


@pytest.mark.parametrize('seed', range(10))
def test_trace_identity(seed):
    """Does sum_ij ||P_T(e_i e_j^T)||^2 equal r(n1 + n2 - r)?"""
    r = 1 + seed % 3
    _, T = random_T(20, 8, r, seed)
    basis = np.eye(160).reshape(160, 20, 8)
    total = np.sum(T.project(basis) ** 2)
    assert_allclose(total, r * (28 - r), rtol=1e-8)
    assert(T.dim_T == degrees_of_freedom(20, 8, r))


def test_projectors():
    M, T = random_T(10, 7, 2, seed=3)
    X = np.random.default_rng(0).normal(size=(10, 7))
    assert_allclose(T.project(T.project(X)), T.project(X), atol=1e-12)
    assert_allclose(T.project(X) + T.project_perp(X), X, atol=1e-12)
    assert_allclose(T.project(M), M, atol=1e-10)
    assert_almost_equal(np.sum(T.project(X) * T.project_perp(X)), 0.0)
    with pytest.raises(DimensionMismatchError):
        T.project(np.zeros((7, 10)))


def test_mu_coherence():
    assert_almost_equal(mu_coherence(np.ones(5) / np.sqrt(5)), 1.0)
    assert_almost_equal(mu_coherence(np.eye(4)[:, :1]), 4.0)
    with pytest.raises(InvalidBasisError):
        mu_coherence(np.ones((4, 1)))


def test_nu0_flat():
    factors = truncated_svd(np.ones((2, 3)))
    assert(factors.rank == 1)
    assert_almost_equal(nu0(factors), 1.0)


def test_nu0_spiky():
    M = np.zeros((4, 4))
    M[0, 0] = 1.0
    assert_almost_equal(nu0(truncated_svd(M, r=1)), 4.0)

    M = generate_toy_instance(7, 5, 2, seed=3)
    U, s, Vt = np.linalg.svd(M)
    E = U[:, :2] @ Vt[:2]
    scan = max(abs(E[i, j]) for i in range(7) for j in range(5))
    assert_allclose(nu0(truncated_svd(M, r=2)), scan / np.sqrt(2 / 35), rtol=1e-10)


def test_orthonormalize_rank():
    rng = np.random.default_rng(4)
    constraints = [(rng.normal(size=(4, 3)), 0.0) for _ in range(5)]
    constraints += [(constraints[0][0] - constraints[3][0], 0.0),
                    (2 * constraints[1][0] + constraints[2][0], 0.0)]
    Q = orthonormalize_constraints(constraints)
    stack = np.array([A.ravel() for A, _ in constraints])
    assert(Q.effective_dim == np.linalg.matrix_rank(stack) == 5)
    assert(Q.drop_log == [5, 6])


def test_orthonormalize_drops_dependent():
    A = np.arange(6.0).reshape(2, 3)
    B = np.eye(2, 3)
    Q = orthonormalize_constraints([(A, 1.0), (2 * A, 2.0), (B, 0.0), (A + B, 1.0)])
    assert(Q.effective_dim == 2)
    assert(Q.drop_log == [1, 3])
    assert_allclose(Q.vectors @ Q.vectors.T, np.eye(2), atol=1e-12)
    empty = orthonormalize_constraints([])
    assert(empty.effective_dim == 0)
    assert_allclose(empty.project(A), 0.0)


def test_metric_extremes():
    """Constraints spanning T cover everything; constraints in T-perp cover nothing."""
    M, T = random_T(20, 8, 2, seed=7)
    factors = T.factors
    spanning = orthonormalize_constraints(generate_tuned_constraints(M, 2, mix=1.0, seed=1),
                                          shape=M.shape)
    assert(mu_Q_perp(T, spanning) <= 1e-9)
    assert(nu_Q_perp(factors, spanning) <= 1e-9)

    perp = orthonormalize_constraints(generate_tuned_constraints(M, 2, count=20, mix=0.0),
                                      shape=M.shape)
    assert_allclose(mu_Q_perp(T, perp), 1.0, atol=1e-9)
    assert_allclose(nu_Q_perp(factors, perp), 1.0, atol=1e-9)

    none = orthonormalize_constraints([], shape=M.shape)
    assert_almost_equal(mu_Q_perp(T, none), 1.0)


def test_mu_methods_agree():
    M, T = random_T(9, 6, 2, seed=2)
    Q = orthonormalize_constraints(generate_tuned_constraints(M, 2, count=8, mix=0.5, seed=3),
                                   shape=M.shape)
    loop = mu_Q_perp(T, Q, method='loop')
    assert_allclose(mu_Q_perp(T, Q, method='blocked', block_size=7), loop, atol=1e-10)
    assert_allclose(mu_Q_perp(T, Q, method='trace'), loop, atol=1e-10)
    assert(0 < loop < 1)
    with pytest.raises(ValueError):
        mu_Q_perp(T, Q, method='sideways')


def test_nu_Q_perp_parseval():
    M, T = random_T(9, 6, 2, seed=4)
    Q = orthonormalize_constraints(generate_tuned_constraints(M, 2, count=6, mix=0.5, seed=5),
                                   shape=M.shape)
    E = T.factors.sign_matrix.ravel()
    expected = 1 - np.sum((Q.vectors @ E) ** 2) / 2
    assert_allclose(nu_Q_perp(T.factors, Q), expected, atol=1e-12)


def test_tangent_basis():
    _, T = random_T(8, 5, 2, seed=5)
    B = _tangent_basis(T)
    assert(B.shape == (40, T.dim_T))
    assert_allclose(B.T @ B, np.eye(T.dim_T), atol=1e-10)
    stack = B.T.reshape(-1, 8, 5)
    assert_allclose(T.project(stack), stack, atol=1e-10)


def test_certificate_full_observation():
    """With every entry observed the certificate is E itself."""
    _, T = random_T(8, 5, 2, seed=6)
    mask = np.ones((8, 5), dtype=bool)
    certificate = dual_certificate(T, mask)
    Y, spectral, residual = certificate
    assert_allclose(Y, T.factors.sign_matrix, atol=1e-10)
    assert(certificate.passes)
    assert(certificate.sampling_injective)
    assert(spectral < 1e-8)


def dense_certificate(T, mask):
    """Y from the full n1 n2 x n1 n2 operators, inverted on T by eigendecomposition."""
    n1, n2 = T.shape
    P_T = (np.kron(T.P_U, np.eye(n2)) + np.kron(np.eye(n1), T.P_V)
           - np.kron(T.P_U, T.P_V))
    P_omega = np.diag(mask.ravel().astype(float))
    w, V = np.linalg.eigh(P_T @ P_omega @ P_T)
    keep = w > 1e-10 * w.max()
    inverse = (V[:, keep] / w[keep]) @ V[:, keep].T
    return (P_omega @ P_T @ inverse @ T.factors.sign_matrix.ravel()).reshape(n1, n2)


def test_certificate_dense_oracle():
    M, T = random_T(10, 6, 2, seed=11)
    for seed in range(10):
        omega = uniform_entries(M.shape, 40, seed)
        try:
            certificate = dual_certificate(T, omega)
        except NotInvertibleError:
            continue
        Y = dense_certificate(T, omega.mask())
        assert_allclose(certificate.Y, Y, atol=1e-8)
        assert_allclose(certificate.spectral_norm_T_perp,
                        np.linalg.norm(T.project_perp(Y), 2), atol=1e-8)
        break
    else:
        pytest.fail('No invertible sample among ten seeds.')


def test_certificate_not_invertible():
    _, T = random_T(8, 5, 2, seed=6)
    with pytest.raises(NotInvertibleError):
        dual_certificate(T, [(0, 0), (1, 1)])
    assert(not sampling_injective(T, [(0, 0), (1, 1)]))
    with pytest.raises(ValueError):
        dual_certificate(T, [(0, 0)], q=-1.0)


def test_certificate_with_constraints():
    """Constraints spanning T make the operator invertible without samples."""
    M, T = random_T(8, 5, 2, seed=8)
    Q = orthonormalize_constraints(generate_tuned_constraints(M, 2, mix=1.0), shape=M.shape)
    certificate = dual_certificate(T, [], Q=Q, q=1.0)
    assert(certificate.pt_residual < 1e-8)
    assert(not certificate.sampling_injective)


def test_theorem_bounds():
    bounds = theorem1_bounds(40, 10, 2, 1.5, 1.2, 0.0, 0.0, beta=2, q=1.0)
    assert(bounds.illustrative)
    assert(set(bounds.values) == set('abcdef'))
    assert(bounds.binding == max(bounds.values.values()))
    assert(bounds.satisfied(bounds.binding + 1))
    assert(not bounds.satisfied(0))
    assert_almost_equal(bounds.values['f'], 2 * 40 * np.log(40))
    assert(not theorem1_bounds(40, 10, 2, 1.5, 1.2, 0, 0, 2, 1.0, C_R=2, C_K=3).illustrative)
    with pytest.raises(ValueError):
        theorem1_bounds(40, 10, 2, 1.5, 1.2, 0, 0, beta=0.5, q=1.0)
    with pytest.raises(ValueError):
        theorem1_bounds(40, 10, 2, 1.5, 1.2, 0, 0, beta=2, q=0.0)


def test_corollaries():
    passes, margins = corollary1_check(1.0, 2, 40, 10, 0.0, 0.0)
    assert(passes)
    assert_almost_equal(margins['nu_threshold'], 1 / 32)
    assert(not corollary1_check(1.0, 2, 40, 10, 0.0, 1.0)[0])
    low = corollary2_bound(40, 10, 2, 1.5, 1.2, beta=1)
    high = corollary2_bound(40, 10, 2, 1.5, 1.2, beta=4)
    assert(high > low >= 2 * 40 * np.log(40))


def test_scree():
    s = scree(np.diag([3.0, 1.0]))
    assert_allclose(s.normalized, [0.75, 0.25])
    assert_allclose(s.cumulative, [0.75, 1.0])
    with pytest.raises(UndefinedMetricError):
        scree(np.zeros((3, 2)))
    assert_almost_equal(nuclear_norm(np.diag([3.0, -1.0])), 4.0)


def test_coherence_report():
    M = read_matrix(os.path.join(DATADIR, 'rank1.csv'))
    report = coherence_report(M)
    assert(report.r == 1)
    assert_almost_equal(report.mu0, 1.0)
    assert_almost_equal(report.nu0, 1.0)
    assert_almost_equal(report.mu_Q_perp, 1.0)
    assert(report.to_dict()['dim_T'] == 4)

    constraints = generate_tuned_constraints(M, 1, mix=1.0)
    with pytest.warns(GridfillWarning):
        covered = coherence_report(M, constraints + constraints[:1])
    assert(covered.mu_Q_perp <= 1e-9)
    assert(covered.effective_constraints == 4)
