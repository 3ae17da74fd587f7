import numpy as np
import warnings
from collections import namedtuple
from scipy import linalg

from .utils import *

__all__ = ['SVDFactors', 'SubspaceT', 'ConstraintSpaceQ', 'CoherenceReport',
           'DualCertificate', 'TheoremBounds', 'Scree',
           'truncated_svd', 'project_T', 'project_T_perp', 'project_Q', 'project_Q_perp',
           'orthonormalize_constraints', 'mu_coherence', 'nu0', 'mu_Q_perp', 'nu_Q_perp',
           'degrees_of_freedom', 'dual_certificate', 'sampling_injective',
           'theorem1_bounds', 'corollary1_check', 'corollary2_bound',
           'scree', 'nuclear_norm', 'coherence_report']

# Values outside [-METRIC_WINDOW, 1 + METRIC_WINDOW] point at a broken basis.
METRIC_WINDOW = 1e-9
CONDITION_LIMIT = 1e12


def _as_finite_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError('Expected a 2-D matrix, got {} dimensions.'.format(M.ndim))
    if not np.all(np.isfinite(M)):
        raise InvalidInputError('Matrix contains non-finite entries.')
    return M


def _svd(M, full_matrices=False):
    """scipy SVD, retrying with the slower gesvd driver if gesdd fails."""
    try:
        return linalg.svd(M, full_matrices=full_matrices, lapack_driver='gesdd')
    except linalg.LinAlgError:
        return linalg.svd(M, full_matrices=full_matrices, lapack_driver='gesvd')


class SVDFactors(object):
    """
    Rank-r factors of a matrix, M = sum_k sigma_k u_k v_k^T.

    Parameters
    ----------
    left_vectors : np.ndarray
        (n1, r) orthonormal columns.
    right_vectors : np.ndarray
        (n2, r) orthonormal columns.
    singular_values : np.ndarray
        Length-r, positive, non-increasing.
    rank_tolerance : float, optional
        Relative cutoff used when the factors were truncated.

    Attributes
    ----------
    rank : int
    shape : tuple
        (n1, n2) of the factored matrix.
    """
    def __init__(self, left_vectors, right_vectors, singular_values, rank_tolerance=1e-8):
        self.left_vectors = np.asarray(left_vectors, dtype=float)
        self.right_vectors = np.asarray(right_vectors, dtype=float)
        self.singular_values = np.asarray(singular_values, dtype=float)
        self.rank_tolerance = rank_tolerance

        if self.left_vectors.shape[1] != self.right_vectors.shape[1] or \
           self.left_vectors.shape[1] != len(self.singular_values):
            raise DimensionMismatchError('Factor ranks do not agree.')

    @property
    def rank(self):
        return len(self.singular_values)

    @property
    def shape(self):
        return (self.left_vectors.shape[0], self.right_vectors.shape[0])

    @property
    def sign_matrix(self):
        """E = sum_k u_k v_k^T."""
        return self.left_vectors @ self.right_vectors.T

    def reconstruct(self):
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def truncated_svd(M, r=None, rank_tolerance=1e-8):
    """
    Truncated singular value decomposition with a fixed sign convention.

    The largest-magnitude entry of every left vector is made positive
    (ties go to the lowest row), so identical input always gives identical
    factors.

    Parameters
    ----------
    M : array-like
        (n1, n2) finite real matrix.
    r : int, optional
        Target rank. If not set, keeps every singular value at least
        `rank_tolerance` times the largest one.
    rank_tolerance : float, optional
        Relative cutoff for the numerical rank. Default 1e-8.

    Returns
    -------
    factors : gridfill.SVDFactors
    """
    M = _as_finite_matrix(M)
    n1, n2 = M.shape
    if r is not None and not (1 <= r <= min(n1, n2)):
        raise InvalidRankError('Rank {} is outside [1, {}].'.format(r, min(n1, n2)))

    U, s, Vt = _svd(M)
    if s.size == 0 or s[0] == 0:
        raise InvalidRankError('The zero matrix has no rank-r factors.')
    numerical_rank = int(np.sum(s >= rank_tolerance * s[0]))
    if r is None:
        r = numerical_rank
    elif r > numerical_rank:
        raise InvalidRankError('Rank {} exceeds the numerical rank {} of the matrix.'
                               ''.format(r, numerical_rank))

    U = U[:, :r].copy()
    V = Vt[:r].T.copy()
    for k in range(r):
        lead = np.argmax(np.abs(U[:, k]))
        if U[lead, k] < 0:
            U[:, k] *= -1
            V[:, k] *= -1
    return SVDFactors(U, V, s[:r].copy(), rank_tolerance=rank_tolerance)


class SubspaceT(object):
    """
    The space of matrices sharing a column space or a row space with M.

    Parameters
    ----------
    factors : gridfill.SVDFactors

    Attributes
    ----------
    P_U : np.ndarray
        (n1, n1) projector onto the column space.
    P_V : np.ndarray
        (n2, n2) projector onto the row space.
    dim_T : int
        r(n1 + n2 - r).
    """
    def __init__(self, factors):
        self.factors = factors
        self.U = factors.left_vectors
        self.V = factors.right_vectors
        self.P_U = self.U @ self.U.T
        self.P_V = self.V @ self.V.T
        self.rank = factors.rank
        self.shape = factors.shape
        self.dim_T = degrees_of_freedom(self.shape[0], self.shape[1], self.rank)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-2:] != self.shape:
            raise DimensionMismatchError('Matrix of shape {} does not match T of shape {}.'
                                         ''.format(X.shape, self.shape))
        return X

    def project(self, X):
        """P_U X + X P_V - P_U X P_V. Works on stacks of matrices as well."""
        X = self._check(X)
        UX = self.P_U @ X
        return UX + X @ self.P_V - UX @ self.P_V

    def project_perp(self, X):
        """(I - P_U) X (I - P_V)."""
        X = self._check(X)
        left = X - self.P_U @ X
        return left - left @ self.P_V


def project_T(X, T):
    return T.project(X)


def project_T_perp(X, T):
    return T.project_perp(X)


class ConstraintSpaceQ(object):
    """
    Orthonormal basis for the span of the constraint matrices.

    Parameters
    ----------
    basis : np.ndarray
        (k, n1*n2) rows holding row-major vectorized basis matrices.
    shape : tuple or None
        (n1, n2). May be None only when `basis` is empty.
    drop_log : list of int, optional
        Indices of the constraints discarded as dependent.

    Attributes
    ----------
    effective_dim : int
        Number of basis matrices kept.
    orthonormal_basis : list of np.ndarray
        The basis as (n1, n2) matrices.
    """
    def __init__(self, basis, shape, drop_log=None):
        self.shape = None if shape is None else tuple(shape)
        if self.shape is None:
            self.vectors = np.zeros((0, 0))
        else:
            self.vectors = np.asarray(basis, dtype=float).reshape(-1, self.shape[0] * self.shape[1])
        self.drop_log = list(drop_log or [])

    @property
    def effective_dim(self):
        return self.vectors.shape[0]

    @property
    def orthonormal_basis(self):
        return [row.reshape(self.shape) for row in self.vectors]

    def project(self, X):
        X = np.asarray(X, dtype=float)
        if self.effective_dim == 0:
            return np.zeros_like(X)
        if X.shape[-2:] != self.shape:
            raise DimensionMismatchError('Matrix of shape {} does not match Q of shape {}.'
                                         ''.format(X.shape, self.shape))
        flat = X.reshape(X.shape[:-2] + (-1,))
        return ((flat @ self.vectors.T) @ self.vectors).reshape(X.shape)

    def project_perp(self, X):
        X = np.asarray(X, dtype=float)
        return X - self.project(X)


def project_Q(X, Q):
    return Q.project(X)


def project_Q_perp(X, Q):
    return Q.project_perp(X)


def _constraint_matrix_of(item):
    # Accept bare matrices as well as (A, b) pairs.
    if isinstance(item, tuple):
        return item[0]
    return item


def orthonormalize_constraints(constraints, shape=None, drop_tolerance=1e-10):
    """
    Orthonormalizes vectorized constraint matrices by modified Gram-Schmidt.

    Each vector is orthogonalized twice against the running basis. A
    constraint whose residual falls below `drop_tolerance` times its own
    norm is dropped and its index recorded in `drop_log`.

    Parameters
    ----------
    constraints : list
        (A, b) pairs or bare matrices, dense or scipy.sparse.
    shape : tuple, optional
        (n1, n2). Taken from the first constraint if not set.
    drop_tolerance : float, optional

    Returns
    -------
    Q : gridfill.ConstraintSpaceQ
    """
    matrices = [_constraint_matrix_of(c) for c in constraints]
    if shape is None:
        if len(matrices) == 0:
            return ConstraintSpaceQ(np.zeros((0, 0)), None)
        shape = matrices[0].shape
    shape = tuple(shape)
    N = shape[0] * shape[1]

    C, _ = constraint_matrix([(A, 0.0) for A in matrices], shape)
    basis = np.zeros((min(len(matrices), N), N))
    k, dropped = 0, []
    for l in range(len(matrices)):
        a = C.getrow(l).toarray().ravel()
        norm = np.linalg.norm(a)
        if norm == 0 or k == N:
            dropped.append(l)
            continue
        w = a.copy()
        for _ in range(2):
            w -= basis[:k].T @ (basis[:k] @ w)
        residual = np.linalg.norm(w)
        if residual < drop_tolerance * norm:
            dropped.append(l)
            continue
        basis[k] = w / residual
        k += 1
    return ConstraintSpaceQ(basis[:k], shape, drop_log=dropped)


def mu_coherence(basis):
    """
    Coherence (n/r) max_i ||P e_i||^2 of the column span of `basis`.

    Parameters
    ----------
    basis : np.ndarray
        (n, r) matrix with orthonormal columns.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    n, r = basis.shape
    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(r))) > 1e-8:
        raise InvalidBasisError('Basis columns are not orthonormal.')
    leverage = np.sum(basis ** 2, axis=1)
    return (n / r) * np.max(leverage)


def nu0(factors):
    """Smallest bound on max |E_ij| in units of sqrt(r / (n1 n2))."""
    n1, n2 = factors.shape
    E = factors.sign_matrix
    return np.max(np.abs(E)) / np.sqrt(factors.rank / (n1 * n2))


def _in_window(value, name):
    if value < -METRIC_WINDOW or value > 1 + METRIC_WINDOW:
        raise NumericalDegeneracyError('{} = {} lies outside [0, 1].'.format(name, value))
    return float(min(max(value, 0.0), 1.0))


def _basis_block(indices, shape):
    block = np.zeros((len(indices), shape[0] * shape[1]))
    block[np.arange(len(indices)), indices] = 1.0
    return block


def mu_Q_perp(T, Q, method='blocked', block_size=256):
    """
    Fraction of T that the constraint space leaves uncovered.

    sum_ij ||P_T P_Q_perp(e_i e_j^T)||^2 / sum_ij ||P_T(e_i e_j^T)||^2

    Parameters
    ----------
    T : gridfill.SubspaceT
    Q : gridfill.ConstraintSpaceQ
    method : str, optional
        `loop` evaluates one basis matrix at a time. `blocked` evaluates
        `block_size` basis matrices at once and agrees with `loop`.
        `trace` uses 1 - sum_k ||P_T(Q_k)||^2 / dim T, which is exact for
        orthogonal projectors and far cheaper on large state matrices.
    """
    n1, n2 = T.shape
    if T.dim_T == 0:
        raise UndefinedMetricError('T is zero-dimensional.')
    if Q.effective_dim > 0 and Q.shape != T.shape:
        raise DimensionMismatchError('Q of shape {} does not match T of shape {}.'
                                     ''.format(Q.shape, T.shape))

    # ||P_T(e_i e_j^T)||^2 = (P_U)_ii + (P_V)_jj - (P_U)_ii (P_V)_jj
    du, dv = np.diag(T.P_U), np.diag(T.P_V)
    denominator = np.sum(du[:, None] + dv[None, :] - du[:, None] * dv[None, :])
    if abs(denominator - T.dim_T) > 1e-8 * T.dim_T:
        raise NumericalDegeneracyError('Trace of P_T is {}, expected {}.'
                                       ''.format(denominator, T.dim_T))

    if method == 'trace':
        if Q.effective_dim == 0:
            covered = 0.0
        else:
            stack = Q.vectors.reshape(-1, n1, n2)
            covered = np.sum(T.project(stack) ** 2)
        numerator = T.dim_T - covered
    elif method == 'loop':
        numerator = 0.0
        for i in range(n1):
            for j in range(n2):
                Eij = np.zeros((n1, n2))
                Eij[i, j] = 1.0
                numerator += np.sum(T.project(Q.project_perp(Eij)) ** 2)
    elif method == 'blocked':
        numerator = 0.0
        for start in range(0, n1 * n2, block_size):
            idx = np.arange(start, min(start + block_size, n1 * n2))
            block = _basis_block(idx, (n1, n2))
            if Q.effective_dim > 0:
                block -= Q.vectors[:, idx].T @ Q.vectors
            numerator += np.sum(T.project(block.reshape(-1, n1, n2)) ** 2)
    else:
        raise ValueError("method must be one of 'loop', 'blocked', 'trace'")

    return _in_window(numerator / denominator, 'mu_Q_perp')


def nu_Q_perp(factors, Q):
    """(1/r) ||P_Q_perp(E)||_F^2 with E = sum_k u_k v_k^T."""
    E = factors.sign_matrix
    value = np.sum(Q.project_perp(E) ** 2) / factors.rank
    return _in_window(value, 'nu_Q_perp')


def degrees_of_freedom(n1, n2, r):
    """Dimension r(n1 + n2 - r) of the rank-r tangent space."""
    if not (1 <= r <= min(n1, n2)):
        raise InvalidRankError('Rank {} is outside [1, {}].'.format(r, min(n1, n2)))
    return int(r * (n1 + n2 - r))


def _tangent_basis(T):
    """Orthonormal (n1*n2, dim T) coordinates of T in row-major vec order.

    QR with column pivoting over {u_k e_j^T} and {(I - P_U) e_i v_k^T}.
    """
    n1, n2 = T.shape
    U, V = T.U, T.V
    family = [np.kron(U[:, k][:, None], np.eye(n2)) for k in range(T.rank)]
    complement = np.eye(n1) - T.P_U
    family += [np.kron(complement, V[:, k][:, None]) for k in range(T.rank)]
    F = np.hstack(family)
    Qf, R, _ = linalg.qr(F, mode='economic', pivoting=True)
    return Qf[:, :T.dim_T]


class DualCertificate(object):
    """
    Candidate dual certificate Y for the constrained completion problem.

    Attributes
    ----------
    Y : np.ndarray
        (n1, n2) certificate.
    spectral_norm_T_perp : float
        ||P_T_perp(Y)|| (operator 2-norm).
    pt_residual : float
        ||P_T(Y) - E||_F.
    condition_number : float
        Condition number of the restricted operator on T.
    sampling_injective : bool
        Whether the sampling operator alone is injective on T.
    """
    def __init__(self, Y, spectral_norm_T_perp, pt_residual, condition_number,
                 sampling_injective):
        self.Y = Y
        self.spectral_norm_T_perp = spectral_norm_T_perp
        self.pt_residual = pt_residual
        self.condition_number = condition_number
        self.sampling_injective = sampling_injective

    @property
    def passes(self):
        return self.pt_residual <= 1e-8 and self.spectral_norm_T_perp < 1

    def __iter__(self):
        return iter((self.Y, self.spectral_norm_T_perp, self.pt_residual))


def _restricted_sampling(B, mask):
    rows = B[mask.ravel()]
    return rows.T @ rows


def sampling_injective(T, omega, tolerance=1e-10):
    """True if P_Omega restricted to T has full rank dim T."""
    mask = observation_mask(omega, T.shape)
    B = _tangent_basis(T)
    eigenvalues = linalg.eigvalsh(_restricted_sampling(B, mask))
    return bool(eigenvalues[0] > tolerance * max(1.0, eigenvalues[-1]))


def dual_certificate(T, omega, Q=None, q=0.0):
    """
    Builds Y = (P_Omega + q P_Q) P_T (P_T (P_Omega + q P_Q) P_T)^-1 (E).

    The inverse is taken on T through an orthonormal coordinate basis, so
    only a dim T x dim T system is solved.

    Parameters
    ----------
    T : gridfill.SubspaceT
    omega : ObservationSet, boolean mask or list of (i, j)
    Q : gridfill.ConstraintSpaceQ, optional
    q : float, optional
        Non-negative weight on the constraint projector.

    Returns
    -------
    certificate : gridfill.DualCertificate
        Iterating it yields (Y, spectral_norm_T_perp, pt_residual).
    """
    if q < 0:
        raise ValueError('q must be non-negative.')
    n1, n2 = T.shape
    mask = observation_mask(omega, T.shape)
    B = _tangent_basis(T)
    sampled = _restricted_sampling(B, mask)
    K = sampled.copy()
    QB = None
    if Q is not None and Q.effective_dim > 0 and q > 0:
        QB = Q.vectors @ B
        K += q * (QB.T @ QB)

    condition = np.linalg.cond(K)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NotInvertibleError('Restricted operator on T is singular '
                                 '(condition number {:.3g}).'.format(condition))

    E = T.factors.sign_matrix
    coords = linalg.solve(K, B.T @ E.ravel(), assume_a='pos')
    W = B @ coords
    Y = mask.ravel() * W
    if QB is not None:
        Y = Y + q * (Q.vectors.T @ (QB @ coords))
    Y = Y.reshape(n1, n2)

    eigenvalues = linalg.eigvalsh(sampled)
    injective = bool(eigenvalues[0] > 1e-10 * max(1.0, eigenvalues[-1]))
    spectral = np.linalg.norm(T.project_perp(Y), 2)
    residual = np.linalg.norm(T.project(Y) - E)
    return DualCertificate(Y, spectral, residual, condition, injective)


class TheoremBounds(object):
    """
    Right-hand sides of the six sample-size conditions for constrained
    completion.

    Attributes
    ----------
    values : dict
        Keys `a` to `f`; each is the lower bound on m.
    binding : float
        Largest of the six.
    which : str
        Key of the binding condition.
    illustrative : bool
        True when C_R or C_K were left at their default of 1. Those
        constants are not known, so the numbers only show scaling.
    """
    strict = ('a', 'b')

    def __init__(self, values, illustrative):
        self.values = values
        self.illustrative = illustrative
        self.which = max(values, key=lambda key: values[key])
        self.binding = values[self.which]

    def satisfied(self, m):
        """True if m meets every condition (strictly for `a` and `b`)."""
        for key, bound in self.values.items():
            if key in self.strict:
                if not m > bound:
                    return False
            elif not m >= bound:
                return False
        return True

    def to_dict(self):
        out = dict(self.values)
        out.update(binding=self.binding, which=self.which, illustrative=self.illustrative)
        return out


def _check_theory_domain(beta, q=None, **positive):
    if beta < 1:
        raise ValueError('beta must be at least 1.')
    if q is not None and q <= 0:
        raise ValueError('q must be positive.')
    for name, value in positive.items():
        if value <= 0:
            raise ValueError('{} must be positive.'.format(name))


def theorem1_bounds(n1, n2, r, mu0, nu0, mu_Q_perp, nu_Q_perp, beta, q, C_R=None, C_K=None):
    """
    Evaluates the six lower bounds on the sample size m.

    Logarithms are natural. Nothing here claims tightness; C_R and C_K
    exist but are unknown, and default to 1.

    Returns
    -------
    bounds : gridfill.TheoremBounds
    """
    illustrative = C_R is None or C_K is None
    C_R = 1.0 if C_R is None else C_R
    C_K = 1.0 if C_K is None else C_K
    _check_theory_domain(beta, q, C_R=C_R, C_K=C_K, mu0=mu0, nu0=nu0)
    degrees_of_freedom(n1, n2, r)

    log_n1 = np.log(n1)
    qnn = q * n1 * n2
    values = {}
    values['a'] = (C_K * np.e ** 2 * nu0 * np.sqrt(beta * r * n1 * log_n1)
                   * 2 ** (2 / (beta * log_n1) + 2.5)
                   + 2 * np.sqrt(qnn * np.sqrt(nu_Q_perp * r))) ** 2 - qnn
    values['b'] = (np.sqrt(10 * mu0 * r * n1 * n2)
                   * (C_R * np.sqrt(beta * r * n1 * log_n1) + n1 * n2 * np.sqrt(mu_Q_perp * q))
                   * (1 + np.sqrt(q)) - qnn)
    values['c'] = 16 * C_R ** 2 * beta * mu0 * r * n1 * log_n1 - qnn
    values['d'] = 16 * mu_Q_perp * mu0 * q * n1 ** 2 * n2 ** 2 - qnn
    values['e'] = qnn * np.sqrt(nu_Q_perp * r) - qnn
    values['f'] = max(2, beta) * n1 * log_n1
    return TheoremBounds({k: float(v) for k, v in values.items()}, illustrative)


def corollary1_check(mu0, r, n1, n2, mu_Q_perp, nu_Q_perp):
    """
    Near-complete coverage test.

    Returns
    -------
    passes : bool
    margins : dict
        `mu` and `nu` are threshold minus value; both must be positive.
    """
    mu_threshold = min(1 / 16, 1 / (10 * r)) / (mu0 * n1 * n2)
    nu_threshold = 1 / (16 * r)
    margins = {'mu': mu_threshold - mu_Q_perp, 'nu': nu_threshold - nu_Q_perp,
               'mu_threshold': mu_threshold, 'nu_threshold': nu_threshold}
    return bool(margins['mu'] > 0 and margins['nu'] > 0), margins


def corollary2_bound(n1, n2, r, mu0, nu0, beta, C_R=None, C_K=None):
    """Sample bound when the constraints cover nothing of T."""
    C_R = 1.0 if C_R is None else C_R
    C_K = 1.0 if C_K is None else C_K
    _check_theory_domain(beta, C_R=C_R, C_K=C_K, mu0=mu0, nu0=nu0)
    log_n1 = np.log(n1)
    C1 = 32 * C_K ** 2 * np.e ** 4 * 2 ** (4 / (beta * log_n1))
    C2 = np.sqrt(10) * C_R
    C3 = 16 * C_R ** 2
    terms = [C1 * nu0 ** 2 * beta * r, C2 * np.sqrt(mu0 * n2) * beta * r,
             C3 * mu0 * beta * r, 2, beta]
    return float(max(terms) * n1 * log_n1)


Scree = namedtuple('Scree', ['singular_values', 'normalized', 'cumulative'])


def scree(M):
    """Singular values of M normalized by their sum, with cumulative sums."""
    M = _as_finite_matrix(M)
    s = _svd(M)[1]
    total = np.sum(s)
    if total == 0:
        raise UndefinedMetricError('Scree of the zero matrix is undefined.')
    normalized = s / total
    cumulative = np.cumsum(normalized)
    cumulative[-1] = 1.0
    return Scree(s, normalized, cumulative)


def nuclear_norm(X):
    return float(np.sum(_svd(np.asarray(X, dtype=float))[1]))


class CoherenceReport(object):
    """
    Coherence and coverage summary of a matrix and a constraint set.

    Attributes
    ----------
    r : int
    singular_values : np.ndarray
    mu_U, mu_V, mu0 : float
    nu0 : float
    mu_Q_perp, nu_Q_perp : float
    dim_T : int
    normalized_singular_values, cumulative : np.ndarray
    """
    def __init__(self, **kwargs):
        for key, value in kwargs.items():
            setattr(self, key, value)

    def to_dict(self):
        return {'r': int(self.r),
                'singular_values': [float(s) for s in self.singular_values],
                'mu_U': float(self.mu_U), 'mu_V': float(self.mu_V),
                'mu0': float(self.mu0), 'nu0': float(self.nu0),
                'mu_Q_perp': float(self.mu_Q_perp), 'nu_Q_perp': float(self.nu_Q_perp),
                'dim_T': int(self.dim_T),
                'effective_constraints': int(self.effective_constraints),
                'normalized_singular_values': [float(s) for s in self.normalized_singular_values],
                'cumulative': [float(s) for s in self.cumulative]}


def coherence_report(M, constraints=(), r=None, rank_tolerance=1e-8, method='blocked'):
    """
    Computes every coherence metric of `M` against `constraints`.

    Parameters
    ----------
    M : array-like
    constraints : list of (A, b), optional
    r : int, optional
        Rank; the numerical rank is used if not set.
    method : str, optional
        Evaluation method for mu_Q_perp; see `mu_Q_perp`.

    Returns
    -------
    report : gridfill.CoherenceReport
    """
    M = _as_finite_matrix(M)
    if not np.any(M):
        raise UndefinedMetricError('Coherence of the zero matrix is undefined.')
    factors = truncated_svd(M, r=r, rank_tolerance=rank_tolerance)
    T = SubspaceT(factors)
    Q = orthonormalize_constraints(constraints, shape=M.shape)
    if Q.drop_log:
        warnings.warn('{} of {} constraints are linearly dependent and were dropped.'
                      ''.format(len(Q.drop_log), len(constraints)), category=GridfillWarning)
    mu_U = mu_coherence(factors.left_vectors)
    mu_V = mu_coherence(factors.right_vectors)
    s = scree(M)
    return CoherenceReport(r=factors.rank, singular_values=factors.singular_values,
                           mu_U=mu_U, mu_V=mu_V, mu0=max(mu_U, mu_V), nu0=nu0(factors),
                           mu_Q_perp=mu_Q_perp(T, Q, method=method),
                           nu_Q_perp=nu_Q_perp(factors, Q), dim_T=T.dim_T,
                           effective_constraints=Q.effective_dim,
                           normalized_singular_values=s.normalized, cumulative=s.cumulative)
