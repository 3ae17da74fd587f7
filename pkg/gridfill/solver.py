import numpy as np
import warnings
from dataclasses import dataclass, asdict
from scipy import linalg

from tqdm import tqdm

from .subspace import _svd, nuclear_norm
from .utils import *

__all__ = ['AffineSystem', 'SolverConfig', 'SolverReport', 'assemble_affine',
           'project_affine', 'svt', 'solve_nuclear', 'solve_least_squares',
           'exact_recovery', 'objective_monotonicity', 'observed_entries', 'load_affine',
           'dump_affine']

CONFLICT_TOLERANCE = 1e-12
ROW_DROP_TOLERANCE = 1e-10
CONSISTENCY_TOLERANCE = 1e-8
FEASIBILITY_TOLERANCE = 1e-7
INDEPENDENCE_TOLERANCE = 1e-6


class AffineSystem(object):
    """
    Entry observations plus general linear equality constraints on X.

    The projection onto the feasible set is factored lazily on first use
    and cached. Entry constraints fix coordinates directly; the general
    constraints act only on the remaining free coordinates.

    Parameters
    ----------
    shape : tuple
        (n1, n2) of the unknown matrix.
    entry_constraints : dict
        Maps (i, j) to its known value.
    linear_constraints : list of (A, b)

    Attributes
    ----------
    effective_rows : int
        Independent general constraints kept after cleanup. Only set
        once the system has been factored.
    dropped_rows : list of int
        Indices of general constraints found to be redundant.
    """
    def __init__(self, shape, entry_constraints=None, linear_constraints=()):
        self.shape = tuple(shape)
        self.entry_constraints = dict(entry_constraints or {})
        self.linear_constraints = list(linear_constraints)
        self._factored = False

    @property
    def n_entries(self):
        return len(self.entry_constraints)

    @property
    def n_linear(self):
        return len(self.linear_constraints)

    def _factor(self):
        if self._factored:
            return
        n1, n2 = self.shape
        N = n1 * n2
        keys = sorted(self.entry_constraints)
        self._fixed = np.array([i * n2 + j for i, j in keys], dtype=int)
        self._fixed_values = np.array([self.entry_constraints[k] for k in keys], dtype=float)
        free_mask = np.ones(N, dtype=bool)
        free_mask[self._fixed] = False
        self._free = np.flatnonzero(free_mask)

        C, d = constraint_matrix(self.linear_constraints, self.shape)
        self._C_full, self._d_full = C, d
        self.dropped_rows = []
        self._rows = np.zeros((0, len(self._free)))
        self._rhs = np.zeros(0)
        self._cho = None
        if C.shape[0] > 0:
            self._reduce(C, d)
        self.effective_rows = self._rows.shape[0]
        self._factored = True

    def _reduce(self, C, d):
        full_norms = np.sqrt(np.asarray(C.multiply(C).sum(axis=1)).ravel())
        C_free = C[:, self._free].toarray()
        d_free = d - C[:, self._fixed] @ self._fixed_values

        if C_free.shape[1] == 0:
            kept = np.zeros(0, dtype=int)
        else:
            _, R, perm = linalg.qr(C_free.T, mode='economic', pivoting=True)
            diag = np.abs(np.diag(R))
            rank = int(np.sum(diag > ROW_DROP_TOLERANCE * diag[0])) if diag.size and diag[0] > 0 else 0
            kept = np.sort(perm[:rank])
        dropped = np.setdiff1d(np.arange(C.shape[0]), kept)

        rows, rhs = C_free[kept], d_free[kept]
        if len(kept) > 0:
            try:
                self._cho = linalg.cho_factor(rows @ rows.T)
            except linalg.LinAlgError:
                raise NumericalDegeneracyError('C C^T is singular after row cleanup.')
            particular = rows.T @ linalg.cho_solve(self._cho, rhs)
        else:
            particular = np.zeros(C_free.shape[1])

        # Dropped rows lie in the span of the kept ones; they must agree on b.
        scale = np.where(full_norms[dropped] > 0, full_norms[dropped], 1.0)
        conflict = np.abs(C_free[dropped] @ particular - d_free[dropped]) / scale
        if np.any(conflict > CONSISTENCY_TOLERANCE):
            worst = dropped[np.argmax(conflict)]
            raise InfeasibleSystemError('Constraint {} contradicts the others (residual {:.3g}).'
                                        ''.format(int(worst), float(np.max(conflict))))
        self.dropped_rows = [int(l) for l in dropped]
        self._rows, self._rhs = rows, rhs

    def independent_subset(self, constraints, tolerance=INDEPENDENCE_TOLERANCE):
        """
        Constraints that add a new direction to this system.

        Restricted to the free coordinates, a constraint is skipped when all
        but a `tolerance` share of its norm lies in the span of the system's
        rows and of the constraints kept before it. Appending the kept ones
        leaves a feasible system feasible, whatever their right-hand sides.

        Parameters
        ----------
        constraints : list of (A, b)
        tolerance : float, optional

        Returns
        -------
        kept : list of LinearConstraint
        skipped : list of int
            Indices into `constraints`.
        """
        self._factor()
        constraints = [LinearConstraint(A, b) for A, b in constraints]
        if self._rows.shape[0]:
            basis = linalg.qr(self._rows.T, mode='economic')[0].T
        else:
            basis = np.zeros((0, len(self._free)))
        C, _ = constraint_matrix(constraints, self.shape)
        kept, skipped = [], []
        for l, constraint in enumerate(constraints):
            row = C[l].toarray().ravel()[self._free]
            norm = np.linalg.norm(row)
            residual = row - basis.T @ (basis @ row)
            residual -= basis.T @ (basis @ residual)
            if norm == 0 or np.linalg.norm(residual) <= tolerance * norm:
                skipped.append(l)
                continue
            basis = np.vstack([basis, residual / np.linalg.norm(residual)])
            kept.append(constraint)
        return kept, skipped

    def extended(self, constraints):
        """A new system with `constraints` appended to the general ones."""
        return AffineSystem(self.shape, self.entry_constraints,
                            self.linear_constraints + list(constraints))

    def project(self, X):
        """Euclidean projection of X onto the feasible set."""
        self._factor()
        X = np.asarray(X, dtype=float)
        if X.shape != self.shape:
            raise DimensionMismatchError('Matrix of shape {} does not match system shape {}.'
                                         ''.format(X.shape, self.shape))
        x = X.ravel().copy()
        x[self._fixed] = self._fixed_values
        if self._cho is not None:
            free = x[self._free]
            mismatch = self._rows @ free - self._rhs
            free -= self._rows.T @ linalg.cho_solve(self._cho, mismatch)
            x[self._free] = free
        return x.reshape(self.shape)

    def feasibility_residual(self, X):
        """max |C vec(X) - d| over every entry and general constraint."""
        self._factor()
        x = np.asarray(X, dtype=float).ravel()
        worst = 0.0
        if len(self._fixed):
            worst = np.max(np.abs(x[self._fixed] - self._fixed_values))
        if self._C_full.shape[0]:
            worst = max(worst, np.max(np.abs(self._C_full @ x - self._d_full)))
        return float(worst)


def assemble_affine(omega_values, constraints, shape):
    """
    Merges observed entries and linear constraints into one system.

    Parameters
    ----------
    omega_values : list of ((i, j), value) or dict
    constraints : list of (A, b)
    shape : tuple

    Returns
    -------
    system : gridfill.AffineSystem
    """
    if isinstance(omega_values, dict):
        omega_values = omega_values.items()
    entries = {}
    for (i, j), value in omega_values:
        i, j, value = int(i), int(j), float(value)
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise InvalidInputError('Location ({}, {}) lies outside shape {}.'.format(i, j, shape))
        if not np.isfinite(value):
            raise InvalidInputError('Observation at ({}, {}) is not finite.'.format(i, j))
        if (i, j) in entries and abs(entries[(i, j)] - value) > CONFLICT_TOLERANCE:
            raise InconsistentObservationError('({}, {}) observed as both {} and {}.'
                                               ''.format(i, j, entries[(i, j)], value))
        entries[(i, j)] = value
    return AffineSystem(shape, entries, constraints)


def project_affine(X, system):
    return system.project(X)


def svt(X, tau):
    """Singular value soft-thresholding, the prox of tau * nuclear norm."""
    if tau < 0:
        raise ValueError('tau must be non-negative.')
    U, s, Vt = _svd(np.asarray(X, dtype=float))
    return (U * np.maximum(s - tau, 0.0)) @ Vt


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings for the nuclear-norm solver.

    Parameters
    ----------
    rho : float
        ADMM penalty; singular values are thresholded at 1 / rho.
    max_iterations : int
    primal_tolerance : float
        Bound on ||X - Z||_F.
    dual_tolerance : float
        Bound on rho ||Z_k - Z_{k-1}||_F.
    exactness_tolerance : float
        Relative Frobenius error accepted as exact recovery.
    """
    rho: float = 1.0
    max_iterations: int = 5000
    primal_tolerance: float = 1e-7
    dual_tolerance: float = 1e-7
    exactness_tolerance: float = 1e-3

    def __post_init__(self):
        for name in ('rho', 'primal_tolerance', 'dual_tolerance', 'exactness_tolerance'):
            if not getattr(self, name) > 0:
                raise ValueError('{} must be positive.'.format(name))
        if int(self.max_iterations) < 1:
            raise ValueError('max_iterations must be at least 1.')

    def to_dict(self):
        return asdict(self)


class SolverReport(object):
    """
    Outcome of a completion solve.

    Attributes
    ----------
    solution : np.ndarray
    iterations : int
    primal_residual, dual_residual : float
    objective : float
        Nuclear norm for `nuclear`, Frobenius norm for `least-squares`.
    feasibility_residual : float
    converged : bool
    method : str
    history : list or None
        (primal, dual, objective) per iteration when requested.
    """
    def __init__(self, solution, iterations, primal_residual, dual_residual, objective,
                 feasibility_residual, converged, method, history=None):
        self.solution = solution
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.objective = objective
        self.feasibility_residual = feasibility_residual
        self.converged = converged
        self.method = method
        self.history = history

    def to_dict(self):
        return {'method': self.method, 'objective': float(self.objective),
                'iterations': int(self.iterations),
                'primal_residual': float(self.primal_residual),
                'dual_residual': float(self.dual_residual),
                'feasibility_residual': float(self.feasibility_residual),
                'converged': bool(self.converged)}


def solve_least_squares(system, shape=None):
    """Minimum-Frobenius-norm feasible point."""
    Z = system.project(np.zeros(system.shape))
    return SolverReport(Z, 0, 0.0, 0.0, float(np.linalg.norm(Z)),
                        system.feasibility_residual(Z), True, 'least-squares')


def solve_nuclear(system, shape=None, config=None, record_history=False, progress=False):
    """
    Minimizes the nuclear norm over the feasible set by ADMM.

    Scaled form with split X = Z:

        X <- svt(Z - U, 1 / rho)
        Z <- project(X + U)
        U <- U + X - Z

    Z starts at the least-squares solution and is feasible at every step,
    so the returned solution always satisfies the constraints. Running out
    of iterations is reported through `converged`, not raised.

    Parameters
    ----------
    system : gridfill.AffineSystem
    shape : tuple, optional
        Checked against `system.shape` if given.
    config : gridfill.SolverConfig, optional
    record_history : bool, optional
    progress : bool, optional
        Show a tqdm bar over iterations.

    Returns
    -------
    report : gridfill.SolverReport
    """
    if shape is not None and tuple(shape) != system.shape:
        raise DimensionMismatchError('Requested shape {} does not match system shape {}.'
                                     ''.format(tuple(shape), system.shape))
    config = config or SolverConfig()
    rho = config.rho

    Z = system.project(np.zeros(system.shape))
    U = np.zeros(system.shape)
    history = [] if record_history else None
    best, best_score = Z, np.inf
    primal = dual = np.inf
    converged = False
    iteration = 0

    for iteration in tqdm(range(1, int(config.max_iterations) + 1), disable=not progress):
        X = svt(Z - U, 1.0 / rho)
        Z_old = Z
        Z = system.project(X + U)
        U += X - Z

        primal = np.linalg.norm(X - Z)
        dual = rho * np.linalg.norm(Z - Z_old)
        if record_history:
            history.append((primal, dual, nuclear_norm(Z)))

        score = max(primal / config.primal_tolerance, dual / config.dual_tolerance)
        if score < best_score:
            best, best_score = Z, score
        if primal <= config.primal_tolerance and dual <= config.dual_tolerance:
            converged = True
            break

    solution = Z if converged else best
    feasibility = system.feasibility_residual(solution)
    converged = converged and feasibility <= FEASIBILITY_TOLERANCE
    if not converged:
        warnings.warn('Nuclear-norm solve stopped after {} iterations (primal {:.3g}, '
                      'dual {:.3g}).'.format(iteration, primal, dual), category=GridfillWarning)
    return SolverReport(solution, iteration, primal, dual, nuclear_norm(solution),
                        feasibility, converged, 'nuclear', history)


def exact_recovery(estimate, truth, rel_tolerance=1e-3):
    """True if ||estimate - truth||_F / ||truth||_F <= rel_tolerance."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise DimensionMismatchError('Estimate {} and truth {} differ in shape.'
                                     ''.format(estimate.shape, truth.shape))
    scale = np.linalg.norm(truth)
    if scale == 0:
        raise UndefinedMetricError('Relative error against a zero matrix is undefined.')
    return bool(np.linalg.norm(estimate - truth) / scale <= rel_tolerance)


def objective_monotonicity(history, burn_in=0.5, slack=1e-9):
    """
    Diagnostic on the nuclear norm of the feasible iterate.

    ADMM does not promise a monotone objective, so this only measures it.

    Parameters
    ----------
    history : list of (primal, dual, objective)
        As recorded by `solve_nuclear(..., record_history=True)`.
    burn_in : float, optional
        Share of the iterations skipped at the start.
    slack : float, optional
        Relative increase still counted as non-increasing.

    Returns
    -------
    share : float
        Fraction of post burn-in steps whose objective did not increase.
    net_decrease : bool
        Whether the last objective is at most the first post burn-in one.
    """
    if not history:
        raise ValueError('No iteration history was recorded.')
    if not 0 <= burn_in < 1:
        raise ValueError('burn_in must lie in [0, 1).')
    objective = np.array([h[2] for h in history], dtype=float)
    tail = objective[int(burn_in * len(objective)):]
    if len(tail) < 2:
        return 1.0, True
    allowance = slack * np.abs(tail[:-1])
    share = float(np.mean(np.diff(tail) <= allowance))
    return share, bool(tail[-1] <= tail[0] * (1 + slack))


def observed_entries(M):
    """((i, j), value) for every finite entry; NaN marks a missing entry."""
    M = np.asarray(M, dtype=float)
    rows, cols = np.nonzero(~np.isnan(M))
    if not np.all(np.isfinite(M[rows, cols])):
        raise InvalidInputError('Observed entries must be finite.')
    return [((int(i), int(j)), float(M[i, j])) for i, j in zip(rows, cols)]


def load_affine(shape, observations=None, constraints=None, matrix=None):
    """
    Builds an AffineSystem from files.

    Parameters
    ----------
    shape : tuple or None
        Required unless `matrix` is given.
    observations : str, optional
        Path to `i,j,value` rows.
    constraints : str, optional
        Path to the JSON constraint list.
    matrix : str, optional
        Path to a matrix whose NaN entries are unobserved.
    """
    omega = []
    if matrix is not None:
        M = read_matrix(matrix)
        shape = M.shape
        omega += observed_entries(M)
    if shape is None:
        raise InvalidInputError('A shape is needed when no matrix file is given.')
    if observations is not None:
        omega += read_observations(observations)
    linear = read_constraints(constraints, shape) if constraints is not None else []
    return assemble_affine(omega, linear, shape)


def dump_affine(system, observations, constraints):
    """Writes an AffineSystem to the observation and constraint file formats."""
    write_observations(observations, sorted(system.entry_constraints.items()))
    write_constraints(constraints, system.linear_constraints)
