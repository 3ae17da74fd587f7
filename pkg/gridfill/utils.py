import json
from collections import namedtuple

import numpy as np
from scipy import sparse

__all__ = ['GridfillWarning', 'GridfillError', 'InvalidRankError', 'InvalidInputError',
           'InvalidBasisError', 'DimensionMismatchError', 'UndefinedMetricError',
           'NotInvertibleError', 'InconsistentObservationError', 'InfeasibleSystemError',
           'NumericalDegeneracyError', 'UnsupportedTopologyError', 'CaseFormatError',
           'NoSolutionError', 'StaleSolutionError', 'LinearConstraint',
           'constraint_matrix', 'constraint_support', 'observation_mask',
           'read_matrix', 'write_matrix', 'read_observations', 'write_observations',
           'read_constraints', 'write_constraints', 'write_table']


class GridfillWarning(Warning):
    """A class to hold gridfill-specific warnings."""
    pass

class GridfillError(Exception):
    """Base class for every error raised by gridfill."""
    pass

class InvalidRankError(GridfillError):
    """Exception raised when a requested rank is outside [1, min(n1, n2)]
        or exceeds the numerical rank of the matrix."""
    pass

class InvalidInputError(GridfillError):
    """Exception raised for non-finite or malformed numerical input."""
    pass

class InvalidBasisError(GridfillError):
    """Exception raised when a basis is not orthonormal."""
    pass

class DimensionMismatchError(GridfillError):
    """Exception raised when matrix shapes do not agree."""
    pass

class UndefinedMetricError(GridfillError):
    """Exception raised when a metric has no meaningful value
        (zero matrix, empty subspace, zero-norm truth)."""
    pass

class NotInvertibleError(GridfillError):
    """Exception raised when the restricted sampling/constraint operator
        on T is singular."""
    pass

class InconsistentObservationError(GridfillError):
    """Exception raised when one location is observed with two values."""
    pass

class InfeasibleSystemError(GridfillError):
    """Exception raised when the equality constraints cannot all hold."""
    pass

class NumericalDegeneracyError(GridfillError):
    """Exception raised when a factorization breaks down numerically."""
    pass

class UnsupportedTopologyError(GridfillError):
    """Exception raised for meshed or disconnected networks."""
    pass

class CaseFormatError(GridfillError):
    """Exception raised when a case file cannot be understood."""
    pass

class NoSolutionError(GridfillError):
    """Exception raised when the power flow does not converge.

    Attributes
    ----------
    residual : float
        Last maximum voltage update (pu).
    """
    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual

class StaleSolutionError(GridfillError):
    """Exception raised when an unconverged power flow is used."""
    pass


LinearConstraint = namedtuple('LinearConstraint', ['A', 'b'])
LinearConstraint.__doc__ = """A single equality constraint <A, X> = b.

`A` is either a dense (n1, n2) array or a scipy.sparse matrix of the same
shape; `b` is a float."""


def _coefficients_coo(A, shape):
    """Returns (rows, cols, values) of the nonzero coefficients of `A`."""
    if sparse.issparse(A):
        A = A.tocoo()
        if A.shape != tuple(shape):
            raise DimensionMismatchError('Constraint of shape {} does not match {}.'
                                         ''.format(A.shape, tuple(shape)))
        keep = A.data != 0
        return A.row[keep], A.col[keep], A.data[keep].astype(float)
    A = np.asarray(A, dtype=float)
    if A.shape != tuple(shape):
        raise DimensionMismatchError('Constraint of shape {} does not match {}.'
                                     ''.format(A.shape, tuple(shape)))
    rows, cols = np.nonzero(A)
    return rows, cols, A[rows, cols]


def constraint_matrix(constraints, shape):
    """Stacks constraints into the operator acting on row-major vec(X).

    Parameters
    ----------
    constraints : iterable of (A, b)
    shape : tuple
        (n1, n2) of the unknown matrix.

    Returns
    -------
    C : scipy.sparse.csr_matrix
        (h, n1*n2) coefficient matrix.
    d : np.ndarray
        Right-hand sides, length h.
    """
    n1, n2 = shape
    data, indices, indptr, d = [], [], [0], []
    for A, b in constraints:
        rows, cols, vals = _coefficients_coo(A, shape)
        flat = rows * n2 + cols
        order = np.argsort(flat, kind='stable')
        indices.append(flat[order])
        data.append(vals[order])
        indptr.append(indptr[-1] + len(flat))
        d.append(float(b))
    if len(d) == 0:
        return sparse.csr_matrix((0, n1 * n2)), np.zeros(0)
    C = sparse.csr_matrix((np.concatenate(data), np.concatenate(indices), np.array(indptr)),
                          shape=(len(d), n1 * n2))
    C.sum_duplicates()
    return C, np.array(d)


def constraint_support(A):
    """Returns the set of (i, j) locations with a nonzero coefficient in `A`."""
    if sparse.issparse(A):
        A = A.tocoo()
        return {(int(i), int(j)) for i, j, v in zip(A.row, A.col, A.data) if v != 0}
    rows, cols = np.nonzero(np.asarray(A))
    return {(int(i), int(j)) for i, j in zip(rows, cols)}


def observation_mask(omega, shape):
    """Boolean (n1, n2) mask from an ObservationSet, a mask, or (i, j) pairs."""
    if hasattr(omega, 'entries'):
        omega = omega.entries
    if isinstance(omega, np.ndarray) and omega.dtype == bool:
        if omega.shape != tuple(shape):
            raise DimensionMismatchError('Mask of shape {} does not match {}.'
                                         ''.format(omega.shape, tuple(shape)))
        return omega.copy()
    mask = np.zeros(shape, dtype=bool)
    for i, j in omega:
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise InvalidInputError('Location ({}, {}) lies outside shape {}.'.format(i, j, shape))
        mask[i, j] = True
    return mask


def _header_lines(config):
    from .version import __version__
    lines = ['gridfill {}'.format(__version__)]
    if config is not None:
        lines.append('config: ' + json.dumps(config, sort_keys=True, default=str))
    return lines


def read_matrix(path):
    """Reads a matrix from row-major CSV or a JSON object {n1, n2, data}.

    Lines starting with `#` are ignored. `nan` entries are allowed and mark
    unobserved locations for the solve subcommands.
    """
    path = str(path)
    try:
        if path.endswith('.json'):
            with open(path) as f:
                obj = json.load(f)
            data = np.asarray(obj['data'], dtype=float)
            return data.reshape(int(obj['n1']), int(obj['n2']))
        return np.loadtxt(path, delimiter=',', comments='#', ndmin=2)
    except (KeyError, ValueError, TypeError) as err:
        raise InvalidInputError('Unable to parse matrix file {}: {}'.format(path, err))


def write_matrix(path, M, config=None):
    """Writes `M` as CSV with 17 significant digits, or JSON if `path` ends in .json.

    Both carry the package version and, when given, the resolved `config`:
    CSV in `#` header lines, JSON as `version` and `config` keys.
    """
    from .version import __version__
    M = np.asarray(M, dtype=float)
    path = str(path)
    if path.endswith('.json'):
        payload = {'n1': M.shape[0], 'n2': M.shape[1],
                   'data': [float(v) for v in M.ravel()], 'version': __version__}
        if config is not None:
            payload['config'] = config
        with open(path, 'w') as f:
            json.dump(payload, f, sort_keys=True, default=str)
        return
    np.savetxt(path, M, delimiter=',', fmt='%.17g',
               header='\n'.join(_header_lines(config)), comments='# ')


def read_observations(path):
    """Reads `i,j,value` rows (0-based) into a list of ((i, j), value)."""
    try:
        rows = np.loadtxt(str(path), delimiter=',', comments='#', ndmin=2)
    except ValueError as err:
        raise InvalidInputError('Unable to parse observation file {}: {}'.format(path, err))
    if rows.size == 0:
        return []
    if rows.shape[1] != 3:
        raise InvalidInputError('Observation rows must have three columns: i,j,value.')
    return [((int(i), int(j)), float(v)) for i, j, v in rows]


def write_observations(path, observations, config=None):
    rows = np.array([[i, j, v] for (i, j), v in observations], dtype=float).reshape(-1, 3)
    np.savetxt(str(path), rows, delimiter=',', fmt=['%d', '%d', '%.17g'],
               header='\n'.join(_header_lines(config)), comments='# ')


def read_constraints(path, shape):
    """Reads a JSON list of {"coefficients": [[i, j, a], ...], "value": b}.

    Returns
    -------
    constraints : list of LinearConstraint
        Each `A` is a scipy.sparse.coo_matrix of `shape`.
    """
    try:
        with open(str(path)) as f:
            raw = json.load(f)
        constraints = []
        for item in raw:
            coeffs = np.asarray(item['coefficients'], dtype=float).reshape(-1, 3)
            A = sparse.coo_matrix((coeffs[:, 2], (coeffs[:, 0].astype(int), coeffs[:, 1].astype(int))),
                                  shape=shape)
            constraints.append(LinearConstraint(A, float(item['value'])))
    except (KeyError, ValueError, TypeError) as err:
        raise InvalidInputError('Unable to parse constraint file {}: {}'.format(path, err))
    return constraints


def write_constraints(path, constraints):
    out = []
    for A, b in constraints:
        A = sparse.coo_matrix(A)
        out.append({'coefficients': [[int(i), int(j), float(v)] for i, j, v in zip(A.row, A.col, A.data)],
                    'value': float(b)})
    with open(str(path), 'w') as f:
        json.dump(out, f)


def write_table(table, path, config=None):
    """Writes an astropy Table as CSV with provenance comment lines.

    Float columns are printed with 17 significant digits so re-runs of the
    same config reproduce the file exactly.
    """
    table.meta['comments'] = _header_lines(config)
    formats = {name: '%.17g' for name in table.colnames
               if np.issubdtype(table[name].dtype, np.floating)}
    table.write(str(path), format='ascii.csv', overwrite=True, formats=formats)
