import re
import json
import warnings
import numpy as np
import networkx as nx
from scipy import sparse
from astropy.table import Table

from .utils import *

__all__ = ['NetworkCase', 'PowerFlowSolution', 'StateMatrix', 'load_case', 'parse_matpower',
           'generate_radial_case', 'solve_power_flow', 'assemble_state_matrix',
           'physics_constraints', 'approx_constraints', 'filter_constraints', 'residuals',
           'state_columns', 'state_summary', 'structural_zero_entries',
           'P', 'Q', 'RE_V', 'IM_V', 'ABS_V', 'RE_I', 'IM_I', 'ABS_I',
           'P_FROM', 'Q_FROM', 'P_TO', 'Q_TO', 'P_LOSS', 'Q_LOSS',
           'LINE_RE_I', 'LINE_IM_I', 'LINE_ABS_I', 'N_COLUMNS']

# Bus block columns
P, Q, RE_V, IM_V, ABS_V, RE_I, IM_I, ABS_I = range(8)
# Line block columns
P_FROM, Q_FROM, P_TO, Q_TO, P_LOSS, Q_LOSS, LINE_RE_I, LINE_IM_I, LINE_ABS_I = range(8, 17)
N_COLUMNS = 17

SWEEP_TOLERANCE = 1e-12
SWEEP_MAX_ITERATIONS = 200
MISMATCH_TOLERANCE = 1e-10


def state_columns():
    """Names of the 17 state matrix columns."""
    return ['P', 'Q', 'ReV', 'ImV', '|V|', 'ReI', 'ImI', '|I|',
            'PFrom', 'QFrom', 'PTo', 'QTo', 'PLoss', 'QLoss',
            'ReI_line', 'ImI_line', '|I_line|']


class NetworkCase(object):
    """
    A radial distribution network in per-unit.

    Buses are relabeled canonically on construction: breadth-first from
    the slack bus, visiting neighbors in order of their original id. After
    relabeling the slack bus is index 0, line k feeds bus k + 1, and every
    line points away from the slack bus so its From index is smaller than
    its To index.

    Parameters
    ----------
    bus_ids : list
        Original bus identifiers.
    p_load, q_load : array-like
        Real and reactive load drawn at each bus (pu). Any load given at
        the slack bus is served by the source and ignored.
    from_ids, to_ids : list
        Original identifiers of each line's end buses.
    r, x : array-like
        Series resistance and reactance of each line (pu).
    slack_id : optional
        Identifier of the slack bus. Defaults to the first bus.
    slack_voltage : complex, optional
        Slack voltage V1 (pu). Default 1.

    Attributes
    ----------
    n_buses, n_lines : int
    bus_ids : list
        Original identifiers in canonical order.
    from_bus, to_bus : np.ndarray
        Canonical bus indices of each line.
    conductance, susceptance : np.ndarray
        G + jB = 1 / (R + jX) for each line.
    """
    def __init__(self, bus_ids, p_load, q_load, from_ids, to_ids, r, x,
                 slack_id=None, slack_voltage=1.0 + 0j):
        bus_ids = list(bus_ids)
        if len(bus_ids) < 1 or len(set(bus_ids)) != len(bus_ids):
            raise CaseFormatError('Bus identifiers must be present and unique.')
        if slack_id is None:
            slack_id = bus_ids[0]
        if slack_id not in bus_ids:
            raise CaseFormatError('Slack bus {} is not a bus of the case.'.format(slack_id))
        slack_voltage = complex(slack_voltage)
        if slack_voltage == 0:
            raise CaseFormatError('Slack voltage must be nonzero.')

        p_load = np.asarray(p_load, dtype=float)
        q_load = np.asarray(q_load, dtype=float)
        r = np.asarray(r, dtype=float)
        x = np.asarray(x, dtype=float)
        if len(p_load) != len(bus_ids) or len(q_load) != len(bus_ids):
            raise CaseFormatError('Every bus needs a real and a reactive load.')
        if not (len(from_ids) == len(to_ids) == len(r) == len(x)):
            raise CaseFormatError('Line columns differ in length.')

        graph = nx.Graph()
        graph.add_nodes_from(bus_ids)
        lines = {}
        for k, (s, t) in enumerate(zip(from_ids, to_ids)):
            if s not in graph or t not in graph:
                raise CaseFormatError('Line {} references an unknown bus.'.format(k))
            if s == t:
                raise UnsupportedTopologyError('Line {} connects bus {} to itself.'.format(k, s))
            if graph.has_edge(s, t):
                raise CaseFormatError('Duplicate line between buses {} and {}.'.format(s, t))
            if r[k] ** 2 + x[k] ** 2 == 0:
                raise CaseFormatError('Line {} has zero impedance.'.format(k))
            graph.add_edge(s, t)
            lines[frozenset((s, t))] = k

        if not nx.is_connected(graph):
            raise UnsupportedTopologyError('The network is not connected.')
        if graph.number_of_edges() != graph.number_of_nodes() - 1:
            cycle = nx.find_cycle(graph)
            raise UnsupportedTopologyError('The network is not radial; found the loop {}.'
                                           ''.format([edge[0] for edge in cycle]))

        order = [slack_id]
        line_order, parents = [], []
        for parent, child in nx.bfs_edges(graph, slack_id, sort_neighbors=sorted):
            order.append(child)
            parents.append(parent)
            line_order.append(lines[frozenset((parent, child))])
        index = {bus: i for i, bus in enumerate(order)}
        original = {bus: i for i, bus in enumerate(bus_ids)}

        self.bus_ids = order
        self.slack_id = slack_id
        self.slack_voltage = slack_voltage
        self.p_load = np.array([p_load[original[b]] for b in order])
        self.q_load = np.array([q_load[original[b]] for b in order])
        self.p_load[0] = self.q_load[0] = 0.0
        self.from_bus = np.array([index[p] for p in parents], dtype=int)
        self.to_bus = np.arange(1, len(order), dtype=int)
        self.r = r[line_order]
        self.x = x[line_order]

    @property
    def n_buses(self):
        return len(self.bus_ids)

    @property
    def n_lines(self):
        return len(self.r)

    @property
    def shape(self):
        return (self.n_buses + self.n_lines, N_COLUMNS)

    @property
    def admittance(self):
        return 1.0 / (self.r + 1j * self.x)

    @property
    def conductance(self):
        return self.r / (self.r ** 2 + self.x ** 2)

    @property
    def susceptance(self):
        return -self.x / (self.r ** 2 + self.x ** 2)

    def bus_row(self, s):
        return int(s)

    def line_row(self, k):
        return self.n_buses + int(k)

    @classmethod
    def from_dict(cls, data):
        """Builds a case from {buses: [...], lines: [...], slack: {...}}."""
        try:
            buses = data['buses']
            lines = data['lines']
            slack = data.get('slack', {})
            return cls([b['id'] for b in buses],
                       [b.get('p_load', 0.0) for b in buses],
                       [b.get('q_load', 0.0) for b in buses],
                       [l['from'] for l in lines], [l['to'] for l in lines],
                       [l['r'] for l in lines], [l['x'] for l in lines],
                       slack_id=slack.get('id', buses[0]['id'] if buses else None),
                       slack_voltage=complex(slack.get('v_re', 1.0), slack.get('v_im', 0.0)))
        except (KeyError, TypeError, IndexError) as err:
            raise CaseFormatError('Case is missing a required field: {}'.format(err))

    def to_dict(self):
        """Case in the JSON case layout, using original bus identifiers."""
        ids = [b.item() if isinstance(b, np.generic) else b for b in self.bus_ids]
        return {'buses': [{'id': ids[s], 'p_load': float(self.p_load[s]),
                           'q_load': float(self.q_load[s])} for s in range(self.n_buses)],
                'lines': [{'from': ids[self.from_bus[k]], 'to': ids[self.to_bus[k]],
                           'r': float(self.r[k]), 'x': float(self.x[k])} for k in range(self.n_lines)],
                'slack': {'id': ids[0], 'v_re': self.slack_voltage.real,
                          'v_im': self.slack_voltage.imag}}


def _matpower_table(text, name):
    match = re.search(r'mpc\.' + name + r'\s*=\s*\[(.*?)\]', text, re.S)
    if match is None:
        raise CaseFormatError('MATPOWER text has no mpc.{} table.'.format(name))
    rows = []
    for line in match.group(1).replace(';', '\n').splitlines():
        line = line.split('%')[0].strip()
        if line:
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise CaseFormatError('Unreadable mpc.{} row: {}'.format(name, line))
    return rows


def parse_matpower(text):
    """
    Reads the bus and branch tables of a MATPOWER case.

    Bus columns used: BUS_I, BUS_TYPE, PD, QD, (GS, BS, AREA,) VM, VA.
    Branch columns used: F_BUS, T_BUS, BR_R, BR_X and BR_STATUS (column 11);
    out-of-service branches are skipped. Loads are divided by baseMVA;
    branch impedances are already per-unit. The bus of type 3 is the slack,
    with V1 = VM at angle VA degrees.

    Returns
    -------
    case : gridfill.NetworkCase
    """
    base = re.search(r'mpc\.baseMVA\s*=\s*([-+0-9.eE]+)', text)
    base_mva = float(base.group(1)) if base else 1.0
    buses = _matpower_table(text, 'bus')
    branches = _matpower_table(text, 'branch')
    if any(len(row) < 9 for row in buses) or any(len(row) < 4 for row in branches):
        raise CaseFormatError('MATPOWER tables have too few columns.')

    slack = [row for row in buses if int(row[1]) == 3]
    if len(slack) != 1:
        raise CaseFormatError('Expected exactly one slack (type 3) bus, found {}.'.format(len(slack)))
    slack_voltage = slack[0][7] * np.exp(1j * np.deg2rad(slack[0][8]))

    in_service = [row for row in branches if len(row) < 11 or row[10] != 0]
    return NetworkCase([int(row[0]) for row in buses],
                       [row[2] / base_mva for row in buses],
                       [row[3] / base_mva for row in buses],
                       [int(row[0]) for row in in_service], [int(row[1]) for row in in_service],
                       [row[2] for row in in_service], [row[3] for row in in_service],
                       slack_id=int(slack[0][0]), slack_voltage=slack_voltage)


def load_case(source):
    """
    Loads a NetworkCase from a dict, a JSON case file or MATPOWER text.

    Parameters
    ----------
    source : dict or str
        A path ending in `.m` is read as MATPOWER; any other path as JSON.
    """
    if isinstance(source, dict):
        return NetworkCase.from_dict(source)
    try:
        with open(str(source)) as f:
            text = f.read()
    except OSError as err:
        raise CaseFormatError('Unable to read case {}: {}'.format(source, err))
    if str(source).endswith('.m') or 'mpc.bus' in text:
        return parse_matpower(text)
    try:
        return NetworkCase.from_dict(json.loads(text))
    except ValueError as err:
        raise CaseFormatError('Case {} is not valid JSON: {}'.format(source, err))


def _worst_drop(parents, r, x, p_load, q_load):
    """Largest linearized drop, the sum of R P + X Q along a path from the slack bus."""
    p_down, q_down = p_load.copy(), q_load.copy()
    for k in range(len(p_load) - 1, 0, -1):
        p_down[parents[k - 1]] += p_down[k]
        q_down[parents[k - 1]] += q_down[k]
    drop = np.zeros(len(p_load))
    for k in range(1, len(p_load)):
        drop[k] = drop[parents[k - 1]] + r[k - 1] * p_down[k] + x[k - 1] * q_down[k]
    return float(drop.max())


def generate_radial_case(n_buses, seed=0, load_scale=0.05):
    """
    Random radial feeder built by sequential attachment.

    Bus k attaches to a uniformly chosen earlier bus. R and X are drawn
    uniformly from [0.005, 0.05] pu and loads from [0, load_scale] pu;
    the slack bus (id 1) carries no load and V1 = 1.

    Long feeders cannot deliver the full draw, so all loads share one
    factor c <= 1 that caps the worst linearized voltage drop at
    `load_scale` pu. c depends only on the seed, so for a fixed seed the
    loads stay proportional to `load_scale`.
    """
    if n_buses < 2:
        raise ValueError('A generated case needs at least two buses.')
    if load_scale < 0:
        raise ValueError('load_scale must be non-negative.')
    rng = np.random.default_rng(seed)
    parents = [int(rng.integers(0, k)) for k in range(1, n_buses)]
    r = rng.uniform(0.005, 0.05, n_buses - 1)
    x = rng.uniform(0.005, 0.05, n_buses - 1)
    p_unit = rng.uniform(0, 1, n_buses)
    q_unit = rng.uniform(0, 1, n_buses)
    p_unit[0] = q_unit[0] = 0.0
    drop = _worst_drop(parents, r, x, p_unit, q_unit)
    factor = load_scale * min(1.0, 1.0 / drop) if drop > 0 else load_scale
    ids = list(range(1, n_buses + 1))
    return NetworkCase(ids, factor * p_unit, factor * q_unit, [ids[p] for p in parents], ids[1:],
                       r, x, slack_id=1, slack_voltage=1.0)


class PowerFlowSolution(object):
    """
    Complex bus voltages from a power flow.

    Attributes
    ----------
    voltages : np.ndarray
        Complex voltage of every bus (pu), canonical order.
    line_currents : np.ndarray
        Complex current of every line, From to To.
    residual : float
        Maximum nodal power mismatch (pu).
    iterations : int
    converged : bool
    """
    def __init__(self, voltages, line_currents, residual, iterations, converged):
        self.voltages = voltages
        self.line_currents = line_currents
        self.residual = residual
        self.iterations = iterations
        self.converged = converged


def _backward(case, V):
    """Line currents from bus load currents, leaves first."""
    load = (case.p_load + 1j * case.q_load)[1:]
    J = np.conj(load / V[1:])
    for k in range(case.n_lines - 1, -1, -1):
        parent = case.from_bus[k]
        if parent > 0:
            J[parent - 1] += J[k]
    return J


def _mismatch(case, V, J):
    injection = np.zeros(case.n_buses, dtype=complex)
    np.add.at(injection, case.from_bus, J)
    np.add.at(injection, case.to_bus, -J)
    power = V * np.conj(injection)
    load = case.p_load + 1j * case.q_load
    return float(np.max(np.abs(power[1:] + load[1:]), initial=0.0))


def solve_power_flow(case, tolerance=SWEEP_TOLERANCE, max_iterations=SWEEP_MAX_ITERATIONS):
    """
    Backward/forward sweep power flow for a radial case.

    Parameters
    ----------
    case : gridfill.NetworkCase
    tolerance : float, optional
        Stop once no voltage moves by more than this (pu).
    max_iterations : int, optional

    Returns
    -------
    solution : gridfill.PowerFlowSolution
    """
    Z = case.r + 1j * case.x
    V = np.full(case.n_buses, case.slack_voltage, dtype=complex)
    change = np.inf
    for iteration in range(1, max_iterations + 1):
        J = _backward(case, V)
        V_new = V.copy()
        for k in range(case.n_lines):
            V_new[k + 1] = V_new[case.from_bus[k]] - Z[k] * J[k]
        if not np.all(np.isfinite(V_new)) or np.any(V_new == 0):
            raise NoSolutionError('Power flow diverged after {} iterations.'.format(iteration),
                                  residual=change)
        change = np.max(np.abs(V_new - V), initial=0.0)
        V = V_new
        if change < tolerance:
            break
    else:
        raise NoSolutionError('Power flow did not converge in {} iterations (last voltage '
                              'change {:.3g} pu).'.format(max_iterations, change), residual=change)

    J = case.admittance * (V[case.from_bus] - V[case.to_bus])
    mismatch = _mismatch(case, V, J)
    converged = mismatch <= MISMATCH_TOLERANCE
    if not converged:
        warnings.warn('Power flow mismatch {:.3g} pu exceeds {:.0e} pu.'
                      ''.format(mismatch, MISMATCH_TOLERANCE), category=GridfillWarning)
    return PowerFlowSolution(V, J, mismatch, iteration, converged)


class StateMatrix(object):
    """
    Block state matrix diag(M_b, M_l).

    Parameters
    ----------
    values : np.ndarray
        (n_buses + n_lines, 17).
    n_buses, n_lines : int

    Attributes
    ----------
    structural_zero_mask : np.ndarray
        True on the off-block entries, which are zero by construction.
    """
    def __init__(self, values, n_buses, n_lines):
        values = np.asarray(values, dtype=float)
        if values.shape != (n_buses + n_lines, N_COLUMNS):
            raise DimensionMismatchError('State matrix of shape {} does not fit {} buses and '
                                         '{} lines.'.format(values.shape, n_buses, n_lines))
        self.values = values
        self.n_buses = n_buses
        self.n_lines = n_lines

    @property
    def shape(self):
        return self.values.shape

    @property
    def structural_zero_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[:self.n_buses, P_FROM:] = True
        mask[self.n_buses:, :P_FROM] = True
        return mask

    @property
    def bus_block(self):
        return self.values[:self.n_buses, :P_FROM]

    @property
    def line_block(self):
        return self.values[self.n_buses:, P_FROM:]

    def voltages(self):
        return self.values[:self.n_buses, RE_V] + 1j * self.values[:self.n_buses, IM_V]


def structural_zero_entries(n_buses, n_lines):
    """((i, j), 0.0) for every off-block location."""
    mask = StateMatrix(np.zeros((n_buses + n_lines, N_COLUMNS)), n_buses, n_lines).structural_zero_mask
    return [((int(i), int(j)), 0.0) for i, j in zip(*np.nonzero(mask))]


def assemble_state_matrix(case, solution):
    """
    Fills the state matrix from a converged power flow.

    Line currents come from Ohm's law on the solved voltages, bus current
    injections from Kirchhoff's law, line-end powers from V conj(I), and
    losses from R|I|^2 and X|I|^2.
    """
    if not solution.converged:
        raise StaleSolutionError('The power flow did not converge; refusing to build a state.')
    V = np.asarray(solution.voltages, dtype=complex)
    J = case.admittance * (V[case.from_bus] - V[case.to_bus])
    I_bus = np.zeros(case.n_buses, dtype=complex)
    np.add.at(I_bus, case.from_bus, J)
    np.add.at(I_bus, case.to_bus, -J)
    S_bus = V * np.conj(I_bus)
    S_from = V[case.from_bus] * np.conj(J)
    S_to = -V[case.to_bus] * np.conj(J)

    M = np.zeros(case.shape)
    nb = case.n_buses
    M[:nb, P], M[:nb, Q] = S_bus.real, S_bus.imag
    M[:nb, RE_V], M[:nb, IM_V], M[:nb, ABS_V] = V.real, V.imag, np.abs(V)
    M[:nb, RE_I], M[:nb, IM_I], M[:nb, ABS_I] = I_bus.real, I_bus.imag, np.abs(I_bus)
    M[nb:, P_FROM], M[nb:, Q_FROM] = S_from.real, S_from.imag
    M[nb:, P_TO], M[nb:, Q_TO] = S_to.real, S_to.imag
    M[nb:, P_LOSS] = case.r * np.abs(J) ** 2
    M[nb:, Q_LOSS] = case.x * np.abs(J) ** 2
    M[nb:, LINE_RE_I], M[nb:, LINE_IM_I], M[nb:, LINE_ABS_I] = J.real, J.imag, np.abs(J)
    return StateMatrix(M, case.n_buses, case.n_lines)


def _constraint(shape, terms, value=0.0):
    rows, cols, coeffs = zip(*terms)
    A = sparse.coo_matrix((np.array(coeffs, dtype=float), (np.array(rows), np.array(cols))),
                          shape=shape)
    A.sum_duplicates()
    return LinearConstraint(A, float(value))


def _incident(case):
    """Outgoing and incoming line indices of every bus."""
    outgoing = [[] for _ in range(case.n_buses)]
    incoming = [[] for _ in range(case.n_buses)]
    for k in range(case.n_lines):
        outgoing[case.from_bus[k]].append(k)
        incoming[case.to_bus[k]].append(k)
    return outgoing, incoming


def physics_constraints(case):
    """
    Exact linear constraints of the state matrix, 4(n_b + n_l) rows.

    Emitted in this order, each with b = 0:
    line power loss (P then Q for every line), bus power balance
    (P then Q for every bus), Kirchhoff's current law (Re then Im for every
    bus) and Ohm's law (Re then Im for every line).
    """
    shape = case.shape
    line = case.line_row
    out, into = _incident(case)
    G, B = case.conductance, case.susceptance
    constraints = []

    for c_from, c_to, c_loss in ((P_FROM, P_TO, P_LOSS), (Q_FROM, Q_TO, Q_LOSS)):
        for k in range(case.n_lines):
            constraints.append(_constraint(shape, [(line(k), c_from, 1.0), (line(k), c_to, 1.0),
                                                   (line(k), c_loss, -1.0)]))

    for c_bus, c_from, c_to in ((P, P_FROM, P_TO), (Q, Q_FROM, Q_TO)):
        for s in range(case.n_buses):
            terms = [(s, c_bus, 1.0)]
            terms += [(line(k), c_from, -1.0) for k in out[s]]
            terms += [(line(k), c_to, -1.0) for k in into[s]]
            constraints.append(_constraint(shape, terms))

    for c_bus, c_line in ((RE_I, LINE_RE_I), (IM_I, LINE_IM_I)):
        for s in range(case.n_buses):
            terms = [(s, c_bus, -1.0)]
            terms += [(line(k), c_line, 1.0) for k in out[s]]
            terms += [(line(k), c_line, -1.0) for k in into[s]]
            constraints.append(_constraint(shape, terms))

    for k in range(case.n_lines):
        s, t = case.from_bus[k], case.to_bus[k]
        constraints.append(_constraint(shape, [
            (s, RE_V, G[k]), (t, RE_V, -G[k]), (s, IM_V, -B[k]), (t, IM_V, B[k]),
            (line(k), LINE_RE_I, -1.0)]))
    for k in range(case.n_lines):
        s, t = case.from_bus[k], case.to_bus[k]
        constraints.append(_constraint(shape, [
            (s, RE_V, B[k]), (t, RE_V, -B[k]), (s, IM_V, G[k]), (t, IM_V, -G[k]),
            (line(k), LINE_IM_I, -1.0)]))
    return constraints


def approx_constraints(case, printed_sign=False):
    """
    Linearized voltage drop along every line, n_l rows.

        |V_t| - |V_s| + (R (PFrom - PTo) / 2 + X (QFrom - QTo) / 2) / |V1| = 0

    The flow is the average of the two line-end injections. Power flowing
    from s to t lowers |V_t|, hence the plus sign. `printed_sign=True`
    flips the flow term for comparison with the other common statement of
    this relation. The default keeps the plus sign because only then is the
    residual on a true state quadratic in the line loading.
    """
    v1 = abs(case.slack_voltage)
    if v1 == 0:
        raise ValueError('Slack voltage magnitude must be nonzero.')
    sign = -1.0 if printed_sign else 1.0
    constraints = []
    for k in range(case.n_lines):
        s, t, row = case.from_bus[k], case.to_bus[k], case.line_row(k)
        a = sign * case.r[k] / (2 * v1)
        b = sign * case.x[k] / (2 * v1)
        constraints.append(_constraint(case.shape, [
            (t, ABS_V, 1.0), (s, ABS_V, -1.0),
            (row, P_FROM, a), (row, P_TO, -a), (row, Q_FROM, b), (row, Q_TO, -b)]))
    return constraints


def filter_constraints(constraints, observed):
    """
    Drops constraints whose every referenced entry is observed.

    Parameters
    ----------
    constraints : list of (A, b)
    observed : ObservationSet, boolean mask or iterable of (i, j)

    Returns
    -------
    kept : list of (A, b)
    dropped : int
    """
    constraints = list(constraints)
    if not constraints:
        return [], 0
    mask = observation_mask(list(observed) if isinstance(observed, set) else observed,
                            constraints[0][0].shape)
    kept = []
    for A, b in constraints:
        support = constraint_support(A)
        if not all(mask[i, j] for i, j in support):
            kept.append(LinearConstraint(A, b))
    return kept, len(constraints) - len(kept)


def residuals(case, state):
    """
    Largest absolute violation of every family of network equations.

    Returns
    -------
    out : dict
        Keys `line_power_loss`, `bus_power_balance`, `kirchhoff_current`,
        `ohms_law`, `line_power_injection`, `line_loss` and `magnitudes`.
        The bus power balance also compares P and Q of every non-slack bus
        against its load.
    """
    M = state.values if isinstance(state, StateMatrix) else np.asarray(state, dtype=float)
    if M.shape != case.shape:
        raise DimensionMismatchError('State of shape {} does not match case shape {}.'
                                     ''.format(M.shape, case.shape))
    nb = case.n_buses
    bus, lines = M[:nb], M[nb:]
    fb, tb = case.from_bus, case.to_bus
    G, B = case.conductance, case.susceptance

    def worst(*arrays):
        return float(max((np.max(np.abs(a), initial=0.0) for a in arrays), default=0.0))

    def per_bus(values, at):
        total = np.zeros(nb)
        np.add.at(total, at, values)
        return total

    out = {}
    out['line_power_loss'] = worst(lines[:, P_FROM] + lines[:, P_TO] - lines[:, P_LOSS],
                                   lines[:, Q_FROM] + lines[:, Q_TO] - lines[:, Q_LOSS])
    balance_p = bus[:, P] - per_bus(lines[:, P_FROM], fb) - per_bus(lines[:, P_TO], tb)
    balance_q = bus[:, Q] - per_bus(lines[:, Q_FROM], fb) - per_bus(lines[:, Q_TO], tb)
    out['bus_power_balance'] = worst(balance_p, balance_q,
                                     bus[1:, P] + case.p_load[1:], bus[1:, Q] + case.q_load[1:])
    kcl_re = per_bus(lines[:, LINE_RE_I], fb) - per_bus(lines[:, LINE_RE_I], tb) - bus[:, RE_I]
    kcl_im = per_bus(lines[:, LINE_IM_I], fb) - per_bus(lines[:, LINE_IM_I], tb) - bus[:, IM_I]
    out['kirchhoff_current'] = worst(kcl_re, kcl_im)
    d_re = bus[fb, RE_V] - bus[tb, RE_V]
    d_im = bus[fb, IM_V] - bus[tb, IM_V]
    out['ohms_law'] = worst(lines[:, LINE_RE_I] - (G * d_re - B * d_im),
                            lines[:, LINE_IM_I] - (B * d_re + G * d_im))
    re_i, im_i = lines[:, LINE_RE_I], lines[:, LINE_IM_I]
    out['line_power_injection'] = worst(
        lines[:, P_FROM] - (bus[fb, RE_V] * re_i + bus[fb, IM_V] * im_i),
        lines[:, Q_FROM] - (bus[fb, IM_V] * re_i - bus[fb, RE_V] * im_i),
        lines[:, P_TO] + (bus[tb, RE_V] * re_i + bus[tb, IM_V] * im_i),
        lines[:, Q_TO] + (bus[tb, IM_V] * re_i - bus[tb, RE_V] * im_i))
    out['line_loss'] = worst(lines[:, P_LOSS] - case.r * lines[:, LINE_ABS_I] ** 2,
                             lines[:, Q_LOSS] - case.x * lines[:, LINE_ABS_I] ** 2)
    out['magnitudes'] = worst(bus[:, ABS_V] - np.hypot(bus[:, RE_V], bus[:, IM_V]),
                              bus[:, ABS_I] - np.hypot(bus[:, RE_I], bus[:, IM_I]),
                              lines[:, LINE_ABS_I] - np.hypot(re_i, im_i))
    return out


def state_summary(case, state):
    """Polar bus voltages as an astropy Table (bus id, |V| in pu, angle in degrees)."""
    V = state.voltages() if isinstance(state, StateMatrix) else np.asarray(state.voltages)
    return Table([np.array([str(b) for b in case.bus_ids]), np.abs(V), np.degrees(np.angle(V))],
                 names=('bus', 'vm_pu', 'va_deg'))
