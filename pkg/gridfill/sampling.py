import time
import warnings
import numpy as np
from dataclasses import dataclass, asdict
from multiprocessing.pool import ThreadPool
from collections import namedtuple

from astropy.table import Table, vstack
from tqdm import tqdm

from .utils import *
from .subspace import (SubspaceT, truncated_svd, orthonormalize_constraints,
                       mu_Q_perp, nu_Q_perp, dual_certificate)
from .solver import (SolverConfig, assemble_affine, solve_nuclear, solve_least_squares,
                     exact_recovery)
from .powergrid import *

__all__ = ['ObservationSet', 'TrialResult', 'ExperimentGrid', 'SampleSearchResult',
           'ThresholdSummary', 'uniform_entries', 'permutation_order', 'bernoulli_entries',
           'grid_sample', 'generate_toy_instance', 'generate_tuned_constraints',
           'observation_system', 'min_samples_search', 'rmse_voltage', 'threshold_probability',
           'constraint_mix_sweep', 'grid_experiment', 'grid_tables',
           'constraint_deletion_sweep', 'recovery_trials', 'METHODS', 'TOY_SOLVER']

METHODS = ('nuclear', 'nuclear+const', 'nuclear+const+appx', 'least-squares')

# Looser than the library default; exactness is judged at 1e-3 relative.
TOY_SOLVER = SolverConfig(max_iterations=2000, primal_tolerance=1e-6, dual_tolerance=1e-6)

BUS_SAMPLE_COLUMNS = (P, Q, ABS_V, ABS_I)
LINE_SAMPLE_COLUMNS = (P_FROM, Q_FROM, P_TO, Q_TO, LINE_ABS_I)


class ObservationSet(object):
    """
    Ordered set of observed matrix locations.

    Parameters
    ----------
    entries : list of (i, j)
    shape : tuple
    provenance : str
        `uniform-prefix`, `bernoulli` or `grid`.
    units : list, optional
        For grid sampling, the sampled ('bus', s) and ('line', k) units.
    """
    def __init__(self, entries, shape, provenance, units=None):
        self.shape = tuple(shape)
        self.entries = [(int(i), int(j)) for i, j in entries]
        self.provenance = provenance
        self.units = list(units or [])
        if len(set(self.entries)) != len(self.entries):
            raise InvalidInputError('Observation set contains duplicate locations.')
        for i, j in self.entries:
            if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
                raise InvalidInputError('Location ({}, {}) lies outside shape {}.'
                                        ''.format(i, j, self.shape))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, item):
        return tuple(item) in set(self.entries)

    def mask(self):
        return observation_mask(self.entries, self.shape)

    def values(self, truth):
        """Binds the observed values from `truth`."""
        truth = truth.values if isinstance(truth, StateMatrix) else np.asarray(truth, dtype=float)
        return [((i, j), float(truth[i, j])) for i, j in self.entries]


def _eligible(shape, exclude):
    mask = np.ones(shape, dtype=bool)
    if exclude is not None:
        mask &= ~observation_mask(exclude, shape)
    rows, cols = np.nonzero(mask)
    return list(zip(rows.tolist(), cols.tolist()))


def permutation_order(shape, seed, exclude=None):
    """Every eligible location, shuffled by the seeded generator."""
    eligible = _eligible(shape, exclude)
    order = np.random.default_rng(seed).permutation(len(eligible))
    return [eligible[k] for k in order]


def uniform_entries(shape, m, seed=0, exclude=None):
    """
    First `m` locations of a seeded random permutation.

    The same seed always gives the same permutation, so a larger `m`
    extends a smaller one.

    Parameters
    ----------
    shape : tuple
    m : int
    seed : int, optional
    exclude : mask or list of (i, j), optional
        Locations never sampled, such as known structural zeros.
    """
    order = permutation_order(shape, seed, exclude)
    if not 0 <= m <= len(order):
        raise ValueError('m = {} is outside [0, {}].'.format(m, len(order)))
    return ObservationSet(order[:m], shape, 'uniform-prefix')


def bernoulli_entries(shape, m, seed=0):
    """Each location observed independently with p = m / (n1 n2)."""
    total = shape[0] * shape[1]
    if not 0 <= m <= total:
        raise ValueError('m = {} is outside [0, {}].'.format(m, total))
    draws = np.random.default_rng(seed).random(shape)
    rows, cols = np.nonzero(draws < m / total)
    return ObservationSet(zip(rows, cols), shape, 'bernoulli')


def _grid_size(state):
    if isinstance(state, (StateMatrix, NetworkCase)):
        return state.n_buses, state.n_lines
    return tuple(state)


def grid_sample(state, fraction, seed=0, pmu_buses=(0,)):
    """
    Samples buses and lines of a network, seeded with PMU buses.

    PMU buses reveal their whole bus row. The remaining buses and all
    lines are shuffled and the first ceil(fraction * units) are measured:
    a bus exposes P, Q, |V| and |I|; a line exposes PFrom, QFrom, PTo, QTo
    and |I|. Complex parts and losses are never exposed.

    Parameters
    ----------
    state : StateMatrix, NetworkCase or (n_buses, n_lines)
    fraction : float
        In [0, 1].
    seed : int, optional
    pmu_buses : list of int, optional
        Canonical bus indices (0 is the slack bus).
    """
    if not 0 <= fraction <= 1:
        raise ValueError('fraction must lie in [0, 1].')
    n_buses, n_lines = _grid_size(state)
    pmu_buses = sorted(set(int(s) for s in pmu_buses))
    if any(not 0 <= s < n_buses for s in pmu_buses):
        raise ValueError('PMU buses must be in [0, {}).'.format(n_buses))

    units = [('bus', s) for s in range(n_buses) if s not in pmu_buses]
    units += [('line', k) for k in range(n_lines)]
    order = np.random.default_rng(seed).permutation(len(units))
    count = int(np.ceil(round(fraction * len(units), 9)))
    chosen = [units[k] for k in order[:count]]

    entries = [(s, c) for s in pmu_buses for c in range(P_FROM)]
    for kind, index in chosen:
        if kind == 'bus':
            entries += [(index, c) for c in BUS_SAMPLE_COLUMNS]
        else:
            entries += [(n_buses + index, c) for c in LINE_SAMPLE_COLUMNS]
    return ObservationSet(entries, (n_buses + n_lines, N_COLUMNS), 'grid', units=chosen)


def generate_toy_instance(n1, n2, r, seed=0):
    """Rank-r truncation of a U(0, 1) random n1 x n2 matrix."""
    draws = np.random.default_rng(seed).uniform(0, 1, (n1, n2))
    return truncated_svd(draws, r=r).reconstruct()


def generate_tuned_constraints(M, r, count=None, mix=1.0, seed=0):
    """
    Random constraints with a chosen share in T.

    Every constraint matrix is mix * P_T(A) + (1 - mix) * P_T_perp(A) for a
    U(0, 1) matrix A, and b is its inner product with M.

    Parameters
    ----------
    M : np.ndarray
        Rank-r truth.
    r : int
    count : int, optional
        Defaults to r(n1 + n2 - r), enough to span T when `mix` is 1.
    mix : float, optional
        In [0, 1].
    seed : int, optional

    Returns
    -------
    constraints : list of LinearConstraint
    """
    if not 0 <= mix <= 1:
        raise ValueError('mix must lie in [0, 1].')
    M = np.asarray(M, dtype=float)
    T = SubspaceT(truncated_svd(M, r=r))
    count = T.dim_T if count is None else int(count)
    if count < 1:
        raise ValueError('count must be at least 1.')
    rng = np.random.default_rng(seed)
    constraints = []
    for _ in range(count):
        A = rng.uniform(0, 1, M.shape)
        tuned = mix * T.project(A) + (1 - mix) * T.project_perp(A)
        constraints.append(LinearConstraint(tuned, float(np.sum(tuned * M))))
    return constraints


def observation_system(truth, entries, constraints=(), known_entries=()):
    """AffineSystem from observed locations of `truth` plus prior knowledge."""
    truth = truth.values if isinstance(truth, StateMatrix) else np.asarray(truth, dtype=float)
    values = [((i, j), float(truth[i, j])) for i, j in entries]
    return assemble_affine(list(known_entries) + values, constraints, truth.shape)


def _solve(system, method, config):
    if method == 'least-squares':
        return solve_least_squares(system)
    return solve_nuclear(system, config=config)


SampleSearchResult = namedtuple('SampleSearchResult',
                                ['minimum_samples', 'sample_counts', 'success', 'thresholds',
                                 'saturated'])
SampleSearchResult.__doc__ = """Outcome of `min_samples_search`.

minimum_samples is -1 when the target was never reached; thresholds holds
each trial's smallest recovering m (inf if none)."""


def _trial_threshold(truth, order, constraints, known, method, config, tolerance, stride):
    """Smallest prefix length of `order` that recovers `truth`.

    Recovery is monotone along a prefix, so a doubling phase followed by
    bisection gives the unit-resolution answer.
    """
    def recovered(m):
        try:
            system = observation_system(truth, order[:m], constraints, known)
            return exact_recovery(_solve(system, method, config).solution, truth, tolerance)
        except InfeasibleSystemError:
            return False

    total = len(order)
    if recovered(0):
        return 0
    low, high = 0, min(stride, total)
    while not recovered(high):
        if high == total:
            return np.inf
        low, high = high, min(2 * high, total)
    while high - low > 1:
        middle = (low + high) // 2
        if recovered(middle):
            high = middle
        else:
            low = middle
    return high


def min_samples_search(truth, constraints=(), target_success=0.9, trials=100, tolerance=1e-3,
                       method='nuclear', config=None, base_seed=0, exclude=None,
                       known_entries=(), stride=1, jobs=1, progress=False):
    """
    Smallest sample count that recovers `truth` in `target_success` of trials.

    Trial k draws one permutation of the eligible locations with seed
    `base_seed + k` and finds the shortest recovering prefix. The success
    curve at m is the fraction of trials whose threshold is at most m.

    Parameters
    ----------
    truth : np.ndarray
    constraints : list of (A, b), optional
    target_success : float, optional
    trials : int, optional
    tolerance : float, optional
        Relative Frobenius tolerance for exact recovery.
    method : str, optional
        `nuclear` or `least-squares`.
    config : gridfill.SolverConfig, optional
    exclude : mask or list of (i, j), optional
        Locations never sampled.
    known_entries : list of ((i, j), value), optional
        Entries fixed in every system without counting as samples.
    stride : int, optional
        First step of the doubling phase.
    jobs : int, optional
        Worker threads.
    progress : bool, optional

    Returns
    -------
    result : gridfill.SampleSearchResult
    """
    if trials < 1:
        raise ValueError('trials must be at least 1.')
    truth = np.asarray(truth, dtype=float)
    config = config or TOY_SOLVER
    if target_success <= 0:
        return SampleSearchResult(0, np.array([0]), np.array([1.0]), np.zeros(0), False)

    def run(k):
        order = permutation_order(truth.shape, base_seed + k, exclude)
        return _trial_threshold(truth, order, constraints, known_entries, method, config,
                                tolerance, max(1, int(stride)))

    # Worker threads share the process-wide filter list, so it is only touched here.
    with warnings.catch_warnings(), ThreadPool(processes=max(1, int(jobs))) as pool:
        warnings.simplefilter('ignore', GridfillWarning)
        thresholds = np.array(list(tqdm(pool.imap(run, range(trials)), total=trials,
                                        disable=not progress)), dtype=float)

    finite = thresholds[np.isfinite(thresholds)]
    top = int(finite.max()) if finite.size else 0
    sample_counts = np.arange(top + 1)
    success = np.array([np.mean(thresholds <= m) for m in sample_counts])

    needed = int(np.ceil(round(target_success * trials, 9)))
    ordered = np.sort(thresholds)
    saturated = needed > trials or not np.isfinite(ordered[needed - 1])
    if saturated:
        warnings.warn('Target success {} was not reached even with every location '
                      'observed.'.format(target_success), category=GridfillWarning)
        minimum = -1
    else:
        minimum = int(ordered[needed - 1])
    return SampleSearchResult(minimum, sample_counts, success, thresholds, saturated)


def _state_and_buses(state):
    if isinstance(state, StateMatrix):
        return state.values, state.n_buses
    raise TypeError('Expected a StateMatrix.')


def rmse_voltage(estimate, truth, omega):
    """
    Voltage errors over the unobserved buses.

    Returns
    -------
    mag_rmse : float
        RMSE of |V| (pu) over buses whose |V| entry is unobserved.
    ang_rmse : float
        RMSE of the voltage angle (degrees) over buses whose ReV or ImV
        entry is unobserved, with differences wrapped into (-180, 180].

    Either value is NaN, with a warning, when no bus qualifies.
    """
    est, n_buses = _state_and_buses(estimate)
    true, _ = _state_and_buses(truth)
    if est.shape != true.shape:
        raise DimensionMismatchError('Estimate {} and truth {} differ in shape.'
                                     ''.format(est.shape, true.shape))
    mask = observation_mask(omega, true.shape)[:n_buses]

    magnitude = ~mask[:, ABS_V]
    if magnitude.any():
        mag = np.sqrt(np.mean((est[:n_buses, ABS_V][magnitude] - true[:n_buses, ABS_V][magnitude]) ** 2))
    else:
        warnings.warn('Every voltage magnitude is observed; magnitude RMSE is undefined.',
                      category=GridfillWarning)
        mag = np.nan

    angle = ~(mask[:, RE_V] & mask[:, IM_V])
    if angle.any():
        est_deg = np.degrees(np.arctan2(est[:n_buses, IM_V], est[:n_buses, RE_V]))
        true_deg = np.degrees(np.arctan2(true[:n_buses, IM_V], true[:n_buses, RE_V]))
        d = (est_deg - true_deg)[angle]
        d = -((-d + 180) % 360 - 180)
        ang = np.sqrt(np.mean(d ** 2))
    else:
        warnings.warn('Every complex voltage is observed; angle RMSE is undefined.',
                      category=GridfillWarning)
        ang = np.nan
    return float(mag), float(ang)


@dataclass
class TrialResult:
    """One solve in a sampling experiment.

    An infeasible solve has `infeasible` set and NaN errors; it counts as
    a failure in every summary.
    """
    seed: int
    samples: int
    method: str
    recovered: bool
    relative_error: float
    mag_rmse: float = np.nan
    ang_rmse: float = np.nan
    wall_time: float = np.nan
    fraction: float = np.nan
    infeasible: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentGrid:
    """Sweep axes of an experiment; rows are produced in axis order."""
    fractions: tuple = (0.15, 0.2, 0.3)
    methods: tuple = METHODS
    trials: int = 20
    base_seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError('trials must be at least 1.')
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError('Unknown methods: {}'.format(sorted(unknown)))
        if any(not 0 <= f <= 1 for f in self.fractions):
            raise ValueError('fractions must lie in [0, 1].')

    def points(self):
        for fraction in self.fractions:
            for k in range(self.trials):
                yield fraction, self.base_seed + k


ThresholdSummary = namedtuple('ThresholdSummary', ['mag_fraction', 'ang_fraction', 'cdf'])


def threshold_probability(results, mag_threshold=1e-4, ang_threshold=5e-5):
    """
    Share of trials whose voltage RMSE is at most each threshold.

    Infeasible trials count as failures. Feasible trials with an undefined
    (NaN) RMSE, where every voltage was observed, are left out of that
    metric.

    Returns
    -------
    summary : gridfill.ThresholdSummary
        `cdf` is an astropy Table of (metric, value, cdf) rows, the
        empirical distribution of each RMSE. It stays below 1 when some
        trials were infeasible.
    """
    results = list(results)
    if not results:
        raise ValueError('No trial results given.')
    failed = sum(1 for t in results if t.infeasible)
    rows = []
    fractions = []
    for metric, threshold in (('mag_rmse', mag_threshold), ('ang_rmse', ang_threshold)):
        values = np.array([getattr(t, metric) for t in results if not t.infeasible], dtype=float)
        values = np.sort(values[np.isfinite(values)])
        total = values.size + failed
        fractions.append(float(np.sum(values <= threshold)) / total if total else np.nan)
        for k, value in enumerate(values):
            rows.append((metric, value, (k + 1) / total))
    cdf = Table(names=('metric', 'value', 'cdf'), dtype=('U8', float, float))
    for row in rows:
        cdf.add_row(row)
    return ThresholdSummary(fractions[0], fractions[1], cdf)


def constraint_mix_sweep(n1=40, n2=10, r=2, mixes=(0, 0.25, 0.5, 0.75, 1), count=None,
                         target_success=0.9, trials=100, seed=0, tolerance=1e-3, config=None,
                         include_baseline=True, jobs=1, progress=False):
    """
    Minimum sample size against the share of the constraints lying in T.

    Every mix reuses the same truth, the same raw constraint draws and the
    same permutation streams, so rows differ only through the mix.

    Returns
    -------
    table : astropy.table.Table
        Columns label, mix, mu_Q_perp, nu_Q_perp, constraints,
        minimum_samples (-1 if never reached) and saturated.
    """
    if any(not 0 <= mix <= 1 for mix in mixes):
        raise ValueError('mixes must lie in [0, 1].')
    truth = generate_toy_instance(n1, n2, r, seed)
    factors = truncated_svd(truth, r=r)
    T = SubspaceT(factors)
    rows = []
    if include_baseline:
        result = min_samples_search(truth, (), target_success, trials, tolerance, config=config,
                                    base_seed=seed, jobs=jobs, progress=progress)
        rows.append(('none', np.nan, 1.0, 1.0, 0, result.minimum_samples, result.saturated))
    for mix in mixes:
        constraints = generate_tuned_constraints(truth, r, count, mix, seed)
        Q = orthonormalize_constraints(constraints, shape=truth.shape)
        result = min_samples_search(truth, constraints, target_success, trials, tolerance,
                                    config=config, base_seed=seed, jobs=jobs, progress=progress)
        rows.append(('tuned', float(mix), mu_Q_perp(T, Q), nu_Q_perp(factors, Q),
                     len(constraints), result.minimum_samples, result.saturated))
    return Table(rows=rows, names=('label', 'mix', 'mu_Q_perp', 'nu_Q_perp', 'constraints',
                                   'minimum_samples', 'saturated'),
                 dtype=('U5', float, float, float, int, int, bool))


def _grid_trial(state, physics, approx, fraction, seed, pmu_buses, methods, known,
                config, tolerance, record_timing):
    omega = grid_sample(state, fraction, seed, pmu_buses)
    results = []
    for method in methods:
        start = time.perf_counter()
        try:
            system = observation_system(state, omega.entries,
                                        [] if method == 'nuclear' else physics, known)
            if method == 'nuclear+const+appx':
                # Rows already implied by the exact system would contradict it.
                extra, _ = system.independent_subset(filter_constraints(approx, omega)[0])
                system = system.extended(extra)
            estimate = _solve(system, method, config).solution
        except InfeasibleSystemError:
            results.append(TrialResult(seed, len(omega), method, False, np.nan,
                                       fraction=fraction, infeasible=True))
            continue
        elapsed = time.perf_counter() - start if record_timing else np.nan
        error = np.linalg.norm(estimate - state.values) / np.linalg.norm(state.values)
        mag, ang = rmse_voltage(StateMatrix(estimate, state.n_buses, state.n_lines),
                                state, omega)
        results.append(TrialResult(seed, len(omega), method, bool(error <= tolerance), error,
                                   mag, ang, elapsed, fraction))
    return results


def grid_experiment(case, fractions=(0.15, 0.2, 0.3), trials=20, methods=METHODS,
                    pmu_buses=None, seed=0, config=None, tolerance=1e-3,
                    structural_zeros=True, record_timing=False, jobs=1, progress=False):
    """
    Grid state estimation trials over sampling fractions and methods.

    The power flow of `case` gives the true state. For every fraction and
    trial seed one grid sample is drawn and every method solves the same
    sample: `nuclear` uses no constraints, `nuclear+const` the physics
    constraints, `nuclear+const+appx` adds the linearized voltage drops that
    touch an unobserved entry and are not already implied by the rest, and
    `least-squares` takes the minimum-norm point under the physics
    constraints.

    Parameters
    ----------
    case : gridfill.NetworkCase
    fractions : list of float, optional
    trials : int, optional
    methods : list of str, optional
    pmu_buses : list of int, optional
        Canonical indices; defaults to the slack bus and the middle bus.
    seed : int, optional
        Trial k uses seed + k.
    structural_zeros : bool, optional
        Fix the off-block zeros as known entries.
    record_timing : bool, optional
        Fill `wall_time`; left NaN otherwise so output files reproduce.

    Returns
    -------
    results : list of gridfill.TrialResult
        Ordered by fraction, then trial, then method. Infeasible solves
        are kept with `infeasible` set.
    """
    grid = ExperimentGrid(tuple(fractions), tuple(methods), trials, seed)
    config = config or SolverConfig()
    if pmu_buses is None:
        pmu_buses = (0, case.n_buses // 2)
    state = assemble_state_matrix(case, solve_power_flow(case))
    physics = physics_constraints(case)
    approx = approx_constraints(case)
    known = structural_zero_entries(case.n_buses, case.n_lines) if structural_zeros else []

    def run(point):
        fraction, trial_seed = point
        return _grid_trial(state, physics, approx, fraction, trial_seed, pmu_buses,
                           grid.methods, known, config, tolerance, record_timing)

    points = list(grid.points())
    with warnings.catch_warnings(), ThreadPool(processes=max(1, int(jobs))) as pool:
        warnings.simplefilter('ignore', GridfillWarning)
        batches = list(tqdm(pool.imap(run, points), total=len(points), disable=not progress))
    results = [result for batch in batches for result in batch]

    failed = sum(r.infeasible for r in results)
    if failed:
        warnings.warn('{} of {} solves were infeasible and count as failures.'
                      ''.format(failed, len(results)), category=GridfillWarning)
    return results


def grid_tables(results, mag_threshold=1e-4, ang_threshold=5e-5):
    """
    Tables for a list of grid TrialResults.

    Medians compare the methods on matched trials: a (fraction, seed) pair
    where any method was infeasible is left out of every method's median,
    and `n_infeasible` reports how many solves failed that way.

    Returns
    -------
    trials : astropy.table.Table
        One row per result.
    summary : astropy.table.Table
        Per (fraction, method): trial and infeasible counts, the number of
        matched trials, median RMSEs over them and threshold probabilities.
    cdf : astropy.table.Table
        Empirical CDF rows per (fraction, method).
    """
    trials = Table(rows=[tuple(asdict(r).values()) for r in results],
                   names=tuple(TrialResult.__dataclass_fields__),
                   dtype=(int, int, 'U18', bool, float, float, float, float, float, bool))
    frame = trials.to_pandas()
    unmatched = frame.groupby(['fraction', 'seed'])['infeasible'].transform('any')
    matched = frame[~unmatched.astype(bool)]

    summary_rows, cdf_tables = [], []
    for (fraction, method), group in frame.groupby(['fraction', 'method'], sort=False):
        subset = [r for r in results if r.fraction == fraction and r.method == method]
        paired = matched[(matched['fraction'] == fraction) & (matched['method'] == method)]
        probability = threshold_probability(subset, mag_threshold, ang_threshold)
        summary_rows.append((fraction, method, len(subset), int(group['infeasible'].sum()),
                             len(paired), float(group['recovered'].mean()),
                             float(paired['mag_rmse'].median()),
                             float(paired['ang_rmse'].median()),
                             probability.mag_fraction, probability.ang_fraction))
        cdf = probability.cdf
        cdf['fraction'] = np.full(len(cdf), fraction)
        cdf['method'] = np.full(len(cdf), method, dtype='U18')
        cdf_tables.append(cdf[['fraction', 'method', 'metric', 'value', 'cdf']])
    summary = Table(rows=summary_rows,
                    names=('fraction', 'method', 'trials', 'n_infeasible', 'matched',
                           'recovered', 'median_mag_rmse', 'median_ang_rmse', 'mag_below',
                           'ang_below'),
                    dtype=(float, 'U18', int, int, int, float, float, float, float, float))
    cdf = vstack(cdf_tables) if cdf_tables else Table()
    return trials, summary, cdf


def constraint_deletion_sweep(case, fraction=0.2, keep_fractions=(1.0, 0.8, 0.6, 0.4, 0.2, 0.0),
                              trials=5, seed=0, r=None, rank_tolerance=1e-6, pmu_buses=None,
                              config=None, tolerance=1e-3, jobs=1, progress=False):
    """
    Randomly deletes physics constraints and records coverage against success.

    For each kept share and trial seed the physics constraints are shuffled,
    a prefix is kept, and one nuclear-norm solve on a grid sample follows.

    Returns
    -------
    table : astropy.table.Table
        Columns seed, keep_fraction, constraints, mu_Q_perp, nu_Q_perp,
        recovered, relative_error, mag_rmse.
    """
    config = config or SolverConfig()
    if pmu_buses is None:
        pmu_buses = (0, case.n_buses // 2)
    state = assemble_state_matrix(case, solve_power_flow(case))
    factors = truncated_svd(state.values, r=r, rank_tolerance=rank_tolerance)
    T = SubspaceT(factors)
    physics = physics_constraints(case)
    known = structural_zero_entries(case.n_buses, case.n_lines)

    def run(point):
        keep, trial_seed = point
        order = np.random.default_rng(trial_seed).permutation(len(physics))
        kept = [physics[k] for k in sorted(order[:int(round(keep * len(physics)))])]
        Q = orthonormalize_constraints(kept, shape=state.shape)
        omega = grid_sample(state, fraction, trial_seed, pmu_buses)
        estimate = solve_nuclear(observation_system(state, omega.entries, kept, known),
                                 config=config).solution
        mag, _ = rmse_voltage(StateMatrix(estimate, state.n_buses, state.n_lines), state, omega)
        error = np.linalg.norm(estimate - state.values) / np.linalg.norm(state.values)
        return (trial_seed, keep, len(kept), mu_Q_perp(T, Q, method='trace'),
                nu_Q_perp(factors, Q), bool(error <= tolerance), error, mag)

    points = [(keep, seed + k) for keep in keep_fractions for k in range(trials)]
    with warnings.catch_warnings(), ThreadPool(processes=max(1, int(jobs))) as pool:
        warnings.simplefilter('ignore', GridfillWarning)
        rows = list(tqdm(pool.imap(run, points), total=len(points), disable=not progress))
    return Table(rows=rows, names=('seed', 'keep_fraction', 'constraints', 'mu_Q_perp',
                                   'nu_Q_perp', 'recovered', 'relative_error', 'mag_rmse'),
                 dtype=(int, float, int, float, float, bool, float, float))


def recovery_trials(n1=10, n2=6, r=2, samples=40, trials=20, seed=0, q=0.0, constraints=0,
                    mix=1.0, tolerance=1e-3, config=None):
    """
    Checks the dual certificate against actual recovery on random instances.

    Each trial draws a toy truth, `samples` uniform entries and optionally
    `constraints` tuned constraints, builds the candidate certificate, and
    solves the completion problem.

    Returns
    -------
    table : astropy.table.Table
        Columns seed, invertible, passes, spectral_norm_T_perp, pt_residual,
        sampling_injective, recovered, relative_error.
    """
    config = config or SolverConfig()
    rows = []
    for k in range(trials):
        trial_seed = seed + k
        truth = generate_toy_instance(n1, n2, r, trial_seed)
        T = SubspaceT(truncated_svd(truth, r=r))
        linear = generate_tuned_constraints(truth, r, constraints, mix, trial_seed) \
            if constraints else []
        Q = orthonormalize_constraints(linear, shape=truth.shape)
        omega = uniform_entries(truth.shape, samples, trial_seed)
        try:
            certificate = dual_certificate(T, omega, Q, q)
            invertible = True
            spectral, residual = certificate.spectral_norm_T_perp, certificate.pt_residual
            passes, injective = certificate.passes, certificate.sampling_injective
        except NotInvertibleError:
            invertible, passes, injective = False, False, False
            spectral = residual = np.nan
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', GridfillWarning)
            estimate = solve_nuclear(observation_system(truth, omega.entries, linear),
                                     config=config).solution
        error = np.linalg.norm(estimate - truth) / np.linalg.norm(truth)
        rows.append((trial_seed, invertible, passes, spectral, residual, injective,
                     bool(error <= tolerance), error))
    return Table(rows=rows, names=('seed', 'invertible', 'passes', 'spectral_norm_T_perp',
                                   'pt_residual', 'sampling_injective', 'recovered',
                                   'relative_error'),
                 dtype=(int, bool, bool, float, float, bool, bool, float))
