import os
import warnings
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from ..sampling import *
from ..subspace import SubspaceT, truncated_svd
from ..powergrid import *
from ..utils import *

FEEDER = os.path.join(os.path.dirname(__file__), 'data', 'feeder4.json')


def test_uniform_prefix():
    """Does a larger sample extend a smaller one drawn with the same seed?"""
    small = uniform_entries((6, 4), 5, seed=11)
    large = uniform_entries((6, 4), 17, seed=11)
    assert(large.entries[:5] == small.entries)
    assert(len(set(large.entries)) == 17)
    assert(uniform_entries((6, 4), 5, seed=12).entries != small.entries)
    exclude = [(0, 0), (1, 1)]
    full = uniform_entries((6, 4), 22, seed=0, exclude=exclude)
    assert(not set(exclude) & set(full.entries))
    with pytest.raises(ValueError):
        uniform_entries((6, 4), 23, seed=0, exclude=exclude)
    assert(full.mask().sum() == 22)


def test_bernoulli_cardinality():
    shape, m, seeds = (20, 10), 50, 1000
    sizes = np.array([len(bernoulli_entries(shape, m, seed)) for seed in range(seeds)])
    p = m / 200
    sigma = np.sqrt(200 * p * (1 - p) / seeds)
    assert(abs(sizes.mean() - m) <= 3 * sigma)
    with pytest.raises(ValueError):
        bernoulli_entries(shape, 201)


def test_observation_set():
    omega = ObservationSet([(0, 1), (2, 0)], (3, 2), 'uniform-prefix')
    assert((0, 1) in omega)
    assert(omega.values(np.arange(6.0).reshape(3, 2)) == [((0, 1), 1.0), ((2, 0), 4.0)])
    with pytest.raises(InvalidInputError):
        ObservationSet([(0, 1), (0, 1)], (3, 2), 'grid')
    with pytest.raises(InvalidInputError):
        ObservationSet([(3, 0)], (3, 2), 'grid')


def test_grid_sample():
    case = generate_radial_case(10, seed=2)
    pmu_only = grid_sample(case, 0.0, seed=1, pmu_buses=(0, 4))
    assert(len(pmu_only) == 2 * 8)
    everything = grid_sample(case, 1.0, seed=1, pmu_buses=(0, 4))
    assert(len(everything) == 16 + 8 * 4 + 9 * 5)
    mask = everything.mask()
    assert(not mask[1, RE_V] and not mask[1, IM_V])
    assert(not mask[case.n_buses:, P_LOSS].any())
    assert(mask[case.n_buses:, LINE_ABS_I].all())

    half = grid_sample(case, 0.5, seed=3)
    assert(len(half.units) == int(np.ceil(0.5 * 18)))
    assert(grid_sample(case, 0.5, seed=3).entries == half.entries)
    with pytest.raises(ValueError):
        grid_sample(case, 1.5)
    with pytest.raises(ValueError):
        grid_sample(case, 0.5, pmu_buses=(10,))


def test_grid_sample_counts():
    """Is the number of measured units ceil(fraction * units) on a long feeder?"""
    omega = grid_sample((141, 140), 0.22, seed=5, pmu_buses=(0, 79))
    assert(len(omega.units) == 62)
    buses = sum(1 for kind, _ in omega.units if kind == 'bus')
    lines = len(omega.units) - buses
    assert(len(omega) == 2 * 8 + 4 * buses + 5 * lines)
    assert(all(index not in (0, 79) for kind, index in omega.units if kind == 'bus'))


def test_toy_instances():
    M = generate_toy_instance(12, 6, 2, seed=5)
    assert(np.linalg.matrix_rank(M, tol=1e-8 * np.linalg.norm(M, 2)) == 2)
    T = SubspaceT(truncated_svd(M, r=2))
    constraints = generate_tuned_constraints(M, 2, count=4, mix=1.0, seed=1)
    for A, b in constraints:
        assert_allclose(T.project(A), A, atol=1e-12)
        assert_almost_equal(b, np.sum(A * M))
    assert(len(generate_tuned_constraints(M, 2)) == T.dim_T)
    with pytest.raises(ValueError):
        generate_tuned_constraints(M, 2, mix=1.5)


def test_min_samples_search():
    M = generate_toy_instance(8, 5, 1, seed=0)
    result = min_samples_search(M, trials=3, jobs=2)
    assert(0 < result.minimum_samples <= 40)
    assert(np.all(np.isfinite(result.thresholds)))
    assert(np.all(np.diff(result.success) >= 0))
    assert(result.success[-1] == 1.0)
    assert(not result.saturated)
    assert(min_samples_search(M, target_success=0, trials=3).minimum_samples == 0)


def test_full_coverage_needs_no_samples():
    """With constraints spanning T, is the truth recovered from zero samples?"""
    M = generate_toy_instance(8, 5, 1, seed=1)
    constraints = generate_tuned_constraints(M, 1, mix=1.0, seed=2)
    result = min_samples_search(M, constraints, trials=2)
    assert(result.minimum_samples == 0)


def make_state(angle_estimate, angle_truth):
    def state(angle):
        values = np.zeros((3, N_COLUMNS))
        values[0, RE_V], values[0, ABS_V] = 1.0, 1.0
        values[1, RE_V] = np.cos(np.deg2rad(angle))
        values[1, IM_V] = np.sin(np.deg2rad(angle))
        values[1, ABS_V] = 1.0
        return StateMatrix(values, 2, 1)
    return state(angle_estimate), state(angle_truth)


def test_rmse_voltage():
    estimate, truth = make_state(179.0, -179.0)
    mag, ang = rmse_voltage(estimate, truth, [])
    assert_almost_equal(mag, 0.0)
    assert_almost_equal(ang, np.sqrt(2.0))
    observed = [(s, c) for s in range(2) for c in (RE_V, IM_V, ABS_V)]
    with pytest.warns(GridfillWarning):
        mag, ang = rmse_voltage(estimate, truth, observed)
    assert(np.isnan(mag) and np.isnan(ang))


def test_rmse_voltage_magnitude():
    estimate, truth = make_state(10.0, 10.0)
    estimate.values[1, ABS_V] = 1.01
    observed = [(0, RE_V), (0, IM_V), (0, ABS_V)]
    mag, ang = rmse_voltage(estimate, truth, observed)
    assert_almost_equal(mag, 0.01)
    assert_almost_equal(ang, 0.0)
    mag, _ = rmse_voltage(estimate, truth, [])
    assert_almost_equal(mag, 0.01 / np.sqrt(2))


def test_threshold_probability():
    results = [TrialResult(0, 10, 'nuclear', True, 0.0, 1e-5, 1e-6),
               TrialResult(1, 10, 'nuclear', False, 0.1, 1e-3, 1e-6),
               TrialResult(2, 10, 'nuclear', False, np.nan, np.nan, np.nan)]
    summary = threshold_probability(results)
    assert_almost_equal(summary.mag_fraction, 0.5)
    assert_almost_equal(summary.ang_fraction, 1.0)
    assert(len(summary.cdf) == 4)
    assert_almost_equal(summary.cdf['cdf'][1], 1.0)
    with pytest.raises(ValueError):
        threshold_probability([])


def test_threshold_probability_infeasible():
    """Does an infeasible trial count against the threshold and hold the CDF below 1?"""
    results = [TrialResult(0, 10, 'nuclear+const+appx', True, 0.0, 1e-5, 1e-6),
               TrialResult(1, 10, 'nuclear+const+appx', False, np.nan, infeasible=True)]
    summary = threshold_probability(results)
    assert_almost_equal(summary.mag_fraction, 0.5)
    assert_almost_equal(summary.ang_fraction, 0.5)
    assert_allclose(summary.cdf['cdf'], [0.5, 0.5])
    failed = threshold_probability(results[1:])
    assert_almost_equal(failed.mag_fraction, 0.0)
    assert(len(failed.cdf) == 0)


def synthetic_results():
    rows = []
    for seed, (nuclear, appx) in enumerate([(2e-4, 1e-5), (4e-4, None), (6e-4, 3e-5)]):
        rows.append(TrialResult(seed, 10, 'nuclear', False, 0.1, nuclear, nuclear, fraction=0.2))
        if appx is None:
            rows.append(TrialResult(seed, 10, 'nuclear+const+appx', False, np.nan,
                                    fraction=0.2, infeasible=True))
        else:
            rows.append(TrialResult(seed, 10, 'nuclear+const+appx', True, 1e-4, appx, appx,
                                    fraction=0.2))
    return rows


def test_grid_tables_matched_medians():
    """Are medians taken only over trials where every method was feasible?"""
    trials, summary, cdf = grid_tables(synthetic_results())
    assert(len(trials) == 6)
    assert(list(trials['infeasible']) == [False, False, False, True, False, False])
    assert(list(summary['method']) == ['nuclear', 'nuclear+const+appx'])
    assert(list(summary['trials']) == [3, 3])
    assert(list(summary['n_infeasible']) == [0, 1])
    assert(list(summary['matched']) == [2, 2])
    assert_almost_equal(summary['median_mag_rmse'][0], 4e-4)
    assert_almost_equal(summary['median_mag_rmse'][1], 2e-5)
    assert_almost_equal(summary['mag_below'][1], 2 / 3)
    assert_almost_equal(summary['recovered'][1], 2 / 3)
    appx = cdf[cdf['method'] == 'nuclear+const+appx']
    assert(np.max(appx['cdf']) < 1)


def test_implied_approximation_rows_are_skipped():
    """Is a linearized drop already fixed by the exact equations left out of the system?"""
    case = load_case(FEEDER)
    state = assemble_state_matrix(case, solve_power_flow(case))
    hidden = (case.n_buses, P_FROM)
    entries = [(i, j) for i in range(state.shape[0]) for j in range(N_COLUMNS) if (i, j) != hidden]
    system = observation_system(state, entries, physics_constraints(case))
    approx, dropped = filter_constraints(approx_constraints(case), entries)
    assert(len(approx) == 1 and dropped == 2)
    with pytest.raises(InfeasibleSystemError):
        system.extended(approx).project(state.values)
    kept, skipped = system.independent_subset(approx)
    assert(kept == [] and skipped == [0])
    X = system.extended(kept).project(np.zeros(state.shape))
    assert_allclose(X[hidden], state.values[hidden], atol=1e-8)


def test_experiment_grid():
    grid = ExperimentGrid((0.2, 0.4), ('nuclear',), trials=2, base_seed=5)
    assert(list(grid.points()) == [(0.2, 5), (0.2, 6), (0.4, 5), (0.4, 6)])
    with pytest.raises(ValueError):
        ExperimentGrid(methods=('magic',))
    with pytest.raises(ValueError):
        ExperimentGrid(trials=0)


def test_grid_experiment_small():
    case = generate_radial_case(6, seed=4)
    kwargs = dict(fractions=(0.5,), trials=2, pmu_buses=(0,), seed=7)
    results = grid_experiment(case, **kwargs)
    assert(len(results) == 2 * len(METHODS))
    assert([r.method for r in results[:4]] == list(METHODS))
    assert(all(r.relative_error >= 0 for r in results))
    assert(all(np.isnan(r.wall_time) for r in results))
    again = grid_experiment(case, jobs=2, **kwargs)
    assert([r.relative_error for r in again] == [r.relative_error for r in results])

    assert(not any(r.infeasible for r in results))
    trials, summary, cdf = grid_tables(results)
    assert(len(trials) == 8)
    assert(len(summary) == len(METHODS))
    assert(list(summary['n_infeasible']) == [0] * len(METHODS))
    assert(list(summary['matched']) == [2] * len(METHODS))
    assert(set(cdf['metric']) <= {'mag_rmse', 'ang_rmse'})


def test_constraint_mix_sweep_small():
    table = constraint_mix_sweep(8, 5, 1, mixes=(0.0, 1.0), trials=2)
    assert(list(table['label']) == ['none', 'tuned', 'tuned'])
    assert_almost_equal(table['mu_Q_perp'][0], 1.0)
    assert(table['mu_Q_perp'][2] <= 1e-9)
    assert(table['minimum_samples'][2] == 0)


def test_constraint_deletion_sweep():
    case = generate_radial_case(6, seed=1)
    table = constraint_deletion_sweep(case, fraction=0.5, keep_fractions=(1.0, 0.0), trials=1)
    assert(len(table) == 2)
    assert(table['constraints'][1] == 0)
    assert_almost_equal(table['nu_Q_perp'][1], 1.0)
    assert(table['nu_Q_perp'][0] <= table['nu_Q_perp'][1])


def test_recovery_trials_small():
    table = recovery_trials(n1=6, n2=4, r=1, samples=24, trials=2)
    assert(all(table['passes']))
    assert(all(table['recovered']))


def test_pooled_runs_leave_warning_filters():
    before = list(warnings.filters)
    case = generate_radial_case(6, seed=4)
    grid_experiment(case, fractions=(0.3,), trials=4, pmu_buses=(0,), jobs=4)
    min_samples_search(generate_toy_instance(6, 4, 1, seed=0), trials=4, jobs=4)
    assert(warnings.filters == before)


@pytest.mark.slow
def test_toy_sweep_reproduction():
    """Do constraints in T cut the sample size by more than their own count?"""
    table = constraint_mix_sweep(40, 10, 2, mixes=(0, 0.25, 0.5, 0.75, 1), trials=100)
    baseline = table['minimum_samples'][0]
    full = table['minimum_samples'][table['mix'] == 1][0]
    assert(baseline > 0)
    assert(full <= 0.5 * baseline)
    assert(baseline - full > 96)
    tuned = table[table['label'] == 'tuned']
    tuned.sort('mu_Q_perp', reverse=True)
    assert(np.all(np.diff(tuned['minimum_samples']) <= 0))


@pytest.mark.slow
def test_grid_reproduction():
    """Do the physics and approximation constraints order the voltage errors?"""
    case = generate_radial_case(50, seed=0)
    results = grid_experiment(case, fractions=(0.15, 0.2, 0.3), trials=20, jobs=4)
    _, summary, _ = grid_tables(results)
    for fraction in (0.15, 0.2, 0.3):
        rows = summary[summary['fraction'] == fraction]
        median = {row['method']: row['median_mag_rmse'] for row in rows}
        assert(median['nuclear+const+appx'] <= median['nuclear+const'] <= median['least-squares'])
    rows = summary[(summary['fraction'] == 0.2) & (summary['method'] == 'nuclear+const+appx')]
    assert(rows['median_mag_rmse'][0] < 1e-3)


@pytest.mark.slow
def test_certificate_predicts_recovery():
    """Is every instance whose certificate passes recovered exactly?"""
    passing = []
    for start in range(0, 400, 20):
        table = recovery_trials(n1=10, n2=6, r=2, samples=40, trials=20, seed=start)
        passing += list(table[table['passes']]['recovered'])
        if len(passing) >= 20:
            break
    assert(len(passing) >= 20)
    assert(all(passing))
