import os
import numpy as np
import networkx as nx
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from ..powergrid import *
from ..powergrid import SWEEP_TOLERANCE
from ..subspace import scree
from ..utils import *

DATADIR = os.path.join(os.path.dirname(__file__), 'data')
FEEDER = os.path.join(DATADIR, 'feeder4.json')


def solved_state(case):
    return assemble_state_matrix(case, solve_power_flow(case))


def test_load_json_case():
    case = load_case(FEEDER)
    assert(case.n_buses == 4)
    assert(case.n_lines == 3)
    assert(case.shape == (7, 17))
    assert(list(case.from_bus) == [0, 1, 1])
    assert(list(case.to_bus) == [1, 2, 3])
    assert_almost_equal(case.p_load[3], 0.012)


def test_matpower_matches_json():
    """Does the MATPOWER copy of the feeder give the same state as the JSON copy?"""
    matpower = load_case(os.path.join(DATADIR, 'feeder4.m'))
    assert(matpower.n_lines == 3)
    assert_allclose(matpower.p_load, load_case(FEEDER).p_load)
    assert_allclose(solved_state(matpower).values, solved_state(load_case(FEEDER)).values,
                    atol=1e-12)


def test_canonical_relabeling():
    case = NetworkCase([9, 5, 3], [0.01, 0.02, 0.0], [0, 0, 0], [9, 5], [5, 3],
                       [0.01, 0.02], [0.01, 0.02], slack_id=3)
    assert(case.bus_ids == [3, 5, 9])
    assert_allclose(case.p_load, [0.0, 0.02, 0.01])
    assert_allclose(case.r, [0.02, 0.01])
    again = load_case(case.to_dict())
    assert(again.bus_ids == case.bus_ids)
    assert_allclose(again.x, case.x)


def test_topology_errors():
    with pytest.raises(UnsupportedTopologyError):
        load_case(os.path.join(DATADIR, 'meshed.json'))
    with pytest.raises(UnsupportedTopologyError):
        NetworkCase([1, 2, 3], [0] * 3, [0] * 3, [1], [2], [0.1], [0.1])
    with pytest.raises(UnsupportedTopologyError):
        NetworkCase([1, 2], [0] * 2, [0] * 2, [1, 2], [1, 1], [0.1, 0.1], [0.1, 0.1])
    with pytest.raises(CaseFormatError):
        NetworkCase([1, 1], [0] * 2, [0] * 2, [1], [1], [0.1], [0.1])
    with pytest.raises(CaseFormatError):
        NetworkCase([1, 2], [0] * 2, [0] * 2, [1], [2], [0.0], [0.0])
    with pytest.raises(CaseFormatError):
        load_case({'buses': [{'id': 1}]})
    with pytest.raises(CaseFormatError):
        parse_matpower('mpc.bus = [1 1 0 0 0 0 1 1 0;];\nmpc.branch = [];')


def test_flat_no_load():
    case = NetworkCase([1, 2, 3], [0] * 3, [0] * 3, [1, 2], [2, 3], [0.01] * 2, [0.02] * 2,
                       slack_voltage=1.02)
    solution = solve_power_flow(case)
    assert_allclose(solution.voltages, 1.02)
    assert_allclose(solution.line_currents, 0.0)
    state = assemble_state_matrix(case, solution)
    assert_allclose(state.values[:, ABS_V][:3], 1.02)
    assert_allclose(state.line_block, 0.0)


def test_power_flow_failures():
    case = NetworkCase([1, 2], [0, 10.0], [0, 10.0], [1], [2], [0.1], [0.1])
    with pytest.raises(NoSolutionError) as err:
        solve_power_flow(case)
    assert(err.value.residual > SWEEP_TOLERANCE or np.isnan(err.value.residual))
    light = load_case(FEEDER)
    stale = PowerFlowSolution(np.ones(4, dtype=complex), np.zeros(3, dtype=complex),
                              1.0, 1, False)
    with pytest.raises(StaleSolutionError):
        assemble_state_matrix(light, stale)


def test_two_bus_analytic():
    """Does the sweep match the closed-form voltage of a single loaded line?"""
    r = x = 0.01
    p, q = 0.1, 0.05
    case = NetworkCase([1, 2], [0, p], [0, q], [1], [2], [r], [x])
    V2 = solve_power_flow(case).voltages[1]
    a = 1 - 2 * (r * p + x * q)
    magnitude = np.sqrt((a + np.sqrt(a ** 2 - 4 * (r ** 2 + x ** 2) * (p ** 2 + q ** 2))) / 2)
    assert_allclose(abs(V2), magnitude, rtol=1e-10)
    delivered = V2 * np.conj((1 - V2) / complex(r, x))
    assert_allclose(delivered, complex(p, q), atol=1e-10)


def test_generated_feeder_is_deliverable():
    """Does every seed of a long generated feeder carry its load?"""
    for seed in range(20):
        case = generate_radial_case(141, seed=seed)
        solution = solve_power_flow(case)
        assert(solution.converged)
        assert(np.min(np.abs(solution.voltages)) > 0.9)
        assert(np.all((case.p_load >= 0) & (case.p_load <= 0.05)))
        assert(np.all((case.q_load >= 0) & (case.q_load <= 0.05)))


def test_generated_tree():
    case = generate_radial_case(141, seed=7)
    assert(case.n_lines == 140)
    graph = nx.Graph(list(zip(case.from_bus, case.to_bus)))
    assert(nx.is_tree(graph))
    assert(len(nx.descendants(graph, 0)) == 140)
    assert(generate_radial_case(2, seed=3).n_lines == 1)


@pytest.mark.parametrize('n_buses', [2, 20, 50, 141])
@pytest.mark.parametrize('seed', range(5))
def test_physics(n_buses, seed):
    """Does the assembled state satisfy every network equation and constraint?"""
    case = generate_radial_case(n_buses, seed=seed)
    state = solved_state(case)
    assert(max(residuals(case, state).values()) <= 1e-8)
    assert_allclose(state.values[state.structural_zero_mask], 0.0)

    physics = physics_constraints(case)
    assert(len(physics) == 4 * (case.n_buses + case.n_lines))
    assert(len(approx_constraints(case)) == case.n_lines)
    C, d = constraint_matrix(physics, case.shape)
    assert(np.max(np.abs(C @ state.values.ravel() - d)) <= 1e-9)


@pytest.mark.parametrize('n_buses', [20, 50, 141])
def test_scree_concentration(n_buses):
    state = solved_state(generate_radial_case(n_buses, seed=0, load_scale=0.05))
    assert(scree(state.values).cumulative[4] >= 0.90)


def test_approximation_sign():
    """Is the physical sign far closer to the true voltage drops than the flipped one?"""
    case = generate_radial_case(20, seed=1, load_scale=0.02)
    x = solved_state(case).values.ravel()
    physical, _ = constraint_matrix(approx_constraints(case), case.shape)
    flipped, _ = constraint_matrix(approx_constraints(case, printed_sign=True), case.shape)
    assert(np.max(np.abs(physical @ x)) < 0.1 * np.max(np.abs(flipped @ x)))


def test_approximation_residual_shrinks_with_load():
    worst = []
    for load_scale in (0.1, 0.05, 0.01):
        case = generate_radial_case(20, seed=2, load_scale=load_scale)
        C, d = constraint_matrix(approx_constraints(case), case.shape)
        worst.append(np.max(np.abs(C @ solved_state(case).values.ravel() - d)))
    assert(worst[0] > worst[1] > worst[2] > 0)


def test_filter_constraints():
    case = load_case(FEEDER)
    approx = approx_constraints(case)
    kept, dropped = filter_constraints(approx, np.ones(case.shape, dtype=bool))
    assert(kept == [] and dropped == 3)
    kept, dropped = filter_constraints(approx, [])
    assert(len(kept) == 3 and dropped == 0)
    support = constraint_support(approx[0].A)
    kept, dropped = filter_constraints(approx, support)
    assert(dropped == 1)


def test_state_summary():
    case = load_case(FEEDER)
    state = solved_state(case)
    table = state_summary(case, state)
    assert(len(table) == 4)
    assert_almost_equal(table['vm_pu'][0], 1.0)
    assert(np.all(table['vm_pu'][1:] < 1.0))
    assert(len(state_columns()) == N_COLUMNS)
    assert(len(structural_zero_entries(4, 3)) == 4 * 9 + 3 * 8)


def test_generated_case_is_seeded():
    a = generate_radial_case(15, seed=3)
    b = generate_radial_case(15, seed=3)
    assert_allclose(a.r, b.r)
    assert(list(a.from_bus) == list(b.from_bus))
    with pytest.raises(ValueError):
        generate_radial_case(1)
