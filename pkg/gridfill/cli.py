"""
Command-line interface.

Exit codes
----------
0  success
1  any other gridfill error
2  unreadable or invalid input (arguments, config, matrix, case files)
3  infeasible constraint system
4  solver did not converge and --strict was given
5  metric undefined for the input (e.g. zero matrix)
6  power flow has no solution
"""
import os
import sys
import json
import argparse
import warnings
import numpy as np
from dataclasses import dataclass, field, fields, asdict, replace

from astropy.table import Table

from .version import __version__
from .utils import *
from .subspace import coherence_report, scree
from .solver import SolverConfig, load_affine, solve_nuclear, solve_least_squares
from .powergrid import (load_case, generate_radial_case, solve_power_flow,
                        assemble_state_matrix, state_summary)
from .sampling import (METHODS, TOY_SOLVER, constraint_mix_sweep, grid_experiment,
                       grid_tables)

__all__ = ['RunConfig', 'resolve_config', 'build_parser', 'main']

SEED_VARIABLE = 'GRIDFILL_SEED'
SOLVER_FIELDS = ('rho', 'max_iterations', 'primal_tolerance', 'dual_tolerance')


@dataclass
class RunConfig:
    """
    Every setting a subcommand can take.

    Solver fields left as None fall back to the command's default solver
    settings; `trials` falls back to 100 for `toy` and 20 for `grid`.
    """
    command: str = None
    seed: int = 0
    jobs: int = 1
    progress: bool = False
    strict: bool = False
    # inputs and outputs
    matrix: str = None
    observations: str = None
    constraints: str = None
    shape: list = None
    case: str = None
    output: str = None
    report: str = None
    summary_output: str = None
    cdf_output: str = None
    # solver
    rho: float = None
    max_iterations: int = None
    primal_tolerance: float = None
    dual_tolerance: float = None
    tolerance: float = 1e-3
    # coherence
    rank: int = None
    rank_tolerance: float = 1e-8
    mu_method: str = 'blocked'
    # toy sweep
    n1: int = 40
    n2: int = 10
    mixes: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    count: int = None
    trials: int = None
    target_success: float = 0.9
    # grid
    n_buses: int = 20
    load_scale: float = 0.05
    fractions: list = field(default_factory=lambda: [0.15, 0.2, 0.3])
    methods: list = field(default_factory=lambda: list(METHODS))
    pmu_buses: list = None
    structural_zeros: bool = True
    record_timing: bool = False
    mag_threshold: float = 1e-4
    ang_threshold: float = 5e-5

    def validate(self):
        """Raises ValueError for settings no operation would accept."""
        if self.jobs < 1:
            raise ValueError('jobs must be at least 1.')
        if self.trials is not None and self.trials < 1:
            raise ValueError('trials must be at least 1.')
        if not 0 < self.target_success <= 1:
            raise ValueError('target_success must lie in (0, 1].')
        if not self.tolerance > 0:
            raise ValueError('tolerance must be positive.')
        if self.rank is not None and self.rank < 1:
            raise ValueError('rank must be at least 1.')
        if self.mu_method not in ('loop', 'blocked', 'trace'):
            raise ValueError('mu_method must be loop, blocked or trace.')
        if any(not 0 <= f <= 1 for f in self.fractions):
            raise ValueError('fractions must lie in [0, 1].')
        if any(not 0 <= m <= 1 for m in self.mixes):
            raise ValueError('mixes must lie in [0, 1].')
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError('Unknown methods: {}'.format(', '.join(sorted(unknown))))
        if self.n_buses < 2:
            raise ValueError('n_buses must be at least 2.')
        if self.pmu_buses is not None and any(int(b) < 1 for b in self.pmu_buses):
            raise ValueError('pmu_buses are 1-based bus positions.')
        if self.shape is not None and (len(self.shape) != 2 or min(self.shape) < 1):
            raise ValueError('shape must be two positive integers.')
        self.solver_config(SolverConfig())
        return self

    def solver_config(self, base):
        """`base` with any solver fields set here applied on top."""
        overrides = {name: getattr(self, name) for name in SOLVER_FIELDS
                     if getattr(self, name) is not None}
        return replace(base, exactness_tolerance=self.tolerance, **overrides)

    def to_dict(self):
        return asdict(self)


def resolve_config(args, environ=None):
    """
    RunConfig from defaults, then --config, then flags, then GRIDFILL_SEED.

    Parameters
    ----------
    args : argparse.Namespace
    environ : mapping, optional
        Defaults to os.environ.
    """
    environ = os.environ if environ is None else environ
    names = {f.name for f in fields(RunConfig)}
    values = {}
    if getattr(args, 'config', None):
        try:
            with open(args.config) as f:
                loaded = json.load(f)
        except (OSError, ValueError) as err:
            raise InvalidInputError('Unable to read config {}: {}'.format(args.config, err))
        if not isinstance(loaded, dict):
            raise InvalidInputError('Config file must hold a single JSON object.')
        unknown = set(loaded) - names
        if unknown:
            raise InvalidInputError('Unknown config keys: {}'.format(', '.join(sorted(unknown))))
        values.update(loaded)
    for name, value in vars(args).items():
        if name in names and value is not None:
            values[name] = value
    if environ.get(SEED_VARIABLE):
        try:
            values['seed'] = int(environ[SEED_VARIABLE])
        except ValueError:
            raise InvalidInputError('{} must be an integer.'.format(SEED_VARIABLE))
    return RunConfig(**values).validate()


def _add_solver_flags(parser):
    parser.add_argument('--rho', type=float)
    parser.add_argument('--max-iterations', type=int)
    parser.add_argument('--primal-tolerance', type=float)
    parser.add_argument('--dual-tolerance', type=float)


def _add_run_flags(parser):
    parser.add_argument('--seed', type=int)
    parser.add_argument('--jobs', type=int, help='worker threads for independent trials')
    parser.add_argument('--progress', action='store_const', const=True,
                        help='show progress bars on stderr')


def _add_case_flags(parser):
    parser.add_argument('--case', help='JSON or MATPOWER case file; a radial case '
                                       'is generated when omitted')
    parser.add_argument('--n-buses', type=int)
    parser.add_argument('--load-scale', type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='gridfill',
        description='Low-rank state estimation for distribution networks.')
    parser.add_argument('--version', action='version', version='gridfill ' + __version__)
    parser.add_argument('--config', help='flat JSON file of settings; flags override it')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    for name, text in (('solve', 'nuclear-norm completion'),
                       ('least-squares', 'minimum-norm feasible completion')):
        p = sub.add_parser(name, help=text)
        p.add_argument('--matrix', help='matrix file; nan marks an unobserved entry')
        p.add_argument('--observations', help='i,j,value rows')
        p.add_argument('--shape', type=int, nargs=2, metavar=('N1', 'N2'))
        p.add_argument('--constraints', help='JSON constraint list')
        p.add_argument('--output', required=True, help='solution matrix')
        p.add_argument('--report', help='JSON solve report')
        p.add_argument('--tolerance', type=float)
        if name == 'solve':
            _add_solver_flags(p)
            p.add_argument('--strict', action='store_const', const=True,
                           help='exit 4 if the solver does not converge')
            p.add_argument('--progress', action='store_const', const=True)

    p = sub.add_parser('coherence', help='coherence and coverage metrics')
    p.add_argument('--matrix', required=True)
    p.add_argument('--constraints')
    p.add_argument('--rank', type=int)
    p.add_argument('--rank-tolerance', type=float)
    p.add_argument('--mu-method', choices=('loop', 'blocked', 'trace'))
    p.add_argument('--output', required=True, help='JSON report')

    p = sub.add_parser('scree', help='normalized singular values')
    p.add_argument('--matrix', required=True)
    p.add_argument('--output', required=True)

    p = sub.add_parser('toy', help='sample size against constraint coverage')
    p.add_argument('--n1', type=int)
    p.add_argument('--n2', type=int)
    p.add_argument('--rank', type=int)
    p.add_argument('--mixes', type=float, nargs='+')
    p.add_argument('--count', type=int)
    p.add_argument('--trials', type=int)
    p.add_argument('--target-success', type=float)
    p.add_argument('--tolerance', type=float)
    p.add_argument('--output', required=True)
    _add_solver_flags(p)
    _add_run_flags(p)

    p = sub.add_parser('grid', help='state estimation trials on a feeder')
    _add_case_flags(p)
    p.add_argument('--fractions', type=float, nargs='+')
    p.add_argument('--methods', nargs='+', choices=METHODS)
    p.add_argument('--pmu-buses', type=int, nargs='+', help='1-based bus positions')
    p.add_argument('--trials', type=int)
    p.add_argument('--tolerance', type=float)
    p.add_argument('--no-structural-zeros', dest='structural_zeros', action='store_const',
                   const=False)
    p.add_argument('--record-timing', action='store_const', const=True)
    p.add_argument('--mag-threshold', type=float)
    p.add_argument('--ang-threshold', type=float)
    p.add_argument('--output', required=True, help='per-trial table')
    p.add_argument('--summary-output')
    p.add_argument('--cdf-output')
    _add_solver_flags(p)
    _add_run_flags(p)

    p = sub.add_parser('powerflow', help='solve a feeder and write its state matrix')
    _add_case_flags(p)
    p.add_argument('--seed', type=int)
    p.add_argument('--output', required=True, help='state matrix')
    p.add_argument('--summary-output', help='bus voltage table')

    p = sub.add_parser('gen-network', help='write a random radial case')
    p.add_argument('--n-buses', type=int)
    p.add_argument('--load-scale', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--output', required=True)
    return parser


def _write_json(path, payload, config):
    payload = dict(payload, version=__version__, config=config.to_dict())
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def _case(config):
    if config.case:
        return load_case(config.case)
    return generate_radial_case(config.n_buses, seed=config.seed, load_scale=config.load_scale)


def cmd_solve(config):
    shape = tuple(config.shape) if config.shape else None
    system = load_affine(shape, config.observations, config.constraints, config.matrix)
    if config.command == 'least-squares':
        report = solve_least_squares(system)
    else:
        report = solve_nuclear(system, config=config.solver_config(SolverConfig()),
                               progress=config.progress)
    write_matrix(config.output, report.solution, config.to_dict())
    if config.report:
        _write_json(config.report, report.to_dict(), config)
    if config.strict and not report.converged:
        return 4
    return 0


def cmd_coherence(config):
    M = read_matrix(config.matrix)
    constraints = read_constraints(config.constraints, M.shape) if config.constraints else []
    report = coherence_report(M, constraints, r=config.rank,
                              rank_tolerance=config.rank_tolerance, method=config.mu_method)
    _write_json(config.output, report.to_dict(), config)
    return 0


def cmd_scree(config):
    s = scree(read_matrix(config.matrix))
    table = Table([np.arange(1, len(s.singular_values) + 1), s.singular_values,
                   s.normalized, s.cumulative],
                  names=('index', 'singular_value', 'normalized', 'cumulative'))
    write_table(table, config.output, config.to_dict())
    return 0


def cmd_toy(config):
    table = constraint_mix_sweep(config.n1, config.n2, config.rank or 2, mixes=config.mixes,
                                 count=config.count, target_success=config.target_success,
                                 trials=config.trials or 100, seed=config.seed,
                                 tolerance=config.tolerance,
                                 config=config.solver_config(TOY_SOLVER),
                                 jobs=config.jobs, progress=config.progress)
    write_table(table, config.output, config.to_dict())
    return 0


def cmd_grid(config):
    case = _case(config)
    pmu = None if config.pmu_buses is None else [int(b) - 1 for b in config.pmu_buses]
    results = grid_experiment(case, config.fractions, config.trials or 20, config.methods,
                              pmu_buses=pmu, seed=config.seed,
                              config=config.solver_config(SolverConfig()),
                              tolerance=config.tolerance,
                              structural_zeros=config.structural_zeros,
                              record_timing=config.record_timing, jobs=config.jobs,
                              progress=config.progress)
    trials, summary, cdf = grid_tables(results, config.mag_threshold, config.ang_threshold)
    write_table(trials, config.output, config.to_dict())
    if config.summary_output:
        write_table(summary, config.summary_output, config.to_dict())
    if config.cdf_output:
        write_table(cdf, config.cdf_output, config.to_dict())
    return 0


def cmd_powerflow(config):
    case = _case(config)
    state = assemble_state_matrix(case, solve_power_flow(case))
    write_matrix(config.output, state.values, config.to_dict())
    if config.summary_output:
        write_table(state_summary(case, state), config.summary_output, config.to_dict())
    return 0


def cmd_gen_network(config):
    case = generate_radial_case(config.n_buses, seed=config.seed, load_scale=config.load_scale)
    _write_json(config.output, case.to_dict(), config)
    return 0


COMMANDS = {'solve': cmd_solve, 'least-squares': cmd_solve, 'coherence': cmd_coherence,
            'scree': cmd_scree, 'toy': cmd_toy, 'grid': cmd_grid,
            'powerflow': cmd_powerflow, 'gen-network': cmd_gen_network}

EXIT_CODES = ((InfeasibleSystemError, 3), (UndefinedMetricError, 5),
              ((NoSolutionError, StaleSolutionError), 6),
              ((InvalidInputError, CaseFormatError, UnsupportedTopologyError,
                DimensionMismatchError, InconsistentObservationError, InvalidRankError,
                ValueError, OSError), 2),
              (GridfillError, 1))


def _show_warning(message, category, filename, lineno, file=None, line=None):
    sys.stderr.write('gridfill: {}: {}\n'.format(category.__name__, message))


def main(argv=None):
    """Runs one subcommand and returns its exit code."""
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.showwarning = _show_warning
        try:
            config = resolve_config(args)
            return COMMANDS[config.command](config)
        except Exception as err:
            for family, code in EXIT_CODES:
                if isinstance(err, family):
                    sys.stderr.write('gridfill: error: {}\n'.format(err))
                    return code
            raise


if __name__ == '__main__':
    sys.exit(main())
