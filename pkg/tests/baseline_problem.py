"""
Problems shared between test modules. The baseline fixed point takes a while, so it is
solved once per test process and cached.
"""
import functools
import math

from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid
from mfoc.problem.couplings import AdditiveNonlocalCoupling, ConstantCoupling, Coupling
from mfoc.problem.fields import FourierMode, TrigonometricSeries
from mfoc.problem.potentials import TrigonometricPotential
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.solvers.fixed_point import compute_budget, solve

W_COEFFICIENT = -1 / (4 * math.pi ** 2)
PHI_T_COEFFICIENT = 1 / (4 * math.pi)
BASELINE_T = 0.5
BASELINE_N = 64
BASELINE_NT = 512
# (x0, t0) launch points for the value identity, also listed in run_mean_field/baseline.yaml
VALUE_IDENTITY_POINTS = (((0.0,), 0.0), ((0.25,), 0.25), ((-0.375,), 0.125))


def cosine_series(d: int, coefficient: float, constant: float = 0.0) -> TrigonometricSeries:
    """ constant + coefficient * cos(2 pi x_1) """
    wavevector = [1] + [0] * (d - 1)
    return TrigonometricSeries(d, constant, [FourierMode(wavevector, cos=coefficient)])


def cosine(grid: TorusGrid, coefficient: float, constant: float = 0.0) -> ScalarField:
    return cosine_series(grid.d, coefficient, constant).sample(grid)


def cosine_potential(d: int = 1, coefficient: float = W_COEFFICIENT) -> TrigonometricPotential:
    return TrigonometricPotential(cosine_series(d, coefficient))


def baseline_spec(n: int = BASELINE_N, nt: int = BASELINE_NT) -> ProblemSpec:
    grid = TorusGrid(1, n)
    coupling = AdditiveNonlocalCoupling(cosine(grid, 0.5), cosine_potential())
    return ProblemSpec(grid, TimeMesh(BASELINE_T, nt), cosine_potential(), coupling,
                       cosine(grid, 0.5, constant=1.0), cosine(grid, PHI_T_COEFFICIENT))


def zero_interaction_spec(coupling: Coupling = None, n: int = 32, nt: int = 64, T: float = 0.25,
                          phi_T_coefficient: float = 0.0) -> ProblemSpec:
    """ W = 0, rho0 = 1 + cos/2 """
    grid = TorusGrid(1, n)
    return ProblemSpec(grid, TimeMesh(T, nt), TrigonometricPotential.zero(1), coupling or ConstantCoupling(0.0),
                       cosine(grid, 0.5, constant=1.0), cosine(grid, phi_T_coefficient))


def uniform_spec(c: float = 0.3, n: int = 32, nt: int = 64, T: float = 0.25) -> ProblemSpec:
    """ Baseline interaction, rho0 = 1, phi_T = 0 and U = c: Phi = c (T - t), rho = 1 """
    grid = TorusGrid(1, n)
    return ProblemSpec(grid, TimeMesh(T, nt), cosine_potential(), ConstantCoupling(c),
                       ScalarField.constant(grid, 1.0), ScalarField.constant(grid, 0.0))


@functools.lru_cache(maxsize=None)
def baseline_solution():
    """ (spec, budget, pair, log) for the baseline with damping 0.5 and tolerance 1e-6 """
    spec = baseline_spec()
    budget = compute_budget(spec)
    pair, log = solve(spec, theta=0.5, tol=1e-6, max_iter=200, budget=budget)
    return spec, budget, pair, log
