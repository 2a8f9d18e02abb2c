"""
Cost functional

    E(F) = int_0^T int [L(x, rho) + |F|^2/2] rho dx dt + int phi_T rho(T) dx

of a control F driving rho_t = div((grad W * rho - F) rho) + Laplacian rho.
"""
import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from mfoc.grid.calculus import integrate_array
from mfoc.problem.couplings import RunningCost
from mfoc.problem.fields import random_band_limited
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.reports import CheckResult, Report
from mfoc.solvers.fokker_planck import fp_solve_controlled
from mfoc.solvers.trajectory import DensityTrajectory

# sup |U - U derived from L| above this is logged as an inconsistent running cost
CONSISTENCY_TOLERANCE = 1e-8
PERTURBATION_MODES = 3
PERTURBATION_WAVENUMBER = 2
DEFAULT_PERTURBATIONS = 10
DEFAULT_EPSILON = 0.1
# Allowed decrease of E under a perturbation (scheme accuracy)
STATIONARITY_TOLERANCE = 5e-3


class CostReport:

    def __init__(self, running: float, terminal: float, kinetic: float, running_cost_omitted: bool,
                 consistency_gap: float = float("nan")):
        self.running = running
        self.terminal = terminal
        self.kinetic = kinetic
        self.total = running + terminal
        self.running_cost_omitted = running_cost_omitted
        self.consistency_gap = consistency_gap

    def __repr__(self):
        return f"CostReport(E={self.total:.8g}, running={self.running:.8g}, terminal={self.terminal:.8g})"

    def to_dict(self) -> dict:
        return {"total": self.total, "running": self.running, "terminal": self.terminal, "kinetic": self.kinetic,
                "running_cost_omitted": self.running_cost_omitted, "consistency_gap": self.consistency_gap}


def resolve_running_cost(spec: ProblemSpec, running_cost: Optional[RunningCost] = None) -> Optional[RunningCost]:
    return running_cost or spec.running_cost or spec.coupling.running_cost()


def cost_of(spec: ProblemSpec, velocity: np.ndarray, rho: DensityTrajectory,
            running_cost: Optional[RunningCost] = None) -> CostReport:
    """ E for a control given as (nt+1, d) + grid shape and the density it produces """
    grid = spec.grid
    L = resolve_running_cost(spec, running_cost)
    kinetic = integrate_array(0.5 * np.sum(velocity ** 2, axis=1) * rho.values, grid)
    per_node = kinetic
    consistency_gap = float("nan")
    if L is None:
        logging.warning("%s has no running cost L - E is computed without the L term", spec.coupling)
    else:
        cache = {}
        per_node = per_node + integrate_array(L.value_array(rho.values, grid, cache) * rho.values, grid)
        derived = L.derive_coupling_array(rho.values, grid, cache)
        consistency_gap = float(np.abs(derived - spec.coupling.evaluate_array(rho.values, grid)).max())
        if consistency_gap > CONSISTENCY_TOLERANCE:
            logging.warning("Running cost does not reproduce the coupling: sup |U - U_L| = %.3g", consistency_gap)

    running = float(trapezoid(per_node, dx=spec.mesh.dt))
    terminal = float(integrate_array(spec.phi_T.values * rho.values[-1], grid))
    return CostReport(running, terminal, float(trapezoid(kinetic, dx=spec.mesh.dt)), L is None, consistency_gap)


def evaluate_cost(spec: ProblemSpec, pair, running_cost: Optional[RunningCost] = None) -> CostReport:
    """ E(F*) with F* = -grad Phi and rho from the solution pair """
    return cost_of(spec, pair.control, pair.rho, running_cost)


class PerturbationResult(NamedTuple):
    index: int
    epsilon: float
    cost: float
    delta: float


def random_perturbation(spec: ProblemSpec, rng: np.random.Generator) -> np.ndarray:
    """ Low-frequency vector field with sup norm 1, constant in time, shape (nt+1, d) + grid shape """
    grid = spec.grid
    components = [random_band_limited(grid, rng, PERTURBATION_WAVENUMBER, PERTURBATION_MODES).values
                  for _ in range(grid.d)]
    field = np.stack(components)
    field /= max(np.sqrt(np.sum(field ** 2, axis=0)).max(), 1e-300)
    return np.broadcast_to(field, (spec.mesh.nt + 1,) + field.shape)


def optimality_probe(spec: ProblemSpec, pair, n_perturb: int = DEFAULT_PERTURBATIONS,
                     epsilon: float = DEFAULT_EPSILON, seed: int = 0, running_cost: Optional[RunningCost] = None,
                     tolerance: float = STATIONARITY_TOLERANCE) -> Tuple[Report, List[PerturbationResult]]:
    """ Re-solves the density for F* + epsilon * dF over random smooth dF and reports
        Delta E = E(F* + epsilon dF) - E(F*); a minimiser has Delta E >= -tolerance """
    control = pair.control
    base_rho = fp_solve_controlled(spec, control)
    base = cost_of(spec, control, base_rho, running_cost).total
    rng = np.random.default_rng(seed)

    results = []
    for i in range(n_perturb):
        perturbed = control + epsilon * random_perturbation(spec, rng)
        rho = fp_solve_controlled(spec, perturbed)
        cost = cost_of(spec, perturbed, rho, running_cost).total
        results.append(PerturbationResult(i, epsilon, cost, cost - base))

    worst = min((r.delta for r in results), default=0.0)
    check = CheckResult("stationarity", worst >= -tolerance,
                        {"base_cost": base, "min_delta": worst, "epsilon": epsilon, "tolerance": tolerance,
                         "deltas": [r.delta for r in results]})
    return Report([check]), results


def slope_profile(spec: ProblemSpec, pair, epsilons=(0.2, 0.1, 0.05), seed: int = 0,
                  running_cost: Optional[RunningCost] = None) -> np.ndarray:
    """ Delta E(epsilon) / epsilon for one fixed perturbation direction, in the order of epsilons """
    control = pair.control
    base = cost_of(spec, control, fp_solve_controlled(spec, control), running_cost).total
    direction = random_perturbation(spec, np.random.default_rng(seed))
    slopes = []
    for epsilon in epsilons:
        perturbed = control + epsilon * direction
        cost = cost_of(spec, perturbed, fp_solve_controlled(spec, perturbed), running_cost).total
        slopes.append((cost - base) / epsilon)
    return np.array(slopes)
