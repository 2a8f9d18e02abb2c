import logging
import math
from typing import Optional

import numpy as np
from lazy import lazy

from mfoc.grid.calculus import integrate, l2_norm
from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid, check_same_grid
from mfoc.problem.couplings import Coupling, CouplingBounds, RunningCost
from mfoc.problem.fields import c2_norm, random_probability_density
from mfoc.problem.potentials import Potential, SampledPotential
from mfoc.reports import CheckResult, Report

MASS_TOLERANCE = 1e-12
LIPSCHITZ_PROBES = 20
# h * ||Hess W|| above this fraction of max(1, ||grad W||) means grad W is not resolved
# (a jump in W or grad W shows up as a Hessian growing like 1/h)
CURVATURE_RESOLUTION = 0.25
RELATIVE_SLACK = 1e-9


class ProblemSpec:
    """ Everything defining one instance of the coupled HJB / Fokker-Planck system """

    def __init__(self, grid: TorusGrid, mesh: TimeMesh, potential: Potential, coupling: Coupling,
                 rho0: ScalarField, phi_T: ScalarField, running_cost: Optional[RunningCost] = None):
        check_same_grid(rho0, phi_T)
        if rho0.grid != grid:
            raise ValueError(f"Boundary data on {rho0.grid}, problem on {grid}")
        self.grid = grid
        self.mesh = mesh
        self.potential = potential
        self.coupling = coupling
        self.rho0 = rho0
        self.phi_T = phi_T
        self.running_cost = running_cost

    def __repr__(self):
        return f"ProblemSpec({self.grid}, {self.mesh}, {self.potential}, {self.coupling})"

    @lazy
    def sampled_potential(self) -> SampledPotential:
        return self.potential.sample(self.grid)

    @lazy
    def coupling_bounds(self) -> CouplingBounds:
        return self.coupling.bounds(self.grid)

    def with_mesh(self, mesh: TimeMesh) -> "ProblemSpec":
        return ProblemSpec(self.grid, mesh, self.potential, self.coupling, self.rho0, self.phi_T, self.running_cost)

    def with_data(self, rho0: ScalarField = None, phi_T: ScalarField = None, coupling: Coupling = None):
        return ProblemSpec(self.grid, self.mesh, self.potential,
                           self.coupling if coupling is None else coupling,
                           self.rho0 if rho0 is None else rho0,
                           self.phi_T if phi_T is None else phi_T, self.running_cost)


def _check_potential(spec: ProblemSpec) -> CheckResult:
    grad_sup, hessian_sup, grad_l2 = spec.sampled_potential.norms
    measured = {"grad_W_sup": grad_sup, "hessian_W_sup": hessian_sup, "grad_W_l2": grad_l2,
                "resolution": spec.grid.h * hessian_sup / max(1.0, grad_sup)}
    if not (math.isfinite(grad_sup) and math.isfinite(hessian_sup)):
        return CheckResult("A1", False, measured, "norm estimates are not finite")
    jumps = {} if spec.sampled_potential.smoothed else spec.potential.gradient_jumps()
    unsmoothed = {where: jump for where, jump in jumps.items() if jump > 0}
    if unsmoothed:
        measured.update({f"grad_W_jump_{where}": jump for where, jump in unsmoothed.items()})
        where, jump = max(unsmoothed.items(), key=lambda item: item[1])
        return CheckResult("A1", False, measured,
                           f"grad W jumps by {jump:.4g} at the {where} and is not mollified (grad W not Lipschitz)")
    if measured["resolution"] > CURVATURE_RESOLUTION:
        return CheckResult("A1", False, measured,
                           f"||Hess W|| = {hessian_sup:.4g} is not resolved on {spec.grid} "
                           f"(grad W jumps between nodes)")
    return CheckResult("A1", True, measured)


def _check_coupling(spec: ProblemSpec, probes: int, seed: int) -> CheckResult:
    bounds = spec.coupling_bounds
    rng = np.random.default_rng(seed)
    worst_ratio = 0.0
    worst_sup = 0.0
    for _ in range(probes):
        m1 = random_probability_density(spec.grid, rng)
        m2 = random_probability_density(spec.grid, rng)
        u1 = spec.coupling.evaluate(m1)
        u2 = spec.coupling.evaluate(m2)
        distance = l2_norm(m1 - m2)
        if distance > 0:
            worst_ratio = max(worst_ratio, (u1 - u2).sup_norm() / distance)
        worst_sup = max(worst_sup, u1.sup_norm(), u2.sup_norm())

    phi_T_sup, phi_T_grad, phi_T_hessian = c2_norm(spec.phi_T)
    measured = {"lipschitz_bound": bounds.lipschitz, "lipschitz_measured": worst_ratio,
                "U_sup_bound": bounds.sup, "U_sup_measured": worst_sup, "U_c2_norm": bounds.c2_norm,
                "phi_T_c2_norm": phi_T_sup + phi_T_grad + phi_T_hessian}
    problems = []
    if worst_ratio > bounds.lipschitz * (1 + RELATIVE_SLACK) + 1e-12:
        problems.append(f"Lipschitz ratio {worst_ratio:.6g} exceeds C_U = {bounds.lipschitz:.6g}")
    if worst_sup > bounds.sup * (1 + RELATIVE_SLACK) + 1e-12:
        problems.append(f"sup |U| = {worst_sup:.6g} exceeds the reported bound {bounds.sup:.6g}")
    if bounds.grad_sup is None:
        problems.append("no bound on ||grad U|| (supply gradient_bound)")
    return CheckResult("A2", not problems, measured, "; ".join(problems))


def _check_boundary_data(spec: ProblemSpec) -> CheckResult:
    mass = integrate(spec.rho0)
    minimum = spec.rho0.min()
    measured = {"rho0_mass": mass, "rho0_min": minimum, "rho0_l2": l2_norm(spec.rho0),
                "phi_T_sup": spec.phi_T.sup_norm()}
    problems = []
    if abs(mass - 1) > MASS_TOLERANCE:
        problems.append(f"integral of rho0 = {mass!r}, expected 1")
    if minimum < 0:
        problems.append(f"rho0 takes negative value {minimum:.6g}")
    return CheckResult("A3", not problems, measured, "; ".join(problems))


def validate_assumptions(spec: ProblemSpec, probes: int = LIPSCHITZ_PROBES, seed: int = 0) -> Report:
    """ Checks (A1) regularity of W, (A2) boundedness/Lipschitz continuity of U, (A3) boundary data.
        Failures are report entries, never exceptions. """
    warnings = spec.potential.warnings(spec.grid)
    for message in warnings:
        logging.warning(message)
    checks = [_check_potential(spec), _check_coupling(spec, probes, seed), _check_boundary_data(spec)]
    for check in checks:
        if not check.passed:
            logging.warning("Assumption %s failed: %s", check.name, check.message)
    return Report(checks, warnings)
