"""
Forward solver for rho_t = div((grad W * rho) rho + rho grad phi) + Laplacian rho.

Each step is (i) an explicit conservative first-order upwind update of div(b rho)
followed by (ii) the exact spectral heat semigroup.
"""
import logging
import math
from typing import Callable, List, Optional

import numpy as np

from mfoc.exceptions import CFLViolationError, MeshMismatchError, SolverBreakdownError
from mfoc.grid.calculus import convolve_array, heat_semigroup_array, integrate_array
from mfoc.grid.torus import ScalarField, TorusGrid, VectorField, check_same_grid
from mfoc.particles.wasserstein import wasserstein1
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.reports import CheckResult
from mfoc.solvers.trajectory import DensityTrajectory, StepDiagnostics, ValueTrajectory

NEGATIVITY_TOLERANCE = -1e-13
MASS_TOLERANCE = 1e-12
DEFAULT_CFL_SAFETY = 0.5
DEFAULT_MAX_SUBSTEPS = 1024


class DriftSnapshot:
    """ b = grad W * rho + grad phi at one time node """

    def __init__(self, b: VectorField):
        self.b = b
        self.sup_norm = b.sup_norm()

    def __repr__(self):
        return f"DriftSnapshot(||b||_inf={self.sup_norm:.6g})"


def courant_number(b_values: np.ndarray, grid: TorusGrid, dt: float) -> float:
    axis_sups = np.abs(b_values).reshape(grid.d, -1).max(axis=1)
    return float(dt * axis_sups.sum() / grid.h)


def _upwind_step_array(rho: np.ndarray, b_values: np.ndarray, grid: TorusGrid, dt: float) -> np.ndarray:
    """ rho_t = div(b rho) in flux form: velocity -b, face velocities averaged from the nodes """
    # Outflow through the two faces of a node along an axis is at most dt/h * max |b_a| there,
    # so the retained fraction is >= 1 - Courant >= 0
    updated = rho.copy()
    for i, ax in enumerate(grid.spatial_axes):
        velocity = -b_values[i]
        face_velocity = 0.5 * (velocity + np.roll(velocity, -1, axis=ax))
        flux = np.maximum(face_velocity, 0.0) * rho + np.minimum(face_velocity, 0.0) * np.roll(rho, -1, axis=ax)
        updated -= dt / grid.h * (flux - np.roll(flux, 1, axis=ax))
    return updated


def _fp_step_array(rho: np.ndarray, b_values: np.ndarray, grid: TorusGrid, dt: float) -> np.ndarray:
    return heat_semigroup_array(_upwind_step_array(rho, b_values, grid, dt), grid, dt)


def fp_step(rho: ScalarField, drift, dt: float) -> ScalarField:
    """ One step of the splitting. drift is a DriftSnapshot or VectorField.
        Raises CFLViolationError when dt * sum_a ||b_a||_inf / h > 1 """
    b = drift.b if isinstance(drift, DriftSnapshot) else drift
    grid = check_same_grid(rho, b)
    if (courant := courant_number(b.values, grid, dt)) > 1:
        raise CFLViolationError(courant, dt / courant)
    return ScalarField(grid, _fp_step_array(rho.values, b.values, grid, dt))


# drift(k, rho_k) -> b values at node k, shape (d,) + grid.shape
DriftFunction = Callable[[int, np.ndarray], np.ndarray]


def _march(spec: ProblemSpec, drift: DriftFunction, cfl_safety: float, max_substeps: int) -> DensityTrajectory:
    grid = spec.grid
    mesh = spec.mesh
    values = np.empty((mesh.nt + 1,) + grid.shape)
    values[0] = spec.rho0.values
    diagnostics: List[StepDiagnostics] = []

    for k in range(mesh.nt + 1):
        rho = values[k]
        b_values = drift(k, rho)
        speed = np.sum(b_values ** 2, axis=0)
        substeps = 0
        if k < mesh.nt:
            courant = courant_number(b_values, grid, mesh.dt)
            substeps = max(1, math.ceil(courant / cfl_safety))
            if substeps > max_substeps:
                raise SolverBreakdownError(f"t={mesh.times[k]:.6g}: needs {substeps} sub-steps "
                                           f"(Courant {courant:.4g}), more than max_substeps={max_substeps}")
            if substeps > 1:
                logging.debug("t=%.6g: Courant %.4g, using %d sub-steps", mesh.times[k], courant, substeps)
            step = rho
            for _ in range(substeps):
                step = _fp_step_array(step, b_values, grid, mesh.dt / substeps)
            if (minimum := step.min()) < NEGATIVITY_TOLERANCE:
                raise SolverBreakdownError(f"t={mesh.times[k + 1]:.6g}: density undershoot {minimum:.3e} "
                                           f"below {NEGATIVITY_TOLERANCE} - reduce dt")
            values[k + 1] = step

        diagnostics.append(StepDiagnostics(t=float(mesh.times[k]),
                                           mass=float(integrate_array(rho, grid)),
                                           minimum=float(rho.min()),
                                           l2_norm=float(np.sqrt(integrate_array(rho ** 2, grid))),
                                           drift_sup=float(np.sqrt(speed.max())),
                                           drift_energy=float(integrate_array(speed * rho, grid)),
                                           substeps=substeps))

    return DensityTrajectory(grid, mesh, values, diagnostics)


def interaction_drift_array(spec: ProblemSpec, rho: np.ndarray) -> np.ndarray:
    """ grad W * rho, shape (d,) + grid.shape; rho may carry leading time axes before the component axis """
    sampled = spec.sampled_potential
    if sampled.is_zero:
        return np.zeros(rho.shape[:-spec.grid.d] + (spec.grid.d,) + spec.grid.shape)
    rho = np.expand_dims(rho, axis=-spec.grid.d - 1)
    return convolve_array(sampled.grad_W.values, rho, spec.grid)


def _check_mesh(spec: ProblemSpec, trajectory):
    if trajectory.mesh != spec.mesh or trajectory.grid != spec.grid:
        raise MeshMismatchError(f"{trajectory} does not live on {spec.mesh} / {spec.grid}")


def fp_solve(spec: ProblemSpec, phi: ValueTrajectory, cfl_safety: float = DEFAULT_CFL_SAFETY,
             max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> DensityTrajectory:
    """ Marches the FP equation with grad W * rho evaluated at the current (lagged) step """
    _check_mesh(spec, phi)
    grad_phi = phi.gradient_values

    def drift(k, rho):
        return interaction_drift_array(spec, rho) + grad_phi[k]

    return _march(spec, drift, cfl_safety, max_substeps)


def t_map(spec: ProblemSpec, phi: ValueTrajectory, rho_frozen: DensityTrajectory,
          cfl_safety: float = DEFAULT_CFL_SAFETY, max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> DensityTrajectory:
    """ As fp_solve, but the convolution drift uses the frozen trajectory rho_frozen """
    _check_mesh(spec, phi)
    _check_mesh(spec, rho_frozen)
    frozen_drift = interaction_drift_array(spec, rho_frozen.values) + phi.gradient_values

    def drift(k, rho):
        return frozen_drift[k]

    return _march(spec, drift, cfl_safety, max_substeps)


def fp_solve_controlled(spec: ProblemSpec, velocity: np.ndarray, cfl_safety: float = DEFAULT_CFL_SAFETY,
                        max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> DensityTrajectory:
    """ Agents move with velocity F - grad W * rho, i.e. rho_t = div((grad W * rho - F) rho) + Laplacian rho.
        velocity has shape (nt+1, d) + grid.shape; F = -grad phi recovers fp_solve """
    expected = (spec.mesh.nt + 1, spec.grid.d) + spec.grid.shape
    if velocity.shape != expected:
        raise MeshMismatchError(f"Control of shape {velocity.shape}, expected {expected}")

    def drift(k, rho):
        return interaction_drift_array(spec, rho) - velocity[k]

    return _march(spec, drift, cfl_safety, max_substeps)


def density_invariants(rho: DensityTrajectory, check_time_continuity: Optional[bool] = None) -> List[CheckResult]:
    """ Mass, positivity, L2 Gronwall bound and (d=1) Wasserstein time continuity of a trajectory """
    checks = []
    masses = rho.integrals()
    mass_error = float(np.abs(masses - 1).max())
    checks.append(CheckResult("mass", mass_error <= MASS_TOLERANCE, {"max_mass_error": mass_error}))
    minimum = float(rho.values.min())
    checks.append(CheckResult("positivity", minimum >= NEGATIVITY_TOLERANCE, {"min_density": minimum}))

    times = rho.mesh.times
    drift_sup = rho.drift_sup
    squared = rho.l2_norms() ** 2
    gronwall_constant = drift_sup ** 2
    with np.errstate(over="ignore"):
        bound = np.exp(gronwall_constant * times) * squared[0]
    margin = float(np.min(bound * (1 + 1e-12) - squared))
    checks.append(CheckResult("l2_gronwall", margin >= 0,
                              {"C_G": gronwall_constant, "sharp_C_G": gronwall_constant / 2, "margin": margin}))

    if check_time_continuity is None:
        check_time_continuity = rho.grid.d == 1
    if check_time_continuity:
        constant = drift_sup * math.sqrt(rho.mesh.T) + math.sqrt(2 * rho.grid.d)
        allowed = constant * math.sqrt(rho.mesh.dt)
        worst = max(wasserstein1(rho.snapshot(k), rho.snapshot(k + 1)) for k in range(rho.mesh.nt))
        checks.append(CheckResult("time_continuity", worst <= allowed,
                                  {"C_M": constant, "max_step_distance": worst, "allowed": allowed}))
    return checks
