"""
Backward solvers for

    -Phi_t + |grad Phi|^2/2 + b.grad Phi - f = Laplacian Phi,   Phi(T) = phi_T

with b = grad W * rho and f = U(x, rho) - grad W * (rho grad phi_prev).

Both march in reversed time s = T - t with the diffusion integrated exactly in
Fourier space (exponential Euler) and first-order upwinding for the transport.
"""
import logging

import numpy as np

from mfoc.exceptions import CFLViolationError, SolverBreakdownError
from mfoc.grid.calculus import convolve_array, exponential_euler_array, integrate_array
from mfoc.grid.torus import TorusGrid
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.solvers.fokker_planck import _check_mesh, courant_number, interaction_drift_array
from mfoc.solvers.trajectory import DensityTrajectory, ValueTrajectory

# Relative slack on the source bound ||f|| <= ||U|| + ||grad W|| ||grad phi|| int|rho|
SOURCE_BOUND_SLACK = 1e-9


class SourceAssembly:
    """ Per time node: coupling U(x, rho), nonlocal term grad W * (rho grad phi_prev), f = U - nonlocal, b = grad W * rho """

    def __init__(self, grid: TorusGrid, mesh, coupling: np.ndarray, nonlocal_term: np.ndarray, b: np.ndarray):
        self.grid = grid
        self.mesh = mesh
        self.coupling = coupling
        self.nonlocal_term = nonlocal_term
        self.f = coupling - nonlocal_term
        self.b = b

    def __repr__(self):
        return f"SourceAssembly({self.grid}, {self.mesh}, ||f||_inf={np.abs(self.f).max():.6g})"

    @property
    def f_sup(self) -> float:
        return float(np.abs(self.f).max())

    @property
    def coupling_sup(self) -> float:
        return float(np.abs(self.coupling).max())


def assemble_source(spec: ProblemSpec, rho: DensityTrajectory, phi_prev: ValueTrajectory) -> SourceAssembly:
    _check_mesh(spec, rho)
    _check_mesh(spec, phi_prev)
    grid = spec.grid
    sampled = spec.sampled_potential

    coupling = spec.coupling.evaluate_array(rho.values, grid)
    b = interaction_drift_array(spec, rho.values)
    if sampled.is_zero:
        nonlocal_term = np.zeros_like(coupling)
    else:
        # sum_i d_iW * (rho d_i phi), component axis just before the spatial axes
        flux = np.expand_dims(rho.values, axis=1) * phi_prev.gradient_values
        nonlocal_term = convolve_array(sampled.grad_W.values, flux, grid).sum(axis=1)

    source = SourceAssembly(grid, spec.mesh, coupling, nonlocal_term, b)
    _check_source_bound(spec, source, rho, phi_prev)
    return source


def _node_sup(values: np.ndarray) -> np.ndarray:
    return np.abs(values).reshape(values.shape[0], -1).max(axis=1)


def _check_source_bound(spec, source: SourceAssembly, rho: DensityTrajectory, phi_prev: ValueTrajectory):
    grad_W_sup = spec.sampled_potential.norms.grad_sup
    total_mass = integrate_array(np.abs(rho.values), spec.grid)
    bound = _node_sup(source.coupling) + grad_W_sup * phi_prev.gradient_sup_norms * total_mass
    measured = _node_sup(source.f)
    excess = measured - bound * (1 + SOURCE_BOUND_SLACK) - 1e-14
    if np.any(excess > 0):
        k = int(np.argmax(excess))
        raise SolverBreakdownError(f"t={spec.mesh.times[k]:.6g}: ||f|| = {measured[k]:.6g} exceeds "
                                   f"||U|| + ||grad W|| ||grad phi|| = {bound[k]:.6g}")


def _one_sided_differences(values: np.ndarray, ax: int, h: float):
    backward = (values - np.roll(values, 1, axis=ax)) / h
    forward = (np.roll(values, -1, axis=ax) - values) / h
    return backward, forward


def _upwind_transport(values: np.ndarray, b_values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """ b.grad u with each component differenced from the upwind side """
    total = np.zeros_like(values)
    for i, ax in enumerate(grid.spatial_axes):
        backward, forward = _one_sided_differences(values, ax, grid.h)
        total += np.where(b_values[i] > 0, b_values[i] * backward, b_values[i] * forward)
    return total


def _check_cfl(b_values, grid, dt, extra_speed: float = 0.0):
    courant = courant_number(b_values, grid, dt) + dt * extra_speed / grid.h
    if courant > 1:
        raise CFLViolationError(courant, dt / courant)


def hopf_cole_solve(spec: ProblemSpec, source: SourceAssembly) -> ValueTrajectory:
    """ Phi = -2 ln v with v_s = Laplacian v - b.grad v - (f/2) v in reversed time.
        The reaction is applied exactly in two half steps around the transport-diffusion step. """
    _check_mesh(spec, source)
    grid = spec.grid
    mesh = spec.mesh
    dt = mesh.dt

    v = np.exp(-0.5 * spec.phi_T.values)
    Phi = np.empty((mesh.nt + 1,) + grid.shape)
    Phi[mesh.nt] = spec.phi_T.values
    minimum = np.empty(mesh.nt + 1)
    minimum[mesh.nt] = v.min()

    for k in range(mesh.nt - 1, -1, -1):
        b_values = source.b[k + 1]
        _check_cfl(b_values, grid, dt)
        v = v * np.exp(-0.25 * dt * source.f[k + 1])
        v = exponential_euler_array(v, -_upwind_transport(v, b_values, grid), grid, dt)
        v = v * np.exp(-0.25 * dt * source.f[k])
        minimum[k] = v.min()
        if minimum[k] <= 0:
            raise SolverBreakdownError(f"t={mesh.times[k]:.6g}: Hopf-Cole variable reached {minimum[k]:.3e} <= 0, "
                                       f"refine dt (currently {dt:.3g})")
        Phi[k] = -2.0 * np.log(v)

    floor = hopf_cole_floor(spec, source)
    if minimum.min() < floor * (1 - 1e-6):
        logging.warning("Hopf-Cole variable min %.6g below the reaction bound %.6g", minimum.min(), floor)
    return ValueTrajectory(grid, mesh, Phi, transform_minimum=minimum)


def hopf_cole_floor(spec: ProblemSpec, source: SourceAssembly) -> float:
    """ Lower bound exp(-(||phi_T|| + T ||f||)/2) for the Hopf-Cole variable """
    return float(np.exp(-0.5 * (spec.phi_T.sup_norm() + spec.mesh.T * source.f_sup)))


def _godunov_hamiltonian(values: np.ndarray, grid: TorusGrid):
    """ sum_a max(max(D-u, 0)^2, min(D+u, 0)^2) / 2 and the largest one-sided slope """
    total = np.zeros_like(values)
    slope = 0.0
    for ax in grid.spatial_axes:
        backward, forward = _one_sided_differences(values, ax, grid.h)
        total += 0.5 * np.maximum(np.maximum(backward, 0.0) ** 2, np.minimum(forward, 0.0) ** 2)
        slope += max(np.abs(backward).max(), np.abs(forward).max())
    return total, slope


def hjb_direct_solve(spec: ProblemSpec, source: SourceAssembly) -> ValueTrajectory:
    """ Monotone first-order scheme on the primitive equation, used to cross-check hopf_cole_solve """
    _check_mesh(spec, source)
    grid = spec.grid
    mesh = spec.mesh
    dt = mesh.dt

    Phi = np.empty((mesh.nt + 1,) + grid.shape)
    Phi[mesh.nt] = spec.phi_T.values
    current = spec.phi_T.values
    for k in range(mesh.nt - 1, -1, -1):
        b_values = source.b[k + 1]
        hamiltonian, slope = _godunov_hamiltonian(current, grid)
        _check_cfl(b_values, grid, dt, extra_speed=slope)
        explicit = source.f[k + 1] - hamiltonian - _upwind_transport(current, b_values, grid)
        current = exponential_euler_array(current, explicit, grid, dt)
        Phi[k] = current
    return ValueTrajectory(grid, mesh, Phi)
