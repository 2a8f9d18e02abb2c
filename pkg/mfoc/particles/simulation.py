"""
Euler-Maruyama particle systems for

    dX = -(grad W * mu + grad Phi) dt + sqrt(2) dB

whose law solves the Fokker-Planck equation of the fixed point, and the two flows
launched from a point x0: eta (drift -(grad W * rho + grad Phi)) and zeta (drift -grad W * rho).
"""
import logging

import numpy as np

from mfoc.exceptions import MeshMismatchError
from mfoc.grid.calculus import convolve_array
from mfoc.grid.interpolation import interpolate_vector
from mfoc.grid.torus import wrap_to_cube
from mfoc.particles.clouds import CloudTrajectory, check_cloud_size, cic_deposit, sample_from_density
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.solvers.fokker_planck import interaction_drift_array
from mfoc.solvers.trajectory import DensityTrajectory, ValueTrajectory

# Above this many particles the empirical convolution goes through a grid deposit
PAIRWISE_LIMIT = 512
PAIRWISE = "pairwise"
GRID = "grid"
AUTO = "auto"

OPTIMAL = "optimal"
ZERO_VELOCITY = "zero_velocity"
ADJOINT_MODES = (OPTIMAL, ZERO_VELOCITY)


def empirical_interaction(spec: ProblemSpec, positions: np.ndarray, method: str = AUTO) -> np.ndarray:
    """ (grad W * mu_N)(X_i) for the empirical measure of positions, shape (N, d) """
    sampled = spec.sampled_potential
    if sampled.is_zero:
        return np.zeros_like(positions)
    if method == AUTO:
        method = PAIRWISE if len(positions) <= PAIRWISE_LIMIT else GRID
    if method == PAIRWISE:
        displacements = positions[:, np.newaxis, :] - positions[np.newaxis, :, :]
        return sampled.gradient_at(displacements).mean(axis=1)
    if method == GRID:
        density = cic_deposit(positions, spec.grid)
        drift = convolve_array(sampled.grad_W.values, density.values[np.newaxis], spec.grid)
        return interpolate_vector(spec.grid, drift, positions)
    raise ValueError(f"Unknown interaction method '{method}'")


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"Seed must be a nonnegative integer, got {seed!r}")


def _check_on_spec(spec: ProblemSpec, trajectory):
    if trajectory.mesh != spec.mesh or trajectory.grid != spec.grid:
        raise MeshMismatchError(f"{trajectory} does not live on {spec.mesh} / {spec.grid}")


def _euler_maruyama(positions: np.ndarray, drift: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(positions.shape)
    return wrap_to_cube(positions - drift * dt + np.sqrt(2 * dt) * noise)


def simulate_mkv(spec: ProblemSpec, Phi: ValueTrajectory, N: int, seed: int = 0,
                 method: str = AUTO) -> CloudTrajectory:
    """ McKean-Vlasov particles started from rho0, interacting through their own empirical measure """
    check_cloud_size(N)
    _check_seed(seed)
    _check_on_spec(spec, Phi)
    rng = np.random.default_rng(seed)
    mesh = spec.mesh
    positions = np.empty((mesh.nt + 1, N, spec.grid.d))
    positions[0] = sample_from_density(spec.rho0, N, rng)
    grad_Phi = Phi.gradient_values
    for k in range(mesh.nt):
        X = positions[k]
        drift = empirical_interaction(spec, X, method) + interpolate_vector(spec.grid, grad_Phi[k], X)
        positions[k + 1] = _euler_maruyama(X, drift, mesh.dt, rng)
    logging.debug("Simulated %d McKean-Vlasov particles over %s (seed %d)", N, mesh, seed)
    return CloudTrajectory(mesh.times, positions, stream=seed)


def simulate_adjoint(spec: ProblemSpec, rho: DensityTrajectory, Phi: ValueTrajectory, x0, t0: float,
                     mode: str, N: int, seed: int = 0) -> CloudTrajectory:
    """ N particles launched together from x0 at the mesh time nearest t0, moving in the
        frozen field grad W * rho (zeta) or grad W * rho + grad Phi (eta) """
    if mode not in ADJOINT_MODES:
        raise ValueError(f"Unknown adjoint mode '{mode}', expected one of {ADJOINT_MODES}")
    check_cloud_size(N)
    _check_seed(seed)
    rho.check_compatible(Phi)
    _check_on_spec(spec, Phi)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if len(x0) != spec.grid.d:
        raise ValueError(f"Launch point {x0} is not in dimension {spec.grid.d}")
    mesh = spec.mesh
    k0 = mesh.index_of(t0)
    if k0 >= mesh.nt:
        raise ValueError(f"Launch time {t0} must lie before T={mesh.T} (nearest mesh node is T)")

    drift_field = interaction_drift_array(spec, rho.values)
    if mode == OPTIMAL:
        drift_field = drift_field + Phi.gradient_values

    rng = np.random.default_rng(seed)
    positions = np.empty((mesh.nt + 1 - k0, N, spec.grid.d))
    positions[0] = wrap_to_cube(np.broadcast_to(x0, (N, spec.grid.d)))
    for j, k in enumerate(range(k0, mesh.nt)):
        X = positions[j]
        positions[j + 1] = _euler_maruyama(X, interpolate_vector(spec.grid, drift_field[k], X), mesh.dt, rng)
    return CloudTrajectory(mesh.times[k0:], positions, stream=seed)
