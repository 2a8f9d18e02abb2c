import itertools
import logging

import numpy as np

from mfoc.grid.calculus import integrate
from mfoc.grid.interpolation import PeriodicInterpolator
from mfoc.grid.torus import ScalarField, TorusGrid, wrap_to_cube

SMALL_CLOUD_WARNING = 100


class ParticleCloud:
    """ N equally weighted points on the torus, stored as (N, d) coordinates in [-1/2, 1/2)^d """

    def __init__(self, positions: np.ndarray, t: float = 0.0, stream=None):
        positions = np.array(positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, np.newaxis]
        if positions.ndim != 2 or len(positions) < 1:
            raise ValueError(f"Cloud positions must have shape (N, d) with N >= 1, got {positions.shape}")
        if not np.all(np.isfinite(positions)):
            raise ValueError("Cloud positions are not finite")
        positions = wrap_to_cube(positions)
        positions.flags.writeable = False
        self.positions = positions
        self.t = float(t)
        self.stream = stream

    def __len__(self):
        return len(self.positions)

    def __repr__(self):
        return f"ParticleCloud(N={self.N}, d={self.d}, t={self.t:.6g})"

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def mean_displacement(self, reference) -> np.ndarray:
        """ Mean of the shortest displacements from reference """
        return wrap_to_cube(self.positions - np.asarray(reference, dtype=float)).mean(axis=0)

    def deposit(self, grid: TorusGrid) -> ScalarField:
        return cic_deposit(self.positions, grid)


def check_cloud_size(N: int):
    if int(N) != N or N < 1:
        raise ValueError(f"Number of particles {N=} must be a positive integer")
    if N < SMALL_CLOUD_WARNING:
        logging.warning("Only %d particles - Monte-Carlo estimates will be noisy", N)


def cic_deposit(positions: np.ndarray, grid: TorusGrid) -> ScalarField:
    """ Cloud-in-cell: each particle shares its mass 1/N multilinearly between the 2^d surrounding nodes """
    positions = wrap_to_cube(np.asarray(positions, dtype=float).reshape(-1, grid.d))
    scaled = (positions + 0.5) / grid.h
    lower = np.floor(scaled).astype(int)
    fraction = scaled - lower
    density = np.zeros(grid.shape)
    for corner in itertools.product((0, 1), repeat=grid.d):
        corner = np.array(corner)
        weights = np.prod(np.where(corner == 1, fraction, 1 - fraction), axis=1)
        indices = tuple(np.mod(lower + corner, grid.n).T)
        np.add.at(density, indices, weights)
    return ScalarField(grid, density / (len(positions) * grid.cell_volume))


def cell_edges_1d(grid: TorusGrid) -> np.ndarray:
    """ Edges of the cells centred on the nodes, starting at -1/2 - h/2 """
    return -0.5 - 0.5 * grid.h + np.arange(grid.n + 1) * grid.h


def sample_from_density(density: ScalarField, N: int, rng: np.random.Generator) -> np.ndarray:
    """ (N, d) samples: inverse CDF of the cellwise-constant density for d=1, rejection otherwise """
    grid = density.grid
    if density.min() < 0:
        raise ValueError(f"Cannot sample from a density with negative value {density.min():.3g}")
    mass = integrate(density)
    if not mass > 0:
        raise ValueError("Cannot sample from a density with zero mass")

    if grid.d == 1:
        cumulative = np.concatenate([[0.0], np.cumsum(density.values) * grid.h]) / mass
        samples = np.interp(rng.random(N), cumulative, cell_edges_1d(grid))
        return wrap_to_cube(samples)[:, np.newaxis]

    interpolator = PeriodicInterpolator(grid, density.values)
    ceiling = density.max()
    accepted = []
    count = 0
    while count < N:
        proposals = rng.random((2 * (N - count) + 16, grid.d)) - 0.5
        keep = rng.random(len(proposals)) * ceiling <= interpolator(proposals)
        accepted.append(proposals[keep])
        count += int(keep.sum())
    return np.concatenate(accepted)[:N]


def cloud_from_density(density: ScalarField, N: int, seed: int = 0) -> ParticleCloud:
    return ParticleCloud(sample_from_density(density, N, np.random.default_rng(seed)), stream=seed)


class CloudTrajectory:
    """ Positions of one set of particles at consecutive mesh times, shape (len(times), N, d) """

    def __init__(self, times: np.ndarray, positions: np.ndarray, stream=None):
        if len(times) != len(positions):
            raise ValueError(f"{len(times)} times for {len(positions)} position frames")
        positions.flags.writeable = False
        self.times = np.asarray(times, dtype=float)
        self.positions = positions
        self.stream = stream

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return f"CloudTrajectory(N={self.positions.shape[1]}, t=[{self.times[0]:.6g}, {self.times[-1]:.6g}])"

    def snapshot(self, k: int) -> ParticleCloud:
        return ParticleCloud(self.positions[k], t=self.times[k], stream=self.stream)

    @property
    def final(self) -> ParticleCloud:
        return self.snapshot(len(self) - 1)
