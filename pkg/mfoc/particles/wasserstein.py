"""
Wasserstein-1 distance on the torus between particle clouds and grid densities.

d=1 is exact: min over c of int |F_a - F_b - c| over one period, where F are
cumulative functions (grid densities are constant on the cell around each node).
d>=2 solves an assignment problem on at most ASSIGNMENT_SAMPLES points per side
and is only an estimate.
"""
import logging
from typing import Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from mfoc.exceptions import MassMismatchError
from mfoc.grid.calculus import integrate
from mfoc.grid.torus import ScalarField, torus_distance
from mfoc.particles.clouds import ParticleCloud, cell_edges_1d, sample_from_density

ASSIGNMENT_SAMPLES = 512
MASS_TOLERANCE = 1e-9
MEDIAN_BISECTIONS = 100
# round-off undershoot tolerated in grid densities
NEGATIVITY_TOLERANCE = -1e-12

Measure = Union[ParticleCloud, ScalarField]


def _dimension(measure: Measure) -> int:
    return measure.grid.d if isinstance(measure, ScalarField) else measure.d


def _check_masses(a: Measure, b: Measure):
    for measure in (a, b):
        if isinstance(measure, ScalarField):
            if measure.min() < NEGATIVITY_TOLERANCE:
                raise ValueError(f"Density takes negative value {measure.min():.3g}")
            mass = integrate(measure)
            if abs(mass - 1) > MASS_TOLERANCE:
                raise MassMismatchError(f"Density has mass {mass!r}, expected 1")


def is_exact(a: Measure, b: Measure) -> bool:
    """ False when wasserstein1(a, b) is a sampled estimate """
    return _dimension(a) == 1


class _PeriodicCDF:
    """ Cumulative function on [start, start + 1) with right limits at given points """

    def __init__(self, measure: Measure, start: float):
        self.start = start
        if isinstance(measure, ScalarField):
            grid = measure.grid
            self.breakpoints = cell_edges_1d(grid)
            self.field_cumulative = np.concatenate([[0.0], np.cumsum(measure.values) * grid.h])
            self.atoms = None
        else:
            positions = measure.positions[:, 0]
            self.atoms = np.sort(start + np.mod(positions - start, 1.0))
            self.breakpoints = self.atoms

    def right_limits(self, x: np.ndarray) -> np.ndarray:
        if self.atoms is None:
            return np.interp(x, self.breakpoints, self.field_cumulative)
        return np.searchsorted(self.atoms, x, side="right") / len(self.atoms)

    def left_limits(self, x: np.ndarray) -> np.ndarray:
        if self.atoms is None:
            return np.interp(x, self.breakpoints, self.field_cumulative)
        return np.searchsorted(self.atoms, x, side="left") / len(self.atoms)


def _segment_measure_below(g0, g1, lengths, c) -> float:
    low = np.minimum(g0, g1)
    high = np.maximum(g0, g1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fraction = np.where(high > low, np.clip((c - low) / (high - low), 0.0, 1.0), (low <= c).astype(float))
    return float(np.sum(lengths * fraction))


def _segment_abs_integral(g0, g1, lengths, c) -> float:
    """ int |G - c| with G linear from g0 to g1 on each segment """
    a = g0 - c
    b = g1 - c
    same_sign = a * b >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = (a ** 2 + b ** 2) / (2 * (np.abs(a) + np.abs(b)))
    per_segment = np.where(same_sign, 0.5 * np.abs(a + b), np.nan_to_num(crossing))
    return float(np.sum(lengths * per_segment))


def _wasserstein1_periodic_line(a: Measure, b: Measure) -> float:
    fields = [m for m in (a, b) if isinstance(m, ScalarField)]
    start = -0.5 - 0.5 * fields[0].grid.h if fields else -0.5
    if len(fields) == 2 and fields[0].grid != fields[1].grid:
        raise ValueError(f"Densities on different grids {fields[0].grid} and {fields[1].grid}")

    cdf_a = _PeriodicCDF(a, start)
    cdf_b = _PeriodicCDF(b, start)
    points = np.unique(np.concatenate([[start, start + 1.0], cdf_a.breakpoints, cdf_b.breakpoints]))
    points = points[(points >= start) & (points <= start + 1.0)]
    left = points[:-1]
    right = points[1:]
    lengths = right - left
    g0 = cdf_a.right_limits(left) - cdf_b.right_limits(left)
    g1 = cdf_a.left_limits(right) - cdf_b.left_limits(right)

    # c is a median of G under Lebesgue measure on the period
    low = float(min(g0.min(), g1.min()))
    high = float(max(g0.max(), g1.max()))
    for _ in range(MEDIAN_BISECTIONS):
        middle = 0.5 * (low + high)
        if _segment_measure_below(g0, g1, lengths, middle) >= 0.5:
            high = middle
        else:
            low = middle
    return _segment_abs_integral(g0, g1, lengths, 0.5 * (low + high))


def _as_samples(measure: Measure, count: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(measure, ScalarField):
        return sample_from_density(measure, count, rng)
    positions = measure.positions
    if len(positions) > count:
        positions = positions[rng.choice(len(positions), size=count, replace=False)]
    return positions


def _wasserstein1_assignment(a: Measure, b: Measure, seed: int) -> float:
    rng = np.random.default_rng(seed)
    sizes = [len(m) for m in (a, b) if isinstance(m, ParticleCloud)]
    count = min([ASSIGNMENT_SAMPLES] + sizes)
    samples_a = _as_samples(a, count, rng)
    samples_b = _as_samples(b, count, rng)
    cost = torus_distance(samples_a[:, np.newaxis, :] - samples_b[np.newaxis, :, :])
    rows, columns = linear_sum_assignment(cost)
    logging.debug("d=%d Wasserstein-1 estimated from %d samples", samples_a.shape[1], count)
    return float(cost[rows, columns].mean())


def wasserstein1(a: Measure, b: Measure, seed: int = 0) -> float:
    """ Distance between two probability measures given as clouds or grid densities """
    if (d := _dimension(a)) != _dimension(b):
        raise ValueError(f"Measures of dimension {d} and {_dimension(b)}")
    _check_masses(a, b)
    if d == 1:
        return _wasserstein1_periodic_line(a, b)
    return _wasserstein1_assignment(a, b, seed)
