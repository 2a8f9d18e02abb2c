from typing import Iterable, List, Sequence, Tuple

import numpy as np

from mfoc.grid.calculus import gradient_array
from mfoc.grid.torus import ScalarField, TorusGrid


class FourierMode:
    __slots__ = ("wavevector", "cos", "sin")

    def __init__(self, wavevector: Sequence[int], cos: float = 0.0, sin: float = 0.0):
        wavevector = tuple(int(k) for k in wavevector)
        if not wavevector:
            raise ValueError(f"Bad wavevector {wavevector}")
        self.wavevector = wavevector
        self.cos = float(cos)
        self.sin = float(sin)

    def __repr__(self):
        return f"FourierMode({self.wavevector}, cos={self.cos}, sin={self.sin})"


class TrigonometricSeries:
    """ constant + sum over modes of cos*cos(2 pi k.x) + sin*sin(2 pi k.x), with exact derivatives

        series = TrigonometricSeries(1, constant=1.0, modes=[FourierMode([1], cos=0.5)])
        rho0 = series.sample(TorusGrid(1, 64))
    """

    def __init__(self, d: int, constant: float = 0.0, modes: Iterable[FourierMode] = ()):
        self.d = d
        self.constant = float(constant)
        self.modes: List[FourierMode] = list(modes)
        for mode in self.modes:
            if len(mode.wavevector) != d:
                raise ValueError(f"{mode} does not have {d} components")

    def _phases(self, points: np.ndarray):
        for mode in self.modes:
            k = np.asarray(mode.wavevector, dtype=float)
            yield mode, k, 2 * np.pi * (points @ k)

    def value(self, points: np.ndarray) -> np.ndarray:
        """ points has coordinates on the last axis """
        points = np.asarray(points, dtype=float)
        total = np.full(points.shape[:-1], self.constant)
        for mode, _, phase in self._phases(points):
            total = total + mode.cos * np.cos(phase) + mode.sin * np.sin(phase)
        return total

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        total = np.zeros(points.shape)
        for mode, k, phase in self._phases(points):
            slope = 2 * np.pi * (-mode.cos * np.sin(phase) + mode.sin * np.cos(phase))
            total = total + slope[..., np.newaxis] * k
        return total

    def hessian(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        total = np.zeros(points.shape + (self.d,))
        for mode, k, phase in self._phases(points):
            curvature = -4 * np.pi ** 2 * (mode.cos * np.cos(phase) + mode.sin * np.sin(phase))
            total = total + curvature[..., np.newaxis, np.newaxis] * np.outer(k, k)
        return total

    def sample(self, grid: TorusGrid) -> ScalarField:
        if grid.d != self.d:
            raise ValueError(f"Series of dimension {self.d} sampled on {grid}")
        return ScalarField(grid, self.value(grid.points))


def random_probability_density(grid: TorusGrid, rng: np.random.Generator, max_wavenumber: int = 3,
                               modes: int = 4, amplitude: float = 0.9) -> ScalarField:
    """ 1 + band-limited perturbation with sup norm 'amplitude' - strictly positive, unit mass """
    perturbation = random_band_limited(grid, rng, max_wavenumber, modes)
    scale = perturbation.sup_norm()
    if scale == 0:
        return ScalarField.constant(grid, 1.0)
    return 1.0 + perturbation * (amplitude / scale)


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, max_wavenumber: int = 3,
                        modes: int = 4) -> ScalarField:
    fourier_modes = []
    for _ in range(modes):
        wavevector = rng.integers(-max_wavenumber, max_wavenumber + 1, size=grid.d)
        if not np.any(wavevector):
            wavevector[0] = 1
        cos_coefficient, sin_coefficient = rng.standard_normal(2)
        fourier_modes.append(FourierMode(wavevector, cos_coefficient, sin_coefficient))
    return TrigonometricSeries(grid.d, 0.0, fourier_modes).sample(grid)


def c2_norm(field: ScalarField) -> Tuple[float, float, float]:
    """ (sup |f|, sup |grad f|, sup ||Hess f||) estimated spectrally at the nodes """
    gradient = gradient_array(field.values, field.grid)
    hessian = gradient_array(gradient, field.grid)  # (d, d) + grid shape
    hessian = np.moveaxis(hessian, (0, 1), (-2, -1))
    hessian = 0.5 * (hessian + np.swapaxes(hessian, -1, -2))
    return (field.sup_norm(),
            float(np.sqrt(np.sum(gradient ** 2, axis=0)).max()),
            matrix_sup_norm(hessian))


def matrix_sup_norm(matrices: np.ndarray) -> float:
    """ max over nodes of the spectral norm of symmetric (d, d) matrices held on the last two axes """
    if matrices.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvalsh(matrices)).max())
