"""
Spectral calculus on TorusGrid fields.

The *_array functions work on raw arrays whose trailing grid.d axes are the
nodes, so whole time stacks can be transformed in one call.
"""
import numpy as np

from mfoc.exceptions import NonFiniteFieldError
from mfoc.grid.torus import ScalarField, TorusGrid, VectorField, check_same_grid

SPECTRAL = "spectral"
CENTRAL = "central"
METHODS = (SPECTRAL, CENTRAL)


def _check_method(method: str):
    if method not in METHODS:
        raise ValueError(f"Unknown differentiation method '{method}', expected one of {METHODS}")


def _fft(values, grid: TorusGrid):
    return np.fft.fftn(values, axes=grid.spatial_axes)


def _ifft(coefficients, grid: TorusGrid):
    return np.fft.ifftn(coefficients, axes=grid.spatial_axes).real


def gradient_array(values: np.ndarray, grid: TorusGrid, method: str = SPECTRAL) -> np.ndarray:
    """ Returns array with a new component axis inserted just before the spatial axes """
    _check_method(method)
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError("Cannot differentiate a field with non-finite values")
    if method == CENTRAL:
        components = [(np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2 * grid.h)
                      for ax in grid.spatial_axes]
    else:
        coefficients = _fft(values, grid)
        components = [_ifft(2j * np.pi * k * coefficients, grid) for k in grid.derivative_wavenumbers]
    return np.stack(components, axis=-grid.d - 1)


def divergence_array(values: np.ndarray, grid: TorusGrid, method: str = SPECTRAL) -> np.ndarray:
    """ values has its component axis just before the spatial axes """
    _check_method(method)
    component_axis = -grid.d - 1
    total = 0.0
    for i, ax in enumerate(grid.spatial_axes):
        component = np.take(values, i, axis=component_axis)
        if method == CENTRAL:
            total = total + (np.roll(component, -1, axis=ax) - np.roll(component, 1, axis=ax)) / (2 * grid.h)
        else:
            total = total + _ifft(2j * np.pi * grid.derivative_wavenumbers[i] * _fft(component, grid), grid)
    return total


def laplacian_array(values: np.ndarray, grid: TorusGrid, method: str = SPECTRAL) -> np.ndarray:
    _check_method(method)
    if method == CENTRAL:
        return sum((np.roll(values, -1, axis=ax) - 2 * values + np.roll(values, 1, axis=ax)) / grid.h ** 2
                   for ax in grid.spatial_axes)
    return _ifft(-4 * np.pi ** 2 * grid.wavenumber_squared * _fft(values, grid), grid)


def convolve_array(kernel: np.ndarray, values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """ h^d * sum_j kernel(x_i - x_j) values(x_j), kernel sampled at the nodes (origin at index n/2) """
    product = _fft(kernel, grid) * _fft(values, grid)
    return grid.cell_volume * _ifft(product * grid.origin_shift_phase, grid)


def integrate_array(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return grid.cell_volume * np.sum(values, axis=grid.spatial_axes)


def heat_semigroup_array(values: np.ndarray, grid: TorusGrid, dt: float) -> np.ndarray:
    """ Exact solution operator of u_t = Laplacian u over time dt """
    return _ifft(np.exp(-4 * np.pi ** 2 * grid.wavenumber_squared * dt) * _fft(values, grid), grid)


def exponential_euler_array(values: np.ndarray, explicit: np.ndarray, grid: TorusGrid, dt: float) -> np.ndarray:
    """ One exponential-Euler step of u_t = Laplacian u + explicit with explicit frozen over the step """
    decay_rate = 4 * np.pi ** 2 * grid.wavenumber_squared
    decay = np.exp(-decay_rate * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(decay_rate > 0, -np.expm1(-decay_rate * dt) / decay_rate, dt)
    return _ifft(decay * _fft(values, grid) + weight * _fft(explicit, grid), grid)


def gradient(f: ScalarField, method: str = SPECTRAL) -> VectorField:
    return VectorField(f.grid, gradient_array(f.values, f.grid, method))


def divergence(v: VectorField, method: str = SPECTRAL) -> ScalarField:
    return ScalarField(v.grid, divergence_array(v.values, v.grid, method))


def laplacian(f: ScalarField, method: str = SPECTRAL) -> ScalarField:
    return ScalarField(f.grid, laplacian_array(f.values, f.grid, method))


def convolve(kernel: ScalarField, f: ScalarField) -> ScalarField:
    grid = check_same_grid(kernel, f)
    return ScalarField(grid, convolve_array(kernel.values, f.values, grid))


def convolve_vector(kernel: VectorField, f: ScalarField) -> VectorField:
    """ Componentwise kernel_i * f, e.g. gradW * rho """
    grid = check_same_grid(kernel, f)
    return VectorField(grid, convolve_array(kernel.values, f.values[np.newaxis], grid))


def integrate(f: ScalarField) -> float:
    return float(integrate_array(f.values, f.grid))


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(integrate_array(f.values ** 2, f.grid)))


def spectral_l2_norm(f: ScalarField) -> float:
    """ L2 norm through Parseval: h^d * sum|f_i|^2 = sum|f_hat_k|^2 / n^(2d) """
    coefficients = _fft(f.values, f.grid)
    return float(np.sqrt(np.sum(np.abs(coefficients) ** 2) / f.grid.n ** (2 * f.grid.d)))
