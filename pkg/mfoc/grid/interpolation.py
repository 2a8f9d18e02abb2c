import numpy as np
from scipy.interpolate import RegularGridInterpolator

from mfoc.grid.torus import TorusGrid, wrap_to_cube


class PeriodicInterpolator:
    """ Multilinear interpolation of nodal values at arbitrary torus points.

        values may carry trailing component axes, e.g. a gradient stored as (n,)*d + (d,)

        interpolator = PeriodicInterpolator(grid, field.values)
        interpolator(np.array([[0.1], [0.3]]))
    """

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        trailing = values.ndim - grid.d
        pad = [(0, 1)] * grid.d + [(0, 0)] * trailing
        # Closing the periodic cell: node -1/2 is repeated at +1/2
        padded = np.pad(values, pad, mode="wrap")
        axis = np.linspace(-0.5, 0.5, grid.n + 1)
        self.grid = grid
        self._interpolator = RegularGridInterpolator([axis] * grid.d, padded, method="linear")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.grid.d)
        return self._interpolator(wrap_to_cube(points))


def interpolate_vector(grid: TorusGrid, vector_values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """ vector_values has shape (d,) + grid.shape; returns (N, d) """
    return PeriodicInterpolator(grid, np.moveaxis(vector_values, 0, -1))(points)
