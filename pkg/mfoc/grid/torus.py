import math
from typing import Iterable, Tuple, Union

import numpy as np
from lazy import lazy
from more_itertools import all_equal

from mfoc.exceptions import GridMismatchError, NonFiniteFieldError

MAX_DIMENSION = 3
# Keeps n^d nodes (and a time stack of them) addressable in memory
MAX_NODES = 2 ** 24


def wrap_to_cube(points: np.ndarray) -> np.ndarray:
    """ Map coordinates onto the fundamental cube [-1/2, 1/2) of the torus """
    wrapped = np.mod(np.asarray(points, dtype=float) + 0.5, 1.0) - 0.5
    # np.mod of a tiny negative number returns exactly 1.0
    return np.where(wrapped >= 0.5, wrapped - 1.0, wrapped)


def torus_distance(displacement: np.ndarray) -> np.ndarray:
    """ Euclidean length of the shortest representative of displacement (last axis = coordinates) """
    return np.linalg.norm(wrap_to_cube(displacement), axis=-1)


class TorusGrid:
    """ Uniform periodic grid on the cube [-1/2, 1/2)^d with opposite faces identified.

        Node i along an axis sits at x_i = -1/2 + i*h with h = 1/n.

        grid = TorusGrid(d=1, n=64)
        grid.coordinates[0]  # 64 node coordinates
    """

    def __init__(self, d: int, n: int):
        if not 1 <= d <= MAX_DIMENSION:
            raise ValueError(f"Dimension {d=} outside supported range 1..{MAX_DIMENSION}")
        if n < 2 or n & (n - 1):
            raise ValueError(f"Points per axis {n=} must be a power of two >= 2")
        if n ** d > MAX_NODES:
            raise ValueError(f"Grid {n}^{d} exceeds the supported {MAX_NODES} nodes")
        self.d = int(d)
        self.n = int(n)
        self.h = 1.0 / self.n

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and self.d == other.d and self.n == other.n

    def __hash__(self):
        return hash((self.d, self.n))

    def __repr__(self):
        return f"TorusGrid(d={self.d}, n={self.n})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        """ Trailing axes holding the nodes - arrays may carry leading (time/component) axes """
        return tuple(range(-self.d, 0))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @lazy
    def axis_coordinates(self) -> np.ndarray:
        return -0.5 + np.arange(self.n) * self.h

    @lazy
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """ Broadcastable per-axis node coordinates (open mesh) """
        return tuple(np.meshgrid(*([self.axis_coordinates] * self.d), indexing="ij", sparse=True))

    @lazy
    def points(self) -> np.ndarray:
        """ Node coordinates, shape (n,)*d + (d,) """
        mesh = np.meshgrid(*([self.axis_coordinates] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def _per_axis(self, k1: np.ndarray):
        wavenumbers = []
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.n
            wavenumbers.append(k1.reshape(shape))
        return tuple(wavenumbers)

    @lazy
    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """ Integer frequencies k per axis, so modes read exp(2 pi i k.x) """
        return self._per_axis(np.fft.fftfreq(self.n, d=self.h))

    @lazy
    def derivative_wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """ As wavenumbers but with the Nyquist mode removed so odd derivatives stay real """
        k1 = np.fft.fftfreq(self.n, d=self.h)
        k1[self.n // 2] = 0.0
        return self._per_axis(k1)

    @lazy
    def wavenumber_squared(self) -> np.ndarray:
        return sum(k ** 2 for k in self.wavenumbers)

    @lazy
    def origin_shift_phase(self) -> np.ndarray:
        """ Fourier factor moving index n/2 (the node x=0) to index 0 along every axis """
        phase = np.ones(self.shape)
        for k in self.wavenumbers:
            phase = phase * np.where(np.mod(k, 2) == 0, 1.0, -1.0)
        return phase

    @property
    def origin_index(self) -> Tuple[int, ...]:
        return (self.n // 2,) * self.d

    def nearest_index(self, point: Iterable[float]) -> Tuple[int, ...]:
        point = wrap_to_cube(np.asarray(list(point), dtype=float))
        return tuple(int(i) % self.n for i in np.rint((point + 0.5) / self.h))


class TimeMesh:
    """ Uniform time mesh t_k = k*dt on [0, T] """

    def __init__(self, T: float, nt: int):
        if not (T > 0 and math.isfinite(T)):
            raise ValueError(f"Horizon {T=} must be positive and finite")
        if nt < 1:
            raise ValueError(f"Number of time steps {nt=} must be >= 1")
        self.T = float(T)
        self.nt = int(nt)
        self.dt = self.T / self.nt

    def __eq__(self, other):
        return isinstance(other, TimeMesh) and self.T == other.T and self.nt == other.nt

    def __hash__(self):
        return hash((self.T, self.nt))

    def __repr__(self):
        return f"TimeMesh(T={self.T}, nt={self.nt})"

    @lazy
    def times(self) -> np.ndarray:
        times = np.arange(self.nt + 1) * self.dt
        times[-1] = self.T
        return times

    def index_of(self, t: float) -> int:
        """ Index of the mesh node nearest to t """
        if not 0.0 <= t <= self.T:
            raise ValueError(f"Time {t} outside [0, {self.T}]")
        return int(round(t / self.dt))

    def refined(self, factor: int = 2) -> "TimeMesh":
        return TimeMesh(self.T, self.nt * factor)


def check_same_grid(*fields):
    grids = [f.grid for f in fields]
    if not all_equal(grids):
        raise GridMismatchError(f"Fields live on different grids: {grids}")
    return grids[0]


class ScalarField:
    """ Nodal values of a real 1-periodic function. Immutable. """

    def __init__(self, grid: TorusGrid, values):
        values = np.array(values, dtype=float)
        if values.size == 1 and values.ndim == 0:
            values = np.full(grid.shape, float(values))
        if values.shape != grid.shape:
            raise GridMismatchError(f"Values of shape {values.shape} do not fit {grid} (expected {grid.shape})")
        if not np.all(np.isfinite(values)):
            bad = int(np.count_nonzero(~np.isfinite(values)))
            raise NonFiniteFieldError(f"Field has {bad} non-finite values (first at {np.argwhere(~np.isfinite(values))[0]})")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @staticmethod
    def constant(grid: TorusGrid, value: float) -> "ScalarField":
        return ScalarField(grid, np.full(grid.shape, float(value)))

    @staticmethod
    def from_function(grid: TorusGrid, func) -> "ScalarField":
        """ func receives the broadcastable coordinate arrays x_1, ..., x_d """
        return ScalarField(grid, np.broadcast_to(func(*grid.coordinates), grid.shape))

    def __repr__(self):
        return f"ScalarField({self.grid}, min={self.min():.6g}, max={self.max():.6g})"

    def _other_values(self, other):
        if isinstance(other, ScalarField):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other_values(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other_values(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other_values(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._other_values(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


class VectorField:
    """ d components on a common grid, stored as one array of shape (d,) + (n,)*d """

    def __init__(self, grid: TorusGrid, values):
        values = np.array(values, dtype=float)
        if values.shape != (grid.d,) + grid.shape:
            raise GridMismatchError(f"Vector values of shape {values.shape} do not fit {grid}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("Vector field has non-finite values")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @staticmethod
    def from_components(components) -> "VectorField":
        components = list(components)
        grid = check_same_grid(*components)
        if len(components) != grid.d:
            raise GridMismatchError(f"{len(components)} components given for a {grid.d}-dimensional grid")
        return VectorField(grid, np.stack([c.values for c in components]))

    @staticmethod
    def zeros(grid: TorusGrid) -> "VectorField":
        return VectorField(grid, np.zeros((grid.d,) + grid.shape))

    @property
    def components(self) -> Tuple[ScalarField, ...]:
        return tuple(ScalarField(self.grid, c) for c in self.values)

    def magnitude(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values ** 2, axis=0)))

    def sup_norm(self) -> float:
        """ max over nodes of the Euclidean length """
        return float(np.sqrt(np.sum(self.values ** 2, axis=0)).max())

    def __add__(self, other: "VectorField"):
        check_same_grid(self, other)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField"):
        check_same_grid(self, other)
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, other: Union[float, ScalarField]):
        if isinstance(other, ScalarField):
            check_same_grid(self, other)
            return VectorField(self.grid, self.values * other.values[np.newaxis])
        return VectorField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.values)
