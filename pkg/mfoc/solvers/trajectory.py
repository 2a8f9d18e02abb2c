from typing import List, NamedTuple

import numpy as np
from lazy import lazy
from scipy.integrate import trapezoid

from mfoc.exceptions import MeshMismatchError
from mfoc.grid.calculus import gradient_array, integrate_array
from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid, VectorField


class Trajectory:
    """ One field per time node, stored as an array of shape (nt+1,) + grid.shape. Immutable. """

    def __init__(self, grid: TorusGrid, mesh: TimeMesh, values: np.ndarray):
        values = np.array(values, dtype=float)
        if values.shape != (mesh.nt + 1,) + grid.shape:
            raise MeshMismatchError(f"Trajectory of shape {values.shape} does not fit {mesh} on {grid}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{type(self).__name__} has non-finite values")
        values.flags.writeable = False
        self.grid = grid
        self.mesh = mesh
        self.values = values

    def __len__(self):
        return self.mesh.nt + 1

    def __repr__(self):
        return f"{type(self).__name__}({self.grid}, {self.mesh})"

    def snapshot(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[k])

    def check_compatible(self, other: "Trajectory"):
        if self.mesh != other.mesh or self.grid != other.grid:
            raise MeshMismatchError(f"{self} and {other} are not on the same mesh/grid")

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def integrals(self) -> np.ndarray:
        return integrate_array(self.values, self.grid)

    def l2_norms(self) -> np.ndarray:
        return np.sqrt(integrate_array(self.values ** 2, self.grid))

    def time_integral(self, per_node: np.ndarray) -> float:
        """ Trapezoid rule over the mesh """
        return float(trapezoid(per_node, dx=self.mesh.dt))


class ValueTrajectory(Trajectory):
    """ phi or Phi on the mesh - the last snapshot is the terminal datum.
        transform_minimum holds min v per node when Phi came from the Hopf-Cole variable v """

    def __init__(self, grid: TorusGrid, mesh: TimeMesh, values: np.ndarray, transform_minimum: np.ndarray = None):
        super().__init__(grid, mesh, values)
        self.transform_minimum = transform_minimum

    @staticmethod
    def constant_in_time(mesh: TimeMesh, field: ScalarField) -> "ValueTrajectory":
        return ValueTrajectory(field.grid, mesh, np.broadcast_to(field.values, (mesh.nt + 1,) + field.grid.shape))

    @lazy
    def gradient_values(self) -> np.ndarray:
        """ shape (nt+1, d) + grid.shape, spectral """
        gradients = gradient_array(self.values, self.grid)
        gradients.flags.writeable = False
        return gradients

    def gradient(self, k: int) -> VectorField:
        return VectorField(self.grid, self.gradient_values[k])

    @lazy
    def gradient_sup_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.gradient_values ** 2, axis=1)).reshape(len(self), -1).max(axis=1)

    def combine(self, other: "ValueTrajectory", theta: float) -> "ValueTrajectory":
        """ (1 - theta) * self + theta * other """
        self.check_compatible(other)
        return ValueTrajectory(self.grid, self.mesh, (1 - theta) * self.values + theta * other.values)


def lipschitz_profile(Phi: ValueTrajectory) -> np.ndarray:
    """ ||grad Phi(., t_k)||_inf for every mesh time """
    return Phi.gradient_sup_norms.copy()


class StepDiagnostics(NamedTuple):
    t: float
    mass: float
    minimum: float
    l2_norm: float
    drift_sup: float
    drift_energy: float
    substeps: int


class DensityTrajectory(Trajectory):

    def __init__(self, grid: TorusGrid, mesh: TimeMesh, values: np.ndarray,
                 diagnostics: List[StepDiagnostics] = None):
        super().__init__(grid, mesh, values)
        self.diagnostics = diagnostics or []

    @property
    def drift_sup(self) -> float:
        """ max over the run of ||b||_inf (nan if no diagnostics were recorded) """
        if not self.diagnostics:
            return float("nan")
        return max(d.drift_sup for d in self.diagnostics)

    def l2_norms_of_difference(self, other: "DensityTrajectory") -> np.ndarray:
        self.check_compatible(other)
        return np.sqrt(integrate_array((self.values - other.values) ** 2, self.grid))

    def l2_distance(self, other: "DensityTrajectory") -> float:
        """ ||self - other||_{L^inf(0,T; L^2)} """
        return float(self.l2_norms_of_difference(other).max())
