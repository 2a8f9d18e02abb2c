import abc
import logging
from typing import List, NamedTuple, Optional, Union

import numpy as np
from lazy import lazy

from mfoc.exceptions import AssumptionError, GridMismatchError
from mfoc.grid.calculus import gradient_array, l2_norm
from mfoc.grid.interpolation import interpolate_vector
from mfoc.grid.torus import ScalarField, TorusGrid, VectorField, torus_distance, wrap_to_cube
from mfoc.problem.fields import TrigonometricSeries, matrix_sup_norm

AUTO_SMOOTHING = "auto"
NO_SMOOTHING = "off"
# Smoothing width in grid spacings used for "auto"
AUTO_SMOOTHING_CELLS = 2.0


class PotentialNorms(NamedTuple):
    grad_sup: float
    hessian_sup: float
    grad_l2: float


class SampledPotential:
    """ W, grad W and norm estimates of a potential on one grid """

    def __init__(self, potential: "Potential", grid: TorusGrid, W: ScalarField, grad_W: VectorField,
                 hessian_sup: float, smoothed: bool):
        self.potential = potential
        self.grid = grid
        self.W = W
        self.grad_W = grad_W
        self.smoothed = smoothed
        self.norms = PotentialNorms(grad_W.sup_norm(), hessian_sup,
                                    l2_norm(grad_W.magnitude()))

    @lazy
    def is_zero(self) -> bool:
        return not np.any(self.grad_W.values)

    def gradient_at(self, displacements: np.ndarray) -> np.ndarray:
        """ grad W at arbitrary displacements (last axis = coordinates) """
        displacements = np.asarray(displacements, dtype=float)
        if self.smoothed or not self.potential.has_analytic_derivatives:
            flat = interpolate_vector(self.grid, self.grad_W.values, displacements.reshape(-1, self.grid.d))
            return flat.reshape(displacements.shape)
        return self.potential.gradient_at(wrap_to_cube(displacements))


class Potential(abc.ABC):
    """ Interaction kernel W on the torus.

        smoothing_width: None (mollify with 2h only where grad W jumps), "off" (sample the raw formula),
        a width in torus units, or "auto" (2h). YAML's bare off reads as False and means "off".
        Smoothing convolves W with a periodic Gaussian before differentiating spectrally.
    """
    has_analytic_derivatives = True

    def __init__(self, smoothing_width: Union[None, bool, float, str] = None):
        if smoothing_width is False:
            smoothing_width = NO_SMOOTHING
        if smoothing_width not in (None, AUTO_SMOOTHING, NO_SMOOTHING) and not float(smoothing_width) > 0:
            raise ValueError(f"smoothing_width must be positive, None, '{AUTO_SMOOTHING}' or '{NO_SMOOTHING}', "
                             f"got {smoothing_width}")
        self.smoothing_width = smoothing_width

    @abc.abstractmethod
    def value(self, points: np.ndarray) -> np.ndarray:
        pass

    @abc.abstractmethod
    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        pass

    @abc.abstractmethod
    def hessian_at(self, points: np.ndarray) -> np.ndarray:
        pass

    def warnings(self, grid: TorusGrid) -> List[str]:
        return []

    def gradient_jumps(self) -> dict:
        """ {location: jump of grad W}, nonzero where W is not C^1 """
        return {}

    def has_gradient_jumps(self) -> bool:
        return any(jump > 0 for jump in self.gradient_jumps().values())

    def _smoothing(self, grid: TorusGrid) -> Optional[float]:
        if self.smoothing_width == NO_SMOOTHING:
            return None
        if self.smoothing_width is None:
            return AUTO_SMOOTHING_CELLS * grid.h if self.has_gradient_jumps() else None
        if self.smoothing_width == AUTO_SMOOTHING:
            return AUTO_SMOOTHING_CELLS * grid.h
        return float(self.smoothing_width)

    def sample(self, grid: TorusGrid) -> SampledPotential:
        points = grid.points
        if (epsilon := self._smoothing(grid)) is not None:
            raw = self.value(points)
            mollifier = np.exp(-2 * np.pi ** 2 * epsilon ** 2 * grid.wavenumber_squared)
            W = np.fft.ifftn(np.fft.fftn(raw) * mollifier).real
            grad_W = gradient_array(W, grid)
            hessian = gradient_array(grad_W, grid)
            hessian = np.moveaxis(hessian, (0, 1), (-2, -1))
            hessian_sup = matrix_sup_norm(0.5 * (hessian + np.swapaxes(hessian, -1, -2)))
            smoothed = True
        else:
            W = self.value(points)
            grad_W = np.moveaxis(self.gradient_at(points), -1, 0)
            hessian_sup = matrix_sup_norm(self.hessian_at(points))
            smoothed = False
        logging.debug("Sampled %s on %s (smoothing=%s)", self, grid, epsilon)
        return SampledPotential(self, grid, ScalarField(grid, W), VectorField(grid, grad_W), hessian_sup, smoothed)


class RadialPotential(Potential):
    """ W(x) = w(|x|) with |x| the torus distance to the origin """

    @abc.abstractmethod
    def profile(self, r: np.ndarray) -> np.ndarray:
        pass

    @abc.abstractmethod
    def profile_derivative(self, r: np.ndarray) -> np.ndarray:
        pass

    @abc.abstractmethod
    def profile_second_derivative(self, r: np.ndarray) -> np.ndarray:
        pass

    def value(self, points):
        return self.profile(torus_distance(points))

    def gradient_at(self, points):
        x = wrap_to_cube(points)
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            direction = np.where(r[..., np.newaxis] > 0, x / r[..., np.newaxis], 0.0)
        # At the origin the odd-symmetric average is zero
        return self.profile_derivative(r)[..., np.newaxis] * direction

    def hessian_at(self, points):
        x = wrap_to_cube(points)
        d = x.shape[-1]
        r = np.linalg.norm(x, axis=-1)
        positive = r > 0
        safe_r = np.where(positive, r, 1.0)
        direction = x / safe_r[..., np.newaxis]
        radial = np.einsum("...i,...j->...ij", direction, direction)
        tangential = np.eye(d) - radial
        w2 = self.profile_second_derivative(r)
        w1_over_r = np.where(positive, self.profile_derivative(r) / safe_r, w2)
        hessian = w2[..., np.newaxis, np.newaxis] * radial + w1_over_r[..., np.newaxis, np.newaxis] * tangential
        return np.where(positive[..., np.newaxis, np.newaxis], hessian, w2[..., np.newaxis, np.newaxis] * np.eye(d))

    def gradient_jumps(self) -> dict:
        """ Jumps of grad W at the origin and across a cube face (zero when W is C^1 there) """
        origin = 2 * abs(float(self.profile_derivative(np.array(0.0))))
        face = 2 * abs(float(self.profile_derivative(np.array(0.5))))
        return {"origin": origin, "face": face}

    def warnings(self, grid: TorusGrid) -> List[str]:
        messages = []
        for where, jump in self.gradient_jumps().items():
            if jump <= 0:
                continue
            if self.smoothing_width == NO_SMOOTHING:
                messages.append(f"{self}: grad W jumps by {jump:.4g} at the {where} and smoothing is off")
            elif self.smoothing_width is None:
                messages.append(f"{self}: grad W jumps by {jump:.4g} at the {where}; "
                                f"mollified with width {AUTO_SMOOTHING_CELLS:g}h")
        return messages


class MorsePotential(RadialPotential):
    """ w(r) = -C_A exp(-r/l_A) + C_R exp(-r/l_R) """

    def __init__(self, C_A: float, l_A: float, C_R: float, l_R: float, smoothing_width=None):
        super().__init__(smoothing_width)
        if min(l_A, l_R) <= 0:
            raise ValueError(f"Morse length scales must be positive ({l_A=}, {l_R=})")
        self.C_A = float(C_A)
        self.l_A = float(l_A)
        self.C_R = float(C_R)
        self.l_R = float(l_R)

    def __repr__(self):
        return f"MorsePotential(C_A={self.C_A}, l_A={self.l_A}, C_R={self.C_R}, l_R={self.l_R})"

    def profile(self, r):
        return -self.C_A * np.exp(-r / self.l_A) + self.C_R * np.exp(-r / self.l_R)

    def profile_derivative(self, r):
        return self.C_A / self.l_A * np.exp(-r / self.l_A) - self.C_R / self.l_R * np.exp(-r / self.l_R)

    def profile_second_derivative(self, r):
        return -self.C_A / self.l_A ** 2 * np.exp(-r / self.l_A) + self.C_R / self.l_R ** 2 * np.exp(-r / self.l_R)

    def warnings(self, grid: TorusGrid) -> List[str]:
        messages = super().warnings(grid)
        if self.C_A:
            C = self.C_R / self.C_A
            l = self.l_R / self.l_A
            if C * l ** grid.d >= 1:
                messages.append(f"{self}: C*l^d = {C * l ** grid.d:.4g} >= 1, not a well-prepared Morse potential")
        return messages


class PowerLawPotential(RadialPotential):
    """ w(r) = r^a/a - r^b/b, needs a, b >= 2 for a bounded Hessian """

    def __init__(self, a: float, b: float, smoothing_width=None):
        super().__init__(smoothing_width)
        if a < 2 or b < 2:
            raise AssumptionError(f"(A1) power law needs a >= 2 and b >= 2 for grad W to be Lipschitz, "
                                  f"got {a=}, {b=}")
        self.a = float(a)
        self.b = float(b)

    def __repr__(self):
        return f"PowerLawPotential(a={self.a}, b={self.b})"

    def profile(self, r):
        return r ** self.a / self.a - r ** self.b / self.b

    def profile_derivative(self, r):
        return r ** (self.a - 1) - r ** (self.b - 1)

    def profile_second_derivative(self, r):
        return (self.a - 1) * r ** (self.a - 2) - (self.b - 1) * r ** (self.b - 2)


class TrigonometricPotential(Potential):

    def __init__(self, series: TrigonometricSeries, smoothing_width=None):
        super().__init__(smoothing_width)
        self.series = series

    @staticmethod
    def zero(d: int) -> "TrigonometricPotential":
        return TrigonometricPotential(TrigonometricSeries(d))

    def __repr__(self):
        return f"TrigonometricPotential({len(self.series.modes)} modes)"

    def value(self, points):
        return self.series.value(points)

    def gradient_at(self, points):
        return self.series.gradient(points)

    def hessian_at(self, points):
        return self.series.hessian(points)


class TabulatedPotential(Potential):
    """ W given by nodal values; derivatives by periodic central differences """
    has_analytic_derivatives = False

    def __init__(self, table: ScalarField, smoothing_width=None):
        super().__init__(smoothing_width)
        self.table = table

    def __repr__(self):
        return f"TabulatedPotential({self.table.grid})"

    def _check_points(self, points):
        if points.shape[:-1] != self.table.grid.shape:
            raise GridMismatchError(f"Tabulated potential on {self.table.grid} can only be sampled on that grid")

    def value(self, points):
        self._check_points(points)
        return self.table.values

    def gradient_at(self, points):
        self._check_points(points)
        return np.moveaxis(gradient_array(self.table.values, self.table.grid, method="central"), 0, -1)

    def hessian_at(self, points):
        self._check_points(points)
        grid = self.table.grid
        values = self.table.values
        hessian = np.empty(grid.shape + (grid.d, grid.d))
        gradient = gradient_array(values, grid, method="central")
        for i, ax in enumerate(grid.spatial_axes):
            for j, bx in enumerate(grid.spatial_axes):
                if i == j:
                    second = (np.roll(values, -1, axis=ax) - 2 * values + np.roll(values, 1, axis=ax)) / grid.h ** 2
                else:
                    second = (np.roll(gradient[i], -1, axis=bx) - np.roll(gradient[i], 1, axis=bx)) / (2 * grid.h)
                hessian[..., i, j] = second
        return 0.5 * (hessian + np.swapaxes(hessian, -1, -2))

    def sample(self, grid: TorusGrid) -> SampledPotential:
        if grid != self.table.grid:
            raise GridMismatchError(f"Tabulated potential on {self.table.grid} sampled on {grid}")
        return super().sample(grid)
