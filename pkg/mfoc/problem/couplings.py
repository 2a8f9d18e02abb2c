import abc
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from mfoc.exceptions import AssumptionError
from mfoc.grid.calculus import convolve_array
from mfoc.grid.torus import ScalarField, TorusGrid
from mfoc.problem.fields import c2_norm
from mfoc.problem.potentials import Potential


class CouplingBounds(NamedTuple):
    """ Bounds of U(., m) over probability densities m. grad_sup is None when no bound is known """
    sup: float
    grad_sup: Optional[float]
    c2_norm: float
    lipschitz: float


class RunningCost:
    """ L(x, rho) = V(x) + g(rho(x)) + (K * rho)(x) / 2

        The first variation term dL/drho * rho then gives U = V + g(m) + g'(m) m + K * m
        (K symmetric). g without g' cannot be turned into a coupling.

        cost = RunningCost.power(coefficient=0.5, exponent=2)   # l(x, r) = r^2/2
    """

    def __init__(self, potential: Union[None, float, ScalarField] = None,
                 local: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 local_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 interaction: Optional[Potential] = None):
        self.potential = potential
        self.local = local
        self.local_derivative = local_derivative
        self.interaction = interaction

    @staticmethod
    def power(coefficient: float, exponent: float, potential=None, interaction=None) -> "RunningCost":
        if exponent < 1:
            raise ValueError(f"Running cost exponent {exponent} must be >= 1")
        return RunningCost(potential,
                           local=lambda r: coefficient * r ** exponent,
                           local_derivative=lambda r: coefficient * exponent * r ** (exponent - 1),
                           interaction=interaction)

    def _potential_values(self, grid: TorusGrid):
        if self.potential is None:
            return None
        if isinstance(self.potential, ScalarField):
            if self.potential.grid != grid:
                raise ValueError(f"Running cost potential on {self.potential.grid}, density on {grid}")
            return self.potential.values
        return np.full(grid.shape, float(self.potential))

    def _interaction(self, m: np.ndarray, grid: TorusGrid, sampled_potentials=None):
        sampled = interaction_kernel(self.interaction, grid, sampled_potentials)
        return convolve_array(sampled.W.values, m, grid)

    def value_array(self, m: np.ndarray, grid: TorusGrid, sampled_potentials=None) -> np.ndarray:
        """ L(x, m) at every node; m may carry leading (time) axes """
        total = np.zeros_like(m)
        if (v := self._potential_values(grid)) is not None:
            total = total + v
        if self.local is not None:
            total = total + self.local(m)
        if self.interaction is not None:
            total = total + 0.5 * self._interaction(m, grid, sampled_potentials)
        return total

    def derive_coupling_array(self, m: np.ndarray, grid: TorusGrid, sampled_potentials=None) -> np.ndarray:
        if self.local is not None and self.local_derivative is None:
            raise ValueError("Running cost has a density-dependent part but no derivative d l/d r")
        total = None
        if (v := self._potential_values(grid)) is not None:
            total = v
        if self.local is not None:
            part = self.local(m) + self.local_derivative(m) * m
            total = part if total is None else total + part
        if self.interaction is not None:
            part = self._interaction(m, grid, sampled_potentials)
            total = part if total is None else total + part
        return np.zeros_like(m) if total is None else np.broadcast_to(total, m.shape)


def interaction_kernel(potential: Potential, grid: TorusGrid, sampled_potentials=None):
    """ Sampled kernel, reusing a {id(potential): SampledPotential} cache when given """
    if sampled_potentials is None:
        return potential.sample(grid)
    key = id(potential)
    if key not in sampled_potentials:
        sampled_potentials[key] = potential.sample(grid)
    return sampled_potentials[key]


def derive_U_from_L(L: RunningCost, m: ScalarField) -> ScalarField:
    """ U = l(x, m) + dl/dr(x, m) * m (+ K * m for an interaction part) """
    return ScalarField(m.grid, L.derive_coupling_array(m.values, m.grid))


class Coupling(abc.ABC):

    def __init__(self):
        self._sampled = {}

    @abc.abstractmethod
    def evaluate_array(self, m: np.ndarray, grid: TorusGrid) -> np.ndarray:
        """ U(x, m) for m with optional leading (time) axes """
        pass

    @abc.abstractmethod
    def bounds(self, grid: TorusGrid) -> CouplingBounds:
        pass

    def running_cost(self) -> Optional[RunningCost]:
        """ An L whose first variation reproduces U, if one is known """
        return None

    def evaluate(self, m: ScalarField) -> ScalarField:
        return ScalarField(m.grid, self.evaluate_array(m.values, m.grid))


def evaluate_U(coupling: Coupling, m: ScalarField) -> ScalarField:
    return coupling.evaluate(m)


class ConstantCoupling(Coupling):

    def __init__(self, c: float):
        super().__init__()
        self.c = float(c)

    def __repr__(self):
        return f"ConstantCoupling({self.c})"

    def evaluate_array(self, m, grid):
        return np.full(np.shape(m), self.c)

    def bounds(self, grid):
        return CouplingBounds(abs(self.c), 0.0, abs(self.c), 0.0)

    def running_cost(self):
        return RunningCost(potential=self.c)


class AdditiveNonlocalCoupling(Coupling):
    """ U(x, m) = V(x) + (K * m)(x) """

    def __init__(self, V: ScalarField, K: Potential):
        super().__init__()
        self.V = V
        self.K = K
        self._running_cost = RunningCost(potential=V, interaction=K)

    def __repr__(self):
        return f"AdditiveNonlocalCoupling(K={self.K})"

    def evaluate_array(self, m, grid):
        return self._running_cost.derive_coupling_array(m, grid, self._sampled)

    def bounds(self, grid):
        kernel = interaction_kernel(self.K, grid, self._sampled)
        v_sup, v_grad, v_hessian = c2_norm(self.V)
        k_sup = kernel.W.sup_norm()
        k_grad, k_hessian, _ = kernel.norms
        # |K * m| <= ||K||_L2 ||m||_L2 by Cauchy-Schwarz
        k_l2 = float(np.sqrt(grid.cell_volume * np.sum(kernel.W.values ** 2)))
        return CouplingBounds(v_sup + k_sup, v_grad + k_grad,
                              v_sup + v_grad + v_hessian + k_sup + k_grad + k_hessian, k_l2)

    def running_cost(self):
        return self._running_cost


class LocalPowerCoupling(Coupling):
    """ U(x, m) = c1 * min(max(m, 0), M_sat)^p

        Saturation keeps U bounded uniformly in m. U inherits the spatial regularity of m,
        so a gradient bound can only be supplied, not derived.
    """

    def __init__(self, c1: float, exponent: float, saturation: float, gradient_bound: Optional[float] = None):
        super().__init__()
        if exponent < 1:
            raise AssumptionError(f"(A2) local_power exponent {exponent} < 1 is not Lipschitz in m")
        if not saturation > 0:
            raise AssumptionError(f"(A2) local_power needs a positive saturation cap, got {saturation}")
        self.c1 = float(c1)
        self.exponent = float(exponent)
        self.saturation = float(saturation)
        self.gradient_bound = gradient_bound

    def __repr__(self):
        return f"LocalPowerCoupling(c1={self.c1}, p={self.exponent}, M_sat={self.saturation})"

    def evaluate_array(self, m, grid):
        return self.c1 * np.clip(m, 0.0, self.saturation) ** self.exponent

    def bounds(self, grid):
        sup = abs(self.c1) * self.saturation ** self.exponent
        slope = abs(self.c1) * self.exponent * self.saturation ** (self.exponent - 1)
        # Pointwise differences are controlled by the L2 norm only through the grid: |m(x)| <= ||m||_L2 / h^(d/2)
        lipschitz = slope / grid.h ** (grid.d / 2)
        return CouplingBounds(sup, self.gradient_bound, sup, lipschitz)
