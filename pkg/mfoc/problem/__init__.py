from mfoc.problem.couplings import (AdditiveNonlocalCoupling, ConstantCoupling, Coupling, LocalPowerCoupling,
                                    RunningCost, derive_U_from_L, evaluate_U)
from mfoc.problem.fields import FourierMode, TrigonometricSeries
from mfoc.problem.potentials import (MorsePotential, Potential, PowerLawPotential, TabulatedPotential,
                                     TrigonometricPotential)
from mfoc.problem.problem_spec import ProblemSpec, validate_assumptions


def sample_potential(potential: Potential, grid):
    """ Returns (W, grad W, (||grad W||_inf, ||Hess W||_inf)) """
    sampled = potential.sample(grid)
    return sampled.W, sampled.grad_W, (sampled.norms.grad_sup, sampled.norms.hessian_sup)
