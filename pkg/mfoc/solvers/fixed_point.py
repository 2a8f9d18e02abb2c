"""
Outer map F(phi) = Phi: phi -> fp_solve -> assemble_source -> hopf_cole_solve,
its damped Picard iteration, the Lipschitz budget and certification of the result.
"""
import logging
import math
from typing import Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from mfoc.exceptions import AssumptionError
from mfoc.problem.fields import c2_norm, random_band_limited
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.reports import CheckResult, Report
from mfoc.solvers.fokker_planck import (DEFAULT_CFL_SAFETY, DEFAULT_MAX_SUBSTEPS, density_invariants, fp_solve,
                                        interaction_drift_array)
from mfoc.solvers.hjb import assemble_source, hopf_cole_solve
from mfoc.solvers.trajectory import DensityTrajectory, ValueTrajectory, lipschitz_profile

DEFAULT_DAMPING = 0.5
DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITERATIONS = 200
# Discretisation allowance on the envelope: ENVELOPE_TOLERANCE_FACTOR * (h + dt) * A e^{BT}
ENVELOPE_TOLERANCE_FACTOR = 10.0
SELF_CONSISTENCY_FACTOR = 10.0
DEFAULT_HOLDER_EXPONENT = 0.5


class LipschitzBudget:
    """ Envelope t -> A exp(B (T - t)) bounding ||grad Phi(., t)||_inf for every iterate.

        slack is the additive constant C0 in A. C = A exp(BT) is the largest envelope value.
    """

    def __init__(self, A: float, B: float, T: float, slack: float = 0.0, norms: dict = None):
        if A < 0 or B < 0:
            raise ValueError(f"Budget constants must be nonnegative, got {A=}, {B=}")
        self.A = float(A)
        self.B = float(B)
        self.T = float(T)
        self.slack = float(slack)
        self.norms = norms or {}

    def __repr__(self):
        return f"LipschitzBudget(A={self.A:.6g}, B={self.B:.6g}, C={self.C:.6g})"

    @property
    def C(self) -> float:
        return self.A * math.exp(self.B * self.T)

    def envelope(self, t):
        return self.A * np.exp(self.B * (self.T - np.asarray(t, dtype=float)))

    def envelope_integral(self, t):
        """ int_t^T A exp(B (T - s)) ds """
        remaining = self.T - np.asarray(t, dtype=float)
        if self.B == 0:
            return self.A * remaining
        return self.A * np.expm1(self.B * remaining) / self.B

    def to_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "C": self.C, "T": self.T, "slack": self.slack, "norms": self.norms}


def compute_budget(spec: ProblemSpec, slack: float = 0.0) -> LipschitzBudget:
    """ A = ||grad phi_T|| + ||Hess W|| (T/2 + 2||phi_T|| + 2T||U||) + T||grad U|| + C0
        B = ||Hess W|| (2||grad W|| + 1) """
    grad_W_sup, hessian_W_sup, _ = spec.sampled_potential.norms
    bounds = spec.coupling_bounds
    if bounds.grad_sup is None:
        raise AssumptionError(f"{spec.coupling} has no bound on ||grad U||, the Lipschitz budget is undefined")
    if not all(math.isfinite(x) for x in (grad_W_sup, hessian_W_sup, bounds.sup, bounds.grad_sup)):
        raise AssumptionError("Norm estimates of W or U are not finite")
    if slack < 0:
        raise ValueError(f"Budget slack {slack} must be >= 0")

    T = spec.mesh.T
    phi_T_sup, phi_T_grad, _ = c2_norm(spec.phi_T)
    A = phi_T_grad + hessian_W_sup * (T / 2 + 2 * phi_T_sup + 2 * T * bounds.sup) + T * bounds.grad_sup + slack
    B = hessian_W_sup * (2 * grad_W_sup + 1)
    norms = {"grad_phi_T": phi_T_grad, "phi_T": phi_T_sup, "grad_W": grad_W_sup, "hessian_W": hessian_W_sup,
             "U": bounds.sup, "grad_U": bounds.grad_sup}
    return LipschitzBudget(A, B, T, slack, norms)


def envelope_tolerance(spec: ProblemSpec, budget: LipschitzBudget) -> float:
    return ENVELOPE_TOLERANCE_FACTOR * (spec.grid.h + spec.mesh.dt) * budget.C


def value_bound(spec: ProblemSpec, phi: ValueTrajectory) -> np.ndarray:
    """ ||phi_T|| + ||grad W|| int_t^T ||grad phi(., s)|| ds + (T - t) ||U||, per mesh time """
    grad_W_sup = spec.sampled_potential.norms.grad_sup
    remaining = spec.mesh.T - spec.mesh.times
    profile = lipschitz_profile(phi)
    # integral from t_k to T
    tail = cumulative_trapezoid(profile[::-1], dx=spec.mesh.dt, initial=0.0)[::-1]
    return spec.phi_T.sup_norm() + grad_W_sup * tail + remaining * spec.coupling_bounds.sup


def budget_value_bound(spec: ProblemSpec, budget: LipschitzBudget) -> np.ndarray:
    """ value_bound with the envelope standing in for ||grad phi|| """
    remaining = spec.mesh.T - spec.mesh.times
    return (spec.phi_T.sup_norm() + spec.sampled_potential.norms.grad_sup * budget.envelope_integral(spec.mesh.times)
            + remaining * spec.coupling_bounds.sup)


def envelope_margin(spec: ProblemSpec, budget: LipschitzBudget, trajectory: ValueTrajectory) -> float:
    """ min over mesh times of envelope + tolerance - ||grad trajectory|| (negative = violated) """
    allowed = budget.envelope(spec.mesh.times) + envelope_tolerance(spec, budget)
    return float(np.min(allowed - lipschitz_profile(trajectory)))


class IterationRecord(NamedTuple):
    k: int
    residual: float
    density_gap: float
    envelope_margin: float
    budget_violated: bool


class IterationLog:
    """ Append-only record of the outer iteration """

    def __init__(self):
        self._records: List[IterationRecord] = []

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i) -> IterationRecord:
        return self._records[i]

    def append(self, record: IterationRecord):
        if not math.isfinite(record.residual):
            raise ValueError(f"Iteration {record.k}: residual is not finite")
        self._records.append(record)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self._records])

    def monotone_tail(self, skip: int = 5) -> bool:
        """ r_{k+1} <= r_k for every k after the first 'skip' iterations """
        tail = self.residuals[skip:]
        return bool(np.all(np.diff(tail) <= 0))


class SolutionPair:
    """ (Phi, rho) = (F(phi_input), fp_solve(phi_input)) with phi_input the last output of the damped iteration """

    def __init__(self, spec: ProblemSpec, Phi: ValueTrajectory, rho: DensityTrajectory, phi_input: ValueTrajectory,
                 converged: bool, residual: float, tolerance: float, iterations: int,
                 self_consistency_gap: float = float("nan"), fixed_point_gap: float = float("nan")):
        self.spec = spec
        self.Phi = Phi
        self.rho = rho
        self.phi_input = phi_input
        self.converged = converged
        self.residual = residual
        self.tolerance = tolerance
        self.iterations = iterations
        self.self_consistency_gap = self_consistency_gap
        # ||F(Phi) - Phi|| + sup_t ||grad F(Phi) - grad Phi||
        self.fixed_point_gap = fixed_point_gap

    def __repr__(self):
        return (f"SolutionPair(converged={self.converged}, iterations={self.iterations}, "
                f"residual={self.residual:.3e})")

    @property
    def control(self) -> np.ndarray:
        """ F = -grad Phi, shape (nt+1, d) + grid shape """
        return -self.Phi.gradient_values

    def to_dict(self) -> dict:
        return {"converged": self.converged, "iterations": self.iterations, "residual": self.residual,
                "tolerance": self.tolerance, "self_consistency_gap": self.self_consistency_gap,
                "fixed_point_gap": self.fixed_point_gap}


def value_residual(current: ValueTrajectory, previous: ValueTrajectory) -> float:
    """ ||current - previous||_inf + sup_t ||grad current - grad previous||_inf """
    current.check_compatible(previous)
    value_gap = np.abs(current.values - previous.values).max()
    gradient_gap = np.sqrt(np.sum((current.gradient_values - previous.gradient_values) ** 2, axis=1)).max()
    return float(value_gap + gradient_gap)


def apply_F(spec: ProblemSpec, phi: ValueTrajectory, budget: Optional[LipschitzBudget] = None,
            cfl_safety: float = DEFAULT_CFL_SAFETY,
            max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> Tuple[ValueTrajectory, DensityTrajectory]:
    rho = fp_solve(spec, phi, cfl_safety=cfl_safety, max_substeps=max_substeps)
    Phi = hopf_cole_solve(spec, assemble_source(spec, rho, phi))
    if budget is not None and (margin := envelope_margin(spec, budget, Phi)) < 0:
        logging.warning("Lipschitz profile of F(phi) exceeds the envelope %s by %.3g", budget, -margin)
    return Phi, rho


def solve(spec: ProblemSpec, theta: float = DEFAULT_DAMPING, tol: float = DEFAULT_TOLERANCE,
          max_iter: int = DEFAULT_MAX_ITERATIONS, budget: Optional[LipschitzBudget] = None,
          cfl_safety: float = DEFAULT_CFL_SAFETY,
          max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> Tuple[SolutionPair, IterationLog]:
    """ phi_{k+1} = (1 - theta) phi_k + theta F(phi_k) from phi_0(x, t) = phi_T(x).

        r_k compares F(phi_k) with F(phi_{k-1}) (phi_0 for the first iteration).
        The returned pair applies F once more, undamped, to the last output.
        Non-convergence is reported through SolutionPair.converged, never raised. """
    if not 0 < theta <= 1:
        raise ValueError(f"Damping {theta=} must lie in (0, 1]")
    if not tol > 0:
        raise ValueError(f"Tolerance {tol=} must be positive")
    if max_iter < 1:
        raise ValueError(f"{max_iter=} must be >= 1")

    log = IterationLog()
    phi = ValueTrajectory.constant_in_time(spec.mesh, spec.phi_T)
    previous_output = phi
    previous_rho = None
    converged = False
    for k in range(1, max_iter + 1):
        Phi, rho = apply_F(spec, phi, cfl_safety=cfl_safety, max_substeps=max_substeps)
        residual = value_residual(Phi, previous_output)
        density_gap = rho.l2_distance(previous_rho) if previous_rho is not None else float("nan")

        margin = float("nan")
        violated = False
        if budget is not None:
            margin = envelope_margin(spec, budget, Phi)
            # the envelope is invariant under F: inputs inside it must give outputs inside it
            violated = margin < 0 and envelope_margin(spec, budget, phi) >= 0
            if violated:
                logging.warning("Iteration %d: F(phi) left the Lipschitz envelope (margin %.3g)", k, margin)
        log.append(IterationRecord(k, residual, density_gap, margin, violated))
        logging.debug("Iteration %d: residual %.3e, density gap %.3e", k, residual, density_gap)

        if residual <= tol:
            converged = True
            break
        previous_output, previous_rho = Phi, rho
        phi = phi.combine(Phi, theta)

    if not converged:
        logging.warning("Fixed point not reached after %d iterations (residual %.3e > %.3e)", max_iter, residual, tol)

    # The pair is F applied undamped to the last output, so Phi and rho share one input iterate
    Phi_final, rho_final = apply_F(spec, Phi, budget, cfl_safety=cfl_safety, max_substeps=max_substeps)
    Phi_check, rho_check = apply_F(spec, Phi_final, cfl_safety=cfl_safety, max_substeps=max_substeps)
    pair = SolutionPair(spec, Phi_final, rho_final, Phi, converged, residual, tol, len(log),
                        self_consistency_gap=rho_check.l2_distance(rho_final),
                        fixed_point_gap=value_residual(Phi_check, Phi_final))
    return pair, log


def _holder_lags(count: int) -> List[int]:
    lags = []
    lag = 1
    while lag < count:
        lags.append(lag)
        lag *= 2
    return lags


def holder_quotients(Phi: ValueTrajectory, exponent: float = DEFAULT_HOLDER_EXPONENT) -> dict:
    """ Dyadic-lag estimates of the time quotient |Phi(t+s) - Phi(t)| / s^(1/2)
        and the space quotient |grad Phi(x+y) - grad Phi(x)| / |y|^exponent """
    mesh = Phi.mesh
    grid = Phi.grid
    time_quotient = 0.0
    for lag in _holder_lags(mesh.nt + 1):
        difference = np.abs(Phi.values[lag:] - Phi.values[:-lag]).max()
        time_quotient = max(time_quotient, difference / math.sqrt(lag * mesh.dt))

    space_quotient = 0.0
    gradients = Phi.gradient_values
    for shift in _holder_lags(grid.n // 2 + 1):
        for ax in grid.spatial_axes:
            difference = np.sqrt(np.sum((np.roll(gradients, shift, axis=ax) - gradients) ** 2, axis=1)).max()
            space_quotient = max(space_quotient, difference / (shift * grid.h) ** exponent)
    return {"time_half": float(time_quotient), "space_gradient": float(space_quotient), "exponent": exponent}


def certify(pair: SolutionPair, budget: LipschitzBudget, holder_exponent: float = DEFAULT_HOLDER_EXPONENT) -> Report:
    """ Envelope, sup norm, value bound, self-consistency and density invariants of a solution pair.
        Hoelder quotients are informational. Failures are report entries, never exceptions. """
    spec = pair.spec
    times = spec.mesh.times
    checks = []

    profile = lipschitz_profile(pair.Phi)
    tolerance = envelope_tolerance(spec, budget)
    margin = float(np.min(budget.envelope(times) + tolerance - profile))
    checks.append(CheckResult("envelope", margin >= 0,
                              {"margin": margin, "tolerance": tolerance, "max_lipschitz": float(profile.max()),
                               "A": budget.A, "B": budget.B, "budget_slack": budget.slack}))

    sup_norm = pair.Phi.sup_norm()
    checks.append(CheckResult("sup_norm", sup_norm <= budget.C, {"Phi_sup": sup_norm, "C": budget.C}))

    node_sups = np.abs(pair.Phi.values).reshape(len(pair.Phi), -1).max(axis=1)
    bound = value_bound(spec, pair.phi_input)
    value_tolerance = ENVELOPE_TOLERANCE_FACTOR * (spec.grid.h + spec.mesh.dt) * max(1.0, float(bound.max()))
    value_margin = float(np.min(bound + value_tolerance - node_sups))
    checks.append(CheckResult("value_bound", value_margin >= 0,
                              {"margin": value_margin, "tolerance": value_tolerance,
                               "budget_form_max": float(budget_value_bound(spec, budget).max())}))

    allowed = SELF_CONSISTENCY_FACTOR * pair.tolerance
    checks.append(CheckResult("self_consistency", pair.self_consistency_gap <= allowed,
                              {"gap": pair.self_consistency_gap, "allowed": allowed}))
    checks.append(CheckResult("damping_neutrality", pair.fixed_point_gap <= allowed,
                              {"gap": pair.fixed_point_gap, "allowed": allowed}))
    checks.append(CheckResult("converged", pair.converged, {"residual": pair.residual}))
    checks.extend(density_invariants(pair.rho))
    checks.append(CheckResult("holder", True, holder_quotients(pair.Phi, holder_exponent), informational=True))

    report = Report(checks)
    for failure in report.failures():
        logging.warning("Certification %s failed: %s", failure.name, failure.measured)
    return report


class ContinuityRecord(NamedTuple):
    epsilon: float
    density_gap: float
    drift_gap: float
    drift_bound: float
    value_gap: float


def continuity_probe(spec: ProblemSpec, phi: ValueTrajectory, epsilons: Iterable[float] = (0.1, 0.05, 0.025),
                     seed: int = 0) -> Tuple[Report, List[ContinuityRecord]]:
    """ Perturbs phi by epsilon * g (g random band-limited, constant in time) and measures how far
        rho, grad W * rho and F(phi) move. The gaps must shrink with epsilon and the drift gap must
        respect ||grad W||_L2 ||rho_eps - rho||_L2. """
    rng = np.random.default_rng(seed)
    g = random_band_limited(spec.grid, rng)
    g = g * (1.0 / max(g.sup_norm(), 1e-300))
    base_Phi, base_rho = apply_F(spec, phi)
    base_drift = interaction_drift_array(spec, base_rho.values)
    grad_W_l2 = spec.sampled_potential.norms.grad_l2

    records = []
    for epsilon in sorted(epsilons, reverse=True):
        perturbed = ValueTrajectory(spec.grid, spec.mesh, phi.values + epsilon * g.values)
        Phi, rho = apply_F(spec, perturbed)
        density_gaps = rho.l2_norms_of_difference(base_rho)
        drift = interaction_drift_array(spec, rho.values)
        drift_gaps = np.sqrt(np.sum((drift - base_drift) ** 2, axis=1)).reshape(len(rho), -1).max(axis=1)
        records.append(ContinuityRecord(epsilon, float(density_gaps.max()), float(drift_gaps.max()),
                                        float(grad_W_l2 * density_gaps.max()),
                                        float(np.abs(Phi.values - base_Phi.values).max())))

    def shrinking(values):
        return bool(np.all(np.diff(values) <= 1e-14))

    measured = {"records": [r._asdict() for r in records]}
    checks = [
        CheckResult("density_gap_shrinks", shrinking([r.density_gap for r in records]), measured),
        CheckResult("value_gap_shrinks", shrinking([r.value_gap for r in records]), measured),
        CheckResult("drift_bound", all(r.drift_gap <= r.drift_bound * (1 + 1e-9) + 1e-14 for r in records), measured),
    ]
    return Report(checks), records
