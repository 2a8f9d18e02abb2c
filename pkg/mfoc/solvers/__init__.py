from mfoc.solvers.fixed_point import (IterationLog, LipschitzBudget, SolutionPair, apply_F, certify, compute_budget,
                                      continuity_probe, solve)
from mfoc.solvers.fokker_planck import DriftSnapshot, density_invariants, fp_solve, fp_solve_controlled, fp_step, t_map
from mfoc.solvers.hjb import SourceAssembly, assemble_source, hjb_direct_solve, hopf_cole_solve
from mfoc.solvers.trajectory import DensityTrajectory, ValueTrajectory, lipschitz_profile
