import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from mfoc.exceptions import CFLViolationError, MeshMismatchError, SolverBreakdownError
from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid, VectorField
from mfoc.particles.wasserstein import wasserstein1
from mfoc.problem.couplings import ConstantCoupling
from mfoc.problem.potentials import TrigonometricPotential
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.solvers.fokker_planck import (_upwind_step_array, density_invariants, fp_solve, fp_solve_controlled,
                                        fp_step, t_map)
from mfoc.solvers.trajectory import DensityTrajectory, ValueTrajectory
from tests.baseline_problem import baseline_spec, cosine, uniform_spec, zero_interaction_spec


def frozen_value(spec, coefficient: float) -> ValueTrajectory:
    """ phi(t) = coefficient * cos(2 pi x) for all t """
    return ValueTrajectory.constant_in_time(spec.mesh, cosine(spec.grid, coefficient))


class TestFokkerPlanckStep(unittest.TestCase):

    def test_cfl_violation(self):
        spec = zero_interaction_spec()
        b = VectorField(spec.grid, np.full((1,) + spec.grid.shape, 100.0))
        with self.assertRaises(CFLViolationError) as context:
            fp_step(spec.rho0, b, 0.01)
        self.assertAlmostEqual(context.exception.courant, 0.01 * 100.0 * spec.grid.n)
        self.assertLess(context.exception.admissible_dt, 0.01)

    def test_step_conserves_mass(self):
        spec = baseline_spec(n=32, nt=64)
        b = frozen_value(spec, 0.3).gradient(0)
        stepped = fp_step(spec.rho0, b, spec.mesh.dt)
        self.assertAlmostEqual(float(np.mean(stepped.values)), 1.0, places=14)

    def test_constant_drift(self):
        """ b = 1: rho = 1 + exp(-4 pi^2 t) cos(2 pi (x + t)) """
        grid = TorusGrid(1, 64)
        dt = 1e-3
        rho = cosine(grid, 1.0, constant=1.0)
        stepped = fp_step(rho, VectorField(grid, np.ones((1,) + grid.shape)), dt)
        expected = 1 + np.exp(-4 * np.pi ** 2 * dt) * np.cos(2 * np.pi * (grid.axis_coordinates + dt))
        self.assertLessEqual(np.abs(stepped.values - expected).max(), 4 * np.pi ** 2 * (grid.h + dt) * dt)

    def test_upwind_part_nonnegative_at_courant_one(self):
        grid = TorusGrid(1, 32)
        rng = np.random.default_rng(8)
        for _ in range(20):
            b = rng.standard_normal((1,) + grid.shape)
            rho = rng.random(grid.shape)
            self.assertGreaterEqual(_upwind_step_array(rho, b, grid, grid.h / np.abs(b).max()).min(), -1e-14)

        # diverging velocity around node 16: it empties through both faces and no further
        b = np.zeros((1,) + grid.shape)
        b[0, 15], b[0, 17] = 1.0, -1.0
        updated = _upwind_step_array(np.ones(grid.shape), b, grid, grid.h)
        self.assertAlmostEqual(updated[16], 0.0, places=14)
        self.assertGreaterEqual(updated.min(), 0.0)
        self.assertAlmostEqual(updated.sum(), grid.n, places=12)


class TestFokkerPlanckSolve(unittest.TestCase):

    def test_heat_flow(self):
        """ No drift: the cosine mode decays like exp(-4 pi^2 t) """
        spec = zero_interaction_spec()
        rho = fp_solve(spec, frozen_value(spec, 0.0))
        T = spec.mesh.T
        expected = cosine(spec.grid, 0.5 * np.exp(-4 * np.pi ** 2 * T), constant=1.0)
        assert_allclose(rho.values[-1], expected.values, atol=1e-13)

    def test_heat_oracle(self):
        """ rho0 = 1 + cos(2 pi x) on n=64, nt=512 up to T = 0.1 """
        grid = TorusGrid(1, 64)
        spec = ProblemSpec(grid, TimeMesh(0.1, 512), TrigonometricPotential.zero(1), ConstantCoupling(0.0),
                           cosine(grid, 1.0, constant=1.0), ScalarField.constant(grid, 0.0))
        rho = fp_solve(spec, frozen_value(spec, 0.0))
        expected = cosine(grid, np.exp(-4 * np.pi ** 2 * 0.1), constant=1.0)
        self.assertLessEqual(np.abs(rho.values[-1] - expected.values).max(), 1e-8)

    def test_uniform_density_is_stationary(self):
        spec = uniform_spec()
        rho = fp_solve(spec, frozen_value(spec, 0.0))
        assert_allclose(rho.values, 1.0, atol=1e-13)

    def test_controlled_matches_optimal_feedback(self):
        spec = baseline_spec(n=32, nt=64)
        phi = frozen_value(spec, 0.1)
        rho = fp_solve(spec, phi)
        controlled = fp_solve_controlled(spec, -np.array(phi.gradient_values))
        assert_allclose(controlled.values, rho.values, rtol=1e-14, atol=1e-14)

    def test_t_map_fixed_at_own_solution(self):
        """ Freezing the convolution at fp_solve's own output reproduces it """
        spec = baseline_spec(n=32, nt=64)
        phi = frozen_value(spec, 0.1)
        rho = fp_solve(spec, phi)
        assert_allclose(t_map(spec, phi, rho).values, rho.values, atol=1e-12)

    def test_substepping(self):
        spec = zero_interaction_spec()
        phi = frozen_value(spec, 5.0)
        rho = fp_solve(spec, phi)
        self.assertGreater(max(d.substeps for d in rho.diagnostics), 1)
        self.assertGreaterEqual(rho.values.min(), 0.0)
        with self.assertRaises(SolverBreakdownError):
            fp_solve(spec, phi, max_substeps=2)

    def test_mesh_mismatch(self):
        spec = baseline_spec(n=32, nt=64)
        phi = ValueTrajectory.constant_in_time(TimeMesh(spec.mesh.T, 32), ScalarField.constant(spec.grid, 0.0))
        with self.assertRaises(MeshMismatchError):
            fp_solve(spec, phi)
        with self.assertRaises(MeshMismatchError):
            fp_solve_controlled(spec, np.zeros((33, 1) + spec.grid.shape))

    def test_first_order_convergence(self):
        """ Halving h and dt together halves the error of a drifting, decaying cosine """

        def error(grid, mesh):
            spec = ProblemSpec(grid, mesh, TrigonometricPotential.zero(1), ConstantCoupling(0.0),
                               cosine(grid, 0.5, constant=1.0), ScalarField.constant(grid, 0.0))
            # velocity -1 means b = 1
            rho = fp_solve_controlled(spec, np.full((mesh.nt + 1, 1) + grid.shape, -1.0))
            T = mesh.T
            expected = 1 + 0.5 * np.exp(-4 * np.pi ** 2 * T) * np.cos(2 * np.pi * (grid.axis_coordinates + T))
            return np.abs(rho.values[-1] - expected).max()

        mesh = TimeMesh(0.1, 32)
        coarse = error(TorusGrid(1, 32), mesh)
        fine = error(TorusGrid(1, 64), mesh.refined(2))
        self.assertLessEqual(fine, 1e-3)
        self.assertTrue(0.35 <= fine / coarse <= 0.65, (coarse, fine))

    def test_t_map_without_interaction_ignores_frozen_density(self):
        spec = zero_interaction_spec()
        phi = frozen_value(spec, 0.1)
        uniform = DensityTrajectory(spec.grid, spec.mesh, np.ones((spec.mesh.nt + 1,) + spec.grid.shape))
        assert_array_equal(t_map(spec, phi, uniform).values, t_map(spec, phi, fp_solve(spec, phi)).values)

    def test_t_map_iterates_approach(self):
        """ sup_t d1 between successive iterates of rho -> T(phi, rho) decreases """
        spec = baseline_spec(n=32, nt=64)
        phi = frozen_value(spec, 0.1)
        rho = DensityTrajectory(spec.grid, spec.mesh, np.ones((spec.mesh.nt + 1,) + spec.grid.shape))
        gaps = []
        for _ in range(4):
            updated = t_map(spec, phi, rho)
            gaps.append(max(wasserstein1(updated.snapshot(k), rho.snapshot(k)) for k in range(spec.mesh.nt + 1)))
            rho = updated
        self.assertGreater(gaps[0], 1e-3)
        self.assertTrue(np.all(np.diff(gaps) < 0), gaps)


class TestDensityInvariants(unittest.TestCase):

    def test_invariants_pass(self):
        spec = baseline_spec(n=32, nt=64)
        rho = fp_solve(spec, frozen_value(spec, 0.1))
        checks = {check.name: check for check in density_invariants(rho)}
        self.assertEqual(set(checks), {"mass", "positivity", "l2_gronwall", "time_continuity"})
        for name, check in checks.items():
            self.assertTrue(check.passed, f"{name}: {check.measured}")

    def test_time_continuity_optional(self):
        spec = zero_interaction_spec()
        rho = fp_solve(spec, frozen_value(spec, 0.0))
        names = [check.name for check in density_invariants(rho, check_time_continuity=False)]
        self.assertNotIn("time_continuity", names)


if __name__ == '__main__':
    unittest.main()
