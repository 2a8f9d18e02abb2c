import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from mfoc.grid.calculus import integrate
from mfoc.grid.torus import ScalarField, TorusGrid, wrap_to_cube
from mfoc.particles.clouds import ParticleCloud, check_cloud_size, cic_deposit, cloud_from_density
from mfoc.particles.simulation import (GRID, OPTIMAL, PAIRWISE, ZERO_VELOCITY, empirical_interaction, simulate_adjoint,
                                      simulate_mkv)
from mfoc.particles.value_identity import verify_value_identity
from mfoc.particles.wasserstein import wasserstein1
from mfoc.problem.couplings import ConstantCoupling
from mfoc.solvers.fixed_point import solve
from mfoc.solvers.fokker_planck import fp_solve
from mfoc.solvers.trajectory import ValueTrajectory
from tests.baseline_problem import (VALUE_IDENTITY_POINTS, baseline_solution, baseline_spec, cosine,
                                    zero_interaction_spec)


class TestClouds(unittest.TestCase):

    def test_cic_deposit(self):
        grid = TorusGrid(1, 64)
        positions = np.random.default_rng(0).random((1000, 1)) - 0.5
        self.assertAlmostEqual(integrate(cic_deposit(positions, grid)), 1.0, places=12)
        # a particle sitting on the node x = 0 puts all its mass there
        density = cic_deposit(np.array([[0.0]]), grid)
        self.assertAlmostEqual(density.values[grid.origin_index], grid.n)
        self.assertEqual(np.count_nonzero(density.values), 1)

    def test_cloud_from_density(self):
        rho = cosine(TorusGrid(1, 64), 0.5, constant=1.0)
        cloud = cloud_from_density(rho, 10_000, seed=4)
        assert_array_equal(cloud.positions, cloud_from_density(rho, 10_000, seed=4).positions)
        self.assertLessEqual(wasserstein1(cloud, rho), 0.02)

    def test_cloud_size(self):
        with self.assertRaises(ValueError):
            check_cloud_size(0)
        with self.assertLogs(level="WARNING"):
            check_cloud_size(50)
        with self.assertRaises(ValueError):
            ParticleCloud(np.array([[np.nan]]))

    def test_wrapped_positions(self):
        cloud = ParticleCloud([0.75, -0.5])
        assert_allclose(cloud.positions[:, 0], [-0.25, -0.5])
        assert_allclose(cloud.mean_displacement([0.0]), [-0.375])


class TestSimulation(unittest.TestCase):

    def setUp(self):
        self.spec = baseline_spec(n=32, nt=64)
        self.Phi = ValueTrajectory.constant_in_time(self.spec.mesh, self.spec.phi_T)

    def test_pairwise_matches_grid(self):
        positions = np.random.default_rng(2).random((400, 1)) - 0.5
        pairwise = empirical_interaction(self.spec, positions, PAIRWISE)
        on_grid = empirical_interaction(self.spec, positions, GRID)
        self.assertEqual(pairwise.shape, (400, 1))
        assert_allclose(on_grid, pairwise, atol=5e-3)
        with self.assertRaises(ValueError):
            empirical_interaction(self.spec, positions, "tree")

    def test_seeds(self):
        first = simulate_mkv(self.spec, self.Phi, 200, seed=7)
        again = simulate_mkv(self.spec, self.Phi, 200, seed=7)
        other = simulate_mkv(self.spec, self.Phi, 200, seed=8)
        assert_array_equal(first.positions, again.positions)
        self.assertFalse(np.array_equal(first.positions, other.positions))
        self.assertEqual(first.positions.shape, (65, 200, 1))
        with self.assertRaises(ValueError):
            simulate_mkv(self.spec, self.Phi, 200, seed=-1)

    def test_adjoint_launch(self):
        rho = fp_solve(self.spec, self.Phi)
        flow = simulate_adjoint(self.spec, rho, self.Phi, [0.25], 0.25, "optimal", 100)
        self.assertEqual(len(flow), 33)
        assert_allclose(flow.positions[0], 0.25)
        with self.assertRaises(ValueError):
            simulate_adjoint(self.spec, rho, self.Phi, [0.0], 0.0, "backwards", 100)
        with self.assertRaises(ValueError):
            simulate_adjoint(self.spec, rho, self.Phi, [0.0], self.spec.mesh.T, "optimal", 100)

    def test_free_particles_spread_like_brownian_motion(self):
        """ W = 0 and Phi = 0: unwrapped displacements have variance 2t """
        spec = zero_interaction_spec()
        Phi = ValueTrajectory.constant_in_time(spec.mesh, ScalarField.constant(spec.grid, 0.0))
        N = 10_000
        clouds = simulate_mkv(spec, Phi, N, seed=3)
        # steps of size sqrt(2 dt) never wrap by more than a period
        displacement = np.cumsum(wrap_to_cube(np.diff(clouds.positions, axis=0)), axis=0)
        for k in (spec.mesh.nt // 2, spec.mesh.nt):
            t = spec.mesh.times[k]
            variance = float(np.var(displacement[k - 1]))
            self.assertAlmostEqual(variance, 2 * t, delta=5 * 2 * t * np.sqrt(2 / N))

    def test_single_particle_feels_no_interaction(self):
        self.assertEqual(empirical_interaction(self.spec, np.array([[0.3]]), PAIRWISE)[0, 0], 0.0)
        free = zero_interaction_spec(n=32, nt=64, T=self.spec.mesh.T)
        zero = ScalarField.constant(self.spec.grid, 0.0)
        with self.assertLogs(level="WARNING"):
            alone = simulate_mkv(self.spec, ValueTrajectory.constant_in_time(self.spec.mesh, zero), 1, seed=5)
        with self.assertLogs(level="WARNING"):
            expected = simulate_mkv(free, ValueTrajectory.constant_in_time(free.mesh, zero), 1, seed=5)
        assert_allclose(alone.positions, expected.positions, atol=1e-14)

    def test_adjoint_mean_stays_at_launch_point(self):
        spec = zero_interaction_spec()
        Phi = ValueTrajectory.constant_in_time(spec.mesh, ScalarField.constant(spec.grid, 0.0))
        rho = fp_solve(spec, Phi)
        N = 10_000
        # the wrapped displacement has standard deviation at most 1/sqrt(12)
        allowed = 5 / np.sqrt(12 * N)
        for mode in (OPTIMAL, ZERO_VELOCITY):
            flow = simulate_adjoint(spec, rho, Phi, [0.25], 0.0, mode, N, seed=2)
            for j in range(len(flow)):
                self.assertLessEqual(abs(flow.snapshot(j).mean_displacement([0.25])[0]), allowed)

    def test_adjoint_modes_agree_for_flat_value(self):
        """ grad Phi = 0 when Phi(x, t) = c (T - t), so both flows see the same drift """
        mesh = self.spec.mesh
        values = 0.7 * (mesh.T - mesh.times)[:, np.newaxis] * np.ones(self.spec.grid.shape)
        Phi = ValueTrajectory(self.spec.grid, mesh, values)
        rho = fp_solve(self.spec, Phi)
        optimal = simulate_adjoint(self.spec, rho, Phi, [-0.125], 0.125, OPTIMAL, 500, seed=9)
        zero_velocity = simulate_adjoint(self.spec, rho, Phi, [-0.125], 0.125, ZERO_VELOCITY, 500, seed=9)
        assert_allclose(optimal.positions, zero_velocity.positions, atol=1e-12)


class TestBaselineParticles(unittest.TestCase):

    def test_mean_field_limit(self):
        spec, _, pair, _ = baseline_solution()
        clouds = simulate_mkv(spec, pair.Phi, 10_000, seed=0)
        self.assertLessEqual(wasserstein1(clouds.final, pair.rho.snapshot(spec.mesh.nt)), 0.05)

    def test_mean_field_trend(self):
        """ Median over 5 seeds of d1(empirical(T), rho(T)) does not grow with N """
        spec, _, pair, _ = baseline_solution()
        final = pair.rho.snapshot(spec.mesh.nt)
        medians = []
        for N in (100, 1000, 10_000):
            distances = [wasserstein1(simulate_mkv(spec, pair.Phi, N, seed).final, final) for seed in range(5)]
            medians.append(np.median(distances))
        self.assertTrue(np.all(np.diff(medians) <= 0), medians)

    def test_value_identity(self):
        spec, _, pair, _ = baseline_solution()
        for x0, t0 in VALUE_IDENTITY_POINTS:
            report = verify_value_identity(spec, pair, pair.phi_input, x0, t0, N=10_000)
            self.assertTrue(report.zeta_passed, report.to_dict())
            self.assertTrue(report.kinetic_bound_passed, report.to_dict())
            self.assertTrue(report.passed)

    def test_value_identity_needs_batches(self):
        spec, _, pair, _ = baseline_solution()
        with self.assertRaises(ValueError):
            verify_value_identity(spec, pair, pair.phi_input, [0.0], 0.0, N=8)


class TestValueIdentity(unittest.TestCase):

    def test_constant_coupling(self):
        """ W = 0, phi_T = 0 and U = c: Phi = c (T - t) and only the coupling term contributes """
        spec = zero_interaction_spec(ConstantCoupling(0.4))
        pair, _ = solve(spec)
        for t0 in (0.0, 0.125):
            report = verify_value_identity(spec, pair, pair.phi_input, [0.1], t0, N=1000)
            self.assertAlmostEqual(report.grid_value, 0.4 * (spec.mesh.T - t0), places=10)
            self.assertAlmostEqual(report.zeta.terms["coupling"], 0.4 * (spec.mesh.T - t0), places=10)
            self.assertLessEqual(abs(report.zeta.residual), 1e-10)
            self.assertLessEqual(abs(report.eta.residual), 1e-10)
            self.assertTrue(report.passed)

    def test_zero_problem(self):
        spec = zero_interaction_spec()
        pair, _ = solve(spec)
        report = verify_value_identity(spec, pair, pair.phi_input, [0.0], 0.0, N=1000)
        self.assertAlmostEqual(report.grid_value, 0.0, places=12)
        for estimate in (report.zeta, report.eta):
            self.assertAlmostEqual(estimate.estimate, 0.0, places=12)
            for name, term in estimate.terms.items():
                self.assertAlmostEqual(term, 0.0, places=12, msg=name)
        self.assertTrue(report.passed)


if __name__ == '__main__':
    unittest.main()
