import os
import struct
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose

from mfoc import get_format_schema_int
from mfoc.exceptions import GridMismatchError, NonFiniteFieldError, SnapshotFormatError
from mfoc.grid.calculus import (convolve, divergence, gradient, heat_semigroup_array, integrate, l2_norm,
                                laplacian, spectral_l2_norm)
from mfoc.grid.interpolation import PeriodicInterpolator
from mfoc.grid.snapshot import SNAPSHOT_SCHEMA_VERSION, read_field, read_snapshot, write_field, write_snapshot
from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid, VectorField, torus_distance, wrap_to_cube


class TestTorusGrid(unittest.TestCase):

    def test_bad_grids(self):
        with self.assertRaises(ValueError):
            TorusGrid(1, 48)
        with self.assertRaises(ValueError):
            TorusGrid(4, 8)

    def test_coordinates(self):
        grid = TorusGrid(1, 64)
        self.assertEqual(grid.axis_coordinates[0], -0.5)
        self.assertEqual(grid.axis_coordinates[32], 0.0)
        self.assertEqual(grid.origin_index, (32,))
        self.assertEqual(grid.nearest_index([0.499]), (0,))  # wraps round to -1/2

    def test_wrap_and_distance(self):
        assert_allclose(wrap_to_cube(np.array([0.75, -0.75, 0.5])), [-0.25, 0.25, -0.5])
        self.assertAlmostEqual(float(torus_distance(np.array([0.9]))), 0.1)
        self.assertAlmostEqual(float(torus_distance(np.array([0.3, 0.4]))), 0.5)

    def test_time_mesh(self):
        mesh = TimeMesh(0.5, 512)
        self.assertEqual(mesh.times[-1], 0.5)
        self.assertEqual(mesh.index_of(0.25), 256)
        with self.assertRaises(ValueError):
            mesh.index_of(0.6)


class TestFields(unittest.TestCase):

    def test_non_finite(self):
        grid = TorusGrid(1, 8)
        values = np.zeros(8)
        values[3] = np.nan
        with self.assertRaises(NonFiniteFieldError):
            ScalarField(grid, values)

    def test_grid_mismatch(self):
        a = ScalarField.constant(TorusGrid(1, 8), 1.0)
        b = ScalarField.constant(TorusGrid(1, 16), 1.0)
        with self.assertRaises(GridMismatchError):
            a + b

    def test_immutable(self):
        field = ScalarField.constant(TorusGrid(1, 8), 1.0)
        with self.assertRaises(ValueError):
            field.values[0] = 2.0


class TestCalculus(unittest.TestCase):

    def test_gradient_of_sine(self):
        grid = TorusGrid(1, 32)
        f = ScalarField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
        expected = 2 * np.pi * np.cos(2 * np.pi * grid.axis_coordinates)
        assert_allclose(gradient(f).values[0], expected, atol=1e-10)

    def test_divergence(self):
        grid = TorusGrid(1, 64)
        f = ScalarField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
        assert_allclose(divergence(gradient(f)).values, -4 * np.pi ** 2 * f.values, atol=1e-9)
        assert_allclose(divergence(gradient(f)).values, laplacian(f).values, atol=1e-10)
        assert_allclose(divergence(VectorField(grid, np.ones((1, 64)))).values, 0.0, atol=1e-13)

        rng = np.random.default_rng(2)
        v = VectorField(TorusGrid(2, 16), rng.standard_normal((2, 16, 16)))
        self.assertLessEqual(abs(integrate(divergence(v))), 1e-12)
        with self.assertRaises(GridMismatchError):
            divergence(v) + f

    def test_laplacian_2d(self):
        grid = TorusGrid(2, 16)
        f = ScalarField.from_function(grid, lambda x, y: np.cos(2 * np.pi * (x + 2 * y)))
        assert_allclose(laplacian(f).values, -20 * np.pi ** 2 * f.values, atol=1e-9)

    def test_central_differences(self):
        grid = TorusGrid(1, 256)
        f = ScalarField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
        expected = 2 * np.pi * np.cos(2 * np.pi * grid.axis_coordinates)
        assert_allclose(gradient(f, method="central").values[0], expected, atol=1e-3)
        with self.assertRaises(ValueError):
            gradient(f, method="fourth_order")

    def test_convolution(self):
        """ (cos * cos)(x) = cos(2 pi x)/2 and (sin * cos)(x) = sin(2 pi x)/2 """
        grid = TorusGrid(1, 16)
        cos = ScalarField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
        sin = ScalarField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
        assert_allclose(convolve(cos, cos).values, 0.5 * cos.values, atol=1e-14)
        # sin is odd, so this fails if the kernel origin is misplaced
        assert_allclose(convolve(sin, cos).values, 0.5 * sin.values, atol=1e-14)

    def test_convolution_with_constant(self):
        grid = TorusGrid(2, 8)
        kernel = ScalarField.from_function(grid, lambda x, y: np.exp(-(x ** 2 + y ** 2)))
        one = ScalarField.constant(grid, 1.0)
        assert_allclose(convolve(kernel, one).values, integrate(kernel), rtol=1e-12)

    def test_integrals_and_norms(self):
        grid = TorusGrid(1, 64)
        rho = ScalarField.from_function(grid, lambda x: 1 + 0.5 * np.cos(2 * np.pi * x))
        self.assertAlmostEqual(integrate(rho), 1.0, places=14)
        self.assertAlmostEqual(l2_norm(rho), np.sqrt(1.125), places=12)
        self.assertAlmostEqual(spectral_l2_norm(rho), l2_norm(rho), places=12)

    def test_heat_semigroup(self):
        grid = TorusGrid(1, 32)
        x = grid.axis_coordinates
        decayed = heat_semigroup_array(np.cos(2 * np.pi * x), grid, 0.01)
        assert_allclose(decayed, np.exp(-4 * np.pi ** 2 * 0.01) * np.cos(2 * np.pi * x), atol=1e-14)


class TestInterpolation(unittest.TestCase):

    def test_nodes_and_wrap(self):
        grid = TorusGrid(1, 8)
        values = np.arange(8, dtype=float)
        interpolator = PeriodicInterpolator(grid, values)
        assert_allclose(interpolator(grid.axis_coordinates[:, np.newaxis]), values)
        # Between the last node and x = 1/2 = -1/2
        self.assertAlmostEqual(float(interpolator(np.array([0.5 - grid.h / 2]))[0]), 3.5)
        self.assertAlmostEqual(float(interpolator(np.array([1.5]))[0]), 0.0)

    def test_vector_values(self):
        grid = TorusGrid(2, 8)
        values = np.stack([np.full(grid.shape, 1.0), np.full(grid.shape, -2.0)], axis=-1)
        result = PeriodicInterpolator(grid, values)(np.array([[0.1, 0.2], [-0.3, 0.45]]))
        assert_allclose(result, [[1.0, -2.0], [1.0, -2.0]])


class TestSnapshot(unittest.TestCase):

    def test_binary_stack(self):
        grid = TorusGrid(2, 4)
        frames = np.random.default_rng(0).standard_normal((3,) + grid.shape)
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "stack.mfoc")
            write_snapshot(filename, grid, frames)
            read_grid, read_frames = read_snapshot(filename)
        self.assertEqual(read_grid, grid)
        np.testing.assert_array_equal(read_frames, frames)

    def test_csv_field(self):
        grid = TorusGrid(1, 8)
        field = ScalarField.from_function(grid, lambda x: np.cos(2 * np.pi * x) / 3)
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "field.csv")
            write_field(filename, field)
            np.testing.assert_array_equal(read_field(filename, grid).values, field.values)
            with self.assertRaises(SnapshotFormatError):
                read_field(filename, TorusGrid(1, 16))

    def test_bad_magic(self):
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "bad.mfoc")
            with open(filename, "wb") as f:
                f.write(b"NOPE" + bytes(28))
            with self.assertRaises(SnapshotFormatError):
                read_snapshot(filename)

    def test_schema_version(self):
        grid = TorusGrid(1, 4)
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "field.mfoc")
            write_snapshot(filename, grid, np.ones(4))
            with open(filename, "rb") as f:
                header = f.read(8)
            self.assertEqual(struct.unpack("<I", header[4:8])[0], get_format_schema_int(SNAPSHOT_SCHEMA_VERSION))
            read_snapshot(filename)

            with open(filename, "r+b") as f:
                f.seek(4)
                f.write(struct.pack("<I", get_format_schema_int("1.0.0")))
            with self.assertRaisesRegex(SnapshotFormatError, "schema 1.0"):
                read_snapshot(filename)

    def test_stack_is_not_a_field(self):
        grid = TorusGrid(1, 4)
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "stack.mfoc")
            write_snapshot(filename, grid, np.zeros((2, 4)))
            with self.assertRaises(SnapshotFormatError):
                read_field(filename)


if __name__ == '__main__':
    unittest.main()
