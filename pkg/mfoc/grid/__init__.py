from mfoc.grid.calculus import (convolve, convolve_vector, divergence, gradient, integrate, l2_norm, laplacian,
                                spectral_l2_norm)
from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid, VectorField, torus_distance, wrap_to_cube
