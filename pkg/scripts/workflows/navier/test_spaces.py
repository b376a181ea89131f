#!/usr/bin/python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import os
import tempfile
import unittest

import numpy as np

from navier.geometry import GAMMA0, DomainSpec, build_mesh
from navier.spaces import (
    AssemblyError,
    FeSpace,
    LameParameters,
    apply_piola_stress,
    assemble_boundary_pairing,
    assemble_forms,
    assemble_load,
    assemble_stiffness,
    estimate_korn_constants,
    error_norms,
    export_coo,
    h1_norm,
    h2_norm,
    korn_spectrum,
    l2_norm,
)

"""
Unit tests for the Lagrange spaces, assembly and Korn constants
"""

LAME = LameParameters(1.0, 1.0)


def annulus_space(degree=2, level=0):
    return FeSpace(build_mesh(DomainSpec(2, 1.0, 2.0, level)), degree)


class TestSpaces(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.space = annulus_space(2)
        cls.forms = assemble_forms(cls.space, LAME)
        cls.area = float(np.sum(cls.space.mesh.cell_volumes()))

    def test_0001_lame_parameters_must_be_positive(self):
        with self.assertRaises(AssemblyError):
            LameParameters(0.0, 1.0)
        with self.assertRaises(AssemblyError):
            LameParameters(1.0, float("nan"))

    def test_0002_degree_is_checked(self):
        with self.assertRaises(AssemblyError):
            annulus_space(3)

    def test_0003_mass_integrates_constants(self):
        ones = self.space.interpolate(lambda x: np.tile([1.0, 0.0], (len(x), 1)))
        self.assertAlmostEqual(l2_norm(self.forms, ones.coeffs) ** 2, self.area, places=12)
        self.assertAlmostEqual(h1_norm(self.forms, ones.coeffs) ** 2, self.area, places=12)

    def test_0004_rigid_motions_have_no_energy(self):
        for motion in (lambda x: np.tile([1.0, -2.0], (len(x), 1)),
                       lambda x: np.stack([-x[:, 1], x[:, 0]], axis=1)):
            c = self.space.interpolate(motion).coeffs
            self.assertLess(np.max(np.abs(self.forms.stiffness @ c)), 1e-11)

    def test_0005_assembly_does_not_depend_on_workers(self):
        threaded = assemble_forms(self.space, LAME, workers=3)
        self.assertEqual((threaded.stiffness != self.forms.stiffness).nnz, 0)
        self.assertEqual((threaded.mass != self.forms.mass).nnz, 0)

    def test_0006_quadratics_are_interpolated_exactly(self):
        def value(x, t=0.0):
            return np.stack([x[:, 0] ** 2 - x[:, 1], x[:, 0] * x[:, 1]], axis=1)

        def gradient(x, t=0.0):
            g = np.zeros((len(x), 2, 2))
            g[:, 0, 0] = 2.0 * x[:, 0]
            g[:, 0, 1] = -1.0
            g[:, 1, 0] = x[:, 1]
            g[:, 1, 1] = x[:, 0]
            return g

        c = self.space.interpolate(value).coeffs
        l2, h1 = error_norms(self.space, c, value, gradient)
        self.assertLess(l2, 1e-12)
        self.assertLess(h1, 1e-12)

    def test_0007_h2_of_linear_field_is_h1(self):
        c = self.space.interpolate(lambda x: np.stack([x[:, 1], 2.0 * x[:, 0]], axis=1)).coeffs
        self.assertAlmostEqual(h2_norm(self.forms, c), h1_norm(self.forms, c), places=10)

    def test_0008_korn_constant_and_rigid_modes(self):
        forms = assemble_forms(annulus_space(1), LAME)
        k1, k2 = korn_spectrum(forms, constrained=True)
        self.assertGreater(k1, 1e-8)
        self.assertGreater(k2, k1)
        free, _ = korn_spectrum(forms, constrained=False)
        self.assertLess(abs(free), 1e-10)

    def test_0009_load_of_unit_force(self):
        load = assemble_load(self.space, lambda x, t: np.tile([1.0, 0.0], (len(x), 1)))
        self.assertAlmostEqual(float(load[0::2].sum()), self.area, places=12)
        self.assertAlmostEqual(float(load[1::2].sum()), 0.0, places=12)

    def test_0010_coo_export_is_sorted(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "mass.coo")
            export_coo(self.forms.mass, path)
            with open(path) as f:
                rows = [tuple(int(v) for v in line.split()[:2]) for line in f]
        self.assertEqual(rows, sorted(rows))
        self.assertEqual(len(rows), self.forms.mass.nnz)

    def test_0011_constrained_dofs_are_gamma0(self):
        space = self.space
        r = np.linalg.norm(space.dof_coords, axis=1)
        scalar = np.unique(space.constrained_dofs // space.ncomp)
        # 16 vertices on the unit circle and the 16 chord midpoints
        self.assertEqual(len(scalar), 32)
        self.assertTrue(np.all(r[scalar] <= 1.0 + 1e-12))
        self.assertTrue(np.all(r[scalar] >= np.cos(np.pi / 16) - 1e-12))
        self.assertEqual(len(space.free_dofs) + len(space.constrained_dofs), space.dim)

    def test_0012_piola_stress_of_a_dilation(self):
        u = self.space.interpolate(lambda x: x)
        stress = apply_piola_stress(u, LameParameters(1.0, 3.0), np.array([1.5, 0.2]))
        np.testing.assert_allclose(stress, 8.0 * np.eye(2), atol=1e-10)
        stiffness = assemble_stiffness(self.space, (1.0, 1.0))
        self.assertLess(abs(stiffness - self.forms.stiffness).max(), 1e-12)

    def test_0013_boundary_pairing_measures_gamma0(self):
        pairing = assemble_boundary_pairing(self.space, GAMMA0)
        e = np.tile([1.0, 0.0], self.space.num_scalar)
        self.assertAlmostEqual(float(e @ (pairing @ e)),
                               self.space.mesh.boundary_measure(GAMMA0), places=12)
        k1, k2 = estimate_korn_constants(assemble_forms(annulus_space(1), LAME))
        self.assertGreater(k1, 0.0)
        self.assertLessEqual(k1, k2)


if __name__ == "__main__":
    unittest.main()
