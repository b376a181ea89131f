#!/usr/bin/python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import math
import unittest

import numpy as np
import scipy.sparse as sp

from navier.elliptic import (
    ELASTICITY,
    HARMONIC,
    ElasticLift,
    HarmonicLift,
    LiftError,
    LiftProblem,
    build_lift,
    riesz_dual_norm,
    riesz_representer,
    sample_gamma0,
    solve_elasticity_lift,
    solve_harmonic_lift,
)
from navier.geometry import GAMMA1, DomainSpec, build_mesh
from navier.spaces import FeSpace, LameParameters, assemble_forms

"""
Unit tests for the harmonic and elasticity lifts and the Riesz maps
"""


class TestLifts(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.space = FeSpace(build_mesh(DomainSpec(2, 1.0, 2.0, 1)), 2)
        cls.forms = assemble_forms(cls.space, LameParameters(1.0, 1.0))

    def test_0001_harmonic_lift_boundary_values(self):
        lift = HarmonicLift(self.space)
        datum = sample_gamma0(self.space, lambda x, t: np.stack([x[:, 0], x[:, 1] ** 2], axis=1))
        field = lift.solve(datum)
        values = field.values()
        np.testing.assert_allclose(values[lift.gamma0], datum)
        outer = self.space.boundary_scalar_dofs(GAMMA1)
        np.testing.assert_array_equal(values[outer], 0.0)
        self.assertLess(lift.residual(field), 1e-10)

    def test_0002_harmonic_lift_approximates_log_profile(self):
        lift = HarmonicLift(self.space)
        datum = np.ones((len(lift.gamma0), 2))
        values = lift.solve(datum).values()
        r = np.linalg.norm(self.space.dof_coords, axis=1)
        exact = np.log(2.0 / r) / math.log(2.0)
        # chords of the inner circle sit slightly inside r = 1
        self.assertLess(np.max(np.abs(values[:, 0] - exact)), 0.05)

    def test_0003_zero_datum_gives_zero(self):
        lift = HarmonicLift(self.space)
        field = lift.solve(np.zeros((len(lift.gamma0), 2)))
        self.assertFalse(np.any(field.coeffs))

    def test_0004_elastic_lift_reproduces_translation(self):
        space = self.space
        shift = np.tile([0.5, -1.0], (space.num_scalar, 1)).ravel()
        field = ElasticLift(self.forms).solve(np.zeros(space.dim),
                                              shift[space.constrained_dofs])
        np.testing.assert_allclose(field.coeffs, shift, atol=1e-10)

    def test_0005_elastic_lift_rejects_bad_load(self):
        with self.assertRaises(LiftError):
            ElasticLift(self.forms).solve(np.zeros(3))

    def test_0006_unknown_lift_kind(self):
        with self.assertRaises(LiftError):
            LiftProblem("poisson", np.zeros(2))

    def test_0007_elastic_extend_keeps_rigid_datum(self):
        lift = build_lift(ELASTICITY, self.forms)
        datum = np.tile([0.5, -1.0], (len(self.space.constrained_dofs) // 2, 1))
        expected = np.tile([0.5, -1.0], (self.space.num_scalar, 1))
        np.testing.assert_allclose(lift.extend(datum).values(), expected, atol=1e-10)

    def test_0008_lift_helpers(self):
        def g(x, t):
            return np.stack([x[:, 1], 1.0 + t * x[:, 0]], axis=1)

        datum = sample_gamma0(self.space, g, 0.5)
        np.testing.assert_allclose(solve_harmonic_lift(self.space, g, 0.5).coeffs,
                                   HarmonicLift(self.space).solve(datum).coeffs)
        np.testing.assert_allclose(solve_harmonic_lift(self.space, datum).coeffs,
                                   build_lift(HARMONIC, self.forms).extend(datum).coeffs)
        field = solve_elasticity_lift(self.forms, np.zeros(self.space.dim))
        self.assertFalse(np.any(field.coeffs))
        with self.assertRaises(LiftError):
            build_lift("poisson", self.forms)


class TestRiesz(unittest.TestCase):
    def test_0001_identity_gram_is_euclidean(self):
        f = np.array([3.0, 4.0, 0.0])
        self.assertAlmostEqual(riesz_dual_norm(f, np.eye(3)), 5.0, places=14)
        self.assertAlmostEqual(riesz_dual_norm(f, sp.identity(3, format="csr")), 5.0, places=14)

    def test_0002_diagonal_gram(self):
        gram = np.diag([4.0, 1.0])
        np.testing.assert_allclose(riesz_representer(np.array([2.0, 1.0]), gram), [0.5, 1.0])
        self.assertAlmostEqual(riesz_dual_norm(np.array([2.0, 1.0]), gram), math.sqrt(2.0))

    def test_0003_zero_functional(self):
        self.assertEqual(riesz_dual_norm(np.zeros(4), np.eye(4)), 0.0)

    def test_0004_invalid_gram(self):
        with self.assertRaises(LiftError):
            riesz_dual_norm(np.ones(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
        with self.assertRaises(LiftError):
            riesz_dual_norm(np.ones(2), np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_0005_dual_norm_is_the_unit_ball_sup(self):
        rng = np.random.default_rng(11)
        for dim in (2, 4):
            b = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
            g = b @ b.T
            gram = 0.5 * (g + g.T) + 0.5 * np.eye(dim)
            f = rng.standard_normal(dim)
            v = rng.standard_normal((400000, dim))
            lengths = np.sqrt(np.einsum("ni,ij,nj->n", v, gram, v))
            sampled = float(np.max(v @ f / lengths))
            exact = riesz_dual_norm(f, gram)
            self.assertLessEqual(sampled, exact * (1.0 + 1e-12), dim)
            self.assertGreaterEqual(sampled, 0.995 * exact, dim)


if __name__ == "__main__":
    unittest.main()
