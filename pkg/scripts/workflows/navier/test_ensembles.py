#!/usr/bin/python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import unittest

import numpy as np

from navier.dynamics import eigenmodes
from navier.ensembles import (
    ENSEMBLE_KINDS,
    EnsembleError,
    EnsembleParameters,
    ensemble_data,
    manufactured_solution,
    member_rng,
    strong_data,
)
from navier.geometry import DomainSpec, build_mesh
from navier.spaces import FeSpace, LameParameters, assemble_forms

"""
Unit tests for the seeded data ensembles
"""

SPEC = DomainSpec(2, 1.0, 2.0, 0)
LAME = LameParameters(1.0, 2.0)
PARAMS = EnsembleParameters(eigenmodes=(2, 4))


def ring(radius, count=16):
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)


class TestEnsembles(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.forms = assemble_forms(FeSpace(build_mesh(SPEC), 1), LAME)

    def test_0001_member_streams(self):
        a = member_rng(5, 2, "wave").standard_normal(4)
        b = member_rng(5, 2, "wave").standard_normal(4)
        c = member_rng(5, 2, "rough").standard_normal(4)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        with self.assertRaises(EnsembleError):
            member_rng(0, 0, "noise")

    def test_0002_parameters(self):
        with self.assertRaises(EnsembleError):
            EnsembleParameters(eigenmodes=(4, 4))
        with self.assertRaises(EnsembleError):
            EnsembleParameters(pulse_width=0.0)
        params = EnsembleParameters.from_config({"members": 3, "eigenmodes": [1, 5],
                                                 "dual_modes": 2})
        self.assertEqual(params.eigenmodes, (1, 5))
        self.assertEqual(params.members, 3)

    def test_0003_every_kind_builds(self):
        _, modes = eigenmodes(self.forms, 4)
        for kind in ENSEMBLE_KINDS:
            data = ensemble_data(kind, self.forms, 1, 0, PARAMS, modes)
            self.assertTrue(data.label.startswith(kind), kind)
        with self.assertRaises(EnsembleError):
            ensemble_data("noise", self.forms, 1, 0, PARAMS)

    def test_0004_eigenmode_data_lies_in_the_span(self):
        _, modes = eigenmodes(self.forms, 4)
        u0 = ensemble_data("eigenmode", self.forms, 2, 1, PARAMS, modes).u0
        coef = modes @ (self.forms.mass @ u0)
        self.assertLess(np.max(np.abs(coef[:2])), 1e-10)
        np.testing.assert_allclose(modes.T @ coef, u0, atol=1e-10)

    def test_0005_wave_data_is_compatible(self):
        data = ensemble_data("wave", self.forms, 4, 0, PARAMS)
        x = ring(1.0)
        np.testing.assert_allclose(data.u0(x), data.g(x, 0.0), atol=1e-14)
        np.testing.assert_allclose(data.u1(x), data.g_dot(x, 0.0), atol=1e-14)
        eps = 1e-6
        fd = (data.g(x, 0.3 + eps) - data.g(x, 0.3 - eps)) / (2.0 * eps)
        np.testing.assert_allclose(fd, data.g_dot(x, 0.3), atol=1e-7)

    def test_0006_rough_data_is_incompatible(self):
        data = ensemble_data("rough", self.forms, 4, 0, PARAMS)
        self.assertFalse(data.compatible)
        self.assertIsNone(data.u0)
        self.assertGreater(np.max(np.abs(data.g(ring(1.0), 0.0))), 0.1)

    def test_0007_strong_data_meets_compatibility(self):
        member = strong_data(SPEC, LAME, 6, 2, PARAMS)
        x = ring(1.2) + np.array([0.01, 0.0])
        g = member.g
        np.testing.assert_allclose(g.value_fn()(x, 0.0), member.u0.value_fn()(x), atol=1e-12)
        np.testing.assert_allclose(g.time_derivative(1).value_fn()(x, 0.0),
                                   member.u1.value_fn()(x), atol=1e-12)
        np.testing.assert_allclose(g.time_derivative(2).value_fn()(x, 0.0),
                                   member.target.value_fn()(x), atol=1e-10)
        # the data are localised away from GAMMA1
        np.testing.assert_array_equal(member.u0.value_fn()(ring(2.0)), 0.0)
        data = member.differentiated()
        self.assertTrue(data.strong)
        self.assertEqual(data.label, "strong-dt")

    def test_0008_manufactured_solution(self):
        u, data = manufactured_solution(SPEC, LAME)
        np.testing.assert_allclose(u.value_fn()(ring(1.0), 0.7), 0.0, atol=1e-13)
        np.testing.assert_allclose(u.value_fn()(ring(1.5), 0.0), data.u0(ring(1.5)))
        self.assertEqual(data.label, "manufactured")


if __name__ == "__main__":
    unittest.main()
