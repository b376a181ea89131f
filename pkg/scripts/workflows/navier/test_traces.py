#!/usr/bin/python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import math
import unittest

import numpy as np

from navier.dynamics import ProblemData, TimeGrid, solve_forward
from navier.geometry import GAMMA0, DomainSpec, build_mesh, tangential_directions
from navier.spaces import FeSpace, LameParameters, assemble_forms
from navier.traces import (
    BoundaryTrace,
    NormReport,
    SpaceTimeGram,
    TraceError,
    bochner_norms,
    gagliardo_seminorm_sq,
    norm_H1_gamma0,
    norm_H1star_dual,
    norm_H1T_L2_gamma0,
    norm_Hs_gamma0,
    norm_L2_gamma0,
    sample_trace,
    stress_vector_trace,
    stress_vector_values,
    time_derivative,
    time_integral,
)

"""
Unit tests for boundary traces and the space-time norms
"""

SPEC = DomainSpec(2, 1.0, 2.0, 1)
LAME = LameParameters(1.0, 2.0)


def unit(x, t=0.0):
    return np.tile([1.0, 0.0], (len(x), 1))


class TestTraces(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.space = FeSpace(build_mesh(SPEC), 2)
        cls.perimeter = cls.space.mesh.boundary_measure(GAMMA0)

    def directions(self, x):
        return tangential_directions(SPEC, x)

    def test_0001_l2_of_constant(self):
        grid = TimeGrid(2.0, 8)
        trace = sample_trace(self.space, unit, grid.times())
        self.assertAlmostEqual(norm_L2_gamma0(trace, grid), math.sqrt(2.0 * self.perimeter),
                               places=12)

    def test_0002_h1_of_constant_is_l2(self):
        trace = sample_trace(self.space, unit)
        self.assertAlmostEqual(norm_H1_gamma0(trace, None, self.directions),
                               norm_L2_gamma0(trace), places=10)

    def test_0003_h1_of_first_fourier_mode(self):
        def mode(x, t=0.0):
            theta = np.arctan2(x[:, 1], x[:, 0])
            return np.stack([np.cos(theta), np.zeros(len(x))], axis=1)

        trace = sample_trace(self.space, mode)
        l2 = norm_L2_gamma0(trace)
        h1 = norm_H1_gamma0(trace, None, self.directions)
        self.assertAlmostEqual(h1 ** 2 / l2 ** 2, 2.0, delta=0.04)

    def test_0004_h1_needs_directions(self):
        with self.assertRaises(TraceError):
            norm_H1_gamma0(sample_trace(self.space, unit))

    def test_0005_time_derivatives_of_quadratics(self):
        t = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(time_derivative(t ** 2, 0.1, 1), 2.0 * t, atol=1e-12)
        np.testing.assert_allclose(time_derivative(t ** 2, 0.1, 2), 2.0, atol=1e-9)
        self.assertEqual(time_integral(np.array([3.0]), np.zeros(1)), 3.0)
        self.assertAlmostEqual(time_integral(np.ones(11), t), 1.0)

    def test_0006_time_norm_of_linear_ramp(self):
        grid = TimeGrid(1.0, 20)
        trace = sample_trace(self.space, lambda x, t: t * unit(x), grid.times())
        # |g|^2 integrates t^2 + 1 over (0, 1); the trapezoid adds dt^2 / 6
        expected = self.perimeter * (1.0 / 3.0 + 1.0 / 6.0 * grid.dt ** 2 + 1.0)
        self.assertAlmostEqual(norm_H1T_L2_gamma0(trace, grid) ** 2, expected, places=10)

    def test_0007_dual_norm_is_a_norm(self):
        grid = TimeGrid(1.0, 8)

        def bump(x, t):
            return math.sin(math.pi * t) * np.stack([x[:, 0], x[:, 1] ** 2], axis=1)

        trace = sample_trace(self.space, bump, grid.times())
        value = norm_H1star_dual(trace, grid)
        self.assertGreater(value, 0.0)
        self.assertAlmostEqual(norm_H1star_dual(trace.scaled(2.0), grid), 2.0 * value,
                               places=10)
        self.assertEqual(norm_H1star_dual(trace.scaled(0.0), grid), 0.0)

    def test_0008_dual_norm_bounded_by_l2(self):
        grid = TimeGrid(1.0, 8)
        trace = sample_trace(self.space, lambda x, t: np.cos(3.0 * t) * unit(x), grid.times())
        self.assertLessEqual(norm_H1star_dual(trace, grid), norm_L2_gamma0(trace, grid) * 1.01)

    def test_0009_space_time_gram_needs_steps(self):
        trace = sample_trace(self.space, unit, [0.0, 1.0])
        with self.assertRaises(TraceError):
            SpaceTimeGram(trace, [0.0, 1.0])

    def test_0010_stress_vector_of_dilation(self):
        coeffs = self.space.interpolate(lambda x: x).coeffs
        traction = stress_vector_values(self.space, coeffs, LAME, GAMMA0)[0]
        normals = self.space.facet_quadrature(GAMMA0).normals
        expected = (2.0 * LAME.mu + 2.0 * LAME.lam) * np.broadcast_to(
            normals[:, None, :], traction.shape)
        np.testing.assert_allclose(traction, expected, atol=1e-11)

    def test_0011_fractional_norm(self):
        trace = sample_trace(self.space, unit)
        self.assertAlmostEqual(norm_Hs_gamma0(trace, 0.5), norm_L2_gamma0(trace), places=10)
        with self.assertRaises(TraceError):
            norm_Hs_gamma0(trace, 1.5)

    def test_0012_bochner_norms_of_zero_trajectory(self):
        forms = assemble_forms(self.space, LAME)
        traj = solve_forward(forms, ProblemData(), TimeGrid(1.0, 4))
        report = bochner_norms(traj, forms)
        self.assertTrue(all(v == 0.0 for v in report.values.values()))
        self.assertEqual(report.as_dict()["meta"]["N"], 4)
        trace = stress_vector_trace(traj, LAME)
        self.assertEqual(len(trace.values), 5)
        self.assertFalse(np.any(trace.values))

    def test_0013_norm_report_validation(self):
        with self.assertRaises(TraceError):
            NormReport({"bogus": 1.0})
        with self.assertRaises(TraceError):
            NormReport({"L2T_L2": -1.0})

    def test_0014_half_seminorm_grows_linearly_in_frequency(self):
        space = FeSpace(build_mesh(DomainSpec(2, 1.0, 2.0, 3)), 2)

        def mode(k):
            def f(x, t=0.0):
                theta = np.arctan2(x[:, 1], x[:, 0])
                return np.stack([np.cos(k * theta), np.zeros(len(x))], axis=1)
            return sample_trace(space, f)

        for k in (2, 4, 8):
            ratio = gagliardo_seminorm_sq(mode(2 * k), 0.5) / gagliardo_seminorm_sq(mode(k), 0.5)
            self.assertAlmostEqual(ratio, 2.0, delta=0.2, msg="k=%d" % k)

    def test_0015_dual_norm_is_the_unit_ball_sup(self):
        space = FeSpace(build_mesh(DomainSpec(2, 1.0, 2.0, 0)), 1)
        full = sample_trace(space, lambda x, t: np.sin(np.pi * t) * (1.0 + x[:, :1] - x[:, 1:] ** 2),
                            [0.0, 0.5, 1.0])
        keep = slice(0, 8)
        trace = BoundaryTrace(full.tag, full.values[:, keep], full.weights[keep],
                              full.points[keep], full.normals[keep], full.jacobians[keep],
                              full.reference, full.vertices[keep], full.vertex_points[keep],
                              full.cells[keep], full.cell_reference[keep], full.times)
        gram = SpaceTimeGram(trace, trace.times)
        load = gram.load(trace)
        rng = np.random.default_rng(5)

        def pairing(c):
            return float(np.sum(load * c)) / gram.norm(c)

        best = max((rng.standard_normal(load.shape) for _ in range(2000)), key=pairing)
        value, step = pairing(best), 0.5
        for _ in range(6000):
            cand = best + step * np.linalg.norm(best) * rng.standard_normal(load.shape) / 4.0
            trial = pairing(cand)
            if trial > value:
                best, value, step = cand, trial, step * 1.5
            else:
                step = max(step * 0.9, 1e-6)
        exact = norm_H1star_dual(trace)
        self.assertEqual(gram.shape[0], 1)
        self.assertLessEqual(value, exact * (1.0 + 1e-10))
        self.assertGreaterEqual(value, 0.99 * exact)


if __name__ == "__main__":
    unittest.main()
