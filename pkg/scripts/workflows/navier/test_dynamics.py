#!/usr/bin/python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import unittest

import numpy as np

from navier.dynamics import (
    DynamicsError,
    ElastodynamicSolver,
    IncompatibleDataError,
    ProblemData,
    TimeGrid,
    check_transposition_identity,
    eigenmodes,
    field_series,
    modified_frequency,
    solve_backward,
    solve_forward,
)
from navier.ensembles import EnsembleParameters, pulse_data
from navier.geometry import DomainSpec, build_mesh
from navier.spaces import FeSpace, LameParameters, assemble_forms

"""
Unit tests for the average acceleration time stepping
"""

SPEC = DomainSpec(2, 1.0, 2.0, 0)


class TestDynamics(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.forms = assemble_forms(FeSpace(build_mesh(SPEC), 1), LameParameters(1.0, 1.0))
        cls.omega, cls.modes = eigenmodes(cls.forms, 2)

    def test_0001_time_grid_validation(self):
        with self.assertRaises(DynamicsError):
            TimeGrid(0.0, 10)
        with self.assertRaises(DynamicsError):
            TimeGrid(1.0, 0)
        self.assertEqual(len(TimeGrid(2.0, 8).times()), 9)
        self.assertAlmostEqual(TimeGrid(2.0, 8).dt, 0.25)

    def test_0002_zero_data_zero_trajectory(self):
        traj = solve_forward(self.forms, ProblemData(label="zero"), TimeGrid(1.0, 16))
        self.assertFalse(np.any(traj.u))
        self.assertFalse(np.any(traj.v))
        self.assertFalse(np.any(traj.energy))

    def test_0003_energy_is_conserved(self):
        u0 = self.modes[0] + 0.5 * self.modes[1]
        traj = solve_forward(self.forms, ProblemData(u0=u0), TimeGrid(4.0, 1000))
        self.assertLess(traj.energy_drift(), 1e-10)

    def test_0004_eigenmode_follows_modified_frequency(self):
        grid = TimeGrid(2.0, 200)
        traj = solve_forward(self.forms, ProblemData(u0=self.modes[0]), grid)
        w = modified_frequency(self.omega[0], grid.dt)
        expected = np.cos(w * grid.times())[:, None] * self.modes[0][None, :]
        np.testing.assert_allclose(traj.u, expected, atol=1e-9)

    def test_0005_incompatible_boundary_data(self):
        data = ProblemData(g=lambda x, t: np.ones((len(x), 2)), label="shifted")
        solver = ElastodynamicSolver(self.forms, TimeGrid(1.0, 8))
        with self.assertRaises(IncompatibleDataError):
            solver.forward(data)
        data.compatible = False
        traj = solver.forward(data)
        con = self.forms.space.constrained_dofs
        np.testing.assert_allclose(traj.u[:, con], 1.0)

    def test_0006_forced_energy_balance(self):
        data = pulse_data(SPEC, 0, 0, EnsembleParameters())
        traj = solve_forward(self.forms, data, TimeGrid(1.0, 64))
        self.assertGreater(traj.energy[-1], 0.0)
        self.assertLess(traj.balance_residual(), 1e-10)

    def test_0007_backward_of_zero_source(self):
        grid = TimeGrid(1.0, 8)
        phi = solve_backward(self.forms, np.zeros((9, self.forms.space.dim)), grid)
        self.assertFalse(np.any(phi.u))
        with self.assertRaises(DynamicsError):
            solve_backward(self.forms, np.zeros((3, self.forms.space.dim)), grid)

    def test_0008_transposition_identity_of_zero_data(self):
        grid = TimeGrid(1.0, 16)

        def psi(x, t):
            return np.stack([np.cos(t) * (x[:, 0] ** 2 + x[:, 1] ** 2 - 1.0),
                             np.zeros(len(x))], axis=1)

        residual, parts = check_transposition_identity(self.forms, ProblemData(), psi, grid)
        self.assertEqual(residual, 0.0)
        self.assertEqual(set(parts), {"lhs", "rhs", "initial", "boundary", "body"})

    def test_0009_field_series_shape(self):
        grid = TimeGrid(1.0, 4)
        series = field_series(self.forms.space, lambda x, t: t * x, grid)
        self.assertEqual(series.shape, (5, self.forms.space.dim))
        self.assertFalse(np.any(series[0]))

    def test_0010_eigenvalues_are_sorted_and_positive(self):
        omega, modes = eigenmodes(self.forms, 4)
        self.assertTrue(np.all(np.diff(omega) >= 0))
        self.assertGreater(omega[0], 0.0)
        mass = self.forms.mass
        gram = modes @ (mass @ modes.T)
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-10)

    def test_0011_elasticity_lift(self):
        with self.assertRaises(DynamicsError):
            ElastodynamicSolver(self.forms, TimeGrid(1.0, 8), lift="poisson")
        data = ProblemData(g=lambda x, t: np.full((len(x), 2), t * t),
                           g_dot=lambda x, t: np.full((len(x), 2), 2.0 * t),
                           g_ddot=lambda x, t: np.full((len(x), 2), 2.0),
                           label="ramp")
        grid = TimeGrid(1.0, 16)
        traj = solve_forward(self.forms, data, grid, lift="elasticity")
        con = self.forms.space.constrained_dofs
        expected = grid.times() ** 2
        np.testing.assert_allclose(traj.u[:, con], np.repeat(expected[:, None], len(con), axis=1),
                                   atol=1e-12)
        self.assertTrue(np.all(np.isfinite(traj.energy)))

    def test_0012_gamma0_initial_values_are_ignored(self):
        u0 = np.ones(self.forms.space.dim)
        with self.assertLogs(level="DEBUG") as logs:
            traj = solve_forward(self.forms, ProblemData(u0=u0, label="flat"), TimeGrid(1.0, 8))
        self.assertTrue(any("ignoring GAMMA0 values of the initial data of flat" in line
                            for line in logs.output))
        con = self.forms.space.constrained_dofs
        free = self.forms.space.free_dofs
        self.assertFalse(np.any(traj.u[:, con]))
        np.testing.assert_array_equal(traj.u[0, free], 1.0)


if __name__ == "__main__":
    unittest.main()
