# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Time integration of the semi-discrete Navier system

    M u'' + K u = f(t),   u = g on GAMMA0,   P(u) n = 0 on GAMMA1

with the average acceleration rule (Newmark beta = 1/4, gamma = 1/2).
Boundary data are handled by splitting u = w + G(t) where G is the lift
of g(t), harmonic by default or the static elasticity lift; w vanishes
on GAMMA0 and solves the homogeneous problem with the lift moved to the
right-hand side.

The backward (final time) problem is the forward problem run on the
reversed load, then reversed again.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import eigsh, splu

from navier import NavierError
from navier.elliptic import HARMONIC, LIFT_KINDS, build_lift, sample_gamma0
from navier.geometry import GAMMA0, GAMMA1
from navier.spaces import assemble_load, piola_stress
from navier.traces import stress_vector_values, time_derivative, time_integral

COMPATIBILITY_TOLERANCE = 1e-12
STRONG_TOLERANCE = 0.25


class DynamicsError(NavierError):
    pass


class IncompatibleDataError(DynamicsError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise DynamicsError("final time must be positive, got %r" % (self.T,))
        if int(self.N) != self.N or self.N < 1:
            raise DynamicsError("step count must be a positive integer, got %r" % (self.N,))

    @property
    def dt(self):
        return self.T / self.N

    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class ProblemData:
    """
    force(x, t), g(x, t) map (n, d) points to (n, d) values; u0 and u1 are
    callables of x or full coefficient vectors. loads, when given, is the
    assembled load series (N+1, dofs) and replaces force.
    """
    force: object = None
    u0: object = None
    u1: object = None
    g: object = None
    g_dot: object = None
    g_ddot: object = None
    loads: np.ndarray = None
    compatible: bool = True
    strong: bool = False
    label: str = ""

    @property
    def has_boundary_data(self):
        return self.g is not None


@dataclass
class Trajectory:
    space: object
    grid: TimeGrid
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    energy: np.ndarray
    work: np.ndarray = None
    label: str = ""

    def __post_init__(self):
        shape = (self.grid.N + 1, self.space.dim)
        for name in ("u", "v", "a"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DynamicsError("%s has shape %s, expected %s" % (name, arr.shape, shape))
            if not np.all(np.isfinite(arr)):
                raise DynamicsError("non-finite %s in trajectory %s" % (name, self.label))

    def field(self, n):
        return self.space.field(self.u[n], self.grid.times()[n])

    def velocity(self, n):
        return self.space.field(self.v[n], self.grid.times()[n])

    def reversed(self):
        """Time reversal t -> T - t: displacements and accelerations keep their sign."""
        return Trajectory(self.space, self.grid, self.u[::-1].copy(), -self.v[::-1],
                          self.a[::-1].copy(), self.energy[::-1].copy(), None, self.label)

    def energy_drift(self):
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / max(e0, 1.0))

    def balance_residual(self):
        """max |E_n - E_0 - W_n| relative to the energy scale."""
        if self.work is None:
            return None
        scale = max(float(np.max(np.abs(self.energy))), 1e-300)
        return float(np.max(np.abs(self.energy - self.energy[0] - self.work)) / scale)


def _coefficients(space, value, what):
    if value is None:
        return np.zeros(space.dim)
    if callable(value):
        return space.interpolate(value).coeffs
    value = np.asarray(value, dtype=float)
    if value.shape != (space.dim,):
        raise DynamicsError("%s has %d coefficients, space has %d"
                            % (what, value.size, space.dim))
    return value


class ElastodynamicSolver:
    """
    Factorizations for one (forms, grid) pair, shared read-only by every
    solve on that pair.
    """

    def __init__(self, forms, grid, strong_tolerance=STRONG_TOLERANCE, lift=HARMONIC):
        self.forms = forms
        self.grid = grid
        if lift not in LIFT_KINDS:
            raise DynamicsError("unknown lift kind %r" % (lift,))
        self.lift_kind = lift
        self.strong_tolerance = strong_tolerance
        space = forms.space
        free = space.free_dofs
        self.mass = forms.mass.tocsr()
        self.stiffness = forms.stiffness.tocsr()
        self._mff = self.mass[free][:, free].tocsc()
        self._kff = self.stiffness[free][:, free].tocsc()
        dt = grid.dt
        self._mass_lu = splu(self._mff)
        self._step_lu = splu((self._mff + (dt * dt / 4.0) * self._kff).tocsc())
        self._lift = None

    @property
    def lift(self):
        if self._lift is None:
            self._lift = build_lift(self.lift_kind, self.forms)
        return self._lift

    def loads(self, data):
        space = self.forms.space
        n = self.grid.N + 1
        if data.loads is not None:
            loads = np.asarray(data.loads, dtype=float)
            if loads.shape != (n, space.dim):
                raise DynamicsError("load series has shape %s, expected %s"
                                    % (loads.shape, (n, space.dim)))
            return loads
        if data.force is None:
            return np.zeros((n, space.dim))
        return np.stack([assemble_load(space, data.force, t) for t in self.grid.times()])

    def boundary_lift(self, data):
        """Lift G and its first two time derivatives, each (N+1, dofs)."""
        space = self.forms.space
        times = self.grid.times()
        dt = self.grid.dt

        def lifted(fn):
            return np.stack([self.lift.extend(sample_gamma0(space, fn, t)).coeffs
                             for t in times])

        ghat = lifted(data.g)
        gdot = lifted(data.g_dot) if data.g_dot is not None else time_derivative(ghat, dt, 1)
        gddot = (lifted(data.g_ddot) if data.g_ddot is not None
                 else time_derivative(ghat, dt, 2))
        return ghat, gdot, gddot

    def check_compatibility(self, data, u0, u1):
        """Returns u0 with its GAMMA0 values replaced by g(., 0) when allowed."""
        space = self.forms.space
        con = space.constrained_dofs
        g0 = sample_gamma0(space, data.g, 0.0).ravel()
        mismatch = float(np.max(np.abs(g0 - u0[con]))) if len(con) else 0.0
        scale = max(1.0, float(np.max(np.abs(g0))))
        if mismatch > COMPATIBILITY_TOLERANCE * scale:
            if data.compatible:
                raise IncompatibleDataError(
                    "g(., 0) differs from u0 on GAMMA0 by %.3e in %s" % (mismatch, data.label))
            logging.warning("incompatible data %s: u0 overridden on GAMMA0 (mismatch %.3e)"
                            % (data.label, mismatch))
        if data.strong:
            self._check_strong(data, u0, u1)
        u0 = u0.copy()
        u0[con] = g0
        return u0

    def _check_strong(self, data, u0, u1):
        space = self.forms.space
        con = space.constrained_dofs
        if data.g is None:
            gdot = np.zeros(len(con))
        elif data.g_dot is not None:
            gdot = sample_gamma0(space, data.g_dot, 0.0).ravel()
        else:
            delta = 1e-6 * max(self.grid.T, 1.0)
            gdot = (sample_gamma0(space, data.g, delta).ravel()
                    - sample_gamma0(space, data.g, -delta).ravel()) / (2.0 * delta)
        scale = max(1.0, float(np.max(np.abs(gdot))))
        if np.max(np.abs(gdot - u1[con])) > 1e-6 * scale:
            raise IncompatibleDataError("dg/dt(., 0) differs from u1 on GAMMA0 in %s"
                                        % data.label)
        traction = stress_vector_values(space, u0, self.forms.lame, GAMMA1)[0]
        fq = space.facet_quadrature(GAMMA1)
        tnorm = np.sqrt(np.einsum("fq,fqi->", fq.weights, traction ** 2))
        _, grads = space.evaluate(u0)
        _, w = space.quadrature()
        stress = piola_stress(grads, self.forms.lame)
        snorm = np.sqrt(np.einsum("cq,cqij->", w, stress ** 2))
        if tnorm > self.strong_tolerance * max(snorm, 1e-300):
            raise IncompatibleDataError(
                "P(u0) n does not vanish on GAMMA1 (%.3e against %.3e) in %s"
                % (tnorm, snorm, data.label))

    def forward(self, data):
        space = self.forms.space
        free, con = space.free_dofs, space.constrained_dofs
        grid = self.grid
        dt = grid.dt
        n = grid.N + 1
        u0 = _coefficients(space, data.u0, "u0")
        u1 = _coefficients(space, data.u1, "u1")
        loads = self.loads(data)

        if data.has_boundary_data:
            u0 = self.check_compatibility(data, u0, u1)
            ghat, gdot, gddot = self.boundary_lift(data)
            rhs = (loads - (self.mass @ gddot.T).T - (self.stiffness @ ghat.T).T)[:, free]
        else:
            if np.any(u0[con]) or np.any(u1[con]):
                logging.debug("ignoring GAMMA0 values of the initial data of %s, u and v "
                              "take the zero boundary datum there" % data.label)
            if data.strong:
                self._check_strong(data, u0, u1)
            ghat = gdot = gddot = np.zeros((n, space.dim))
            rhs = loads[:, free]

        w = np.zeros((n, len(free)))
        wv = np.zeros_like(w)
        wa = np.zeros_like(w)
        w[0] = u0[free] - ghat[0, free]
        wv[0] = u1[free] - gdot[0, free]
        wa[0] = self._mass_lu.solve(rhs[0] - self._kff @ w[0])
        quarter = dt * dt / 4.0
        for k in range(grid.N):
            predictor = w[k] + dt * wv[k] + quarter * wa[k]
            wa[k + 1] = self._step_lu.solve(rhs[k + 1] - self._kff @ predictor)
            w[k + 1] = predictor + quarter * wa[k + 1]
            wv[k + 1] = wv[k] + 0.5 * dt * (wa[k] + wa[k + 1])

        u = ghat.copy()
        v = gdot.copy()
        a = gddot.copy()
        u[:, free] += w
        v[:, free] += wv
        a[:, free] += wa
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DynamicsError("non-finite solution in %s" % data.label)
        energy = self.energy(u, v)
        work = self.work(u, v, a, loads)
        logging.debug("forward solve %s: N=%d dt=%.4g E0=%.6e En=%.6e"
                      % (data.label, grid.N, dt, energy[0], energy[-1]))
        return Trajectory(space, grid, u, v, a, energy, work, data.label)

    def energy(self, u, v):
        ku = (self.stiffness @ u.T).T
        mv = (self.mass @ v.T).T
        return 0.5 * np.einsum("ni,ni->n", v, mv) + 0.5 * np.einsum("ni,ni->n", u, ku)

    def work(self, u, v, a, loads):
        """
        Cumulative work of the loads and of the GAMMA0 reactions, the
        discrete counterpart of the energy balance.
        """
        con = self.forms.space.constrained_dofs
        reactions = np.zeros_like(loads)
        if len(con):
            residual = (self.mass @ a.T).T + (self.stiffness @ u.T).T - loads
            reactions[:, con] = residual[:, con]
        power = np.einsum("ni,ni->n", v[:-1] + v[1:], (loads + reactions)[:-1]
                          + (loads + reactions)[1:])
        return np.concatenate([[0.0], np.cumsum(0.25 * self.grid.dt * power)])

    def backward(self, psi):
        """
        phi'' + A phi = psi on (0, T) with phi(T) = phi'(T) = 0, phi = 0 on
        GAMMA0. psi is a field coefficient series (N+1, dofs).
        """
        space = self.forms.space
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.grid.N + 1, space.dim):
            raise DynamicsError("psi has shape %s, grid needs %s"
                                % (psi.shape, (self.grid.N + 1, space.dim)))
        loads = (self.mass @ psi[::-1].T).T
        rev = self.forward(ProblemData(loads=loads, label="backward"))
        return rev.reversed()


def solve_forward(forms, data, grid, lift=HARMONIC):
    return ElastodynamicSolver(forms, grid, lift=lift).forward(data)


def solve_backward(forms, psi, grid):
    return ElastodynamicSolver(forms, grid).backward(psi)


def field_series(space, f, grid):
    """Coefficient series of the interpolant of f(x, t) on the grid."""
    return np.stack([space.interpolate(f, t).coeffs for t in grid.times()])


def check_transposition_identity(forms, data, psi, grid, solver=None):
    """
    Residual of

      int (u, psi) dt = <u1, phi(0)> - (u0, phi'(0))
                        - int int_GAMMA0 g . P(phi) n + int <F, phi> dt

    for the discrete u = forward(data) and phi = backward(psi). Returns
    (residual, parts).
    """
    solver = solver or ElastodynamicSolver(forms, grid)
    space = forms.space
    if callable(psi):
        psi = field_series(space, psi, grid)
    times = grid.times()
    traj = solver.forward(data)
    phi = solver.backward(psi)
    mass = solver.mass
    lhs = time_integral(np.einsum("ni,ni->n", traj.u, (mass @ psi.T).T), times)
    initial = float(traj.v[0] @ (mass @ phi.u[0]) - traj.u[0] @ (mass @ phi.v[0]))
    loads = solver.loads(data)
    body = time_integral(np.einsum("ni,ni->n", loads, phi.u), times)
    boundary = 0.0
    if data.has_boundary_data:
        fq = space.facet_quadrature(GAMMA0)
        traction = stress_vector_values(space, phi.u, forms.lame, GAMMA0)
        x = fq.points.reshape(-1, space.d)
        g = np.stack([np.asarray(data.g(x, t)).reshape(traction.shape[1:]) for t in times])
        boundary = -time_integral(np.einsum("fq,sfqi->s", fq.weights, g * traction), times)
    rhs = initial + boundary + body
    residual = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)
    parts = {"lhs": lhs, "rhs": rhs, "initial": initial, "boundary": boundary, "body": body}
    logging.debug("transposition residual %.3e %s" % (residual, parts))
    return float(residual), parts


def eigenmodes(forms, count=1):
    """Lowest discrete eigenpairs K w = omega^2 M w on the free dofs, M-normalised."""
    space = forms.space
    k = space.restrict(forms.stiffness)
    m = space.restrict(forms.mass)
    if k.shape[0] <= 2000:
        vals, vecs = scipy.linalg.eigh(k.toarray(), m.toarray(), subset_by_index=[0, count - 1])
    else:
        vals, vecs = eigsh(k.tocsc(), k=count, M=m.tocsc(), sigma=0.0, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    modes = np.stack([space.extend(vecs[:, j]) for j in range(count)])
    return np.sqrt(vals), modes


def modified_frequency(omega, dt):
    """
    Frequency of the average acceleration rule:
    cos(w dt) = (1 - q^2) / (1 + q^2) with q = omega dt / 2.
    """
    q2 = (0.5 * omega * dt) ** 2
    return np.arccos((1.0 - q2) / (1.0 + q2)) / dt
