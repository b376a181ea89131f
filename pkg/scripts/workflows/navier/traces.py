# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Boundary quantities on GAMMA0 and the space-time norms used by the
estimates.

A BoundaryTrace holds values at the facet quadrature points of one
boundary, per time step. Gradients come from the parent cell of each
facet, so P(u) n is the one-sided trace of the finite element stress.

Norms provided:

  * L2(GAMMA0) and L2 in time (facet rule, trapezoidal rule in time)
  * tangential H1 and H2 through the fields b^alpha, with derivatives
    along each facet taken from a least squares polynomial fit of the
    quadrature samples
  * the Gagliardo H^s norm of a snapshot
  * the dual norm of H1(GAMMA0 x (0,T)) functions vanishing at t = 0 and
    t = T, from a P1 x P1 space-time discretisation
  * Bochner norms L1, L2, Linf, H1, H2 in time of interior norms
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import splu

from navier import NavierError
from navier.geometry import GAMMA0
from navier.spaces import lagrange_basis, piola_stress, h1_norm, h2_norm, l2_norm

NORM_NAMES = (
    "L2T_L2G0", "L2T_H1G0", "L2T_H2G0", "H1T_L2G0", "H2T_L2G0", "H1star", "HsG0",
    "L1T_L2", "L2T_L2", "LinfT_L2", "L1T_H1", "L2T_H1", "LinfT_H1", "LinfT_H2",
    "H1T_L2", "H1T_H1", "H2T_L2", "LinfT_L2_dt", "LinfT_L2_dtt",
)
MIN_TANGENTIAL_FACETS = 8


class TraceError(NavierError):
    pass


@dataclass
class BoundaryTrace:
    tag: str
    values: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    jacobians: np.ndarray
    reference: np.ndarray
    vertices: np.ndarray
    vertex_points: np.ndarray
    cells: np.ndarray
    cell_reference: np.ndarray
    times: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4 or self.values.shape[1:3] != self.weights.shape:
            raise TraceError("trace values %s do not match %d facets x %d points"
                             % ((self.values.shape,) + self.weights.shape))
        if self.times is not None and len(self.times) != self.values.shape[0]:
            raise TraceError("trace has %d steps but %d times"
                             % (self.values.shape[0], len(self.times)))
        if not np.all(np.isfinite(self.values)):
            raise TraceError("non-finite trace values")

    @property
    def steps(self):
        return self.values.shape[0]

    @property
    def num_facets(self):
        return self.values.shape[1]

    @property
    def d(self):
        return self.points.shape[-1]

    def with_values(self, values, times=None):
        keep = self.times if times is None and len(values) == self.steps else times
        return BoundaryTrace(self.tag, values, self.weights, self.points, self.normals,
                             self.jacobians, self.reference, self.vertices,
                             self.vertex_points, self.cells, self.cell_reference, keep)

    def snapshot(self, step=0):
        return self.with_values(self.values[step:step + 1], times=None)

    def scaled(self, factor):
        return self.with_values(factor * self.values)

    def measure(self):
        return float(self.weights.sum())


def empty_trace(space, tag=GAMMA0, components=None, steps=1, times=None):
    fq = space.facet_quadrature(tag)
    mesh = space.mesh
    ncomp = space.ncomp if components is None else components
    nf, nq = fq.weights.shape
    verts = mesh.facets[fq.facets]
    return BoundaryTrace(tag, np.zeros((steps, nf, nq, ncomp)), fq.weights, fq.points,
                         fq.normals, fq.jacobians, fq.reference, verts,
                         mesh.nodes[verts], fq.cells, fq.cell_reference, times)


def sample_trace(space, f, times=None, tag=GAMMA0):
    """Trace of an analytic f(x, t) -> (N, C), one step per entry of times."""
    steps = [0.0] if times is None else list(times)
    base = empty_trace(space, tag)
    nf, nq = base.weights.shape
    x = base.points.reshape(-1, base.d)
    values = np.stack([np.asarray(f(x, t), dtype=float).reshape(nf, nq, -1) for t in steps])
    return base.with_values(values, None if times is None else np.asarray(times, dtype=float))


def _local(space, coeffs, cells):
    coeffs = np.atleast_2d(coeffs)
    return coeffs.reshape(len(coeffs), -1, space.ncomp)[:, space.cell_dofs[cells]]


def boundary_gradients(space, coeffs, tag=GAMMA0):
    """One-sided gradients (S, F, Q, ncomp, d) of a coefficient series."""
    fq = space.facet_quadrature(tag)
    ops = space.facet_gradient_operator(tag)
    return np.einsum("fqaj,sfai->sfqij", ops, _local(space, coeffs, fq.cells))


def displacement_trace(space, coeffs, times=None, tag=GAMMA0):
    fq = space.facet_quadrature(tag)
    values, _ = lagrange_basis(space.d, space.degree, fq.cell_reference.reshape(-1, space.d))
    nf, nq = fq.weights.shape
    values = values.reshape(nf, nq, -1)
    local = _local(space, coeffs, fq.cells)
    return empty_trace(space, tag).with_values(
        np.einsum("fqa,sfai->sfqi", values, local), times)


def stress_vector_values(space, coeffs, lame, tag=GAMMA0):
    fq = space.facet_quadrature(tag)
    stress = piola_stress(boundary_gradients(space, coeffs, tag), lame)
    return np.einsum("sfqij,fj->sfqi", stress, fq.normals)


def stress_vector_trace(traj, lame, tag=GAMMA0):
    """P(u_n) n at the facet points of tag for every step of a trajectory."""
    values = stress_vector_values(traj.space, traj.u, lame, tag)
    return empty_trace(traj.space, tag).with_values(values, traj.grid.times())


def time_derivative(values, dt, order=1):
    """
    Finite difference time derivative along axis 0: centred inside,
    second order one-sided at the ends.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if order == 0:
        return values
    if n < 2:
        return np.zeros_like(values)
    if order == 1:
        return np.gradient(values, dt, axis=0, edge_order=2 if n >= 3 else 1)
    if order != 2:
        return time_derivative(time_derivative(values, dt, order - 2), dt, 2)
    out = np.zeros_like(values)
    if n < 3:
        return out
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dt ** 2
    if n >= 4:
        out[0] = (2 * values[0] - 5 * values[1] + 4 * values[2] - values[3]) / dt ** 2
        out[-1] = (2 * values[-1] - 5 * values[-2] + 4 * values[-3] - values[-4]) / dt ** 2
    else:
        out[0] = out[-1] = out[1]
    return out


def time_integral(series, times):
    """Trapezoidal rule; a single sample is a snapshot and is returned as is."""
    series = np.asarray(series, dtype=float)
    if len(series) == 1:
        return float(series[0])
    return float(trapezoid(series, times, axis=0))


def _times(trace, grid):
    if grid is not None:
        return grid.times()
    if trace.times is not None:
        return trace.times
    if trace.steps > 1:
        raise TraceError("time grid needed for a trace with %d steps" % trace.steps)
    return np.zeros(1)


def pointwise_l2(trace):
    """int_GAMMA |values|^2 dsigma per step."""
    return np.einsum("fq,sfqc->s", trace.weights, trace.values ** 2)


def norm_L2_gamma0(trace, grid=None):
    return math.sqrt(max(time_integral(pointwise_l2(trace), _times(trace, grid)), 0.0))


def _monomials(m, degree):
    if m == 1:
        return [(k,) for k in range(degree + 1)]
    return [(i, k - i) for k in range(degree + 1) for i in range(k, -1, -1)]


def _fit_degree(m, nq):
    degree = 0
    while len(_monomials(m, degree + 1)) <= nq:
        degree += 1
    return degree


def reference_derivative_operators(reference):
    """(m, Q, Q) maps from samples to derivatives of their polynomial fit."""
    nq, m = reference.shape
    exps = np.array(_monomials(m, _fit_degree(m, nq)))
    vander = np.prod(reference[:, None, :] ** exps[None, :, :], axis=-1)
    fit = np.linalg.pinv(vander)
    ops = []
    for axis in range(m):
        lowered = exps.copy()
        lowered[:, axis] = np.maximum(lowered[:, axis] - 1, 0)
        coef = exps[:, axis].astype(float)
        deriv = coef[None, :] * np.prod(reference[:, None, :] ** lowered[None, :, :], axis=-1)
        ops.append(deriv @ fit)
    return np.stack(ops)


def surface_gradient(trace):
    """Surface gradient (S, F, Q, C, d) of the facet-wise polynomial fit."""
    ops = reference_derivative_operators(trace.reference)
    gref = np.einsum("lqp,sfpc->sfqcl", ops, trace.values)
    jac = trace.jacobians
    pinv = np.einsum("fil,flk->fik", jac, np.linalg.inv(np.einsum("fil,fik->flk", jac, jac)))
    return np.einsum("fil,sfqcl->sfqci", pinv, gref)


def direction_samples(directions, trace):
    """
    Tangential fields b^alpha at the trace points, (A, F, Q, d). Accepts a
    callable x -> (A, N, d) or a sequence of finite element Fields.
    """
    nf, nq = trace.weights.shape
    if callable(directions):
        b = np.asarray(directions(trace.points.reshape(-1, trace.d)))
        return b.reshape(len(b), nf, nq, trace.d)
    out = []
    for f in directions:
        vals, _ = f.space.evaluate_in_cells(f.coeffs, np.repeat(trace.cells, nq),
                                            trace.cell_reference.reshape(-1, trace.d))
        out.append(vals.reshape(nf, nq, trace.d))
    return np.stack(out)


def tangential_derivatives(trace, directions):
    """d_{b^alpha} of every component, shape (S, A, F, Q, C)."""
    if trace.num_facets < MIN_TANGENTIAL_FACETS:
        raise TraceError("boundary has %d facets, tangential derivatives need at least %d"
                         % (trace.num_facets, MIN_TANGENTIAL_FACETS))
    b = direction_samples(directions, trace)
    return np.einsum("sfqci,afqi->safqc", surface_gradient(trace), b)


def norm_H1_gamma0(trace, grid=None, directions=None):
    if directions is None:
        raise TraceError("tangential fields are required for the H1(GAMMA0) norm")
    times = _times(trace, grid)
    deriv = tangential_derivatives(trace, directions)
    semi = np.einsum("fq,safqc->s", trace.weights, deriv ** 2)
    total = time_integral(pointwise_l2(trace) + semi, times)
    return math.sqrt(max(total, 0.0))


def norm_H2_gamma0(trace, grid=None, directions=None):
    """Tangential H2: the H1 terms plus every d_{b^beta} d_{b^alpha}."""
    if directions is None:
        raise TraceError("tangential fields are required for the H2(GAMMA0) norm")
    times = _times(trace, grid)
    first = tangential_derivatives(trace, directions)
    s, a, nf, nq, c = first.shape
    stacked = trace.with_values(np.moveaxis(first, 1, 3).reshape(s, nf, nq, a * c))
    second = tangential_derivatives(stacked, directions)
    semi1 = np.einsum("fq,safqc->s", trace.weights, first ** 2)
    semi2 = np.einsum("fq,sbfqc->s", trace.weights, second ** 2)
    total = time_integral(pointwise_l2(trace) + semi1 + semi2, times)
    return math.sqrt(max(total, 0.0))


def gagliardo_seminorm_sq(trace, s, step=0, chunk=1024):
    """
    Double facet quadrature of |f(x)-f(y)|^2 / |x-y|^(d-1+2s), same-facet
    pairs left out. In d = 2 the left-out panels are replaced by the
    integral of |f'|^2 |x-y|^(1-2s) over each segment squared.
    """
    if not 0.0 < s < 1.0:
        raise TraceError("fractional order must lie in (0, 1), got %r" % (s,))
    d = trace.d
    nf, nq = trace.weights.shape
    x = trace.points.reshape(-1, d)
    f = trace.values[step].reshape(nf * nq, -1)
    w = trace.weights.ravel()
    panel = np.repeat(np.arange(nf), nq)
    power = (d - 1 + 2.0 * s) / 2.0
    total = 0.0
    for start in range(0, len(x), chunk):
        sl = slice(start, start + chunk)
        dist2 = np.sum((x[sl, None, :] - x[None, :, :]) ** 2, axis=-1)
        diff2 = np.sum((f[sl, None, :] - f[None, :, :]) ** 2, axis=-1)
        same = panel[sl, None] == panel[None, :]
        kernel = np.where(same, 0.0, diff2 / np.where(same, 1.0, dist2) ** power)
        total += float(w[sl] @ kernel @ w)
    if d == 2:
        e = 1.0 - 2.0 * s
        grad = surface_gradient(trace.snapshot(step))[0]
        slope2 = np.einsum("fq,fqci->f", trace.weights, grad ** 2)
        length = trace.weights.sum(axis=1)
        total += float(np.sum(slope2 / length * 2.0 * length ** (e + 2) / ((e + 1) * (e + 2))))
    return total


def norm_Hs_gamma0(trace, s, step=0):
    l2 = float(pointwise_l2(trace.snapshot(step))[0])
    return math.sqrt(l2 + gagliardo_seminorm_sq(trace, s, step))


class SpaceTimeGram:
    """
    P1 (GAMMA0 surface) x P1 (time) discretisation of H1(GAMMA0 x (0,T))
    restricted to functions vanishing at both ends of the time interval.
    Coefficients have shape (N-1, nodes, C).
    """

    def __init__(self, trace, times):
        times = np.asarray(times, dtype=float)
        if len(times) < 3:
            raise TraceError("space-time dual norm needs at least 2 time steps")
        self.times = times
        m = trace.d - 1
        self.nodes, local = np.unique(trace.vertices, return_inverse=True)
        local = np.asarray(local).reshape(trace.vertices.shape)
        self.local = local
        coords = np.zeros((len(self.nodes), trace.d))
        coords[local.ravel()] = trace.vertex_points.reshape(-1, trace.d)
        self.node_points = coords
        n = len(self.nodes)

        nf, nq = trace.weights.shape
        phi, _ = lagrange_basis(m, 1, trace.reference)
        rows = np.broadcast_to(local[:, None, :], (nf, nq, m + 1)).ravel()
        cols = np.broadcast_to(np.arange(nf * nq).reshape(nf, nq, 1), (nf, nq, m + 1)).ravel()
        vals = (trace.weights[:, :, None] * phi[None, :, :]).ravel()
        self.load_operator = sp.coo_matrix((vals, (rows, cols)), shape=(n, nf * nq)).tocsr()

        jac = trace.jacobians
        area = trace.weights.sum(axis=1)
        jtj_inv = np.linalg.inv(np.einsum("fil,fik->flk", jac, jac))
        grads = np.einsum("flk,fik->fli", jtj_inv, jac)
        grads = np.concatenate([-grads.sum(axis=1, keepdims=True), grads], axis=1)
        stiff = area[:, None, None] * np.einsum("fai,fbi->fab", grads, grads)
        mass = area[:, None, None] * (1.0 + np.eye(m + 1)) / ((m + 1) * (m + 2))
        r = np.broadcast_to(local[:, :, None], stiff.shape).ravel()
        c = np.broadcast_to(local[:, None, :], stiff.shape).ravel()
        self.surface_mass = sp.coo_matrix((mass.ravel(), (r, c)), shape=(n, n)).tocsc()
        self.surface_stiffness = sp.coo_matrix((stiff.ravel(), (r, c)), shape=(n, n)).tocsc()

        h = np.diff(times)
        nt = len(times)
        mt = np.zeros((nt, nt))
        at = np.zeros((nt, nt))
        for k, hk in enumerate(h):
            mt[k:k + 2, k:k + 2] += hk / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
            at[k:k + 2, k:k + 2] += np.array([[1.0, -1.0], [-1.0, 1.0]]) / hk
        self.time_mass_full = mt
        self.time_mass = mt[1:-1, 1:-1]
        self.time_stiffness = at[1:-1, 1:-1]
        try:
            self._eig, self._vec = scipy.linalg.eigh(self.time_stiffness, self.time_mass)
        except np.linalg.LinAlgError as exc:
            raise TraceError("space-time Gram is not positive definite: %s" % exc)
        spatial = (self.surface_mass + self.surface_stiffness).tocsc()
        self._blocks = [splu((lam * self.surface_mass + spatial).tocsc()) for lam in self._eig]

    @property
    def shape(self):
        return (len(self.times) - 2, len(self.nodes))

    def load(self, trace):
        """(N-1, nodes, C) pairings of the trace with every interior basis function."""
        if trace.steps != len(self.times):
            raise TraceError("trace has %d steps, grid has %d" % (trace.steps, len(self.times)))
        s, nf, nq, c = trace.values.shape
        spatial = np.stack([self.load_operator @ trace.values[k].reshape(nf * nq, c)
                            for k in range(s)])
        return np.einsum("mn,npc->mpc", self.time_mass_full[1:-1], spatial)

    def apply(self, coeffs):
        """G c for space-time coefficients (N-1, nodes, C)."""
        mg = self.surface_mass
        spatial = self.surface_mass + self.surface_stiffness
        out = np.zeros_like(coeffs)
        for c in range(coeffs.shape[-1]):
            x = coeffs[:, :, c]
            out[:, :, c] = (self.time_stiffness @ (mg @ x.T).T
                            + self.time_mass @ (spatial @ x.T).T)
        return out

    def norm(self, coeffs):
        return math.sqrt(max(float(np.sum(coeffs * self.apply(coeffs))), 0.0))

    def solve(self, load):
        """G^{-1} f through the generalized eigenbasis in time."""
        y = np.einsum("mk,mpc->kpc", self._vec, load)
        z = np.stack([self._blocks[k].solve(y[k]) for k in range(len(y))])
        return np.einsum("mk,kpc->mpc", self._vec, z)

    def dual_norm_from_load(self, load):
        if not np.any(load):
            return 0.0
        value = float(np.sum(load * self.solve(load)))
        if value < 0:
            raise TraceError("space-time Gram is not positive definite")
        return math.sqrt(value)

    def dual_norm(self, trace):
        return self.dual_norm_from_load(self.load(trace))

    def nodal(self, f, components):
        """Coefficients of f(x, t) -> (nodes, C) at the interior time nodes."""
        return np.stack([np.asarray(f(self.node_points, t), dtype=float).reshape(
            len(self.nodes), components) for t in self.times[1:-1]])

    def gram_matrix(self, basis):
        """Gram matrix of a list of coefficient arrays."""
        applied = [self.apply(b) for b in basis]
        return np.array([[float(np.sum(a * b)) for b in applied] for a in basis])


def norm_H1star_dual(trace, grid=None):
    times = _times(trace, grid)
    value = SpaceTimeGram(trace, times).dual_norm(trace)
    logging.debug("H1* dual norm %.6e over %d steps" % (value, len(times)))
    return value


def norm_time_derivative_gamma0(trace, grid=None, order=1):
    times = _times(trace, grid)
    dt = times[1] - times[0]
    return norm_L2_gamma0(trace.with_values(time_derivative(trace.values, dt, order), times))


def norm_H1T_L2_gamma0(trace, grid=None):
    return math.hypot(norm_L2_gamma0(trace, grid), norm_time_derivative_gamma0(trace, grid))


def time_norms(series, times):
    series = np.asarray(series, dtype=float)
    return {
        "L1": time_integral(series, times),
        "L2": math.sqrt(max(time_integral(series ** 2, times), 0.0)),
        "Linf": float(np.max(series)),
    }


@dataclass
class NormReport:
    values: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.values.items():
            if name not in NORM_NAMES:
                raise TraceError("unknown norm name %r" % (name,))
            if not (np.isfinite(value) and value >= 0):
                raise TraceError("norm %s has invalid value %r" % (name, value))
        self.values = {k: float(v) for k, v in sorted(self.values.items())}

    def as_dict(self):
        return {"norms": dict(self.values), "meta": dict(self.meta)}


def bochner_norms(traj, forms, kinds=None, meta=None):
    """
    Bochner norms of a trajectory. H^k in time uses finite difference
    derivatives of the displacement coefficients.
    """
    times = traj.grid.times()
    dt = traj.grid.dt
    u = traj.u
    l2 = np.array([l2_norm(forms, c) for c in u])
    h1 = np.array([h1_norm(forms, c) for c in u])
    du = time_derivative(u, dt, 1)
    ddu = time_derivative(u, dt, 2)
    dl2 = np.array([l2_norm(forms, c) for c in du])
    dh1 = np.array([h1_norm(forms, c) for c in du])
    ddl2 = np.array([l2_norm(forms, c) for c in ddu])
    vl2 = np.array([l2_norm(forms, c) for c in traj.v])
    al2 = np.array([l2_norm(forms, c) for c in traj.a])
    tl2, th1 = time_norms(l2, times), time_norms(h1, times)
    values = {
        "L1T_L2": tl2["L1"], "L2T_L2": tl2["L2"], "LinfT_L2": tl2["Linf"],
        "L1T_H1": th1["L1"], "L2T_H1": th1["L2"], "LinfT_H1": th1["Linf"],
        "H1T_L2": math.hypot(tl2["L2"], time_norms(dl2, times)["L2"]),
        "H1T_H1": math.hypot(th1["L2"], time_norms(dh1, times)["L2"]),
        "H2T_L2": math.sqrt(tl2["L2"] ** 2 + time_norms(dl2, times)["L2"] ** 2
                            + time_norms(ddl2, times)["L2"] ** 2),
        "LinfT_L2_dt": float(np.max(vl2)),
        "LinfT_L2_dtt": float(np.max(al2)),
    }
    if forms.space.degree == 2:
        values["LinfT_H2"] = float(max(h2_norm(forms, c) for c in u))
    if kinds is not None:
        values = {k: v for k, v in values.items() if k in kinds}
    report_meta = {"level": forms.space.mesh.spec.level, "degree": forms.space.degree,
                   "T": traj.grid.T, "N": traj.grid.N}
    report_meta.update(forms.lame.as_dict())
    report_meta.update(meta or {})
    return NormReport(values, report_meta)
