# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Pointwise boundary identities for fields vanishing on GAMMA0, checked
with exact symbolic gradients, and the multiplier identity

    1/2 int_0^T int_GAMMA0 [mu |grad u|^2 + (lambda+mu) (div u)^2]
      = [int u' . (grad u h)]_0^T + 1/2 int int |u'|^2 div h
        - mu/2 int int |grad u|^2 div h + mu int int d_j u_i d_j h_k d_k u_i
        - (lambda+mu)/2 int int (div u)^2 div h
        + (lambda+mu) int int div u d_i h_k d_k u_i - int int F . (grad u h)

checked on discrete trajectories with homogeneous boundary data.
"""

import logging
from dataclasses import dataclass

import numpy as np

from navier import NavierError
from navier.geometry import GAMMA0, multiplier_extension, multiplier_gradient
from navier.symbolic import boundary_vanishing_field
from navier.traces import boundary_gradients, time_integral

IDENTITY_NAMES = ("A1", "A2", "A3", "A4", "A5", "P39")
VANISHING_TOLERANCE = 1e-13
LAME_PAIRS = ((1.0, 1.0), (1.0, 10.0))
MULTIPLIER_TERMS = ("final", "initial", "kinetic", "gradient", "gradient_h",
                    "divergence", "divergence_h", "force")


class IdentityError(NavierError):
    pass


@dataclass(frozen=True)
class TestFieldFamily:
    d: int
    inner_radius: float = 1.0
    seed: int = 0
    count: int = 100
    degree: int = 2

    # keep pytest from collecting this as a test class
    __test__ = False

    def fields(self):
        for i in range(self.count):
            rng = np.random.default_rng([self.seed, i])
            yield boundary_vanishing_field(rng, self.d, self.inner_radius, self.degree)


def boundary_points(d, radius, count, seed=0):
    """Points on |x| = radius and the outward normal of Omega there (-x/r)."""
    rng = np.random.default_rng([seed, 7919])
    if d == 2:
        theta = rng.uniform(0.0, 2.0 * np.pi, count)
        e = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        e = rng.standard_normal((count, d))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
    return radius * e, -e


def _norm2(a, axes):
    return np.sum(a ** 2, axis=axes)


def identity_residuals(grad, normals, lame_pairs=LAME_PAIRS):
    """
    Relative residuals (npoints,) of every identity for gradients
    G_ij = d_j phi_i at boundary points with normals n.
    """
    gn = np.einsum("pij,pj->pi", grad, normals)
    div = np.trace(grad, axis1=1, axis2=2)
    strain = 0.5 * (grad + np.swapaxes(grad, 1, 2))
    en = np.einsum("pij,pj->pi", strain, normals)
    ngn = np.einsum("pi,pi->p", normals, gn)
    g2 = _norm2(grad, (1, 2))

    def rel(lhs, rhs):
        return np.abs(lhs - rhs) / (1.0 + np.abs(lhs))

    out = {
        "A1": np.max(np.abs(grad - np.einsum("pi,pj->pij", gn, normals)), axis=(1, 2))
        / (1.0 + np.sqrt(g2)),
        "A2": rel(np.sqrt(g2), np.sqrt(_norm2(gn, 1))),
        "A3": rel(div * ngn, div ** 2),
        "A4": rel(2.0 * _norm2(strain, (1, 2)), g2 + div ** 2),
        "A5": rel(4.0 * _norm2(en, 1), g2 + 3.0 * div ** 2),
    }
    p39 = np.zeros(len(grad))
    for mu, lam in lame_pairs:
        pn = 2.0 * mu * en + lam * div[:, None] * normals
        rhs = mu ** 2 * (g2 + 3.0 * div ** 2) + 4.0 * mu * lam * div ** 2 + lam ** 2 * div ** 2
        p39 = np.maximum(p39, rel(_norm2(pn, 1), rhs))
    out["P39"] = p39
    return out


@dataclass
class IdentityReport:
    residuals: dict
    rows: list
    fields: int
    points: int

    def passed(self, tolerance=1e-12):
        return all(v <= tolerance for v in self.residuals.values())


def check_appendix_a(family, points=None, normals=None, npoints=50, lame_pairs=LAME_PAIRS):
    """
    Max relative residual of each identity over the family and the
    boundary points, plus one (identity, field, point, residual) row per
    evaluation.
    """
    if points is None:
        points, normals = boundary_points(family.d, family.inner_radius, npoints, family.seed)
    worst = {name: 0.0 for name in IDENTITY_NAMES}
    rows = []
    count = 0
    for index, expr in enumerate(family.fields()):
        values = expr.value_fn()(points)
        if np.max(np.abs(values)) > VANISHING_TOLERANCE:
            raise IdentityError("field %d of seed %d does not vanish on GAMMA0 (%.3e)"
                                % (index, family.seed, np.max(np.abs(values))))
        res = identity_residuals(expr.gradient_fn()(points), normals, lame_pairs)
        for name in IDENTITY_NAMES:
            worst[name] = max(worst[name], float(np.max(res[name])))
            rows.extend((name, index, p, float(r)) for p, r in enumerate(res[name]))
        count += 1
    logging.debug("boundary identities d=%d: %s" % (family.d, worst))
    return IdentityReport(worst, rows, count, len(points))


def _cell_samples(space, coeffs):
    """Values and gradients of a coefficient series at the cell rule."""
    values, grads = [], []
    for c in np.atleast_2d(coeffs):
        v, g = space.evaluate(c)
        values.append(v)
        grads.append(g)
    return np.stack(values), np.stack(grads)


def _field_at_rule(field, space):
    """A Field of any degree on the same mesh at the cell rule of space."""
    c, q = space.mesh.num_cells, len(space.quad_points)
    cells = np.repeat(np.arange(c), q)
    ref = np.tile(space.quad_points, (c, 1))
    v, g = field.space.evaluate_in_cells(field.coeffs, cells, ref)
    return v.reshape(c, q, -1), g.reshape(c, q, v.shape[-1], -1)


def multiplier_terms(times, weights, grads, velocity, force, h, grad_h,
                     boundary_weights, boundary_grads, lame):
    """
    Both sides of the multiplier identity from samples. Volume arrays are
    per step at the cell rule (S, c, q, ...); the boundary arrays sit on
    the GAMMA0 facet rule.
    """
    mu, lam = lame.mu, lame.lam
    div_h = np.trace(grad_h, axis1=-2, axis2=-1)
    div = np.trace(grads, axis1=-2, axis2=-1)
    gh = np.einsum("scqik,cqk->scqi", grads, h)

    def integral(density):
        return time_integral(np.einsum("cq,scq->s", weights, density), times)

    def at(step, density):
        return float(np.einsum("cq,cq->", weights, density[step]))

    vg = np.einsum("scqi,scqi->scq", velocity, gh)
    terms = {
        "final": at(-1, vg),
        "initial": -at(0, vg),
        "kinetic": 0.5 * integral(np.sum(velocity ** 2, axis=-1) * div_h),
        "gradient": -0.5 * mu * integral(np.sum(grads ** 2, axis=(-2, -1)) * div_h),
        "gradient_h": mu * integral(np.einsum("scqij,cqkj,scqik->scq", grads, grad_h, grads)),
        "divergence": -0.5 * (lam + mu) * integral(div ** 2 * div_h),
        "divergence_h": (lam + mu) * integral(div * np.einsum("cqki,scqik->scq",
                                                              grad_h, grads)),
        "force": -integral(np.einsum("scqi,scqi->scq", force, gh)),
    }
    bdiv = np.trace(boundary_grads, axis1=-2, axis2=-1)
    density = mu * np.sum(boundary_grads ** 2, axis=(-2, -1)) + (lam + mu) * bdiv ** 2
    lhs = 0.5 * time_integral(np.einsum("fq,sfq->s", boundary_weights, density), times)
    return lhs, terms


def _force_samples(space, data, times, points):
    c, q = points.shape[:2]
    if data.force is None:
        return np.zeros((len(times), c, q, space.d))
    x = points.reshape(-1, space.d)
    return np.stack([np.asarray(data.force(x, t)).reshape(c, q, space.d) for t in times])


def check_multiplier_identity(traj, h, forms, data, grid=None):
    """
    Relative residual |LHS - RHS| / (|LHS| + |RHS|) of the multiplier
    identity on a trajectory, with h a Field (or None for the analytic
    extension). Returns (residual, lhs, terms).
    """
    if data is not None and data.has_boundary_data:
        raise IdentityError("the multiplier identity is checked for g = 0 only")
    space = forms.space
    grid = grid or traj.grid
    times = grid.times()
    points, weights = space.quadrature()
    _, grads = _cell_samples(space, traj.u)
    velocity, _ = _cell_samples(space, traj.v)
    if h is None:
        x = points.reshape(-1, space.d)
        hv = multiplier_extension(space.mesh.spec, x).reshape(points.shape)
        hg = multiplier_gradient(space.mesh.spec, x).reshape(points.shape + (space.d,))
    else:
        hv, hg = _field_at_rule(h, space)
    force = _force_samples(space, data, times, points) if data is not None else \
        np.zeros_like(velocity)
    fq = space.facet_quadrature(GAMMA0)
    bgrads = boundary_gradients(space, traj.u, GAMMA0)
    lhs, terms = multiplier_terms(times, weights, grads, velocity, force, hv, hg,
                                  fq.weights, bgrads, forms.lame)
    rhs = sum(terms.values())
    residual = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)
    logging.debug("multiplier identity: lhs=%.6e rhs=%.6e residual=%.3e"
                  % (lhs, rhs, residual))
    return float(residual), float(lhs), terms


def exact_multiplier_terms(expr, force, space, grid, lame):
    """
    The same terms for an exact field given as a sympy VectorExpression,
    integrated with the cell and facet rules of space.
    """
    times = grid.times()
    points, weights = space.quadrature()
    c, q = weights.shape
    d = space.d
    x = points.reshape(-1, d)
    gfn = expr.gradient_fn()
    vfn = expr.time_derivative(1).value_fn()
    grads = np.stack([gfn(x, t).reshape(c, q, d, d) for t in times])
    velocity = np.stack([vfn(x, t).reshape(c, q, d) for t in times])
    forces = np.zeros_like(velocity) if force is None else np.stack(
        [np.asarray(force(x, t)).reshape(c, q, d) for t in times])
    hv = multiplier_extension(space.mesh.spec, x).reshape(c, q, d)
    hg = multiplier_gradient(space.mesh.spec, x).reshape(c, q, d, d)
    fq = space.facet_quadrature(GAMMA0)
    nf, nq = fq.weights.shape
    bx = fq.points.reshape(-1, d)
    bgrads = np.stack([gfn(bx, t).reshape(nf, nq, d, d) for t in times])
    return multiplier_terms(times, weights, grads, velocity, forces, hv, hg,
                            fq.weights, bgrads, lame)
