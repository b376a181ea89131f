# SPDX-License-Identifier: copyleft-next-0.3.1
"""
sympy vector fields used as exact oracles: manufactured solutions, data
with prescribed compatibility and the boundary identities. Every
derivative is symbolic; evaluation goes through numpy lambdas.
"""

import numpy as np
import sympy as sym

COORDS = sym.symbols("x0:3", real=True)
TIME = sym.Symbol("t", real=True)


def smoothstep_expr(s):
    return sym.Piecewise((0, s <= 0), (1, s >= 1),
                         (6 * s ** 5 - 15 * s ** 4 + 10 * s ** 3, True))


def radius_expr(d):
    return sym.sqrt(sum(c ** 2 for c in COORDS[:d]))


def _vectorize(exprs, d, shape):
    fn = sym.lambdify(list(COORDS[:d]) + [TIME], list(exprs), "numpy")

    def evaluate(x, t=0.0):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = fn(*[x[:, i] for i in range(d)], float(t))
        cols = [np.broadcast_to(np.asarray(v, dtype=float), (len(x),)) for v in out]
        return np.stack(cols, axis=-1).reshape((len(x),) + shape)
    return evaluate


class VectorExpression:
    """u(x, t) with d components in d space dimensions."""

    def __init__(self, components, d):
        if len(components) != d:
            raise ValueError("need %d components, got %d" % (d, len(components)))
        self.d = d
        self.x = COORDS[:d]
        self.exprs = sym.Matrix([sym.sympify(c) for c in components])

    def gradient(self):
        return sym.Matrix(self.d, self.d,
                          lambda i, j: sym.diff(self.exprs[i], self.x[j]))

    def divergence(self):
        return sum(sym.diff(self.exprs[i], self.x[i]) for i in range(self.d))

    def strain(self):
        g = self.gradient()
        return (g + g.T) / 2

    def piola(self, mu, lam):
        return 2 * mu * self.strain() + lam * self.divergence() * sym.eye(self.d)

    def div_piola(self, mu, lam):
        p = self.piola(mu, lam)
        return VectorExpression(
            [sum(sym.diff(p[i, j], self.x[j]) for j in range(self.d))
             for i in range(self.d)], self.d)

    def time_derivative(self, order=1):
        return VectorExpression([sym.diff(e, TIME, order) for e in self.exprs], self.d)

    def at_time(self, t):
        return VectorExpression([e.subs(TIME, t) for e in self.exprs], self.d)

    def __add__(self, other):
        return VectorExpression(list(self.exprs + other.exprs), self.d)

    def __sub__(self, other):
        return VectorExpression(list(self.exprs - other.exprs), self.d)

    def scaled(self, factor):
        return VectorExpression([factor * e for e in self.exprs], self.d)

    def value_fn(self):
        return _vectorize(self.exprs, self.d, (self.d,))

    def gradient_fn(self):
        return _vectorize(list(self.gradient()), self.d, (self.d, self.d))

    def divergence_fn(self):
        return _vectorize([self.divergence()], self.d, ())

    def piola_fn(self, mu, lam):
        return _vectorize(list(self.piola(mu, lam)), self.d, (self.d, self.d))


def radial_traction_free_field(mu, lam, r0, r1, d):
    """
    v = phi(r) x / r with phi = (r - r0)^2 (r - a): v = 0 on the inner
    sphere and a fixed so that the radial stress vanishes on the outer one.
    """
    r = sym.Symbol("r", positive=True)
    a = sym.Symbol("a", real=True)
    phi = (r - r0) ** 2 * (r - a)
    srr = (2 * mu + lam) * sym.diff(phi, r) + lam * (d - 1) * phi / r
    root = sym.solve(sym.Eq(srr.subs(r, r1), 0), a)[0]
    rad = radius_expr(d)
    profile = phi.subs(a, root).subs(r, rad)
    return VectorExpression([profile * c / rad for c in COORDS[:d]], d)


def random_polynomial_field(rng, d, degree=2, scale=1.0):
    """Vector field with normally distributed monomial coefficients."""
    x = COORDS[:d]
    monomials = [sym.Integer(1)]
    for _ in range(degree):
        monomials = sorted(set(m * c for m in monomials for c in x) | set(monomials),
                           key=sym.default_sort_key)
    comps = []
    for _ in range(d):
        coeffs = rng.standard_normal(len(monomials)) * scale
        comps.append(sum(sym.Float(float(c)) * m for c, m in zip(coeffs, monomials)))
    return VectorExpression(comps, d)


def boundary_vanishing_field(rng, d, r0, degree=2):
    """(|x|^2 - r0^2) q(x) with q a random smooth vector factor."""
    x = COORDS[:d]
    q = random_polynomial_field(rng, d, degree)
    freq = rng.standard_normal(d)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    amp = rng.standard_normal(d)
    wave = sym.sin(sum(sym.Float(float(f)) * c for f, c in zip(freq, x)) + phase)
    s = sum(c ** 2 for c in x) - sym.Float(r0) ** 2
    return VectorExpression([s * (q.exprs[i] + sym.Float(float(amp[i])) * wave)
                             for i in range(d)], d)
