# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Stationary solves: the harmonic lift of GAMMA0 data (Laplace equation per
component, zero on GAMMA1), the elasticity lift (div P(u) = rhs with the
natural condition on GAMMA1) and Riesz maps for discrete dual norms.
Factorizations are computed once and only read afterwards.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from navier import NavierError
from navier.geometry import GAMMA0, GAMMA1
from navier.spaces import FeSpace, assemble_laplacian

HARMONIC = "harmonic"
ELASTICITY = "elasticity"
LIFT_KINDS = (HARMONIC, ELASTICITY)


class LiftError(NavierError):
    pass


@dataclass(frozen=True)
class LiftProblem:
    kind: str
    datum: np.ndarray
    rhs: np.ndarray = None

    def __post_init__(self):
        if self.kind not in LIFT_KINDS:
            raise LiftError("unknown lift kind %r" % (self.kind,))
        if self.kind == HARMONIC and self.rhs is not None and np.any(self.rhs):
            raise LiftError("harmonic lift takes no right-hand side")
        if not np.all(np.isfinite(self.datum)):
            raise LiftError("non-finite boundary datum")


def _factor(matrix, what):
    try:
        return splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise LiftError("%s system is singular: %s" % (what, exc))


def sample_gamma0(space, g, t=0.0):
    """g(x, t) at the GAMMA0 scalar dofs, shape (n, ncomp)."""
    nodes = space.boundary_scalar_dofs(GAMMA0)
    values = np.asarray(g(space.dof_coords[nodes], t), dtype=float)
    return values.reshape(len(nodes), space.ncomp)


class HarmonicLift:
    def __init__(self, space):
        self.space = space
        scalar = FeSpace(space.mesh, space.degree, components=1)
        lap = assemble_laplacian(scalar).tocsr()
        self.gamma0 = scalar.boundary_scalar_dofs(GAMMA0)
        fixed = np.union1d(self.gamma0, scalar.boundary_scalar_dofs(GAMMA1))
        self.free = np.setdiff1d(np.arange(scalar.num_scalar), fixed)
        self._interior = lap[self.free][:, self.free]
        self._coupling = lap[self.free][:, self.gamma0]
        self._lu = _factor(self._interior, "harmonic lift")

    def solve(self, datum):
        """Componentwise harmonic extension of GAMMA0 values (n, ncomp)."""
        datum = np.asarray(datum, dtype=float).reshape(len(self.gamma0), self.space.ncomp)
        problem = LiftProblem(HARMONIC, datum)
        values = np.zeros((self.space.num_scalar, self.space.ncomp))
        values[self.gamma0] = problem.datum
        if np.any(datum):
            values[self.free] = self._lu.solve(-(self._coupling @ datum))
        return self.space.field(values.ravel())

    def extend(self, datum):
        return self.solve(datum)

    def residual(self, field):
        values = field.values()
        r = self._interior @ values[self.free] + self._coupling @ values[self.gamma0]
        scale = np.linalg.norm(self._coupling @ values[self.gamma0])
        return float(np.linalg.norm(r) / (scale + 1e-300))


def solve_harmonic_lift(space, g, t=0.0):
    datum = sample_gamma0(space, g, t) if callable(g) else g
    return HarmonicLift(space).solve(datum)


class ElasticLift:
    """
    Solves B(u, xi) = -(rhs, xi) for all xi vanishing on GAMMA0, with u
    prescribed on GAMMA0 (zero unless given) and P(u) n = 0 on GAMMA1.
    """

    def __init__(self, forms):
        self.forms = forms
        space = forms.space
        k = forms.stiffness.tocsr()
        self._coupling = k[space.free_dofs][:, space.constrained_dofs]
        self._lu = _factor(space.restrict(k), "elasticity lift")

    def solve(self, load, dirichlet=None):
        space = self.forms.space
        load = np.asarray(load, dtype=float)
        if load.shape != (space.dim,) or not np.all(np.isfinite(load)):
            raise LiftError("elasticity lift needs a finite load vector of length %d"
                            % space.dim)
        rhs = -load[space.free_dofs]
        constrained = None
        if dirichlet is not None:
            constrained = np.asarray(dirichlet, dtype=float).ravel()
            rhs = rhs - self._coupling @ constrained
        return space.field(space.extend(self._lu.solve(rhs), constrained))

    def extend(self, datum):
        """Lift of GAMMA0 values (n, ncomp) with no load."""
        problem = LiftProblem(ELASTICITY, np.asarray(datum, dtype=float))
        return self.solve(np.zeros(self.forms.space.dim), problem.datum)


def solve_elasticity_lift(forms, load, dirichlet=None):
    return ElasticLift(forms).solve(load, dirichlet)


def build_lift(kind, forms):
    """The GAMMA0 lift used by the time stepping, by kind."""
    if kind == HARMONIC:
        return HarmonicLift(forms.space)
    if kind == ELASTICITY:
        return ElasticLift(forms)
    raise LiftError("unknown lift kind %r" % (kind,))


def _is_symmetric(gram):
    if sp.issparse(gram):
        diff = abs(gram - gram.T)
        scale = abs(gram).max()
        return diff.max() <= 1e-12 * scale if diff.nnz else True
    return np.allclose(gram, gram.T, rtol=0.0, atol=1e-12 * np.abs(gram).max())


def riesz_representer(f, gram):
    """v = G^{-1} f for a symmetric positive definite Gram matrix."""
    f = np.asarray(f, dtype=float)
    if not _is_symmetric(gram):
        raise LiftError("Gram matrix is not symmetric")
    if sp.issparse(gram):
        if np.any(gram.diagonal() <= 0):
            raise LiftError("Gram matrix is not positive definite")
        v = _factor(gram, "Gram").solve(f)
        if f @ v < 0:
            raise LiftError("Gram matrix is not positive definite")
        return v
    try:
        factor = scipy.linalg.cho_factor(np.asarray(gram, dtype=float))
    except np.linalg.LinAlgError:
        raise LiftError("Gram matrix is not positive definite")
    return scipy.linalg.cho_solve(factor, f)


def riesz_dual_norm(f, gram):
    """sqrt(f^T G^{-1} f), the dual norm of f for the inner product G."""
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        return 0.0
    value = float(f @ riesz_representer(f, gram))
    logging.debug("riesz dual norm^2 = %.6e" % value)
    return float(np.sqrt(max(value, 0.0)))
