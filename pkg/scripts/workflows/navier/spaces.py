# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Vector Lagrange finite element spaces (p = 1, 2) on the meshes of
navier.geometry, assembly of the mass matrix, the elasticity form

    B(v, w) = 2 mu (e(v), e(w)) + lambda (div v, div w)

the H1 Gram matrix, boundary mass matrices and load vectors, elimination
of the GAMMA0 constrained dofs and the Korn constant estimate.

Dofs are interleaved: component i of scalar node a is dof a * ncomp + i.
Cells and facets use degree 2p collapsed Gauss-Legendre rules, exact for
polynomials of total degree 2p on the reference simplex.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from navier import NavierError
from navier.geometry import GAMMA0

DENSE_EIGEN_LIMIT = 2000


class AssemblyError(NavierError):
    pass


@dataclass(frozen=True)
class LameParameters:
    mu: float
    lam: float

    def __post_init__(self):
        for name, value in (("mu", self.mu), ("lambda", self.lam)):
            if not (np.isfinite(value) and value > 0):
                raise AssemblyError("Lame parameter %s must be positive, got %r"
                                    % (name, value))

    def as_dict(self):
        return {"mu": self.mu, "lambda": self.lam}


def gauss_simplex(dim, degree):
    """
    Collapsed (Duffy) Gauss-Legendre rule on the reference simplex
    {xi >= 0, sum xi <= 1} exact for polynomials of total degree `degree`.
    """
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    n = int(math.ceil((degree + dim) / 2.0))
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    if dim == 1:
        return g[:, None], w
    if dim == 2:
        u, v = np.meshgrid(g, g, indexing="ij")
        wu, wv = np.meshgrid(w, w, indexing="ij")
        pts = np.stack([u, v * (1.0 - u)], axis=-1).reshape(-1, 2)
        return pts, (wu * wv * (1.0 - u)).ravel()
    u, v, s = np.meshgrid(g, g, g, indexing="ij")
    wu, wv, ws = np.meshgrid(w, w, w, indexing="ij")
    pts = np.stack([u, v * (1.0 - u), s * (1.0 - u) * (1.0 - v)], axis=-1)
    weights = wu * wv * ws * (1.0 - u) ** 2 * (1.0 - v)
    return pts.reshape(-1, 3), weights.ravel()


def local_edges(dim):
    return list(combinations(range(dim + 1), 2))


def lagrange_basis(dim, degree, points):
    """
    Values (nq, nloc) and barycentric derivatives (nq, nloc, dim+1) of the
    Lagrange basis at reference points. Local order: vertices, then the
    edges of local_edges(dim).
    """
    points = np.atleast_2d(points)
    lam = np.concatenate([1.0 - points.sum(axis=1, keepdims=True), points], axis=1)
    nq = len(points)
    if degree == 1:
        values = lam
        dlam = np.broadcast_to(np.eye(dim + 1), (nq, dim + 1, dim + 1)).copy()
        return values, dlam
    edges = local_edges(dim)
    nloc = dim + 1 + len(edges)
    values = np.empty((nq, nloc))
    dlam = np.zeros((nq, nloc, dim + 1))
    for i in range(dim + 1):
        values[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        dlam[:, i, i] = 4.0 * lam[:, i] - 1.0
    for e, (i, j) in enumerate(edges):
        values[:, dim + 1 + e] = 4.0 * lam[:, i] * lam[:, j]
        dlam[:, dim + 1 + e, i] = 4.0 * lam[:, j]
        dlam[:, dim + 1 + e, j] = 4.0 * lam[:, i]
    return values, dlam


def lagrange_second_derivatives(dim, degree):
    """Constant barycentric Hessians (nloc, dim+1, dim+1)."""
    edges = local_edges(dim)
    nloc = dim + 1 if degree == 1 else dim + 1 + len(edges)
    hess = np.zeros((nloc, dim + 1, dim + 1))
    if degree == 2:
        for i in range(dim + 1):
            hess[i, i, i] = 4.0
        for e, (i, j) in enumerate(edges):
            hess[dim + 1 + e, i, j] = 4.0
            hess[dim + 1 + e, j, i] = 4.0
    return hess


@dataclass
class Field:
    space: object
    coeffs: np.ndarray
    t: float = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise AssemblyError("field has %d coefficients, space has %d"
                                % (self.coeffs.size, self.space.dim))
        if not np.all(np.isfinite(self.coeffs)):
            raise AssemblyError("field has non-finite coefficients")

    def values(self):
        """Copy of the coefficients as (scalar dofs, components)."""
        return self.coeffs.reshape(-1, self.space.ncomp).copy()


@dataclass(frozen=True)
class FacetQuadrature:
    tag: str
    facets: np.ndarray
    cells: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    reference: np.ndarray
    cell_reference: np.ndarray
    jacobians: np.ndarray


class FeSpace:
    def __init__(self, mesh, degree=2, components=None):
        if degree not in (1, 2):
            raise AssemblyError("polynomial degree must be 1 or 2, got %r" % (degree,))
        self.mesh = mesh
        self.degree = degree
        self.d = mesh.dimension
        self.ncomp = self.d if components is None else components
        nv = mesh.num_nodes
        if degree == 1:
            self.cell_dofs = mesh.cells.copy()
            self.num_scalar = nv
            self.dof_coords = mesh.nodes.copy()
            self._edge_index = {}
        else:
            pairs = np.array(local_edges(self.d))
            cell_edges = np.sort(mesh.cells[:, pairs], axis=2).reshape(-1, 2)
            edges, inverse = np.unique(cell_edges, axis=0, return_inverse=True)
            inverse = np.asarray(inverse).reshape(mesh.num_cells, len(pairs))
            self.cell_dofs = np.concatenate([mesh.cells, nv + inverse], axis=1)
            self.num_scalar = nv + len(edges)
            self.dof_coords = np.concatenate(
                [mesh.nodes, 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])])
            self._edge_index = {(int(a), int(b)): nv + k for k, (a, b) in enumerate(edges)}
        self.facet_dofs = self._facet_dofs()
        self.dim = self.ncomp * self.num_scalar

        jac = mesh.cell_jacobians()
        self.det = np.linalg.det(jac)
        inv = np.linalg.inv(jac)
        self.grad_lambda = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
        self.quad_points, self.quad_weights = gauss_simplex(self.d, 2 * degree)
        self.basis, self.basis_dlam = lagrange_basis(self.d, degree, self.quad_points)
        self.basis_hessian = lagrange_second_derivatives(self.d, degree)

        gamma0 = self.boundary_scalar_dofs(GAMMA0)
        constrained = (gamma0[:, None] * self.ncomp + np.arange(self.ncomp)).ravel()
        mask = np.zeros(self.dim, dtype=bool)
        mask[constrained] = True
        self.constrained_dofs = np.flatnonzero(mask)
        self.free_dofs = np.flatnonzero(~mask)
        self._facet_quadrature = {}

    def _facet_dofs(self):
        facets = self.mesh.facets
        if self.degree == 1:
            return facets.copy()
        extra = []
        for f in facets:
            extra.append([self._edge_index[tuple(sorted((int(f[i]), int(f[j]))))]
                          for i, j in local_edges(self.d - 1)])
        return np.concatenate([facets, np.array(extra, dtype=np.int64)], axis=1)

    @property
    def nloc(self):
        return self.cell_dofs.shape[1]

    def boundary_scalar_dofs(self, tag):
        return np.unique(self.facet_dofs[self.mesh.facet_indices(tag)])

    def vector_dofs(self, scalar_dofs):
        scalar_dofs = np.asarray(scalar_dofs)
        return (scalar_dofs[..., None] * self.ncomp + np.arange(self.ncomp)).reshape(
            scalar_dofs.shape[:-1] + (-1,))

    def field(self, coeffs, t=None):
        return Field(self, coeffs, t)

    def zero(self, t=None):
        return Field(self, np.zeros(self.dim), t)

    def interpolate(self, f, t=None):
        """Nodal interpolant of f: (N, d) points -> (N, ncomp) values."""
        raw = f(self.dof_coords) if t is None else f(self.dof_coords, t)
        values = np.asarray(raw, dtype=float).reshape(self.num_scalar, self.ncomp)
        if not np.all(np.isfinite(values)):
            raise AssemblyError("non-finite values while interpolating")
        return Field(self, values.ravel(), t)

    def basis_gradients(self, cells=slice(None)):
        """Physical gradients of the scalar basis at the cell rule (c, q, a, d)."""
        return np.einsum("qak,ckj->cqaj", self.basis_dlam, self.grad_lambda[cells])

    def quadrature(self, cells=slice(None)):
        """Physical points (c, q, d) and weights (c, q) of the cell rule."""
        x = self.mesh.nodes[self.mesh.cells[cells]]
        lam = np.concatenate([1.0 - self.quad_points.sum(axis=1, keepdims=True),
                              self.quad_points], axis=1)
        points = np.einsum("qk,ckj->cqj", lam, x)
        weights = self.quad_weights[None, :] * np.abs(self.det[cells])[:, None]
        return points, weights

    def evaluate(self, coeffs):
        """Values (c, q, ncomp) and gradients (c, q, ncomp, d) at the cell rule."""
        local = np.asarray(coeffs).reshape(-1, self.ncomp)[self.cell_dofs]
        values = np.einsum("qa,cai->cqi", self.basis, local)
        grads = np.einsum("cqaj,cai->cqij", self.basis_gradients(), local)
        return values, grads

    def evaluate_in_cells(self, coeffs, cells, reference):
        """
        Values (N, ncomp) and gradients (N, ncomp, d) at reference points,
        one per entry of `cells`.
        """
        values, dlam = lagrange_basis(self.d, self.degree, reference)
        grads = np.einsum("nak,nkj->naj", dlam, self.grad_lambda[cells])
        local = np.asarray(coeffs).reshape(-1, self.ncomp)[self.cell_dofs[cells]]
        return (np.einsum("na,nai->ni", values, local),
                np.einsum("naj,nai->nij", grads, local))

    def cell_hessians(self, coeffs):
        """Per-cell second derivatives (c, ncomp, d, d); zero for p = 1."""
        local = np.asarray(coeffs).reshape(-1, self.ncomp)[self.cell_dofs]
        gl = self.grad_lambda
        hess = np.einsum("akl,ckx,cly->caxy", self.basis_hessian, gl, gl)
        return np.einsum("caxy,cai->cixy", hess, local)

    def reference_coordinates(self, cells, points):
        x0 = self.mesh.nodes[self.mesh.cells[cells, 0]]
        inv = self.grad_lambda[cells, 1:, :]
        return np.einsum("nij,nj->ni", inv, points - x0)

    def locate(self, points):
        """Containing cell and reference coordinates of every point."""
        points = np.atleast_2d(points)
        cells = np.empty(len(points), dtype=np.int64)
        for n, x in enumerate(points):
            x0 = self.mesh.nodes[self.mesh.cells[:, 0]]
            ref = np.einsum("cij,cj->ci", self.grad_lambda[:, 1:, :], x - x0)
            lam = np.concatenate([1.0 - ref.sum(axis=1, keepdims=True), ref], axis=1)
            best = int(np.argmax(lam.min(axis=1)))
            if lam[best].min() < -1e-10:
                raise AssemblyError("point %s lies outside the mesh" % (tuple(x),))
            cells[n] = best
        return cells, self.reference_coordinates(cells, points)

    def facet_quadrature(self, tag):
        if tag not in self._facet_quadrature:
            self._facet_quadrature[tag] = self._build_facet_quadrature(tag)
        return self._facet_quadrature[tag]

    def _build_facet_quadrature(self, tag):
        mesh = self.mesh
        idx = mesh.facet_indices(tag)
        ref, w = gauss_simplex(self.d - 1, 2 * self.degree)
        x = mesh.nodes[mesh.facets[idx]]
        jac = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))
        points = x[:, :1, :] + np.einsum("fij,qj->fqi", jac, ref)
        scale = mesh.facet_measures(tag) * math.factorial(self.d - 1)
        cells = mesh.facet_cells[idx]
        nf, nq = points.shape[:2]
        cell_ref = self.reference_coordinates(
            np.repeat(cells, nq), points.reshape(-1, self.d)).reshape(nf, nq, self.d)
        return FacetQuadrature(tag, idx, cells, points, w[None, :] * scale[:, None],
                               mesh.normals[idx], ref, cell_ref, jac)

    def facet_values_and_gradients(self, coeffs, tag):
        """Values (f, q, ncomp) and one-sided gradients (f, q, ncomp, d) on a boundary."""
        fq = self.facet_quadrature(tag)
        nf, nq = fq.points.shape[:2]
        values, grads = self.evaluate_in_cells(
            coeffs, np.repeat(fq.cells, nq), fq.cell_reference.reshape(-1, self.d))
        return (values.reshape(nf, nq, self.ncomp),
                grads.reshape(nf, nq, self.ncomp, self.d))

    def facet_gradient_operator(self, tag):
        """Scalar basis gradients (f, q, a, d) of the parent cells on a boundary."""
        fq = self.facet_quadrature(tag)
        nf, nq = fq.points.shape[:2]
        _, dlam = lagrange_basis(self.d, self.degree, fq.cell_reference.reshape(-1, self.d))
        cells = np.repeat(fq.cells, nq)
        grads = np.einsum("nak,nkj->naj", dlam, self.grad_lambda[cells])
        return grads.reshape(nf, nq, self.nloc, self.d)

    def restrict(self, matrix):
        free = self.free_dofs
        return matrix[free][:, free]

    def extend(self, free_values, constrained_values=None):
        full = np.zeros(self.dim)
        full[self.free_dofs] = free_values
        if constrained_values is not None:
            full[self.constrained_dofs] = constrained_values
        return full


def piola_stress(grad, lame):
    """P(u) = 2 mu e(u) + lambda (div u) I for gradients (..., d, d)."""
    d = grad.shape[-1]
    div = np.trace(grad, axis1=-2, axis2=-1)
    return (lame.mu * (grad + np.swapaxes(grad, -1, -2))
            + lame.lam * div[..., None, None] * np.eye(d))


def apply_piola_stress(u, lame, point):
    space = u.space
    cells, ref = space.locate(np.asarray(point, dtype=float)[None, :])
    _, grad = space.evaluate_in_cells(u.coeffs, cells, ref)
    return piola_stress(grad[0], lame)


def _global_dofs(space):
    return space.vector_dofs(space.cell_dofs)


def _assemble_matrix(space, local_fn, workers=1):
    """
    Sum of cell matrices local_fn(cells) -> (c, m, m). Cells are split in
    contiguous chunks; the triplets are concatenated in cell order so the
    result does not depend on the number of workers.
    """
    chunks = np.array_split(np.arange(space.mesh.num_cells), max(1, workers))
    chunks = [c for c in chunks if len(c)]
    gdofs = _global_dofs(space)

    def triplets(cells):
        local = local_fn(cells)
        g = gdofs[cells]
        rows = np.broadcast_to(g[:, :, None], local.shape)
        cols = np.broadcast_to(g[:, None, :], local.shape)
        return rows.ravel(), cols.ravel(), local.ravel()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(triplets, chunks))
    else:
        parts = [triplets(c) for c in chunks]
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return sp.coo_matrix((vals, (rows, cols)), shape=(space.dim, space.dim)).tocsr()


def _weights(space, cells):
    return space.quad_weights[None, :] * np.abs(space.det[cells])[:, None]


def _blocked(scalar, ncomp):
    c, m = scalar.shape[:2]
    eye = np.eye(ncomp)
    return (scalar[:, :, None, :, None] * eye[None, None, :, None, :]).reshape(
        c, m * ncomp, m * ncomp)


def assemble_mass(space, workers=1):
    def local(cells):
        w = _weights(space, cells)
        scalar = np.einsum("cq,qa,qb->cab", w, space.basis, space.basis)
        return _blocked(scalar, space.ncomp)
    return _assemble_matrix(space, local, workers)


def assemble_laplacian(space, workers=1):
    def local(cells):
        w = _weights(space, cells)
        g = space.basis_gradients(cells)
        scalar = np.einsum("cq,cqak,cqbk->cab", w, g, g)
        return _blocked(scalar, space.ncomp)
    return _assemble_matrix(space, local, workers)


def assemble_stiffness(space, lame, workers=1):
    if space.ncomp != space.d:
        raise AssemblyError("elasticity needs a vector space")
    if not isinstance(lame, LameParameters):
        lame = LameParameters(*lame)
    d = space.d

    def local(cells):
        w = _weights(space, cells)
        g = space.basis_gradients(cells)
        gg = np.einsum("cq,cqak,cqbk->cab", w, g, g)
        cross = np.einsum("cq,cqaj,cqbi->caibj", w, g, g)
        div = np.einsum("cq,cqai,cqbj->caibj", w, g, g)
        c, m = gg.shape[:2]
        k = lame.mu * _blocked(gg, d).reshape(c, m, d, m, d) + lame.mu * cross + lame.lam * div
        return k.reshape(c, m * d, m * d)
    return _assemble_matrix(space, local, workers)


def assemble_h1_gram(space, workers=1):
    return assemble_mass(space, workers) + assemble_laplacian(space, workers)


def assemble_load(space, force, t=0.0):
    """load_i = (F(., t), phi_i) by the cell rule; force maps (N, d), t -> (N, ncomp)."""
    if force is None:
        return np.zeros(space.dim)
    points, w = space.quadrature()
    c, q = w.shape
    values = np.asarray(force(points.reshape(-1, space.d), t), dtype=float)
    if not np.all(np.isfinite(values)):
        raise AssemblyError("non-finite body force at t=%g" % t)
    values = values.reshape(c, q, space.ncomp)
    local = np.einsum("cq,qa,cqi->cai", w, space.basis, values)
    return np.bincount(_global_dofs(space).ravel(), weights=local.ravel(),
                       minlength=space.dim)


def assemble_boundary_pairing(space, tag=GAMMA0):
    """Boundary mass matrix of int_tag a . b dsigma."""
    fq = space.facet_quadrature(tag)
    values, _ = lagrange_basis(space.d - 1, space.degree, fq.reference)
    scalar = np.einsum("fq,qa,qb->fab", fq.weights, values, values)
    local = _blocked(scalar, space.ncomp)
    g = space.vector_dofs(space.facet_dofs[fq.facets])
    rows = np.broadcast_to(g[:, :, None], local.shape)
    cols = np.broadcast_to(g[:, None, :], local.shape)
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(space.dim, space.dim)).tocsr()


@dataclass(frozen=True)
class AssembledForms:
    space: object
    lame: LameParameters
    mass: object
    stiffness: object
    gram: object
    boundary_mass: object


def assemble_forms(space, lame, workers=1):
    logging.debug("assembling forms: %d dofs, degree %d" % (space.dim, space.degree))
    return AssembledForms(space, lame,
                          assemble_mass(space, workers),
                          assemble_stiffness(space, lame, workers),
                          assemble_h1_gram(space, workers),
                          assemble_boundary_pairing(space, GAMMA0))


def korn_spectrum(forms, constrained=True):
    """Smallest and largest generalized eigenvalues of (K, G)."""
    k, g = forms.stiffness, forms.gram
    if constrained:
        k, g = forms.space.restrict(k), forms.space.restrict(g)
    n = k.shape[0]
    if n <= DENSE_EIGEN_LIMIT:
        eig = scipy.linalg.eigh(k.toarray(), g.toarray(), eigvals_only=True)
        return float(eig[0]), float(eig[-1])
    v0 = np.ones(n)
    low = eigsh(k.tocsc(), k=1, M=g.tocsc(), sigma=-1.0, which="LM", v0=v0,
                return_eigenvectors=False)
    high = eigsh(k.tocsc(), k=1, M=g.tocsc(), which="LA", v0=v0,
                 return_eigenvectors=False)
    return float(low[0]), float(high[0])


def estimate_korn_constants(forms):
    k1, k2 = korn_spectrum(forms, constrained=True)
    if not k1 > 0:
        raise AssemblyError("smallest Korn eigenvalue %g is not positive; "
                            "constraints or assembly are broken" % k1)
    logging.debug("Korn constants k1=%.6g k2=%.6g" % (k1, k2))
    return k1, k2


def l2_norm(forms, coeffs):
    return float(np.sqrt(max(coeffs @ (forms.mass @ coeffs), 0.0)))


def h1_norm(forms, coeffs):
    return float(np.sqrt(max(coeffs @ (forms.gram @ coeffs), 0.0)))


def h2_norm(forms, coeffs):
    """H1 norm plus the broken second derivatives of p = 2 fields."""
    space = forms.space
    hess = space.cell_hessians(coeffs)
    vol = np.abs(space.det) / math.factorial(space.d)
    second = float(np.sum(vol[:, None, None, None] * hess ** 2))
    return float(np.sqrt(h1_norm(forms, coeffs) ** 2 + second))


def error_norms(space, coeffs, exact_value, exact_gradient, t=0.0):
    """L2 and H1 norms of u_h - u for an exact field given as callables."""
    points, w = space.quadrature()
    values, grads = space.evaluate(coeffs)
    x = points.reshape(-1, space.d)
    ev = np.asarray(exact_value(x, t)).reshape(values.shape)
    eg = np.asarray(exact_gradient(x, t)).reshape(grads.shape)
    l2 = float(np.sum(w[:, :, None] * (values - ev) ** 2))
    semi = float(np.sum(w[:, :, None, None] * (grads - eg) ** 2))
    return np.sqrt(l2), np.sqrt(l2 + semi)


def export_coo(matrix, path):
    """(row, col, value) text, sorted by row then column."""
    coo = sp.coo_matrix(matrix)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    with open(path + ".new", "w") as out:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            out.write("%d %d %.17g\n" % (r, c, v))
    os.rename(path + ".new", path)
