# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Simplicial meshes of the annulus (d=2) and of the spherical shell (d=3)

    Omega = { x : r0 < |x| < r1 }

with the inner sphere tagged GAMMA0 (Dirichlet side) and the outer sphere
tagged GAMMA1 (traction free side). Boundary facets are straight simplices
whose vertices sit on the exact spheres.

The module also carries the analytic auxiliary fields used by the trace
experiments: the multiplier extension h of the inner normal, the cutoff
eta and the tangential fields b. Their finite element interpolants are
built with build_multiplier_field(), build_cutoff_field() and
build_tangential_fields().
"""

import logging
import math
import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from navier import NavierError, __version__

GAMMA0 = "GAMMA0"
GAMMA1 = "GAMMA1"
TAGS = (GAMMA0, GAMMA1)

# Level 0 resolution: angular cells per circle and radial layers (d=2),
# cube-face cells per edge and radial layers (d=3).
ANNULUS_SEGMENTS = 16
ANNULUS_LAYERS = 2
SHELL_FACE_CELLS = 2
SHELL_LAYERS = 1


class GeometryError(NavierError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    dimension: int = 2
    inner_radius: float = 1.0
    outer_radius: float = 2.0
    level: int = 0

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise GeometryError("dimension must be 2 or 3, got %r" % (self.dimension,))
        if not self.inner_radius > 0:
            raise GeometryError("inner radius must be positive")
        if not self.inner_radius < self.outer_radius:
            raise GeometryError(
                "inner radius %g must be smaller than outer radius %g"
                % (self.inner_radius, self.outer_radius)
            )
        if self.level < 0:
            raise GeometryError("refinement level must be >= 0")

    def refined(self, level):
        return DomainSpec(self.dimension, self.inner_radius, self.outer_radius, level)


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


class Mesh:
    """
    Immutable simplicial mesh. Facet normals point out of Omega, that is
    towards the origin on GAMMA0 and away from it on GAMMA1.
    """

    def __init__(self, spec, nodes, cells, facets, tags):
        self.spec = spec
        self.dimension = spec.dimension
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.cells = _orient(self.nodes, np.ascontiguousarray(cells, dtype=np.int64))
        self.facets = np.ascontiguousarray(facets, dtype=np.int64)
        self.tags = np.asarray(tags, dtype="<U6")
        self.facet_cells, self.normals = _facet_parents(
            self.nodes, self.cells, self.facets
        )
        _freeze(self.nodes, self.cells, self.facets, self.tags,
                self.facet_cells, self.normals)
        self._validate()

    def _validate(self):
        d = self.dimension
        if self.nodes.shape[1] != d or self.cells.shape[1] != d + 1:
            raise GeometryError("inconsistent mesh array shapes")
        if not np.all(np.isin(self.tags, TAGS)):
            raise GeometryError("boundary facet with unknown tag")
        if not np.any(self.tags == GAMMA0):
            raise GeometryError("GAMMA0 facet set is empty")
        if np.min(self.cell_volumes()) <= 0:
            raise GeometryError("degenerate cell in mesh")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-14:
            raise GeometryError("facet normal is not a unit vector")

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    def facet_indices(self, tag):
        if tag not in TAGS:
            raise GeometryError("unknown boundary tag %r" % (tag,))
        return np.flatnonzero(self.tags == tag)

    def cell_jacobians(self):
        """Columns are the edge vectors x_k - x_0 of every cell."""
        x = self.nodes[self.cells]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    def cell_volumes(self):
        return np.linalg.det(self.cell_jacobians()) / math.factorial(self.dimension)

    def facet_measures(self, tag=None):
        idx = np.arange(len(self.facets)) if tag is None else self.facet_indices(tag)
        x = self.nodes[self.facets[idx]]
        if self.dimension == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    def boundary_measure(self, tag):
        return float(np.sum(self.facet_measures(tag)))

    def max_diameter(self):
        x = self.nodes[self.cells]
        diam = np.zeros(self.num_cells)
        for i, j in combinations(range(self.dimension + 1), 2):
            diam = np.maximum(diam, np.linalg.norm(x[:, i] - x[:, j], axis=1))
        return float(np.max(diam))

    def boundary_nodes(self, tag):
        return np.unique(self.facets[self.facet_indices(tag)])

    def rotated(self, rotation):
        """Same mesh with every coordinate mapped through x -> R x."""
        rotation = np.asarray(rotation, dtype=float)
        if not np.allclose(rotation.T @ rotation, np.eye(self.dimension), atol=1e-12):
            raise GeometryError("rotation matrix is not orthogonal")
        return Mesh(self.spec, self.nodes @ rotation.T, self.cells, self.facets, self.tags)


def _orient(nodes, cells):
    x = nodes[cells]
    jac = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))
    flip = np.linalg.det(jac) < 0
    cells = cells.copy()
    cells[flip, 0], cells[flip, 1] = cells[flip, 1].copy(), cells[flip, 0].copy()
    return cells


def _facet_parents(nodes, cells, facets):
    d = nodes.shape[1]
    local = np.array(list(combinations(range(d + 1), d)))
    faces = np.sort(cells[:, local], axis=2).reshape(-1, d)
    owner = np.repeat(np.arange(len(cells)), d + 1)
    opposite = cells[:, [list(set(range(d + 1)) - set(f))[0] for f in local]].reshape(-1)
    keys = np.sort(facets, axis=1)
    lookup = {tuple(f): i for i, f in enumerate(faces)}
    parents = np.empty(len(facets), dtype=np.int64)
    far = np.empty(len(facets), dtype=np.int64)
    for k, f in enumerate(keys):
        i = lookup.get(tuple(f))
        if i is None:
            raise GeometryError("boundary facet %s is not a face of any cell" % (tuple(f),))
        parents[k] = owner[i]
        far[k] = opposite[i]
    x = nodes[facets]
    if d == 2:
        t = x[:, 1] - x[:, 0]
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1)
    else:
        normals = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    outward = np.einsum("fi,fi->f", normals, x.mean(axis=1) - nodes[far])
    normals[outward < 0] *= -1.0
    return parents, normals


def _boundary_faces(nodes, cells, spec):
    d = spec.dimension
    local = np.array(list(combinations(range(d + 1), d)))
    faces = np.sort(cells[:, local], axis=2).reshape(-1, d)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    boundary = uniq[counts == 1]
    radius = np.linalg.norm(nodes[boundary].mean(axis=1), axis=1)
    middle = 0.5 * (spec.inner_radius + spec.outer_radius)
    tags = np.where(radius < middle, GAMMA0, GAMMA1)
    return boundary, tags


def _annulus(spec):
    n_theta = ANNULUS_SEGMENTS * 2 ** spec.level
    n_r = ANNULUS_LAYERS * 2 ** spec.level
    r = np.linspace(spec.inner_radius, spec.outer_radius, n_r + 1)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    nodes = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)

    i, j = np.meshgrid(np.arange(n_r), np.arange(n_theta), indexing="ij")
    jn = (j + 1) % n_theta
    k00 = (i * n_theta + j).ravel()
    k01 = (i * n_theta + jn).ravel()
    k10 = ((i + 1) * n_theta + j).ravel()
    k11 = ((i + 1) * n_theta + jn).ravel()
    cells = np.concatenate([np.stack([k00, k01, k11], axis=1),
                            np.stack([k00, k11, k10], axis=1)])
    return nodes, cells


def _cube_sphere(n):
    """Unit sphere triangulated through the equiangular cube map."""
    ijk = np.indices((n + 1,) * 3).reshape(3, -1).T
    on_surface = np.any((ijk == 0) | (ijk == n), axis=1)
    ijk = ijk[on_surface]
    index = -np.ones((n + 1,) * 3, dtype=np.int64)
    index[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = np.arange(len(ijk))
    c = np.tan(0.25 * np.pi * (2.0 * ijk / n - 1.0))
    points = c / np.linalg.norm(c, axis=1)[:, None]

    p, q = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    p, q = p.ravel(), q.ravel()
    triangles = []
    for axis in range(3):
        a, b = [k for k in range(3) if k != axis]
        for side in (0, n):
            def node(pp, qq):
                idx = [None, None, None]
                idx[axis] = np.full_like(pp, side)
                idx[a] = pp
                idx[b] = qq
                return index[idx[0], idx[1], idx[2]]
            n00, n10 = node(p, q), node(p + 1, q)
            n11, n01 = node(p + 1, q + 1), node(p, q + 1)
            triangles.append(np.stack([n00, n10, n11], axis=1))
            triangles.append(np.stack([n00, n11, n01], axis=1))
    return points, np.concatenate(triangles)


def _shell(spec):
    points, triangles = _cube_sphere(SHELL_FACE_CELLS * 2 ** spec.level)
    n_r = SHELL_LAYERS * 2 ** spec.level
    r = np.linspace(spec.inner_radius, spec.outer_radius, n_r + 1)
    ns = len(points)
    nodes = np.concatenate([rad * points for rad in r])

    # Splitting every prism by the global order of its vertices keeps the
    # quadrilateral diagonals of neighbouring prisms in agreement.
    tri = np.sort(triangles, axis=1)
    cells = []
    for layer in range(n_r):
        a, b, c = (tri[:, k] + layer * ns for k in range(3))
        at, bt, ct = a + ns, b + ns, c + ns
        cells.append(np.stack([a, b, c, ct], axis=1))
        cells.append(np.stack([a, b, bt, ct], axis=1))
        cells.append(np.stack([a, at, bt, ct], axis=1))
    return nodes, np.concatenate(cells)


def build_mesh(spec):
    if spec.dimension == 2:
        nodes, cells = _annulus(spec)
    else:
        nodes, cells = _shell(spec)
    cells = _orient(nodes, cells)
    facets, tags = _boundary_faces(nodes, cells, spec)
    mesh = Mesh(spec, nodes, cells, facets, tags)
    logging.debug("mesh d=%d level=%d: %d nodes, %d cells, %d boundary facets"
                  % (spec.dimension, spec.level, mesh.num_nodes, mesh.num_cells,
                     len(mesh.facets)))
    return mesh


def write_mesh(mesh, path, header=None):
    """
    Plain text export: optional '#' comment lines, the line
    'dim nnodes ncells nfacets', then the node, cell and facet blocks.
    """
    spec = mesh.spec
    lines = []
    if header:
        lines.append("# %s" % header)
    lines.append("# domain %d %s %s %d" % (spec.dimension, repr(spec.inner_radius),
                                           repr(spec.outer_radius), spec.level))
    lines.append("%d %d %d %d" % (mesh.dimension, mesh.num_nodes, mesh.num_cells,
                                  len(mesh.facets)))
    for x in mesh.nodes:
        lines.append(" ".join("%.17g" % v for v in x))
    for c in mesh.cells:
        lines.append(" ".join("%d" % v for v in c))
    for f, tag in zip(mesh.facets, mesh.tags):
        lines.append(" ".join("%d" % v for v in f) + " " + tag)
    with open(path + ".new", "w") as out:
        out.write("\n".join(lines) + "\n")
    os.rename(path + ".new", path)


def read_mesh(path):
    with open(path) as f:
        lines = f.read().splitlines()
    spec = None
    while lines and lines[0].startswith("#"):
        words = lines.pop(0).split()
        if len(words) == 6 and words[1] == "domain":
            spec = DomainSpec(int(words[2]), float(words[3]), float(words[4]),
                              int(words[5]))
    try:
        d, nn, nc, nf = (int(v) for v in lines[0].split())
        body = lines[1:]
        nodes = np.array([[float(v) for v in line.split()] for line in body[:nn]])
        cells = np.array([[int(v) for v in line.split()] for line in body[nn:nn + nc]])
        rows = [line.split() for line in body[nn + nc:nn + nc + nf]]
        facets = np.array([[int(v) for v in row[:-1]] for row in rows])
        tags = [row[-1] for row in rows]
    except (ValueError, IndexError) as exc:
        raise GeometryError("malformed mesh file %s: %s" % (path, exc))
    if spec is None:
        radius = np.linalg.norm(nodes, axis=1)
        spec = DomainSpec(d, float(radius.min()), float(radius.max()), 0)
    return Mesh(spec, nodes, cells, facets, tags)


def smoothstep(s):
    """Quintic step, 0 for s <= 0 and 1 for s >= 1, C2 across the ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def smoothstep_derivative(s):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)


def multiplier_profile(spec, r):
    """chi(r) with chi(r0) = 1 and chi(r1) = 0."""
    return smoothstep((spec.outer_radius - r) / (spec.outer_radius - spec.inner_radius))


def multiplier_extension(spec, x):
    """h(x) = -(x/|x|) chi(|x|), equal to the outward normal of Omega on GAMMA0."""
    r = np.linalg.norm(x, axis=-1)
    return -(x / r[..., None]) * multiplier_profile(spec, r)[..., None]


def multiplier_gradient(spec, x):
    """(grad h)_ij = d h_i / d x_j of the analytic extension."""
    r = np.linalg.norm(x, axis=-1)
    width = spec.outer_radius - spec.inner_radius
    chi = multiplier_profile(spec, r)
    dchi = -smoothstep_derivative((spec.outer_radius - r) / width) / width
    e = x / r[..., None]
    eye = np.eye(x.shape[-1])
    proj = eye - np.einsum("...i,...j->...ij", e, e)
    return -(chi / r)[..., None, None] * proj - dchi[..., None, None] * np.einsum(
        "...i,...j->...ij", e, e)


def cutoff(spec, r):
    """eta: 1 on the inner quarter of the shell, 0 on the outer quarter."""
    width = spec.outer_radius - spec.inner_radius
    return smoothstep((spec.outer_radius - 0.25 * width - r) / (0.5 * width))


def _chart_weight(x):
    # share of the z-axis chart: vanishes on the z-axis, 1 near the equator
    c = np.abs(x[..., 2]) / np.linalg.norm(x, axis=-1)
    return 1.0 - smoothstep((c - 0.3) / 0.4)


def _polar_frame(x):
    """Orthonormal tangent frame of the spheres, singular on the z-axis."""
    r = np.linalg.norm(x, axis=-1)
    rho = np.maximum(np.hypot(x[..., 0], x[..., 1]), 1e-300)
    zero = np.zeros_like(r)
    t1 = np.stack([-x[..., 1], x[..., 0], zero], axis=-1) / rho[..., None]
    t2 = np.stack([x[..., 0] * x[..., 2], x[..., 1] * x[..., 2], -rho * rho],
                  axis=-1) / (rho * r)[..., None]
    return t1, t2


def tangential_directions(spec, x):
    """
    Analytic tangential fields, shape (count, ..., d). In d=2 the single
    rotation field. In d=3 two charts (pole axes z and x), each with an
    orthonormal tangent frame scaled by the square root of its partition
    of unity weight, so that the squared chart derivatives add up to the
    squared surface gradient. A single d=3 field is zero wherever its
    weight is (the first pair on the z-axis, the second near the
    equator); only the weighted sum over all four is non-degenerate.
    """
    d = x.shape[-1]
    if d == 2:
        r = np.linalg.norm(x, axis=-1)
        return np.stack([-x[..., 1] / r, x[..., 0] / r], axis=-1)[None]
    w = _chart_weight(x)
    a1, a2 = _polar_frame(x)
    # second chart: the same frame with the x-axis as pole
    perm = x[..., [1, 2, 0]]
    b1, b2 = (t[..., [2, 0, 1]] for t in _polar_frame(perm))
    sa = np.sqrt(w)[..., None]
    sb = np.sqrt(1.0 - w)[..., None]
    return np.stack([sa * a1, sa * a2, sb * b1, sb * b2])


@dataclass(frozen=True)
class AuxiliaryFields:
    h: object
    eta: object
    tangential: tuple
    profile: str = "quintic smoothstep"


def build_multiplier_field(mesh, degree=2):
    from navier.spaces import FeSpace

    space = FeSpace(mesh, degree)
    field = space.interpolate(lambda x: multiplier_extension(mesh.spec, x))
    coeffs = field.values()
    coeffs[space.boundary_scalar_dofs(GAMMA1)] = 0.0
    return space.field(coeffs.ravel())


def build_cutoff_field(mesh, degree=2):
    from navier.spaces import FeSpace

    space = FeSpace(mesh, degree, components=1)
    return space.interpolate(
        lambda x: cutoff(mesh.spec, np.linalg.norm(x, axis=-1))[:, None])


def build_tangential_fields(mesh, degree=2):
    from navier.spaces import FeSpace

    space = FeSpace(mesh, degree)
    count = len(tangential_directions(mesh.spec, mesh.nodes[:1]))
    return tuple(
        space.interpolate(lambda x, a=a: tangential_directions(mesh.spec, x)[a])
        for a in range(count)
    )


def build_auxiliary_fields(mesh, degree=2):
    return AuxiliaryFields(build_multiplier_field(mesh, degree),
                           build_cutoff_field(mesh, degree),
                           build_tangential_fields(mesh, degree))


def mesh_header(config_hash, seed):
    return "navier-bench %s config=%s seed=%s" % (__version__, config_hash, seed)
