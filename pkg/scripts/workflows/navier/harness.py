# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Experiment orchestration: every experiment is a list of independent runs
(theorem, T, level, seed, member, kind). Runs go through a process pool
when more than one worker is configured; their ratio records are merged
serially in sorted order, so the bundle does not depend on the worker
count.

The per-process Bench cache holds meshes, assembled forms, eigenmodes and
time stepping factorizations; nothing mutable crosses process borders.
"""

import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from navier import NavierError
from navier.config import EXPERIMENT_IDS
from navier.dynamics import ElastodynamicSolver, ProblemData, TimeGrid, eigenmodes, field_series
from navier.dynamics import check_transposition_identity
from navier.elliptic import riesz_dual_norm
from navier.ensembles import (
    EnsembleParameters,
    ensemble_data,
    manufactured_solution,
    member_rng,
    pulse_data,
    smooth_data,
    strong_data,
    wave_data,
)
from navier.geometry import (
    GAMMA0,
    DomainSpec,
    build_mesh,
    build_multiplier_field,
    cutoff,
    tangential_directions,
)
from navier.identities import (
    IDENTITY_NAMES,
    TestFieldFamily,
    check_appendix_a,
    check_multiplier_identity,
    exact_multiplier_terms,
)
from navier.reports import RatioRecord, RatioReport, log_record, loglog_slope
from navier.spaces import (
    FeSpace,
    LameParameters,
    assemble_forms,
    h1_norm,
    h2_norm,
    korn_spectrum,
    l2_norm,
)
from navier.symbolic import random_polynomial_field
from navier.timescale import (
    ALPHA_TOLERANCE,
    MAX_ORDER,
    ScaleEnsemble,
    extend_zero_left,
    extension_isometry_defect,
    gluing_jumps,
    hs_norm,
    interpolation_norm,
    member_signal,
    solve_alpha,
    verify_trace_constants,
)
from navier.traces import (
    SpaceTimeGram,
    boundary_gradients,
    empty_trace,
    norm_H1_gamma0,
    norm_H1star_dual,
    norm_H1T_L2_gamma0,
    norm_H2_gamma0,
    norm_L2_gamma0,
    norm_time_derivative_gamma0,
    sample_trace,
    stress_vector_trace,
    stress_vector_values,
    time_derivative,
    time_integral,
)

KORN_POSITIVE = 1e-8
KORN_RIGID = 1e-10
ISOMETRY_STEPS = 512


class HarnessError(NavierError):
    """A failed run, with the context needed to reproduce it."""

    def __init__(self, message, theorem=None, T=None, level=None, seed=None):
        self.message = message
        self.theorem = theorem
        self.T = T
        self.level = level
        self.seed = seed
        context = " ".join("%s=%s" % (k, v) for k, v in
                           (("theorem", theorem), ("T", T), ("level", level), ("seed", seed))
                           if v is not None)
        super().__init__("%s (%s)" % (message, context) if context else message)

    def __reduce__(self):
        return (HarnessError, (self.message, self.theorem, self.T, self.level, self.seed))

    def as_dict(self):
        return {"error": type(self).__name__, "message": self.message, "theorem": self.theorem,
                "T": self.T, "level": self.level, "seed": self.seed}


def c_of_T(T):
    """Time dependence of the nonhomogeneous constants: max(1, T^2) (1 + T) / T."""
    return max(1.0, T * T) * (1.0 + T) / T


@dataclass(frozen=True)
class ExperimentSpec:
    theorem: str
    domain: DomainSpec
    degree: int
    steps_per_unit: int
    lift: str
    lame: LameParameters
    seed: int
    ensemble: EnsembleParameters
    T_list: tuple
    levels: tuple
    level: int
    limits: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.theorem not in EXPERIMENT_IDS:
            raise HarnessError("unknown experiment %r" % (self.theorem,))
        if any(b <= a for a, b in zip(self.T_list, self.T_list[1:])):
            raise HarnessError("T list must be strictly increasing", self.theorem)

    def limit(self, name):
        return self.limits[name]


def experiment_spec(config, theorem):
    dom = config["domain"]
    disc = config["discretization"]
    long_list = theorem == "T3.10"
    return ExperimentSpec(
        theorem=theorem,
        domain=DomainSpec(dom["dimension"], dom["inner_radius"], dom["outer_radius"], 0),
        degree=disc["degree"],
        steps_per_unit=disc["steps_per_unit"],
        lift=disc["lift"],
        lame=LameParameters(config["physics"]["mu"], config["physics"]["lam"]),
        seed=config["run"]["seed"],
        ensemble=EnsembleParameters.from_config(config["ensembles"]),
        T_list=tuple(float(T) for T in disc["T_list_long" if long_list else "T_list"]),
        levels=tuple(dom["levels"]),
        level=disc["level"],
        limits=dict(config["experiments"], dual_modes=config["ensembles"]["dual_modes"],
                    dual_time_modes=config["ensembles"]["dual_time_modes"]),
    )


@dataclass(frozen=True, order=True)
class Run:
    theorem: str
    T: float
    level: int
    seed: int
    member: int = 0
    kind: str = ""

    def label(self, prefix=None):
        base = "%s/%d" % (self.kind, self.member)
        return "%s/%s" % (prefix, base) if prefix else base


class Bench:
    """Mesh, space, forms and solvers of one refinement level."""

    def __init__(self, spec, level):
        self.spec = spec
        self.level = level
        self.domain = spec.domain.refined(level)
        self.mesh = build_mesh(self.domain)
        self.space = FeSpace(self.mesh, spec.degree)
        self.forms = assemble_forms(self.space, spec.lame)
        self._solvers = {}
        self._modes = None

    def grid(self, T, minimum=1):
        steps = int(round(T * self.spec.steps_per_unit * 2 ** self.level))
        return TimeGrid(T, max(minimum, steps, 1))

    def solver(self, grid):
        key = (grid.T, grid.N)
        if key not in self._solvers:
            self._solvers[key] = ElastodynamicSolver(self.forms, grid, lift=self.spec.lift)
        return self._solvers[key]

    def modes(self):
        if self._modes is None:
            _, self._modes = eigenmodes(self.forms, self.spec.ensemble.eigenmodes[1])
        return self._modes

    def directions(self, x):
        return tangential_directions(self.domain, x)

    def data(self, kind, seed, member):
        modes = self.modes() if kind == "eigenmode" else None
        return ensemble_data(kind, self.forms, seed, member, self.spec.ensemble, modes)


_BENCHES = {}


def bench(spec, level):
    key = (spec.domain, spec.degree, spec.steps_per_unit, spec.lift, spec.lame, spec.ensemble,
           level)
    if key not in _BENCHES:
        logging.debug("building level %d bench for %s" % (level, spec.theorem))
        _BENCHES[key] = Bench(spec, level)
    return _BENCHES[key]


@functools.lru_cache(maxsize=64)
def _strong(domain, lame, seed, member, params):
    return strong_data(domain, lame, seed, member, params)


def _quadrature_l2(space, force, t):
    if force is None:
        return 0.0
    points, w = space.quadrature()
    values = np.asarray(force(points.reshape(-1, space.d), t), dtype=float)
    return math.sqrt(max(float(np.einsum("cq,cqi->", w, values.reshape(w.shape + (-1,)) ** 2)),
                         0.0))


def force_norms(forms, force, grid):
    """Bochner norms of F(x, t) over the grid; H1 parts use the interpolant."""
    names = ("L1T_L2", "L1T_H1", "L2T_H1", "H1T_L2", "L1T_L2_dt", "F0_half")
    if force is None:
        return dict.fromkeys(names, 0.0)
    space = forms.space
    times = grid.times()
    l2 = np.array([_quadrature_l2(space, force, t) for t in times])
    series = field_series(space, force, grid)
    h1 = np.array([h1_norm(forms, c) for c in series])
    dt = time_derivative(series, grid.dt, 1)
    dl2 = np.array([l2_norm(forms, c) for c in dt])
    l2sq = time_integral(l2 ** 2, times)
    return {
        "L1T_L2": time_integral(l2, times),
        "L1T_H1": time_integral(h1, times),
        "L2T_H1": math.sqrt(time_integral(h1 ** 2, times)),
        "H1T_L2": math.sqrt(l2sq + time_integral(dl2 ** 2, times)),
        "L1T_L2_dt": time_integral(dl2, times),
        # H^(1/2) of F(0) through the interpolation bound |F|_L2^(1/2) |F|_H1^(1/2)
        "F0_half": math.sqrt(l2_norm(forms, series[0]) * h1[0]),
    }


def boundary_norms(bench_, g, grid, second=False):
    """Norms of g on GAMMA0 x (0, T): split H1, and the H2 pair when asked."""
    names = ("L2T_L2G0", "H1T_L2G0", "L2T_H1G0", "H2T_L2G0", "L2T_H2G0")
    if g is None:
        return dict.fromkeys(names, 0.0)
    trace = sample_trace(bench_.space, g, grid.times())
    out = {
        "L2T_L2G0": norm_L2_gamma0(trace, grid),
        "H1T_L2G0": norm_H1T_L2_gamma0(trace, grid),
        "L2T_H1G0": norm_H1_gamma0(trace, grid, bench_.directions),
    }
    if second:
        out["H2T_L2G0"] = math.sqrt(out["H1T_L2G0"] ** 2
                                    + norm_time_derivative_gamma0(trace, grid, 2) ** 2)
        out["L2T_H2G0"] = norm_H2_gamma0(trace, grid, bench_.directions)
    return out


def _record(run, lhs, rhs, factor="1", label=None):
    rec = RatioRecord(run.theorem, run.T, run.level, run.seed, float(lhs), float(rhs), factor,
                      label or run.label())
    log_record(rec)
    return rec


def _trajectory(b, run, data, grid=None):
    grid = grid or b.grid(run.T)
    return b.solver(grid).forward(data), grid


def _stress_trace_norms(b, traj, grid):
    trace = stress_vector_trace(traj, b.spec.lame)
    return (norm_H1_gamma0(trace, grid, b.directions), norm_H1T_L2_gamma0(trace, grid))


def _strong_rhs(b, traj, data, grid):
    """F in L1(H1) and W11(L2), u0 in H2, u1 in H1, g in L2(H2) and H2(L2)."""
    f = force_norms(b.forms, data.force, grid)
    g = boundary_norms(b, data.g, grid, second=True)
    return (f["L1T_H1"] + f["L1T_L2_dt"] + h2_norm(b.forms, traj.u[0])
            + h1_norm(b.forms, traj.v[0]) + g["L2T_H2G0"] + g["H2T_L2G0"])


def _eval_T31(b, spec, run):
    data = b.data(run.kind, run.seed, run.member)
    traj, grid = _trajectory(b, run, data)
    lhs = norm_L2_gamma0(stress_vector_trace(traj, spec.lame), grid)
    f = force_norms(b.forms, data.force, grid)
    rhs = math.sqrt(run.T) * (h1_norm(b.forms, traj.u[0]) + l2_norm(b.forms, traj.v[0])
                              + f["L1T_L2"])
    return [_record(run, lhs, rhs, "sqrt(T)")], {}


def _gradient_path(b, traj, grid):
    """sqrt(3) mu |grad u n| + mu |grad u| + lambda |div u| on GAMMA0 x (0, T)."""
    lame = b.spec.lame
    grads = boundary_gradients(b.space, traj.u, GAMMA0)
    base = empty_trace(b.space, GAMMA0)
    normals = base.normals
    s, nf, nq = grads.shape[:3]
    times = grid.times()
    gn = base.with_values(np.einsum("sfqij,fj->sfqi", grads, normals), times)
    full = base.with_values(grads.reshape(s, nf, nq, -1), times)
    div = base.with_values(np.trace(grads, axis1=-2, axis2=-1)[..., None], times)
    return (math.sqrt(3.0) * lame.mu * norm_L2_gamma0(gn, grid)
            + lame.mu * norm_L2_gamma0(full, grid) + lame.lam * norm_L2_gamma0(div, grid))


def _eval_T34(b, spec, run):
    data = b.data(run.kind, run.seed, run.member)
    traj, grid = _trajectory(b, run, data)
    forms = b.forms
    lhs = (max(h1_norm(forms, c) for c in traj.u) + max(l2_norm(forms, c) for c in traj.v)
           + norm_L2_gamma0(stress_vector_trace(traj, spec.lame), grid))
    f = force_norms(forms, data.force, grid)
    g = boundary_norms(b, data.g, grid)
    data_norm = (f["L1T_L2"] + h1_norm(forms, traj.u[0]) + l2_norm(forms, traj.v[0])
                 + g["H1T_L2G0"] + g["L2T_H1G0"])
    rhs = c_of_T(run.T) * data_norm
    return [_record(run, lhs, rhs, "c(T)"),
            _record(run, _gradient_path(b, traj, grid), rhs, "c(T)", run.label("gradient"))], {}


def dual_test_functions(domain, T, spatial_modes, time_modes):
    """
    Boundary test functions k(x, t) = s(x) sin(pi m t / T) e_c vanishing at
    t = 0 and t = T: Fourier modes up to spatial_modes on the circle, the
    constant and the coordinates of x/|x| on the sphere.
    """
    d = domain.dimension
    if d == 2:
        spatial = [lambda x: np.ones(len(x))]
        for l in range(1, spatial_modes + 1):
            spatial.append(lambda x, l=l: np.cos(l * np.arctan2(x[:, 1], x[:, 0])))
            spatial.append(lambda x, l=l: np.sin(l * np.arctan2(x[:, 1], x[:, 0])))
    else:
        spatial = [lambda x: np.ones(len(x))]
        if spatial_modes > 0:
            spatial += [lambda x, i=i: x[:, i] / np.linalg.norm(x, axis=1) for i in range(d)]
    out = []
    for s in spatial:
        for c in range(d):
            for m in range(1, time_modes + 1):
                def k(x, t=0.0, s=s, c=c, m=m):
                    values = np.zeros((len(x), d))
                    values[:, c] = s(x) * math.sin(math.pi * m * t / T)
                    return values
                out.append(k)
    return out


def two_route_dual_norms(b, traj, data, grid):
    """
    The dual norm of P(u) n over the test span, once from the trace itself
    and once from the pairing int int g . P(z) n, where z has zero final
    data and equals the test function on GAMMA0. z is solved forward on
    the reversed boundary data and reversed afterwards.
    """
    spec = b.spec
    times = grid.times()
    basis = dual_test_functions(b.domain, grid.T, spec.limit("dual_modes"),
                                spec.limit("dual_time_modes"))
    trace = stress_vector_trace(traj, spec.lame)
    gram = SpaceTimeGram(trace, times)
    coeffs = [gram.nodal(k, b.space.ncomp) for k in basis]
    reduced = gram.gram_matrix(coeffs)
    load = gram.load(trace)
    direct = np.array([float(np.sum(c * load)) for c in coeffs])
    fq = b.space.facet_quadrature(GAMMA0)
    x = fq.points.reshape(-1, b.space.d)
    nf, nq = fq.weights.shape
    g = np.stack([np.asarray(data.g(x, t)).reshape(nf, nq, -1) for t in times])
    solver = b.solver(grid)
    pairing = []
    for k in basis:
        def reverse(x, t=0.0, k=k):
            return k(x, grid.T - t)
        z = solver.forward(ProblemData(g=reverse, compatible=False, label="dual-test"))
        traction = stress_vector_values(b.space, z.u[::-1], spec.lame, GAMMA0)
        pairing.append(time_integral(np.einsum("fq,sfqi->s", fq.weights, g * traction),
                                     times))
    return riesz_dual_norm(direct, reduced), riesz_dual_norm(np.array(pairing), reduced)


def _eval_T35(b, spec, run):
    data = b.data(run.kind, run.seed, run.member)
    traj, grid = _trajectory(b, run, data)
    lhs = norm_H1star_dual(stress_vector_trace(traj, spec.lame), grid)
    g = boundary_norms(b, data.g, grid)
    records = [_record(run, lhs, c_of_T(run.T) * g["L2T_L2G0"], "c(T)")]
    if run.member == 0:
        direct, paired = two_route_dual_norms(b, traj, data, grid)
        records.append(_record(run, direct, paired, "1", run.label("two_route")))
    return records, {}


def _eval_L37(b, spec, run):
    data = _strong(b.domain, spec.lame, run.seed, run.member, spec.ensemble).problem()
    traj, grid = _trajectory(b, run, data)
    accel = max(l2_norm(b.forms, a) for a in traj.a)
    return [_record(run, accel, _strong_rhs(b, traj, data, grid), "1")], {}


def _eval_T38(b, spec, run):
    strong = _strong(b.domain, spec.lame, run.seed, run.member, spec.ensemble)
    data = strong.differentiated() if run.theorem == "T3.9k1" else strong.problem()
    traj, grid = _trajectory(b, run, data)
    h1_space, h1_time = _stress_trace_norms(b, traj, grid)
    if run.kind == "refine":
        return [_record(run, h1_space, 1.0, "1", run.label("L2H1")),
                _record(run, h1_time, 1.0, "1", run.label("H1L2"))], {}
    rhs = c_of_T(run.T) * _strong_rhs(b, traj, data, grid)
    return [_record(run, h1_space + h1_time, rhs, "c(T)")], {}


def _high_lhs(b, traj, grid):
    forms = b.forms
    sup = max(h2_norm(forms, u) + h1_norm(forms, v) + l2_norm(forms, a)
              for u, v, a in zip(traj.u, traj.v, traj.a))
    h1_space, h1_time = _stress_trace_norms(b, traj, grid)
    return sup + h1_space + h1_time, h1_space + h1_time


def _eval_T310(b, spec, run):
    if run.kind == "eigenmode":
        data = b.data("eigenmode", run.seed, run.member)
    else:
        data = _strong(b.domain, spec.lame, run.seed, run.member, spec.ensemble).problem()
    traj, grid = _trajectory(b, run, data)
    lhs, trace_part = _high_lhs(b, traj, grid)
    f = force_norms(b.forms, data.force, grid)
    g = boundary_norms(b, data.g, grid, second=True)
    rhs = (f["L2T_H1"] + f["H1T_L2"] + f["F0_half"] + h2_norm(b.forms, traj.u[0])
           + h1_norm(b.forms, traj.v[0]) + g["L2T_H2G0"] + g["H2T_L2G0"])
    records = [_record(run, lhs, rhs, "1")]
    if run.kind == "strong":
        records.append(_record(run, trace_part, c_of_T(run.T) * _strong_rhs(b, traj, data, grid),
                               "c(T)", run.label("t38")))
    return records, {}


def _eval_AppA(b, spec, run):
    d = run.member
    family = TestFieldFamily(d, spec.domain.inner_radius, run.seed,
                             spec.limit("identity_fields"))
    report = check_appendix_a(family, npoints=spec.limit("identity_points"))
    records = [RatioRecord(run.theorem, 0.0, 0, run.seed, report.residuals[name], 1.0, "1",
                           "%s/d=%d" % (name, d)) for name in IDENTITY_NAMES]
    rows = [(d,) + row for row in report.rows]
    return records, {"residuals": rows}


def _rotation(rng, d):
    if d == 2:
        a = rng.uniform(0.0, 2.0 * math.pi)
        return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _manufactured_residual(forms, spec, grid):
    _, data = manufactured_solution(spec.domain, spec.lame)
    traj = ElastodynamicSolver(forms, grid).forward(data)
    residual, _, terms = check_multiplier_identity(traj, None, forms, data)
    return residual, terms, data


def _eval_MULT(b, spec, run):
    grid = b.grid(run.T)
    if run.kind == "eigenmode":
        _, modes = eigenmodes(b.forms, 1)
        data = ProblemData(u0=modes[0], label="eigenmode")
        traj = b.solver(grid).forward(data)
        h = build_multiplier_field(b.mesh, spec.degree)
        residual, _, _ = check_multiplier_identity(traj, h, b.forms, data)
        return [_record(run, residual, 1.0)], {}
    residual, terms, data = _manufactured_residual(b.forms, spec, grid)
    u, _ = manufactured_solution(spec.domain, spec.lame)
    _, exact = exact_multiplier_terms(u, data.force, b.space, grid, spec.lame)
    scale = max(abs(v) for v in exact.values())
    records = [_record(run, abs(terms[name] - exact[name]), scale, "1", "term/%s" % name)
               for name in sorted(exact)]
    rotation = _rotation(member_rng(run.seed, 0, "smooth"), b.domain.dimension)
    rotated_space = FeSpace(b.mesh.rotated(rotation), spec.degree)
    rotated, _, _ = _manufactured_residual(assemble_forms(rotated_space, spec.lame), spec, grid)
    records.append(_record(run, abs(rotated - residual), 1.0, "1", "rotation"))
    rows = [(name, terms[name], exact[name]) for name in sorted(exact)]
    return records, {"terms": rows}


def _psi(domain, seed):
    rng = member_rng(seed, 1, "smooth")
    q = random_polynomial_field(rng, domain.dimension, 1).value_fn()

    def psi(x, t):
        eta = cutoff(domain, np.linalg.norm(x, axis=-1))[:, None]
        return eta * q(x) * math.cos(t)
    return psi


def _eval_TRANSPOSE(b, spec, run):
    grid = b.grid(run.T)
    if run.kind == "initial":
        data = smooth_data(b.domain, run.seed, run.member, spec.ensemble)
    elif run.kind == "force":
        data = pulse_data(b.domain, run.seed, run.member, spec.ensemble)
    else:
        data = wave_data(b.domain, run.seed, run.member, spec.ensemble)
    psi = field_series(b.space, _psi(b.domain, run.seed), grid)
    residual, parts = check_transposition_identity(b.forms, data, psi, grid, b.solver(grid))
    rows = [(run.kind, run.level, name, parts[name]) for name in sorted(parts)]
    return [_record(run, residual, 1.0)], {"parts": rows}


def _eval_ENERGY(b, spec, run):
    if run.kind == "conservation":
        grid = b.grid(run.T, minimum=spec.limit("energy_steps"))
        traj = b.solver(grid).forward(b.data("eigenmode", run.seed, run.member))
        return [_record(run, traj.energy_drift(), 1.0)], {}
    data = b.data(run.kind, run.seed, run.member)
    traj, grid = _trajectory(b, run, data)
    f = force_norms(b.forms, data.force, grid)
    lhs = max(l2_norm(b.forms, v) for v in traj.v)
    rhs = f["L1T_L2"] + l2_norm(b.forms, traj.v[0]) + h1_norm(b.forms, traj.u[0])
    records = [_record(run, lhs, rhs)]
    balance = traj.balance_residual()
    if balance is not None:
        records.append(_record(run, balance, 1.0, "1", run.label("balance")))
    return records, {}


def _eval_KORN(b, spec, run):
    k1, k2 = korn_spectrum(b.forms, constrained=True)
    free, _ = korn_spectrum(b.forms, constrained=False)
    return [_record(run, k1, 1.0, "1", "constrained/%d" % run.level),
            _record(run, k2, 1.0, "1", "upper/%d" % run.level),
            _record(run, abs(free), 1.0, "1", "free/%d" % run.level)], {}


EVALUATORS = {
    "T3.1": _eval_T31, "T3.4": _eval_T34, "T3.5": _eval_T35, "L3.7": _eval_L37,
    "T3.8": _eval_T38, "T3.9k1": _eval_T38, "T3.10": _eval_T310, "AppA": _eval_AppA,
    "MULT-ID": _eval_MULT, "TRANSPOSE": _eval_TRANSPOSE, "ENERGY": _eval_ENERGY,
    "KORN": _eval_KORN,
}


def _execute(task):
    spec, run = task
    try:
        b = None if run.theorem == "AppA" else bench(spec, run.level)
        return EVALUATORS[run.theorem](b, spec, run)
    except HarnessError:
        raise
    except (NavierError, ArithmeticError, ValueError, RuntimeError) as exc:
        raise HarnessError("%s: %s" % (type(exc).__name__, exc), run.theorem, run.T, run.level,
                           run.seed) from exc


TABLE_HEADERS = {
    "residuals": ("d", "identity", "field", "point", "residual"),
    "terms": ("term", "discrete", "exact"),
    "parts": ("channel", "level", "part", "value"),
}


def execute_runs(spec, runs, workers=1):
    """Records and tables of every run, merged in sorted run order."""
    tasks = [(spec, r) for r in sorted(runs)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_execute, tasks))
    else:
        results = [_execute(t) for t in tasks]
    report = RatioReport(spec.theorem, summary={"lift": spec.lift})
    for records, tables in results:
        for rec in records:
            report.add(rec)
        for name, rows in tables.items():
            _, acc = report.tables.setdefault(name, (TABLE_HEADERS[name], []))
            acc.extend(rows)
    report.sort()
    return report


def _members(spec):
    return range(spec.ensemble.members)


def _sweep(spec, kinds, members=None):
    members = _members(spec) if members is None else members
    return [Run(spec.theorem, T, spec.level, spec.seed, m, kind)
            for T in spec.T_list for kind in kinds for m in members]


def _refinement(spec, kind, members=(0,), T=None):
    T = spec.T_list[0] if T is None else T
    return [Run(spec.theorem, T, level, spec.seed, m, kind)
            for level in spec.levels for m in members]


def _slope_flags(report, spec, kinds):
    for kind in kinds:
        slope = report.slope(kind)
        report.summary["slope.%s" % kind] = slope
        report.summary["sup_by_T.%s" % kind] = {str(k): v for k, v in
                                                report.sup_ratio_by_T(kind).items()}
        report.flag("slope.%s" % kind, slope, spec.limit("slope_limit"))
        report.flag("bounded.%s" % kind, report.max_ratio(kind), spec.limit("ratio_limit"))
    if len(kinds) == 1:
        report.summary["slope"] = report.summary["slope.%s" % kinds[0]]


def _by_level(report, label):
    """level -> max lhs over the records with that label."""
    out = {}
    for r in report.select(label):
        out[r.level] = max(out.get(r.level, 0.0), r.lhs)
    return dict(sorted(out.items()))


def _cauchy(values):
    levels = list(values)
    if len(levels) < 2:
        return 0.0
    a, b = values[levels[-2]], values[levels[-1]]
    return abs(b - a) / max(abs(b), 1e-300)


def _reductions(values):
    """Smallest ratio of consecutive level values."""
    levels = list(values)
    ratios = [values[a] / max(values[b], 1e-300) for a, b in zip(levels, levels[1:])]
    return min(ratios) if ratios else 0.0


def run_T31(spec, workers=1):
    """Homogeneous trace estimate: |P(u) n|_{L2 L2} against sqrt(T) times the data."""
    report = execute_runs(spec, _sweep(spec, ("eigenmode", "pulse")), workers)
    _slope_flags(report, spec, ("eigenmode", "pulse"))
    ts, logs = [], []
    for T in spec.T_list:
        lhs = [r.lhs for r in report.select("pulse") if r.T == T and r.lhs > 0]
        if lhs:
            ts.append(T)
            logs.append(math.exp(float(np.mean(np.log(lhs)))))
    exponent = loglog_slope(ts, logs)
    report.summary["T_exponent.pulse"] = exponent
    report.flag("sqrt_law", exponent, tuple(spec.limit("sqrt_law")), "in")
    return report


def run_T34(spec, workers=1):
    report = execute_runs(spec, _sweep(spec, ("wave", "g_only")), workers)
    _slope_flags(report, spec, ("wave", "g_only"))
    report.summary["max_ratio.gradient"] = report.max_ratio("gradient")
    report.flag("bounded.gradient", report.max_ratio("gradient"), spec.limit("ratio_limit"))
    return report


def run_T35(spec, workers=1):
    report = execute_runs(spec, _sweep(spec, ("rough",)), workers)
    _slope_flags(report, spec, ("rough",))
    deviation = max((abs(r.ratio - 1.0) for r in report.select("two_route")), default=0.0)
    report.summary["two_route_deviation"] = deviation
    report.flag("two_route", deviation, spec.limit("two_route_tolerance"))
    return report


def run_L37(spec, workers=1):
    report = execute_runs(spec, _refinement(spec, "strong", _members(spec)), workers)
    values = _by_level(report, "strong")
    report.summary["accel_by_level"] = {str(k): v for k, v in values.items()}
    report.flag("finite", max(values.values()), float("inf"), "<=")
    report.flag("cauchy", _cauchy(values), spec.limit("cauchy_tolerance"))
    return report


def run_T38(spec, workers=1):
    runs = _sweep(spec, ("strong",)) + _refinement(spec, "refine")
    report = execute_runs(spec, runs, workers)
    report.flag("bounded.strong", report.max_ratio("strong"), spec.limit("ratio_limit"))
    report.summary["slope"] = report.slope("strong")
    for part in ("L2H1", "H1L2"):
        values = _by_level(report, "%s/refine" % part)
        report.summary["%s_by_level" % part] = {str(k): v for k, v in values.items()}
        report.flag("cauchy.%s" % part, _cauchy(values), spec.limit("cauchy_tolerance"))
    return report


def run_T39k1(spec, workers=1):
    report = execute_runs(spec, _sweep(spec, ("strong",)), workers)
    report.summary["slope"] = report.slope("strong")
    report.flag("bounded.strong", report.max_ratio("strong"), spec.limit("ratio_limit"))
    return report


def run_T310(spec, workers=1):
    """
    T independent high order estimate on strong data; the eigenmode class
    and the c(T) normalised lower order ratio of the same data are
    reported as controls.
    """
    report = execute_runs(spec, _sweep(spec, ("strong", "eigenmode")), workers)
    slope = report.slope("strong")
    control = report.slope("t38/strong")
    report.summary.update({"slope": slope, "slope.t38": control,
                           "slope.eigenmode": report.slope("eigenmode")})
    report.flag("slope.strong", slope, spec.limit("slope_limit"))
    report.flag("flatter_than_t38", abs(slope), abs(control))
    return report


def run_AppA(spec, workers=1):
    runs = [Run(spec.theorem, 0.0, 0, spec.seed, d, "identities") for d in (2, 3)]
    report = execute_runs(spec, runs, workers)
    for name in IDENTITY_NAMES:
        report.flag(name, report.max_ratio(name), spec.limit("identity_tolerance"))
    return report


def _timescale_reports(args):
    ensemble, m, taus, slope_limit, ratio_limit = args
    return verify_trace_constants(ensemble, m, taus, slope_limit=slope_limit,
                                  ratio_limit=ratio_limit)


def run_AppB(config, workers=1):
    """Reflection coefficients, the extension checks and every time-trace estimate."""
    ts = config["timescale"]
    seed = config["run"]["seed"]
    slope_limit = config["experiments"]["slope_limit"]
    ratio_limit = config["experiments"]["ratio_limit"]
    ensemble = ScaleEnsemble(seed, ts["members"], ts["modes"], ts["steps"])
    tasks = [(ensemble, m, tuple(ts["taus"]), slope_limit, ratio_limit)
             for m in ts["orders"]]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            nested = list(pool.map(_timescale_reports, tasks))
    else:
        nested = [_timescale_reports(t) for t in tasks]

    base = RatioReport("AppB")
    worst = 0.0
    for m in range(1, MAX_ORDER + 1):
        alpha = solve_alpha(m)
        worst = max(worst, alpha.residual)
        base.add(RatioRecord("AppB", 0.0, 0, seed, alpha.residual, 1.0, "1", "alpha/m=%d" % m))
    base.flag("alpha_residual", worst, ALPHA_TOLERANCE)
    two = solve_alpha(2).values
    base.flag("alpha_m2", max(abs(two[0] - 3.0), abs(two[1] + 2.0)), ALPHA_TOLERANCE)

    fine = replace(ensemble, steps=max(ensemble.steps, ISOMETRY_STEPS))
    signal = member_signal(fine, 0, 1, 1.0, "window")
    base.flag("isometry", extension_isometry_defect(signal), 1e-10)
    jumps = {}
    for m in ts["orders"]:
        sig = member_signal(ensemble, 0, m, 1.0, "zero")
        jumps[str(m)] = gluing_jumps(extend_zero_left(sig, m), m, sig.steps - 1)
    base.summary["gluing_jumps"] = jumps

    excess = 0.0
    snapshot = signal.coeffs[signal.steps // 2]
    for m in ts["orders"]:
        for theta in np.linspace(0.0, 1.0, 11):
            lhs = float(interpolation_norm(snapshot, theta, m))
            low, high = float(hs_norm(snapshot, 0.0)), float(hs_norm(snapshot, m))
            rhs = low ** (1 - theta) * high ** theta
            excess = max(excess, (lhs - rhs) / max(rhs, 1e-300))
    base.flag("interpolation_inequality", excess, 1e-12)
    return [base] + [r for reports in nested for r in reports]


def run_MULT_ID(spec, workers=1):
    finest = spec.levels[-1]
    runs = _refinement(spec, "eigenmode")
    runs.append(Run(spec.theorem, spec.T_list[0], finest, spec.seed, 0, "manufactured"))
    report = execute_runs(spec, runs, workers)
    values = _by_level(report, "eigenmode")
    report.summary["residual_by_level"] = {str(k): v for k, v in values.items()}
    report.flag("reduction", _reductions(values), spec.limit("refinement_factor"), ">=")
    report.flag("terms", report.max_ratio("term"), spec.limit("term_tolerance"))
    report.flag("rotation", report.max_ratio("rotation"), spec.limit("rotation_tolerance"))
    return report


def run_TRANSPOSE(spec, workers=1):
    channels = ("initial", "force", "boundary")
    runs = [r for kind in channels for r in _refinement(spec, kind)]
    report = execute_runs(spec, runs, workers)
    for kind in channels:
        values = _by_level(report, kind)
        levels = list(values)
        factor = values[levels[0]] / max(values[levels[-1]], 1e-300)
        report.summary["residual_by_level.%s" % kind] = {str(k): v for k, v in values.items()}
        report.flag("reduction.%s" % kind, factor, spec.limit("transposition_factor"), ">=")
    return report


def run_ENERGY(spec, workers=1):
    runs = _sweep(spec, ("pulse", "smooth"))
    runs.append(Run(spec.theorem, spec.T_list[0], spec.level, spec.seed, 0, "conservation"))
    report = execute_runs(spec, runs, workers)
    _slope_flags(report, spec, ("pulse", "smooth"))
    report.flag("conservation", report.max_ratio("conservation"),
                spec.limit("energy_tolerance"))
    report.summary["balance"] = report.max_ratio("balance")
    return report


def run_KORN(spec, workers=1):
    runs = [Run(spec.theorem, 0.0, level, spec.seed, 0, "korn")
            for level in spec.limit("korn_levels")]
    report = execute_runs(spec, runs, workers)
    k1 = min(r.lhs for r in report.select("constrained"))
    report.summary["k1_min"] = k1
    report.summary["k2_max"] = max(r.lhs for r in report.select("upper"))
    report.flag("k1_positive", k1, KORN_POSITIVE, ">=")
    report.flag("rigid_modes", max(r.lhs for r in report.select("free")), KORN_RIGID)
    return report


RUNNERS = {
    "T3.1": run_T31, "T3.4": run_T34, "T3.5": run_T35, "L3.7": run_L37, "T3.8": run_T38,
    "T3.9k1": run_T39k1, "T3.10": run_T310, "AppA": run_AppA, "MULT-ID": run_MULT_ID,
    "TRANSPOSE": run_TRANSPOSE, "ENERGY": run_ENERGY, "KORN": run_KORN,
}


@dataclass
class Bundle:
    reports: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.errors and all(r.passed for r in self.reports)

    def as_dict(self):
        return {"experiments": {r.theorem: r.as_dict() for r in self.reports},
                "errors": list(self.errors), "passed": self.passed}


def run_experiment(config, theorem, workers=1):
    """The reports of one experiment id."""
    if theorem == "AppB":
        return run_AppB(config, workers)
    return [RUNNERS[theorem](experiment_spec(config, theorem), workers)]


def run_all(config, workers=1, only=None):
    """
    Every enabled experiment (or those in only). A failing experiment is
    recorded as an error and the remaining ones still run.
    """
    bundle = Bundle()
    enabled = config["experiments"]["enabled"]
    for theorem in EXPERIMENT_IDS:
        if theorem not in enabled or (only is not None and theorem not in only):
            continue
        logging.info("experiment %s" % theorem)
        try:
            bundle.reports.extend(run_experiment(config, theorem, workers))
        except HarnessError as exc:
            logging.error("%s failed: %s" % (theorem, exc))
            bundle.errors.append(exc.as_dict())
        except NavierError as exc:
            logging.error("%s failed: %s" % (theorem, exc))
            bundle.errors.append(HarnessError(str(exc), theorem).as_dict())
    bundle.reports.sort(key=lambda r: r.theorem)
    return bundle
