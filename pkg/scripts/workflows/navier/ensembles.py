# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Seeded data ensembles for the estimate sweeps.

Every generator takes (seed, member) and draws from its own numpy
Generator, so a member is reproducible on its own and independent of how
the runs are distributed over workers.

  eigenmode   u0 a random combination of discrete eigenmodes, u1 = F = g = 0
  smooth      u0, u1 smooth and vanishing on GAMMA0, F = g = 0
  pulse       F = b(t) eta(r) q(x) with b a short bump in time, zero data
  wave        traveling wave g on GAMMA0 with compatible u0, u1
  g_only      the same g with u0 = eta g(., 0), u1 = 0 and F = 0
  rough       g = cos(k theta) cos(w t) c with zero data (incompatible)
  strong      cutoff localised polynomial data meeting every compatibility
              condition of the strong and the time differentiated problem
"""

import math
from dataclasses import dataclass

import numpy as np
import sympy as sym

from navier import NavierError
from navier.dynamics import ProblemData, eigenmodes
from navier.geometry import cutoff
from navier.symbolic import (
    TIME,
    VectorExpression,
    boundary_vanishing_field,
    radial_traction_free_field,
    radius_expr,
    random_polynomial_field,
    smoothstep_expr,
)

ENSEMBLE_KINDS = ("zero", "eigenmode", "smooth", "pulse", "wave", "g_only", "rough", "strong")


class EnsembleError(NavierError):
    pass


def member_rng(seed, member, kind):
    if kind not in ENSEMBLE_KINDS:
        raise EnsembleError("unknown ensemble kind %r" % (kind,))
    return np.random.default_rng([int(seed), int(member), ENSEMBLE_KINDS.index(kind)])


@dataclass(frozen=True)
class EnsembleParameters:
    """Knobs shared by the generators; the config `ensembles` section."""
    members: int = 8
    eigenmodes: tuple = (8, 16)
    pulse_width: float = 0.25
    forcing_frequency: float = 0.5
    wave_number: int = 2
    wave_speed: float = 1.0
    rough_wave_number: int = 6
    amplitude: float = 1.0

    def __post_init__(self):
        lo, hi = self.eigenmodes
        if not 0 <= lo < hi:
            raise EnsembleError("eigenmode range %r is empty" % (self.eigenmodes,))
        if self.pulse_width <= 0 or self.forcing_frequency <= 0:
            raise EnsembleError("pulse width and forcing frequency must be positive")

    @classmethod
    def from_config(cls, section):
        values = dict(section)
        values.pop("seeds", None)
        if "eigenmodes" in values:
            values["eigenmodes"] = tuple(values["eigenmodes"])
        return cls(**{k: v for k, v in values.items() if k in cls.__dataclass_fields__})


def zero_data():
    return ProblemData(label="zero")


def _radial_cutoff(spec):
    def eta(x):
        return cutoff(spec, np.linalg.norm(x, axis=-1))[:, None]
    return eta


def eigenmode_data(forms, seed, member, params, modes=None):
    """u0 = sum_j a_j w_j over the eigenmodes with index in params.eigenmodes."""
    lo, hi = params.eigenmodes
    if modes is None:
        _, modes = eigenmodes(forms, hi)
    rng = member_rng(seed, member, "eigenmode")
    amps = rng.standard_normal(hi - lo) * params.amplitude / math.sqrt(hi - lo)
    u0 = np.einsum("j,jn->n", amps, modes[lo:hi])
    return ProblemData(u0=u0, label="eigenmode")


def smooth_data(spec, seed, member, params):
    rng = member_rng(seed, member, "smooth")
    a = boundary_vanishing_field(rng, spec.dimension, spec.inner_radius, degree=1)
    b = boundary_vanishing_field(rng, spec.dimension, spec.inner_radius, degree=1)
    scale = params.amplitude / spec.outer_radius ** 2
    u0, u1 = a.value_fn(), b.value_fn()
    return ProblemData(u0=lambda x: scale * u0(x), u1=lambda x: scale * u1(x),
                       label="smooth")


def pulse_profile(width):
    def bump(t):
        if t < 0.0 or t > width:
            return 0.0
        return math.sin(math.pi * t / width) ** 2
    return bump


def pulse_data(spec, seed, member, params):
    """Zero initial data driven by a force switched on over [0, pulse_width]."""
    rng = member_rng(seed, member, "pulse")
    q = random_polynomial_field(rng, spec.dimension, 1, params.amplitude).value_fn()
    eta = _radial_cutoff(spec)
    bump = pulse_profile(params.pulse_width)

    def force(x, t):
        b = bump(t)
        if b == 0.0:
            return np.zeros((len(x), spec.dimension))
        return b * eta(x) * q(x)
    return ProblemData(force=force, label="pulse")


def _angle(x, axis):
    """theta on the circle; on the sphere the angle to a fixed axis, smooth everywhere."""
    if x.shape[-1] == 2:
        return np.arctan2(x[:, 1], x[:, 0])
    e = x / np.linalg.norm(x, axis=-1, keepdims=True)
    return math.pi * (e @ axis)


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def traveling_wave(spec, seed, member, params, kind="wave"):
    """
    g(x, t) = A cos(k theta - w t + phase) c with w = k * wave_speed,
    together with its first two time derivatives.
    """
    rng = member_rng(seed, member, kind)
    d = spec.dimension
    k = params.wave_number
    omega = k * params.wave_speed
    axis = _unit(rng, d)
    direction = _unit(rng, d) * params.amplitude
    phase = float(rng.uniform(0.0, 2.0 * math.pi))

    def wave(order):
        def g(x, t=0.0):
            arg = k * _angle(x, axis) - omega * t + phase
            # d^n/dt^n cos(arg) = w^n cos(arg + n pi / 2)
            return (omega ** order * np.cos(arg + order * math.pi / 2.0))[:, None] * direction
        return g
    return wave(0), wave(1), wave(2)


def wave_data(spec, seed, member, params):
    g, g_dot, g_ddot = traveling_wave(spec, seed, member, params, "wave")
    eta = _radial_cutoff(spec)
    return ProblemData(u0=lambda x: eta(x) * g(x, 0.0), u1=lambda x: eta(x) * g_dot(x, 0.0),
                       g=g, g_dot=g_dot, g_ddot=g_ddot, label="wave")


def g_only_data(spec, seed, member, params):
    g, g_dot, g_ddot = traveling_wave(spec, seed, member, params, "g_only")
    eta = _radial_cutoff(spec)
    return ProblemData(u0=lambda x: eta(x) * g(x, 0.0), g=g, g_dot=g_dot, g_ddot=g_ddot,
                       label="g_only")


def rough_data(spec, seed, member, params):
    """High wave number boundary data with u0 = u1 = F = 0; g(., 0) != u0."""
    rng = member_rng(seed, member, "rough")
    d = spec.dimension
    k = params.rough_wave_number
    omega = float(rng.uniform(0.5, 2.0)) * k * params.wave_speed
    axis = _unit(rng, d)
    direction = _unit(rng, d) * params.amplitude

    def g(x, t=0.0):
        return (np.cos(k * _angle(x, axis)) * math.cos(omega * t))[:, None] * direction
    return ProblemData(g=g, compatible=False, label="rough")


def _cutoff_expr(spec):
    width = spec.outer_radius - spec.inner_radius
    r = radius_expr(spec.dimension)
    return smoothstep_expr((sym.Float(spec.outer_radius - 0.25 * width) - r)
                           / sym.Float(0.5 * width))


@dataclass
class StrongData:
    """
    Symbolic data of one strong ensemble member. target is the initial
    acceleration div P(u0) + F(0); g is built so that g(0) = u0,
    g'(0) = u1 and g''(0) = target on GAMMA0.
    """
    u0: VectorExpression
    u1: VectorExpression
    force: VectorExpression
    g: VectorExpression
    target: VectorExpression
    omega: float
    label: str = "strong"

    def problem(self):
        return ProblemData(force=self.force.value_fn(), u0=self.u0.value_fn(),
                           u1=self.u1.value_fn(), g=self.g.value_fn(),
                           g_dot=self.g.time_derivative(1).value_fn(),
                           g_ddot=self.g.time_derivative(2).value_fn(),
                           compatible=True, strong=True, label=self.label)

    def differentiated(self):
        """Data of the problem solved by du/dt."""
        g = self.g.time_derivative(1)
        return ProblemData(force=self.force.time_derivative(1).value_fn(),
                           u0=self.u1.value_fn(), u1=self.target.value_fn(),
                           g=g.value_fn(), g_dot=g.time_derivative(1).value_fn(),
                           g_ddot=g.time_derivative(2).value_fn(),
                           compatible=True, strong=True, label=self.label + "-dt")

    def force_at_zero(self):
        return self.force.at_time(0).value_fn()


def strong_data(spec, lame, seed, member, params):
    rng = member_rng(seed, member, "strong")
    d = spec.dimension
    eta = _cutoff_expr(spec)
    scale = params.amplitude / spec.outer_radius

    def localised():
        p = random_polynomial_field(rng, d, 1, scale)
        return VectorExpression([eta * e for e in p.exprs], d)

    u0 = localised()
    u1 = localised()
    q = localised()
    w = sym.Float(params.forcing_frequency)
    phase = sym.Float(float(rng.uniform(0.0, 2.0 * math.pi)))
    force = q.scaled(sym.cos(w * TIME + phase))
    target = u0.div_piola(sym.Float(lame.mu), sym.Float(lame.lam)) + force.at_time(0)
    b = target + u0.scaled(w ** 2)
    g = (u0.scaled(sym.cos(w * TIME)) + u1.scaled(sym.sin(w * TIME) / w)
         + b.scaled((1 - sym.cos(w * TIME)) / w ** 2))
    return StrongData(u0, u1, force, g, target, float(params.forcing_frequency))


def manufactured_solution(spec, lame):
    """
    u = (1 + t^2) v with v radial, zero on GAMMA0 and traction free on
    GAMMA1; F = u'' - div P(u). Returns (u, data).
    """
    v = radial_traction_free_field(lame.mu, lame.lam, spec.inner_radius, spec.outer_radius,
                                   spec.dimension)
    u = v.scaled(1 + TIME ** 2)
    force = u.time_derivative(2) - u.div_piola(lame.mu, lame.lam)
    return u, ProblemData(force=force.value_fn(), u0=v.value_fn(), label="manufactured")


def ensemble_data(kind, forms, seed, member, params, modes=None):
    """ProblemData of one ensemble member on the mesh of forms."""
    spec = forms.space.mesh.spec
    if kind == "zero":
        return zero_data()
    if kind == "eigenmode":
        return eigenmode_data(forms, seed, member, params, modes)
    if kind == "smooth":
        return smooth_data(spec, seed, member, params)
    if kind == "pulse":
        return pulse_data(spec, seed, member, params)
    if kind == "wave":
        return wave_data(spec, seed, member, params)
    if kind == "g_only":
        return g_only_data(spec, seed, member, params)
    if kind == "rough":
        return rough_data(spec, seed, member, params)
    if kind == "strong":
        return strong_data(spec, forms.lame, seed, member, params).problem()
    raise EnsembleError("unknown ensemble kind %r" % (kind,))
