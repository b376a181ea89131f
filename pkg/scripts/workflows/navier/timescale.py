# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Hilbert scale model for time regularity: H is periodic L2 and V the
periodic H^m, both diagonal in Fourier modes k = -K..K, so the
interpolation space [H, V]_theta is the multiplier norm

    |f|_theta^2 = sum_k (1 + k^2)^(theta m) |c_k|^2.

A signal is a uniform time series of mode coefficients. The module
solves the reflection coefficients of the zero-trace extension exactly,
builds the extension, and measures the time-trace estimates on seeded
ensembles as ratios over a list of window lengths tau.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from navier import NavierError
from navier.reports import RatioRecord, RatioReport, loglog_slope
from navier.traces import time_integral

MAX_ORDER = 8
ALPHA_TOLERANCE = 1e-12
BUMP_WIDTH = 0.25

ESTIMATES = ("zero_trace", "lifted", "scaled", "sup_norm", "intermediate", "no_trace")


class TimescaleError(NavierError):
    pass


def mode_numbers(K):
    return np.arange(-K, K + 1)


def hs_norm(coeffs, s, modes=None):
    """Multiplier norm along the last axis."""
    coeffs = np.asarray(coeffs)
    if modes is None:
        modes = mode_numbers((coeffs.shape[-1] - 1) // 2)
    weights = (1.0 + modes.astype(float) ** 2) ** s
    return np.sqrt(np.sum(weights * np.abs(coeffs) ** 2, axis=-1))


def interpolation_norm(coeffs, theta, m, v_order=None):
    """Norm of [H, V]_theta with V = H^v_order (v_order defaults to m)."""
    if not 0.0 <= theta <= 1.0:
        raise TimescaleError("interpolation parameter must lie in [0, 1], got %r" % (theta,))
    order = m if v_order is None else v_order
    return hs_norm(coeffs, theta * order)


def trace_theta(j, m):
    """Index of the space holding the j-th time derivative at a point."""
    return 1.0 - (2.0 * j + 1.0) / (2.0 * m)


@dataclass
class HilbertScaleSignal:
    dt: float
    coeffs: np.ndarray
    start: float = 0.0
    real: bool = True

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] % 2 != 1:
            raise TimescaleError("coefficients must be (steps, 2K+1), got %s"
                                 % (self.coeffs.shape,))
        if not self.dt > 0:
            raise TimescaleError("time step must be positive")
        if self.real and not np.allclose(self.coeffs, np.conj(self.coeffs[:, ::-1]),
                                         rtol=0.0, atol=1e-12 * (1.0 + np.abs(self.coeffs).max())):
            raise TimescaleError("coefficients of a real signal must be conjugate symmetric")

    @property
    def steps(self):
        return self.coeffs.shape[0]

    @property
    def K(self):
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def tau(self):
        return self.dt * (self.steps - 1)

    def times(self):
        return self.start + self.dt * np.arange(self.steps)

    def derivative(self, j):
        """j-th time derivative at every step, accurate to order j + 2."""
        return difference_derivative(self.coeffs, j, self.dt)

    def initial_derivative(self, j):
        """One-sided j-th derivative at the first step."""
        if j == 0:
            return self.coeffs[0]
        width = stencil_width(j)
        return difference_derivative(self.coeffs[:width], j, self.dt)[0]


def signal_from_shape(shape, amplitude, tau, steps, start=0.0):
    """f(t) = sum_i shape_i(t) c_i for shapes (callables) and mode vectors c_i."""
    t = start + tau * np.arange(steps + 1) / steps
    coeffs = sum(np.outer(s(t), c) for s, c in zip(shape, amplitude))
    return HilbertScaleSignal(tau / steps, coeffs, start)


def stencil_width(order, accuracy=None):
    """Points of the stencil for d^order/dt^order, odd so the interior one is centred."""
    width = order + (order + 2 if accuracy is None else accuracy)
    return width + 1 if width % 2 == 0 else width


@lru_cache(maxsize=None)
def stencil_weights(offsets, order):
    """
    Weights w_i with sum_i w_i f(t + o_i h) = h^order f^(order)(t) on
    polynomials of degree < len(offsets), in exact rational arithmetic.
    """
    n = len(offsets)
    matrix = [[Fraction(o) ** q / math.factorial(q) for o in offsets] for q in range(n)]
    rhs = [Fraction(int(q == order)) for q in range(n)]
    return np.array([float(w) for w in _solve_exact(matrix, rhs)])


def difference_derivative(coeffs, order, dt, accuracy=None):
    """
    order-th derivative along the first axis at every step: the centred
    stencil inside the grid, one-sided stencils of the same width at the
    ends. Both are accurate to at least `accuracy` (default order + 2).
    """
    coeffs = np.asarray(coeffs)
    if order == 0:
        return coeffs
    width = stencil_width(order, accuracy)
    steps = coeffs.shape[0]
    if steps < width:
        raise TimescaleError("%d steps are too few for a derivative of order %d (need %d)"
                             % (steps, order, width))
    half = width // 2
    out = np.empty(coeffs.shape, dtype=np.result_type(coeffs, float))
    centred = stencil_weights(tuple(range(-half, half + 1)), order)
    out[half:steps - half] = sum(w * coeffs[k:steps - width + 1 + k]
                                 for k, w in enumerate(centred))
    for i in list(range(half)) + list(range(steps - half, steps)):
        lo = min(max(i - half, 0), steps - width)
        w = stencil_weights(tuple(range(lo - i, lo - i + width)), order)
        out[i] = np.tensordot(w, coeffs[lo:lo + width], axes=1)
    return out / dt ** order


def derivative_norm(signal, m):
    """|d^m f/dt^m|_{L2(H)}, trapezoidal rule over the difference derivative."""
    deriv = difference_derivative(signal.coeffs, m, signal.dt)
    return math.sqrt(time_integral(hs_norm(deriv, 0) ** 2, signal.times()))


def zm_norm(signal, m):
    """
    (|f|^2_{L2(V)} + |d^m f/dt^m|^2_{L2(H)})^(1/2), trapezoidal rule in
    time with the m-th derivative accurate to order m + 2.
    """
    if m < 1:
        raise TimescaleError("order must be >= 1")
    v = hs_norm(signal.coeffs, m) ** 2
    return math.sqrt(time_integral(v, signal.times()) + derivative_norm(signal, m) ** 2)


@dataclass(frozen=True)
class AlphaCoefficients:
    order: int
    values: tuple
    exact: tuple
    residual: float


def _solve_exact(matrix, rhs):
    n = len(rhs)
    a = [row[:] + [b] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[pivot] = a[pivot], a[col]
        for r in range(n):
            if r != col and a[r][col] != 0:
                factor = a[r][col] / a[col][col]
                a[r] = [x - factor * y for x, y in zip(a[r], a[col])]
    return [a[i][n] / a[i][i] for i in range(n)]


def solve_alpha(m):
    """
    Reflection coefficients: sum_k (-1)^j k^j alpha_k = 1 for j < m,
    solved in exact rational arithmetic.
    """
    if int(m) != m or m < 1:
        raise TimescaleError("order must be a positive integer, got %r" % (m,))
    if m > MAX_ORDER:
        raise TimescaleError("order %d exceeds %d: the reflection system is too ill "
                             "conditioned for a meaningful residual" % (m, MAX_ORDER))
    matrix = [[Fraction((-k) ** j) for k in range(1, m + 1)] for j in range(m)]
    exact = _solve_exact(matrix, [Fraction(1)] * m)
    values = np.array([float(x) for x in exact])
    res = 0.0
    for j in range(m):
        row = np.array([float((-k) ** j) for k in range(1, m + 1)])
        res = max(res, abs(row @ values - 1.0) / max(1.0, float(np.abs(row * values).max())))
    if res > ALPHA_TOLERANCE:
        raise TimescaleError("reflection coefficients of order %d have residual %.3e" % (m, res))
    return AlphaCoefficients(m, tuple(values), tuple(exact), res)


def initial_traces_vanish(signal, m, slack=10.0):
    """
    Whether the difference quotients of order j < m at t = 0 are of the
    size the grid leaves for a function with vanishing traces.
    """
    scale = float(np.abs(signal.coeffs).max()) or 1.0
    for j in range(m):
        q = float(np.abs(signal.initial_derivative(j)).max())
        allowed = slack * m * (signal.dt / signal.tau) * scale / signal.tau ** j
        if q > allowed:
            return False
    return True


def extend_zero_left(signal, m, alpha=None, check=True):
    """
    Zero for t < 0, f on (0, tau), then sum_k alpha_k f((k+1) tau - k t)
    where each term is kept only while its argument lies in (0, tau), and
    zero from 2 tau on. The grid is padded with m+1 zero steps on both
    sides.
    """
    if check and not initial_traces_vanish(signal, m):
        raise TimescaleError("signal has non-vanishing derivatives of order < %d at t=0" % m)
    alpha = solve_alpha(m).values if alpha is None else alpha
    n = signal.steps - 1
    pad = m + 1
    ext = np.zeros((pad + 2 * n + 1 + pad, signal.coeffs.shape[1]), dtype=complex)
    ext[pad:pad + n + 1] = signal.coeffs
    for i in range(1, n + 1):
        acc = np.zeros(signal.coeffs.shape[1], dtype=complex)
        for k, a in enumerate(alpha, start=1):
            if 0 < k * i < n:
                acc += a * signal.coeffs[n - k * i]
        ext[pad + n + i] = acc
    return HilbertScaleSignal(signal.dt, ext, signal.start - pad * signal.dt, signal.real)


def breakpoints(n, m):
    """Grid indices, relative to the start of f, where reflected terms switch off."""
    return sorted({n} | {n + n // k for k in range(2, m + 1)})


def gluing_jumps(extended, m, n):
    """
    Max over breakpoints of the jump between backward and forward
    difference quotients of orders j < m, per order.
    """
    pad = m + 1
    out = []
    for j in range(m):
        worst = 0.0
        for b in breakpoints(n, m):
            i = pad + b
            if j == 0:
                left = right = extended.coeffs[i]
            else:
                left = np.diff(extended.coeffs[i - j:i + 1], n=j, axis=0)[0] / extended.dt ** j
                right = np.diff(extended.coeffs[i:i + j + 1], n=j, axis=0)[0] / extended.dt ** j
            worst = max(worst, float(np.abs(left - right).max()))
        out.append(worst)
    return out


@dataclass(frozen=True)
class ScaleEnsemble:
    """
    Seeded random signals: `members` draws of two mode vectors with
    spectra decaying like (1+k^2)^(-(m+1)/2).
    """
    seed: int = 0
    members: int = 8
    modes: int = 64
    steps: int = 512

    def amplitudes(self, member, m):
        rng = np.random.default_rng([self.seed, member, m])
        k = mode_numbers(self.modes)
        decay = (1.0 + k.astype(float) ** 2) ** (-(m + 1) / 2.0)
        out = []
        for _ in range(2):
            half = rng.standard_normal(self.modes + 1) + 1j * rng.standard_normal(self.modes + 1)
            half[0] = half[0].real
            full = np.concatenate([np.conj(half[:0:-1]), half])
            out.append(full * decay)
        return out, rng

    def grid_steps(self, tau):
        return self.steps * max(1, int(math.ceil(tau)))


def _bump(m, t0, width):
    def shape(t):
        s = np.clip((t - t0) / width, 0.0, 1.0)
        return np.sin(np.pi * s) ** (2 * m)
    return shape


def _decaying(phase, freq, width):
    def shape(t):
        return np.exp(-t / width) * np.cos(freq * t + phase)
    return shape


def _scaled(phase, freq, tau):
    def shape(t):
        s = t / tau
        return np.cos(freq * s + phase) * (1.0 + s) / (1.0 + s * s)
    return shape


def member_signal(ensemble, member, m, tau, kind):
    """
    kind "zero": fixed width bumps vanishing to order m at t = 0;
    "fixed": fixed width decaying signals with non-zero traces;
    "scaled": shapes psi(t / tau) filling the window;
    "window": bumps over the whole window vanishing to order 2m + 6 at
    both ends.
    """
    amps, rng = ensemble.amplitudes(member, m)
    steps = ensemble.grid_steps(tau)
    if kind == "zero":
        # one offset for both bumps keeps their overlap independent of tau
        offset = rng.uniform(0.0, 1.0) * max(tau - BUMP_WIDTH, 0.0)
        width = min(BUMP_WIDTH, tau)
        shapes = [_bump(m + i, offset, width) for i in range(2)]
    elif kind == "window":
        shapes = [_bump(m + 3 + i, 0.0, tau) for i in range(2)]
    elif kind == "fixed":
        shapes = [_decaying(rng.uniform(0, 2 * np.pi), rng.uniform(0, 8.0), BUMP_WIDTH)
                  for _ in range(2)]
    else:
        shapes = [_scaled(rng.uniform(0, 2 * np.pi), rng.uniform(0, 8.0), tau)
                  for _ in range(2)]
    return signal_from_shape(shapes, amps, tau, steps)


def _l2v(signal, m):
    return time_integral(hs_norm(signal.coeffs, m) ** 2, signal.times())


def _sup_norms(signal, j, m):
    return float(np.max(interpolation_norm(signal.derivative(j), trace_theta(j, m), m)))


def _trace_sum(signal, m):
    return sum(float(interpolation_norm(signal.initial_derivative(j), trace_theta(j, m), m))
               for j in range(m))


def estimate_sides(signal, m, j, estimate):
    """(lhs, rhs) of one time-trace estimate for derivative order j."""
    tau = signal.tau
    if estimate in ("zero_trace", "lifted", "scaled", "sup_norm"):
        lhs = _sup_norms(signal, j, m)
    else:
        deriv = signal.derivative(j)
        lhs = math.sqrt(time_integral(
            interpolation_norm(deriv, 1.0 - j / m, m) ** 2, signal.times()))
    top = derivative_norm(signal, m) ** 2
    if estimate == "zero_trace":
        rhs = zm_norm(signal, m)
    elif estimate in ("lifted", "intermediate"):
        rhs = zm_norm(signal, m) + _trace_sum(signal, m)
    elif estimate == "scaled":
        rhs = tau ** (-j - 0.5) * math.sqrt(_l2v(signal, m) + tau ** (2 * m) * top)
    elif estimate == "sup_norm":
        vmax = float(np.max(hs_norm(signal.coeffs, m)))
        hmax = float(np.max(hs_norm(signal.derivative(m), 0)))
        rhs = tau ** (-j) * math.sqrt(vmax ** 2 + tau ** (2 * m) * hmax ** 2)
    elif estimate == "no_trace":
        rhs = tau ** (1 - j) * math.sqrt(_l2v(signal, m) + tau ** (2 * m) * top)
    else:
        raise TimescaleError("unknown estimate %r" % (estimate,))
    return lhs, rhs


SIGNAL_KIND = {"zero_trace": "zero", "lifted": "fixed", "intermediate": "fixed",
               "scaled": "scaled", "sup_norm": "scaled", "no_trace": "scaled"}


def verify_trace_constants(ensemble, m, taus, estimates=ESTIMATES, slope_limit=0.05,
                           ratio_limit=100.0):
    """
    One RatioReport per estimate: records (tau, member, j) and flags on
    the log-log slope of the sup ratio over tau. The no_trace ratio need
    not be monotone in tau; it is flagged against ratio_limit.
    """
    if ensemble.members < 1:
        raise TimescaleError("empty ensemble")
    reports = []
    for estimate in estimates:
        report = RatioReport("AppB.%s.m%d" % (estimate, m))
        for tau in taus:
            for member in range(ensemble.members):
                signal = member_signal(ensemble, member, m, tau, SIGNAL_KIND[estimate])
                for j in range(m):
                    lhs, rhs = estimate_sides(signal, m, j, estimate)
                    report.add(RatioRecord(report.theorem, float(tau), 0, ensemble.seed,
                                           lhs, rhs, estimate, "j=%d/member=%d" % (j, member)))
        report.sort()
        sup = report.sup_ratio_by_T()
        slope = loglog_slope(list(sup), list(sup.values()))
        report.summary = {"slope": slope, "sup_by_tau": {str(k): v for k, v in sup.items()}}
        report.flag("slope", slope, slope_limit)
        if estimate == "no_trace":
            report.flag("bounded", max(sup.values()), ratio_limit)
        logging.info("%s: slope %.4f max ratio %.4g" % (report.theorem, slope,
                                                        report.max_ratio()))
        reports.append(report)
    return reports


def extension_isometry_defect(signal):
    """|(|f~|_{Z1} / |f|_{Z1}) - sqrt(2)| for the m = 1 reflection."""
    ext = extend_zero_left(signal, 1)
    base = zm_norm(signal, 1)
    if base == 0:
        return 0.0
    return abs(zm_norm(ext, 1) / base - math.sqrt(2.0))
