"""Deviation process around the relaxed path.

Writing ``y = x - x_det(t)``, the rescaled dynamics becomes

    dy = (1/eps) * [A(t) y + B(y, t)] dt + (sigma/sqrt(eps)) dW

with ``A(t) = -U''(x_det) - U''(2a(1+p(t)) - x_det)`` strictly negative and
``|B| <= M y^2`` on a bounded tube.  This module builds the linearization
data (A, its integral, the remainder constant M), the moving boundaries in
y-coordinates, and the variance curves of the linear part ``y0``, plus a
lockstep simulator for ``y0`` and the decomposition of a coupled path into
``y0 + y1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import rng
from .dynamics import DeterministicPath, ModelParams, PathDump, solve_deterministic
from .errors import PreconditionError

_DMAX_STEPS = 400
_M_INFLATION = 1.10
_MAX_PATH_BYTES = 2 << 30


@dataclass(frozen=True)
class LinearizationData:
    """Relaxed path, drift slope A(t), and remainder constant on a tube.

    ``alpha_prefix`` is the cumulative integral of A from 0, so
    ``alpha(t, s)`` is a difference of two interpolated prefix values.
    """

    t: np.ndarray
    x_det: np.ndarray
    A: np.ndarray
    alpha_prefix: np.ndarray
    A0: float
    A1: float
    M: float
    D_max: float
    epsilon: float
    params: ModelParams

    def x_det_of(self, t):
        return np.interp(t, self.t, self.x_det)

    def A_of(self, t):
        return np.interp(t, self.t, self.A)

    def alpha(self, t, s=0.0):
        """Integral of A over [s, t] (negative for t > s)."""
        pt = np.interp(t, self.t, self.alpha_prefix)
        ps = np.interp(s, self.t, self.alpha_prefix)
        return pt - ps


def _slope(params: ModelParams, x_det: np.ndarray, t: np.ndarray) -> np.ndarray:
    pot = params.potential
    m2 = 2.0 * params.a * (1.0 + params.pull.value(t))
    return -(pot.evaluate(x_det, order=2) + pot.evaluate(m2 - x_det, order=2))


def _total_force(params: ModelParams, x, t):
    pot = params.potential
    m2 = 2.0 * params.a * (1.0 + params.pull.value(t))
    x = np.asarray(x, dtype=float)
    return -pot.evaluate(x, order=1) + pot.evaluate(m2 - x, order=1)


def build_linearization(params: ModelParams, det: DeterministicPath | None = None,
                        d_max: float | None = None) -> LinearizationData:
    """Sample A(t) along the relaxed path and bound the nonlinear remainder.

    The remainder constant M is a grid estimate of sup |B(y,t)| / y^2 over
    |y| <= d_max (default (b-a)/2), inflated by 10%.
    """
    if det is None:
        det = solve_deterministic(params)
    t, x_det = det.t, det.x
    A = _slope(params, x_det, t)
    a_max = float(np.max(A))
    if a_max >= 0:
        t_bad = float(t[np.argmax(A)])
        raise PreconditionError(
            f"drift slope A(t) reaches {a_max:.3g} at t={t_bad:.6g}; the "
            f"linearization requires A < 0 along the whole relaxed path")
    dt = t[1] - t[0]
    mids = 0.5 * (A[:-1] + A[1:])
    alpha_prefix = np.concatenate([[0.0], np.cumsum(mids) * dt])

    if d_max is None:
        d_max = (params.b - params.a) / 2.0
    stride = max(1, len(t) // 2000)
    t_sub = t[::stride]
    x_sub = x_det[::stride]
    a_sub = A[::stride]
    ys = np.linspace(-d_max, d_max, _DMAX_STEPS + 1)
    ys = ys[np.abs(ys) > 1e-12]
    ratio_max = 0.0
    f_det = _total_force(params, x_sub, t_sub)
    for y in ys:
        b_val = _total_force(params, x_sub + y, t_sub) - f_det - a_sub * y
        r = float(np.max(np.abs(b_val))) / (y * y)
        if r > ratio_max:
            ratio_max = r
    return LinearizationData(
        t=t, x_det=x_det, A=A, alpha_prefix=alpha_prefix,
        A0=-a_max, A1=-float(np.min(A)), M=ratio_max * _M_INFLATION,
        D_max=float(d_max), epsilon=params.epsilon, params=params)


def nonlinear_remainder(lin: LinearizationData, y, t):
    """B(y, t): the drift at x_det + y minus its linear part."""
    params = lin.params
    x_det = lin.x_det_of(t)
    return (_total_force(params, x_det + np.asarray(y, dtype=float), t)
            - _total_force(params, x_det, t) - lin.A_of(t) * np.asarray(y))


@dataclass(frozen=True)
class BoundaryCurves:
    """Domain edges in deviation coordinates.

    ``d_plus = b - x_det`` (distance to breaking the fixed-neighbor bond,
    strictly decreasing) and ``d_minus = 2a(1+p) - b - x_det`` (negative;
    the receding-neighbor bond breaks when y reaches it).  Their sum is
    ``2 (a(1+p) - x_det) >= 0``.
    """

    t: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray

    def d_plus_of(self, t):
        return np.interp(t, self.t, self.d_plus)

    def d_minus_of(self, t):
        return np.interp(t, self.t, self.d_minus)

    def envelope_of(self, t, d_sq: float = 0.0):
        """Symmetric first-passage envelope -d_minus(t) - d_sq."""
        return -self.d_minus_of(t) - d_sq

    def envelope_zero(self, d_sq: float) -> float:
        """First time the envelope -d_minus - d_sq closes to zero."""
        e = -self.d_minus - d_sq
        if e[0] <= 0:
            raise PreconditionError(
                f"envelope is already closed at t=0 (value {e[0]:.3g}); "
                f"D^2={d_sq:.3g} leaves no room inside the domain")
        if e[-1] > 0:
            return float(self.t[-1])
        idx = int(np.argmax(e <= 0))
        f = lambda tt: float(np.interp(tt, self.t, e))
        return float(brentq(f, self.t[idx - 1], self.t[idx], xtol=1e-14))


def boundary_curves(params: ModelParams, det: DeterministicPath | None = None
                    ) -> BoundaryCurves:
    if det is None:
        det = solve_deterministic(params)
    t = det.t
    m2 = 2.0 * params.a * (1.0 + params.pull.value(t))
    return BoundaryCurves(t=t, d_plus=params.b - det.x,
                          d_minus=m2 - params.b - det.x)


@dataclass(frozen=True)
class VarianceData:
    """Variance curve of the linear deviation and its stationary analogue.

    ``v`` solves ``eps v' = 2 A(t) v + 1`` from 0, so Var y0(t) =
    sigma^2 v(t); ``xi`` solves the same equation started on the slow
    manifold, ``xi(0) = -1/(2 A(0))``, and stays within
    ``[1/(2 A1), 1/(2 A0)]``.
    """

    t: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    xi_lo: float
    xi_hi: float

    def v_of(self, t):
        return np.interp(t, self.t, self.v)

    def xi_of(self, t):
        return np.interp(t, self.t, self.xi)


def build_variance(lin: LinearizationData) -> VarianceData:
    """Integrate the variance ODEs on the linearization grid."""
    params = lin.params
    det_half = solve_deterministic(params, dt=(lin.t[1] - lin.t[0]) / 2.0)
    a_half = _slope(params, det_half.x, det_half.t)
    dt = lin.t[1] - lin.t[0]
    if len(a_half) != 2 * (len(lin.t) - 1) + 1:
        # re-solve produced a different grid; sample instead
        th = np.linspace(lin.t[0], lin.t[-1], 2 * (len(lin.t) - 1) + 1)
        a_half = _slope(params, det_half(th), th)
    v = K.linear_ode_rk4(a_half, dt, params.epsilon, 0.0)
    xi0 = -1.0 / (2.0 * lin.A[0])
    xi = K.linear_ode_rk4(a_half, dt, params.epsilon, xi0)
    return VarianceData(t=lin.t, v=v, xi=xi,
                        xi_lo=1.0 / (2.0 * lin.A1), xi_hi=1.0 / (2.0 * lin.A0))


def _y0_step_arrays(lin: LinearizationData, sigma: float, t_start: float,
                    t_end: float, dt: float | None):
    eps = lin.epsilon
    if dt is None:
        dt = eps / (20.0 * lin.A1)
    span = t_end - t_start
    n = max(1, math.ceil(span / dt - 1e-12))
    dt_eff = span / n
    t_grid = t_start + np.arange(n + 1) * dt_eff
    a_grid = lin.A_of(t_grid)
    decay = 1.0 + a_grid[:-1] * (dt_eff / eps)
    noise = sigma * math.sqrt(dt_eff / eps)
    return t_grid, a_grid, decay, noise, dt_eff


def simulate_y0(lin: LinearizationData, sigma: float, n_paths: int,
                t_end: float | None = None, dt: float | None = None,
                seed: int = 0, y_start: float = 0.0,
                t_start: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama paths of the linear deviation, all paths in lockstep.

    Returns (t_grid, Y) with Y of shape (n_paths, len(t_grid)).
    """
    if t_end is None:
        t_end = float(lin.t[-1])
    t_grid, _, decay, noise, _ = _y0_step_arrays(lin, sigma, t_start, t_end, dt)
    need = n_paths * len(t_grid) * 8
    if need > _MAX_PATH_BYTES:
        raise PreconditionError(
            f"recording {n_paths} paths over {len(t_grid)} nodes needs "
            f"{need >> 20} MiB; reduce n_paths or raise dt")
    gen = rng.stream(seed, 0, rng.BATCH)
    y = np.full(n_paths, float(y_start))
    out = np.empty((n_paths, len(t_grid)))
    out[:, 0] = y
    for k in range(len(t_grid) - 1):
        y = y * decay[k] + noise * gen.standard_normal(n_paths)
        out[:, k + 1] = y
    return t_grid, out


def decompose(lin: LinearizationData, dump: PathDump, sigma: float,
              frame: str = "physical") -> dict:
    """Split a recorded coupled path into y, its linear part y0, and y1.

    The dump must be full resolution (record_every=1) and carry noise
    increments; y0 is integrated with the same increments, so y1 = y - y0
    isolates the nonlinear remainder up to O(dt) integration error.
    """
    if dump.x is None or dump.increments is None:
        raise PreconditionError("decompose needs a full-resolution dump "
                                "with collect_noise=True")
    eps = lin.epsilon
    if frame == "physical":
        time_scale, drift_scale = eps, 1.0
        noise_scale = sigma
    elif frame == "rescaled":
        time_scale, drift_scale = 1.0, 1.0 / eps
        noise_scale = sigma / math.sqrt(eps)
    else:
        raise PreconditionError(f"unknown frame {frame!r}")
    n = len(dump.x) - 1
    if len(dump.increments) < n:
        raise PreconditionError("dump increments are shorter than the path")
    t_frame = dump.t
    dt = t_frame[1] - t_frame[0]
    t_resc = time_scale * t_frame
    y = dump.x - lin.x_det_of(t_resc)
    a_grid = lin.A_of(t_resc)
    y0 = np.empty(n + 1)
    y0[0] = y[0]
    cur = y[0]
    for k in range(n):
        cur = cur + drift_scale * a_grid[k] * cur * dt \
            + noise_scale * dump.increments[k]
        y0[k + 1] = cur
    return {"t": t_resc, "y": y, "y0": y0, "y1": y - y0}
