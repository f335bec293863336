"""Compiled inner loops.

Everything here is numba-jitted and operates on plain float64 arrays
prepared by the wrapper layer.  Kernels process noise in blocks and return
a status code so the caller can refill buffers without the kernel ever
drawing randomness itself; given the same buffers the results are
bit-identical regardless of block sizes.
"""

import math

import numpy as np
from numba import njit

CONT = 0
EXIT = 1
HORIZON = 2
NEED_UNI = 3

SIDE_NONE = 0
SIDE_LEFT = 1
SIDE_RIGHT = 2

CROSS_GRID = 0
CROSS_LINEAR = 1
CROSS_BRIDGE = 2

SCHEME_EXPLICIT = 0
SCHEME_SEMI_IMPLICIT = 1

# bridge tests with log-probability below this are treated as impossible and
# consume no uniform; exp(-45) ~ 3e-20 is far below any resolvable frequency
_LOG_P_FLOOR = -45.0


@njit(inline="always", cache=True)
def _pieceval(breaks, coefs, y):
    i = breaks.shape[0] - 1
    while i > 0 and y < breaks[i]:
        i -= 1
    u = y - breaks[i]
    acc = coefs[i, 0]
    for k in range(1, coefs.shape[1]):
        acc = acc * u + coefs[i, k]
    return acc


@njit(inline="always", cache=True)
def _uprime_signed(breaks, c1t, g):
    if g < 0.0:
        return -_pieceval(breaks, c1t, -g)
    return _pieceval(breaks, c1t, g)


@njit(inline="always", cache=True)
def _pull(pullc, t):
    acc = 0.0
    for j in range(pullc.shape[0] - 1, -1, -1):
        acc = pullc[j] + t * acc
    return acc * t


@njit(inline="always", cache=True)
def _drift_pair(x, m2, breaks, c1t):
    return -_uprime_signed(breaks, c1t, x) + _uprime_signed(breaks, c1t, m2 - x)


@njit(inline="always", cache=True)
def _drift_deriv(x, m2, breaks, c2t):
    return -_pieceval(breaks, c2t, abs(x)) - _pieceval(breaks, c2t, abs(m2 - x))


@njit(cache=True)
def core_block(x, step0, n_steps, dt, time_scale, drift_scale, noise_amp, s2dt,
               two_a, bcut, pullc, breaks, c1t, c2t, crossing, scheme,
               normals, unif, u_idx, rec_every, rec_buf):
    """Advance one trajectory through a block of pregenerated normals.

    Returns (status, x, step, u_idx, side, theta, x_exit).  On EXIT the
    crossing happened within step ``step`` at fraction ``theta``.  When
    ``rec_every`` is positive, every rec_every-th position is written into
    ``rec_buf`` indexed by absolute step, so resumed blocks stay aligned.
    """
    for i in range(normals.shape[0]):
        step = step0 + i
        if step >= n_steps:
            return (HORIZON, x, step, u_idx, SIDE_NONE, 0.0, 0.0)
        if crossing == CROSS_BRIDGE and u_idx + 2 > unif.shape[0]:
            return (NEED_UNI, x, step, u_idx, SIDE_NONE, 0.0, 0.0)
        t0 = dt * step
        t1 = dt * (step + 1)
        m20 = two_a * (1.0 + _pull(pullc, time_scale * t0))
        m21 = two_a * (1.0 + _pull(pullc, time_scale * t1))
        z = normals[i]
        if scheme == SCHEME_EXPLICIT:
            f = _drift_pair(x, m20, breaks, c1t)
            x1 = x + drift_scale * dt * f + noise_amp * z
        else:
            rhs = x + noise_amp * z
            h = drift_scale * dt
            xi = rhs
            for _ in range(3):
                fv = _drift_pair(xi, m21, breaks, c1t)
                fd = _drift_deriv(xi, m21, breaks, c2t)
                xi -= (xi - rhs - h * fv) / (1.0 - h * fd)
            x1 = xi

        lo0 = m20 - bcut
        lo1 = m21 - bcut
        side = SIDE_NONE
        theta = 2.0
        if x1 >= bcut:
            th = 1.0 if crossing == CROSS_GRID else (bcut - x) / (x1 - x)
            side = SIDE_LEFT
            theta = th
        d0l = x - lo0
        d1l = x1 - lo1
        if d1l <= 0.0:
            th = 1.0 if crossing == CROSS_GRID else d0l / (d0l - d1l)
            if th <= theta:  # simultaneous crossings resolve to the receding side
                side = SIDE_RIGHT
                theta = th
        if side == SIDE_NONE and crossing == CROSS_BRIDGE and noise_amp > 0.0:
            d0u = bcut - x
            d1u = bcut - x1
            hit_u = False
            eu = -2.0 * d0u * d1u / s2dt
            if eu > _LOG_P_FLOOR:
                if unif[u_idx] < math.exp(eu):
                    hit_u = True
                u_idx += 1
            hit_l = False
            el = -2.0 * d0l * d1l / s2dt
            if el > _LOG_P_FLOOR:
                if unif[u_idx] < math.exp(el):
                    hit_l = True
                u_idx += 1
            if hit_l:
                side = SIDE_RIGHT
                theta = 0.5
            elif hit_u:
                side = SIDE_LEFT
                theta = 0.5
        if side != SIDE_NONE:
            if theta < 0.0:
                theta = 0.0
            elif theta > 1.0:
                theta = 1.0
            x_exit = bcut if side == SIDE_LEFT else lo0 + theta * (lo1 - lo0)
            return (EXIT, x1, step, u_idx, side, theta, x_exit)
        x = x1
        if rec_every > 0 and (step + 1) % rec_every == 0:
            rec_buf[(step + 1) // rec_every] = x1
    return (CONT, x, step0 + normals.shape[0], u_idx, SIDE_NONE, 0.0, 0.0)


@njit(cache=True)
def supdev_block(x, step0, n_steps, dt, time_scale, drift_scale, noise_amp,
                 two_a, bcut, pullc, breaks, c1t, xdet_grid, sup, normals):
    """Explicit-EM block that also tracks sup |x - x_det| on the step grid.

    Returns (status, x, step, sup, side, theta); crossings are endpoint
    checks with linear refinement.
    """
    for i in range(normals.shape[0]):
        step = step0 + i
        if step >= n_steps:
            return (HORIZON, x, step, sup, SIDE_NONE, 0.0)
        t0 = dt * step
        t1 = dt * (step + 1)
        m20 = two_a * (1.0 + _pull(pullc, time_scale * t0))
        m21 = two_a * (1.0 + _pull(pullc, time_scale * t1))
        f = _drift_pair(x, m20, breaks, c1t)
        x1 = x + drift_scale * dt * f + noise_amp * normals[i]

        lo0 = m20 - bcut
        lo1 = m21 - bcut
        side = SIDE_NONE
        theta = 2.0
        if x1 >= bcut:
            side = SIDE_LEFT
            theta = (bcut - x) / (x1 - x)
        d0l = x - lo0
        d1l = x1 - lo1
        if d1l <= 0.0:
            th = d0l / (d0l - d1l)
            if th <= theta:
                side = SIDE_RIGHT
                theta = th
        if side != SIDE_NONE:
            if theta < 0.0:
                theta = 0.0
            elif theta > 1.0:
                theta = 1.0
            xd = xdet_grid[step] + theta * (xdet_grid[step + 1] - xdet_grid[step])
            x_exit = bcut if side == SIDE_LEFT else lo0 + theta * (lo1 - lo0)
            dev = abs(x_exit - xd)
            if dev > sup:
                sup = dev
            return (EXIT, x1, step, sup, side, theta)
        dev = abs(x1 - xdet_grid[step + 1])
        if dev > sup:
            sup = dev
        x = x1
    return (CONT, x, step0 + normals.shape[0], sup, SIDE_NONE, 0.0)


@njit(cache=True)
def xdet_rk4(x0, dt, n_steps, eps, two_a, pullc, breaks, c1t):
    """Deterministic relaxed path on a uniform grid (paired half-steps).

    Each node is advanced by two half-steps; the full-step value is kept
    only to accumulate a local error estimate.  Returns (grid, err_sum).
    """
    out = np.empty(n_steps + 1)
    out[0] = x0
    x = x0
    err_sum = 0.0
    for k in range(n_steps):
        t = dt * k
        xf = _rk4_det(x, t, dt, eps, two_a, pullc, breaks, c1t)
        xh = _rk4_det(x, t, 0.5 * dt, eps, two_a, pullc, breaks, c1t)
        xh = _rk4_det(xh, t + 0.5 * dt, 0.5 * dt, eps, two_a, pullc, breaks, c1t)
        err_sum += abs(xf - xh)
        x = xh
        out[k + 1] = x
    return out, err_sum


@njit(inline="always", cache=True)
def _fdet(x, t, eps, two_a, pullc, breaks, c1t):
    m2 = two_a * (1.0 + _pull(pullc, t))
    return _drift_pair(x, m2, breaks, c1t) / eps


@njit(inline="always", cache=True)
def _rk4_det(x, t, h, eps, two_a, pullc, breaks, c1t):
    k1 = _fdet(x, t, eps, two_a, pullc, breaks, c1t)
    k2 = _fdet(x + 0.5 * h * k1, t + 0.5 * h, eps, two_a, pullc, breaks, c1t)
    k3 = _fdet(x + 0.5 * h * k2, t + 0.5 * h, eps, two_a, pullc, breaks, c1t)
    k4 = _fdet(x + h * k3, t + h, eps, two_a, pullc, breaks, c1t)
    return x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


@njit(cache=True)
def linear_ode_rk4(a_half, dt, eps, y0):
    """Solve eps * y' = 2 A(t) y + 1 on a uniform grid.

    ``a_half`` holds A at half-step resolution: entry 2k is the k-th node,
    entry 2k+1 the midpoint after it.
    """
    n = (a_half.shape[0] - 1) // 2
    out = np.empty(n + 1)
    out[0] = y0
    y = y0
    for k in range(n):
        a0 = a_half[2 * k]
        ah = a_half[2 * k + 1]
        a1 = a_half[2 * k + 2]
        k1 = (2.0 * a0 * y + 1.0) / eps
        k2 = (2.0 * ah * (y + 0.5 * dt * k1) + 1.0) / eps
        k3 = (2.0 * ah * (y + 0.5 * dt * k2) + 1.0) / eps
        k4 = (2.0 * a1 * (y + dt * k3) + 1.0) / eps
        y += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        out[k + 1] = y
    return out


@njit(cache=True)
def chain_block(xs, tmp, step0, n_steps, dt, eps, a_eq, bcut, pullc,
                breaks, c1t, all_pairs, noise_amp, s2dt_bond,
                normals, unif, u_idx, pre_out, post_out):
    """Advance a pulled chain through a block of normals.

    ``xs`` is modified in place.  Returns (status, step, u_idx, bond, theta);
    on EXIT the pre/post positions of the crossing step are written to the
    output buffers.  Bond j joins particles j and j+1.
    """
    n = xs.shape[0]
    nm = n - 2
    steps_here = normals.shape[0] // nm
    for i in range(steps_here):
        step = step0 + i
        if step >= n_steps:
            return (HORIZON, step, u_idx, -1, 0.0)
        if noise_amp > 0.0 and u_idx + (n - 1) > unif.shape[0]:
            return (NEED_UNI, step, u_idx, -1, 0.0)
        t1 = eps * dt * (step + 1)
        for m in range(1, n - 1):
            force = 0.0
            if all_pairs:
                for j in range(n):
                    if j != m:
                        g = xs[m] - xs[j]
                        if -bcut < g < bcut:
                            force -= _uprime_signed(breaks, c1t, g)
            else:
                force -= _uprime_signed(breaks, c1t, xs[m] - xs[m - 1])
                force -= _uprime_signed(breaks, c1t, xs[m] - xs[m + 1])
            tmp[m] = xs[m] + force * dt + noise_amp * normals[i * nm + (m - 1)]
        tmp[0] = 0.0
        tmp[n - 1] = (n - 1) * a_eq * (1.0 + _pull(pullc, t1))

        best_theta = 2.0
        best_bond = -1
        for jb in range(n - 1):
            g0 = xs[jb + 1] - xs[jb]
            g1 = tmp[jb + 1] - tmp[jb]
            if g1 >= bcut:
                th = (bcut - g0) / (g1 - g0) if g1 > g0 else 1.0
                if th < 0.0:
                    th = 0.0
                if th <= best_theta:  # ties resolve to the bond nearer the pulled end
                    best_theta = th
                    best_bond = jb
            elif noise_amp > 0.0 and g0 < bcut:
                e = -2.0 * (bcut - g0) * (bcut - g1) / s2dt_bond[jb]
                if e > _LOG_P_FLOOR:
                    if unif[u_idx] < math.exp(e) and 0.5 <= best_theta:
                        best_theta = 0.5
                        best_bond = jb
                    u_idx += 1
        if best_bond >= 0:
            for k in range(n):
                pre_out[k] = xs[k]
                post_out[k] = tmp[k]
            return (EXIT, step, u_idx, best_bond, best_theta)
        for k in range(n):
            xs[k] = tmp[k]
    return (CONT, step0 + steps_here, u_idx, -1, 0.0)
