"""Pure-Python kernels. Reference implementation and fallback for ``_ckernels``.

The arithmetic order here mirrors the Cython source line by line so both
back-ends agree to rounding.
"""

import math

import numpy as np

# layout of the packed MPC parameter vector (see planner.MpcConfig.pack)
(P_DT, P_WB, P_RX0, P_RY0, P_DLONG, P_DLAT, P_TAU, P_VREF,
 P_WY, P_WPSI, P_WV, P_WA, P_WDELTA, P_WDDELTA, P_WDA, P_WPOT,
 P_AL, P_SIGL, P_AO, P_SIGX, P_SIGY, P_APREV, P_DPREV, P_LEN) = range(24)


def rolling_median(signal, window):
    n = len(signal)
    half = (window - 1) // 2
    out = np.empty(n)
    for i in range(n):
        r = min(half, i, n - 1 - i)
        out[i] = np.median(signal[i - r:i + r + 1])
    return out


def _ref(x, p):
    s_arg = -p[P_TAU] * (x - p[P_RX0] - 0.5 * p[P_DLONG])
    if s_arg > 700.0:
        s = 0.0
    else:
        s = 1.0 / (1.0 + math.exp(s_arg))
    y_ref = p[P_DLAT] * s + p[P_RY0]
    psi_ref = math.atan(p[P_DLAT] * p[P_TAU] * s * (1.0 - s))
    return y_ref, psi_ref


def potential(x, y, lines, obs, m, h, p):
    """Lane-line plus obstacle potential at ``(x, y)`` against obstacles of step ``h``."""
    total = 0.0
    two_s2 = 2.0 * p[P_SIGL] * p[P_SIGL]
    for k in range(len(lines)):
        d = y - lines[k]
        total += p[P_AL] * math.exp(-d * d / two_s2)
    base = h * m * 2
    for j in range(m):
        dx = (x - obs[base + 2 * j]) / p[P_SIGX]
        dy = (y - obs[base + 2 * j + 1]) / p[P_SIGY]
        total += p[P_AO] * math.exp(-(dx * dx + dy * dy))
    return total


def mpc_cost(state0, u, p, lines, obs, m):
    dt = p[P_DT]
    x = state0[0]
    y = state0[1]
    psi = state0[2]
    v = state0[3]
    a_last = p[P_APREV]
    d_last = p[P_DPREV]
    cost = 0.0
    horizon = len(u) // 2
    for h in range(horizon):
        a = u[2 * h]
        delta = u[2 * h + 1]
        x_n = x + v * math.cos(psi) * dt
        y_n = y + v * math.sin(psi) * dt
        psi = psi + v / p[P_WB] * math.tan(delta) * dt
        v = v + a * dt
        if v < 0.0:
            v = 0.0
        x = x_n
        y = y_n
        y_ref, psi_ref = _ref(x, p)
        ey = y - y_ref
        epsi = psi - psi_ref
        ev = v - p[P_VREF]
        cost += p[P_WY] * ey * ey + p[P_WPSI] * epsi * epsi + p[P_WV] * ev * ev
        cost += p[P_WA] * a * a + p[P_WDELTA] * delta * delta
        cost += p[P_WDDELTA] * (delta - d_last) * (delta - d_last)
        cost += p[P_WDA] * (a - a_last) * (a - a_last)
        if p[P_WPOT] != 0.0:
            cost += p[P_WPOT] * potential(x, y, lines, obs, m, h, p)
        a_last = a
        d_last = delta
    return cost


def mpc_gradient(state0, u, p, lines, obs, m, step):
    """Central finite-difference gradient of ``mpc_cost`` w.r.t. the controls."""
    work = np.array(u, dtype=float)
    grad = np.empty(len(work))
    for k in range(len(work)):
        orig = work[k]
        work[k] = orig + step
        fp = mpc_cost(state0, work, p, lines, obs, m)
        work[k] = orig - step
        fm = mpc_cost(state0, work, p, lines, obs, m)
        work[k] = orig
        grad[k] = (fp - fm) / (2.0 * step)
    return grad


def rollout(state0, u, dt, wheelbase):
    horizon = len(u) // 2
    out = np.empty((horizon + 1, 4))
    x, y, psi, v = state0[0], state0[1], state0[2], state0[3]
    out[0] = (x, y, psi, v)
    for h in range(horizon):
        a = u[2 * h]
        delta = u[2 * h + 1]
        x_n = x + v * math.cos(psi) * dt
        y_n = y + v * math.sin(psi) * dt
        psi = psi + v / wheelbase * math.tan(delta) * dt
        v = v + a * dt
        if v < 0.0:
            v = 0.0
        x = x_n
        y = y_n
        out[h + 1] = (x, y, psi, v)
    return out
