# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same signatures and arithmetic order as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin, tan, atan

cnp.import_array()

DEF P_DT = 0
DEF P_WB = 1
DEF P_RX0 = 2
DEF P_RY0 = 3
DEF P_DLONG = 4
DEF P_DLAT = 5
DEF P_TAU = 6
DEF P_VREF = 7
DEF P_WY = 8
DEF P_WPSI = 9
DEF P_WV = 10
DEF P_WA = 11
DEF P_WDELTA = 12
DEF P_WDDELTA = 13
DEF P_WDA = 14
DEF P_WPOT = 15
DEF P_AL = 16
DEF P_SIGL = 17
DEF P_AO = 18
DEF P_SIGX = 19
DEF P_SIGY = 20
DEF P_APREV = 21
DEF P_DPREV = 22


cdef double _median(double[::1] buf, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = buf[i]
        j = i - 1
        while j >= 0 and buf[j] > key:
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = key
    if n % 2 == 1:
        return buf[n // 2]
    return 0.5 * (buf[n // 2 - 1] + buf[n // 2])


def rolling_median(const double[::1] signal, Py_ssize_t window):
    cdef Py_ssize_t n = signal.shape[0]
    cdef Py_ssize_t half = (window - 1) // 2
    cdef Py_ssize_t i, k, r
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] buf = np.empty(2 * half + 1)
    for i in range(n):
        r = half
        if i < r:
            r = i
        if n - 1 - i < r:
            r = n - 1 - i
        for k in range(2 * r + 1):
            buf[k] = signal[i - r + k]
        o[i] = _median(buf, 2 * r + 1)
    return out


cdef inline void _ref(double x, const double[::1] p, double* y_ref, double* psi_ref) nogil:
    cdef double s_arg = -p[P_TAU] * (x - p[P_RX0] - 0.5 * p[P_DLONG])
    cdef double s
    if s_arg > 700.0:
        s = 0.0
    else:
        s = 1.0 / (1.0 + exp(s_arg))
    y_ref[0] = p[P_DLAT] * s + p[P_RY0]
    psi_ref[0] = atan(p[P_DLAT] * p[P_TAU] * s * (1.0 - s))


cdef double _potential(double x, double y, const double[::1] lines, const double[::1] obs,
                       Py_ssize_t m, Py_ssize_t h, const double[::1] p) nogil:
    cdef double total = 0.0
    cdef double two_s2 = 2.0 * p[P_SIGL] * p[P_SIGL]
    cdef double d, dx, dy
    cdef Py_ssize_t k, j
    cdef Py_ssize_t base = h * m * 2
    for k in range(lines.shape[0]):
        d = y - lines[k]
        total += p[P_AL] * exp(-d * d / two_s2)
    for j in range(m):
        dx = (x - obs[base + 2 * j]) / p[P_SIGX]
        dy = (y - obs[base + 2 * j + 1]) / p[P_SIGY]
        total += p[P_AO] * exp(-(dx * dx + dy * dy))
    return total


def potential(double x, double y, const double[::1] lines, const double[::1] obs,
              Py_ssize_t m, Py_ssize_t h, const double[::1] p):
    return _potential(x, y, lines, obs, m, h, p)


cdef double _cost(const double[::1] state0, const double[::1] u, const double[::1] p,
                  const double[::1] lines, const double[::1] obs, Py_ssize_t m) nogil:
    cdef double dt = p[P_DT]
    cdef double x = state0[0]
    cdef double y = state0[1]
    cdef double psi = state0[2]
    cdef double v = state0[3]
    cdef double a_last = p[P_APREV]
    cdef double d_last = p[P_DPREV]
    cdef double cost = 0.0
    cdef double a, delta, x_n, y_n, y_ref, psi_ref, ey, epsi, ev
    cdef Py_ssize_t h
    cdef Py_ssize_t horizon = u.shape[0] // 2
    for h in range(horizon):
        a = u[2 * h]
        delta = u[2 * h + 1]
        x_n = x + v * cos(psi) * dt
        y_n = y + v * sin(psi) * dt
        psi = psi + v / p[P_WB] * tan(delta) * dt
        v = v + a * dt
        if v < 0.0:
            v = 0.0
        x = x_n
        y = y_n
        _ref(x, p, &y_ref, &psi_ref)
        ey = y - y_ref
        epsi = psi - psi_ref
        ev = v - p[P_VREF]
        cost += p[P_WY] * ey * ey + p[P_WPSI] * epsi * epsi + p[P_WV] * ev * ev
        cost += p[P_WA] * a * a + p[P_WDELTA] * delta * delta
        cost += p[P_WDDELTA] * (delta - d_last) * (delta - d_last)
        cost += p[P_WDA] * (a - a_last) * (a - a_last)
        if p[P_WPOT] != 0.0:
            cost += p[P_WPOT] * _potential(x, y, lines, obs, m, h, p)
        a_last = a
        d_last = delta
    return cost


def mpc_cost(const double[::1] state0, const double[::1] u, const double[::1] p,
             const double[::1] lines, const double[::1] obs, Py_ssize_t m):
    return _cost(state0, u, p, lines, obs, m)


def mpc_gradient(const double[::1] state0, const double[::1] u, const double[::1] p,
                 const double[::1] lines, const double[::1] obs, Py_ssize_t m, double step):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t k
    cdef double orig, fp, fm
    work_arr = np.array(u, dtype=np.float64)
    grad_arr = np.empty(n)
    cdef double[::1] work = work_arr
    cdef double[::1] grad = grad_arr
    with nogil:
        for k in range(n):
            orig = work[k]
            work[k] = orig + step
            fp = _cost(state0, work, p, lines, obs, m)
            work[k] = orig - step
            fm = _cost(state0, work, p, lines, obs, m)
            work[k] = orig
            grad[k] = (fp - fm) / (2.0 * step)
    return grad_arr


def rollout(const double[::1] state0, const double[::1] u, double dt, double wheelbase):
    cdef Py_ssize_t horizon = u.shape[0] // 2
    out_arr = np.empty((horizon + 1, 4))
    cdef double[:, ::1] out = out_arr
    cdef double x = state0[0]
    cdef double y = state0[1]
    cdef double psi = state0[2]
    cdef double v = state0[3]
    cdef double a, delta, x_n, y_n
    cdef Py_ssize_t h
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = psi
    out[0, 3] = v
    for h in range(horizon):
        a = u[2 * h]
        delta = u[2 * h + 1]
        x_n = x + v * cos(psi) * dt
        y_n = y + v * sin(psi) * dt
        psi = psi + v / wheelbase * tan(delta) * dt
        v = v + a * dt
        if v < 0.0:
            v = 0.0
        x = x_n
        y = y_n
        out[h + 1, 0] = x
        out[h + 1, 1] = y
        out[h + 1, 2] = psi
        out[h + 1, 3] = v
    return out_arr
