# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop kernels (same contracts as ``_fallback``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, tan, tanh, atan, sqrt, fabs, pow, isfinite, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF MODE_WRENCH = 0
DEF MODE_ACTUATOR = 1
DEF GIMBAL_EPS = 1e-6
DEF COS_EPS = 1e-6

# HeliParams field order
DEF H_M = 0
DEF H_G = 1
DEF H_JX = 2
DEF H_JY = 3
DEF H_JZ = 4
DEF H_LM = 5
DEF H_YM = 6
DEF H_HM = 7
DEF H_HT = 8
DEF H_LT = 9
DEF H_CQM = 10
DEF H_DQM = 11
DEF H_CQT = 12
DEF H_DQT = 13
DEF H_CMB = 14
DEF H_CMA = 15
DEF H_SIGN = 16


cdef struct Net:
    const double* W
    const double* b
    const Py_ssize_t* dims
    int nl
    double w_scale
    double omega_scale
    double* buf   # 6 * max_dim scratch


cdef void jet(Net* net, double* x, double* dx, double* ddx, double* y, double* dy, double* ddy) noexcept nogil:
    cdef int k, i, j, n_in, n_out
    cdef Py_ssize_t wo = 0, bo = 0
    cdef double s0, s1, s2, wij, t, s
    cdef int md = 0
    for k in range(net.nl + 1):
        if net.dims[k] > md:
            md = <int>net.dims[k]
    cdef double* ax = net.buf
    cdef double* adx = net.buf + md
    cdef double* addx = net.buf + 2 * md
    cdef double* bx = net.buf + 3 * md
    cdef double* bdx = net.buf + 4 * md
    cdef double* bddx = net.buf + 5 * md
    cdef double* tmp
    for i in range(<int>net.dims[0]):
        ax[i] = x[i]
        adx[i] = dx[i]
        addx[i] = ddx[i]
    for k in range(net.nl):
        n_in = <int>net.dims[k]
        n_out = <int>net.dims[k + 1]
        for i in range(n_out):
            s0 = net.b[bo + i]
            s1 = 0.0
            s2 = 0.0
            for j in range(n_in):
                wij = net.W[wo + i * n_in + j]
                s0 += wij * ax[j]
                s1 += wij * adx[j]
                s2 += wij * addx[j]
            if k < net.nl - 1:
                t = tanh(s0)
                s = 1.0 - t * t
                bx[i] = t
                bdx[i] = s * s1
                bddx[i] = s * s2 - 2.0 * t * s * s1 * s1
            else:
                bx[i] = s0
                bdx[i] = s1
                bddx[i] = s2
        wo += n_in * n_out
        bo += n_out
        tmp = ax; ax = bx; bx = tmp
        tmp = adx; adx = bdx; bdx = tmp
        tmp = addx; addx = bddx; bddx = tmp
    for i in range(<int>net.dims[net.nl]):
        y[i] = ax[i]
        dy[i] = adx[i]
        ddy[i] = addx[i]


cdef inline void rotation(const double* q, double* R) noexcept nogil:
    cdef double cs = cos(q[0]), ss = sin(q[0])
    cdef double ct = cos(q[1]), st = sin(q[1])
    cdef double cp = cos(q[2]), sp = sin(q[2])
    R[0] = cs * ct; R[1] = cs * st * sp - ss * cp; R[2] = cs * st * cp + ss * sp
    R[3] = ss * ct; R[4] = ss * st * sp + cs * cp; R[5] = ss * st * cp - cs * sp
    R[6] = -st;     R[7] = ct * sp;                R[8] = ct * cp


cdef inline double safe_cos(double a) noexcept nogil:
    cdef double c = cos(a)
    if fabs(c) < COS_EPS:
        return -COS_EPS if c < 0 else COS_EPS
    return c


cdef inline double relu(double a) noexcept nogil:
    return a if a > 0 else 0.0


cdef void rotor(double T_M, double T_T, double a, double b, const double* hp, double* f, double* tau) noexcept nogil:
    cdef double sa = sin(a), ca = cos(a), sb = sin(b), cb = cos(b)
    cdef double X_M = -T_M * sa
    cdef double Y_M = T_M * sb
    cdef double Z_M = -T_M * ca * cb
    cdef double Y_T = -T_T
    cdef double Q_M = hp[H_CQM] * pow(T_M, 1.5) + hp[H_SIGN] * hp[H_DQM]
    cdef double Q_T = hp[H_CQT] * pow(T_T, 1.5) + hp[H_SIGN] * hp[H_DQT]
    cdef double R_M = hp[H_CMB] * b - Q_M * sa
    cdef double M_M = hp[H_CMA] * a + Q_M * sb
    cdef double N_M = -Q_M * ca * cb
    cdef double M_T = -Q_T
    f[0] = X_M
    f[1] = Y_M + Y_T
    f[2] = Z_M
    tau[0] = R_M + (Y_M * hp[H_HM] + Z_M * hp[H_YM] + Y_T * hp[H_HT])
    tau[1] = M_M + M_T + (-X_M * hp[H_HM] + Z_M * hp[H_LM])
    tau[2] = N_M + (-Y_M * hp[H_LM] - Y_T * hp[H_LT])


cdef int deriv(Net* net, double t, const double* x, double w1_0, double w2_0, double omega,
               const double* hp, const double* gains, int mode, double* dx, double* u) noexcept nogil:
    """Closed-loop derivative; returns 1 on gimbal lock."""
    cdef double c = cos(omega * t), s = sin(omega * t)
    cdef double w1 = w1_0 * c + w2_0 * s
    cdef double w2 = -w1_0 * s + w2_0 * c
    cdef double xin[3]
    cdef double dxin[3]
    cdef double ddxin[3]
    cdef double out[3]
    cdef double l1[3]
    cdef double l2[3]
    xin[0] = w1 / net.w_scale; xin[1] = w2 / net.w_scale; xin[2] = omega / net.omega_scale
    dxin[0] = omega * w2 / net.w_scale; dxin[1] = -omega * w1 / net.w_scale; dxin[2] = 0.0
    ddxin[0] = -omega * omega * w1 / net.w_scale; ddxin[1] = -omega * omega * w2 / net.w_scale; ddxin[2] = 0.0
    jet(net, xin, dxin, ddxin, out, l1, l2)

    cdef double Kr1 = gains[0], Kr2 = gains[1], Kl1 = gains[2], Kl2 = gains[3]
    cdef double J[3]
    J[0] = hp[H_JX]; J[1] = hp[H_JY]; J[2] = hp[H_JZ]
    cdef double M = hp[H_M], g = hp[H_G]
    cdef const double* p = x
    cdef const double* v = x + 3
    cdef const double* q = x + 6
    cdef const double* w = x + 9
    cdef double R[9]
    rotation(q, R)
    cdef double att[3]
    cdef double pos[3]
    att[0] = q[2] - out[0]; att[1] = q[1] - out[1]; att[2] = q[0]
    pos[0] = p[0]; pos[1] = p[1]; pos[2] = p[2] - w1
    cdef double f[3]
    cdef double tau[3]
    cdef double fin[3]
    cdef double alpha[3]
    cdef double Jw[3]
    cdef double sp, cp, ta, cos_a, ca, cphi, cth, cb, k, TM, TT
    cdef int i
    Jw[0] = J[0] * w[0]; Jw[1] = J[1] * w[1]; Jw[2] = J[2] * w[2]
    if mode == MODE_WRENCH:
        sp = sin(out[0]); cp = cos(out[0])
        alpha[0] = l2[0]
        alpha[1] = cp * l2[1] - sp * l1[0] * l1[1]
        alpha[2] = -sp * l2[1] - cp * l1[0] * l1[1]
        tau[0] = J[0] * (alpha[0] + Kr1 * att[0] + Kr2 * w[0]) + (w[1] * Jw[2] - w[2] * Jw[1])
        tau[1] = J[1] * (alpha[1] + Kr1 * att[1] + Kr2 * w[1]) + (w[2] * Jw[0] - w[0] * Jw[2])
        tau[2] = J[2] * (alpha[2] + Kr1 * att[2] + Kr2 * w[2]) + (w[0] * Jw[1] - w[1] * Jw[0])
        fin[0] = Kl1 * pos[0] + Kl2 * v[0]
        fin[1] = Kl1 * pos[1] + Kl2 * v[1]
        fin[2] = M * (-omega * omega * w1) - M * g + Kl1 * pos[2] + Kl2 * v[2]
        for i in range(3):
            f[i] = R[i] * fin[0] + R[3 + i] * fin[1] + R[6 + i] * fin[2]
    else:
        cphi = safe_cos(out[0]); cth = safe_cos(out[1]); cb = safe_cos(out[2])
        k = M * (g + omega * omega * w1)
        ta = -(sin(out[1]) / cth) * cb / cphi
        ca = atan(ta)
        cos_a = 1.0 / sqrt(1.0 + ta * ta)
        TM = cphi * cth / (cos_a * cb) * k
        TT = TM * sin(out[2]) + sin(out[0]) * cth * k
        rotor(relu(TM), relu(TT), ca, out[2], hp, f, tau)
        fin[0] = Kl1 * pos[0] + Kl2 * v[0]
        fin[1] = Kl1 * pos[1] + Kl2 * v[1]
        fin[2] = Kl1 * pos[2] + Kl2 * v[2]
        for i in range(3):
            f[i] += R[i] * fin[0] + R[3 + i] * fin[1] + R[6 + i] * fin[2]
            tau[i] += J[i] * (Kr1 * att[i] + Kr2 * w[i])
    for i in range(3):
        u[i] = f[i]
        u[3 + i] = tau[i]

    # gravity in body axes: R^T (0, 0, M g)
    cdef double fb[3]
    for i in range(3):
        fb[i] = f[i] + R[6 + i] * M * g
    for i in range(3):
        dx[i] = v[i]
        dx[3 + i] = (R[3 * i] * fb[0] + R[3 * i + 1] * fb[1] + R[3 * i + 2] * fb[2]) / M
    if fabs(q[1]) >= 0.5 * M_PI - GIMBAL_EPS:
        return 1
    cdef double ct = cos(q[1]), tt = tan(q[1])
    sp = sin(q[2]); cp = cos(q[2])
    dx[6] = (sp / ct) * w[1] + (cp / ct) * w[2]
    dx[7] = cp * w[1] - sp * w[2]
    dx[8] = w[0] + sp * tt * w[1] + cp * tt * w[2]
    dx[9] = (tau[0] - (w[1] * Jw[2] - w[2] * Jw[1])) / J[0]
    dx[10] = (tau[1] - (w[2] * Jw[0] - w[0] * Jw[2])) / J[1]
    dx[11] = (tau[2] - (w[0] * Jw[1] - w[1] * Jw[0])) / J[2]
    return 0


cdef int max_dim(const Py_ssize_t[::1] dims):
    cdef int md = 0, k
    for k in range(dims.shape[0]):
        if dims[k] > md:
            md = <int>dims[k]
    return md


def mlp_jet_point(const double[::1] W, const double[::1] b, const Py_ssize_t[::1] dims,
                  const double[::1] x, const double[::1] dx, const double[::1] ddx):
    cdef Net net
    cdef int md = max_dim(dims)
    cdef int n_out = <int>dims[dims.shape[0] - 1]
    if x.shape[0] != dims[0] or dx.shape[0] != dims[0] or ddx.shape[0] != dims[0]:
        raise ValueError("input length does not match the first layer")
    y = np.empty(n_out)
    dy = np.empty(n_out)
    ddy = np.empty(n_out)
    cdef double[::1] yv = y, dyv = dy, ddyv = ddy
    cdef double[::1] xin = np.array(x), dxin = np.array(dx), ddxin = np.array(ddx)
    net.W = &W[0]; net.b = &b[0]; net.dims = &dims[0]; net.nl = <int>dims.shape[0] - 1
    net.buf = <double*>malloc(6 * md * sizeof(double))
    if net.buf == NULL:
        raise MemoryError()
    try:
        jet(&net, &xin[0], &dxin[0], &ddxin[0], &yv[0], &dyv[0], &ddyv[0])
    finally:
        free(net.buf)
    return y, dy, ddy


def run_closed_loop(const double[::1] x0, double w1_0, double w2_0, double omega, Py_ssize_t n_steps, double dt,
                    const double[::1] W, const double[::1] b, const Py_ssize_t[::1] dims,
                    double w_scale, double omega_scale, const double[::1] hp, const double[::1] gains,
                    int mode, double limit):
    if mode != MODE_WRENCH and mode != MODE_ACTUATOR:
        raise ValueError(f"unknown control mode {mode!r}")
    if hp.shape[0] != 17 or gains.shape[0] != 4 or x0.shape[0] != 12:
        raise ValueError("bad parameter vector length")
    X_arr = np.zeros((n_steps + 1, 12))
    U_arr = np.zeros((n_steps + 1, 6))
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] U = U_arr
    cdef Net net
    cdef int md = max_dim(dims)
    net.W = &W[0]; net.b = &b[0]; net.dims = &dims[0]; net.nl = <int>dims.shape[0] - 1
    net.w_scale = w_scale; net.omega_scale = omega_scale
    net.buf = <double*>malloc(6 * md * sizeof(double))
    if net.buf == NULL:
        raise MemoryError()
    cdef double x[12]
    cdef double xs[12]
    cdef double k1[12]
    cdef double k2[12]
    cdef double k3[12]
    cdef double k4[12]
    cdef double udummy[6]
    cdef Py_ssize_t k, i
    cdef double t, h = 0.5 * dt, amax
    cdef int err = 0, diverged = 0
    cdef Py_ssize_t n_done = n_steps
    for i in range(12):
        x[i] = x0[i]
        X[0, i] = x0[i]
    try:
        with nogil:
            for k in range(n_steps):
                t = k * dt
                err = deriv(&net, t, x, w1_0, w2_0, omega, &hp[0], &gains[0], mode, k1, &U[k, 0])
                if err == 0:
                    for i in range(12):
                        xs[i] = x[i] + h * k1[i]
                    err = deriv(&net, t + h, xs, w1_0, w2_0, omega, &hp[0], &gains[0], mode, k2, udummy)
                if err == 0:
                    for i in range(12):
                        xs[i] = x[i] + h * k2[i]
                    err = deriv(&net, t + h, xs, w1_0, w2_0, omega, &hp[0], &gains[0], mode, k3, udummy)
                if err == 0:
                    for i in range(12):
                        xs[i] = x[i] + dt * k3[i]
                    err = deriv(&net, t + dt, xs, w1_0, w2_0, omega, &hp[0], &gains[0], mode, k4, udummy)
                if err != 0:
                    for i in range(12):
                        X[k + 1, i] = 0.0 / 0.0
                    diverged = 1
                    n_done = k + 1
                    break
                amax = 0.0
                for i in range(12):
                    x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    X[k + 1, i] = x[i]
                    if not isfinite(x[i]):
                        amax = limit + 1.0 if limit == limit else 1.0 / 0.0
                    elif fabs(x[i]) > amax:
                        amax = fabs(x[i])
                if amax > limit:
                    diverged = 1
                    n_done = k + 1
                    break
            if not diverged:
                deriv(&net, n_steps * dt, x, w1_0, w2_0, omega, &hp[0], &gains[0], mode, k1, &U[n_steps, 0])
    finally:
        free(net.buf)
    return X_arr, U_arr, n_done, bool(diverged)
