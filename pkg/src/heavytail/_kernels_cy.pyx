# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the Gaussian-smoothed influence kernels.

Same elementwise contracts as ``_kernels_np``; see that module for the
branching conventions (degenerate sigma, tail saturation).  Scalar special
functions come from libm, so the hot loops avoid NumPy temporaries and skip
the tail terms whenever the kink z-scores put them below underflow.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, exp, fabs, sqrt

cnp.import_array()

cdef double SQRT2 = sqrt(2.0)
cdef double PSI_SYM_MAX = 2.0 * SQRT2 / 3.0
cdef double INV_SQRT_2PI = 0.3989422804014326779
cdef double INV_SQRT2 = 1.0 / SQRT2
cdef double SIGMA_EPS = 1e-10
cdef double TAIL_Z = 40.0
cdef double R_TAIL = 9.5    # r_sym central skip; see _kernels_np.R_TAIL


cdef inline double _cdf(double a) noexcept nogil:
    return 0.5 * erfc(-a * INV_SQRT2)


cdef inline double _gauss(double z) noexcept nogil:
    return INV_SQRT_2PI * exp(-0.5 * z * z)


cdef inline double _psi_sym(double t) noexcept nogil:
    if t > SQRT2:
        return PSI_SYM_MAX
    if t < -SQRT2:
        return -PSI_SYM_MAX
    return t - t * t * t / 6.0


cdef inline double _psi_asym(double t) noexcept nogil:
    if t >= 1.0:
        return 0.5
    return t - t * t / 2.0


cdef inline double _phi_sym(double m, double s) noexcept nogil:
    cdef double zp, zm, cp, cm, gp, gm, main, r
    if s < SIGMA_EPS:
        return _psi_sym(m)
    zp = (SQRT2 - m) / s
    zm = (SQRT2 + m) / s
    if zp < -TAIL_Z:
        return PSI_SYM_MAX
    if zm < -TAIL_Z:
        return -PSI_SYM_MAX
    main = m * (1.0 - s * s / 2.0) - m * m * m / 6.0
    if zp > TAIL_Z and zm > TAIL_Z:
        return main
    cp = _cdf(-zp)
    cm = _cdf(-zm)
    gp = _gauss(zp)
    gm = _gauss(zm)
    r = (PSI_SYM_MAX * (cp - cm)
         - (m - m * m * m / 6.0) * (cp + cm)
         + s * (1.0 - m * m / 2.0) * (gm - gp)
         + 0.5 * m * s * s * (cp + cm + zm * gm + zp * gp)
         + (s * s * s / 6.0) * ((zp * zp + 2.0) * gp - (zm * zm + 2.0) * gm))
    return main + r


cdef inline double _phi_sym_dm(double m, double s) noexcept nogil:
    cdef double zp, zm, cp, cm, gp, gm
    if s < SIGMA_EPS:
        if fabs(m) <= SQRT2:
            return 1.0 - m * m / 2.0
        return 0.0
    zp = (SQRT2 - m) / s
    zm = (SQRT2 + m) / s
    if zp < -TAIL_Z or zm < -TAIL_Z:
        return 0.0
    if zp > TAIL_Z and zm > TAIL_Z:
        return 1.0 - m * m / 2.0 - s * s / 2.0
    cp = _cdf(-zp)
    cm = _cdf(-zm)
    gp = _gauss(zp)
    gm = _gauss(zm)
    return ((1.0 - m * m / 2.0 - s * s / 2.0) * (1.0 - cp - cm)
            + m * s * (gp - gm)
            + 0.5 * s * s * (zp * gp + zm * gm))


cdef inline double _r_sym(double m, double s) noexcept nogil:
    cdef double zp, zm, cp, cm, gp, gm, main
    if s < SIGMA_EPS:
        return _psi_sym(m) - (m * (1.0 - s * s / 2.0) - m * m * m / 6.0)
    zp = (SQRT2 - m) / s
    zm = (SQRT2 + m) / s
    main = m * (1.0 - s * s / 2.0) - m * m * m / 6.0
    if zp < -TAIL_Z:
        return PSI_SYM_MAX - main
    if zm < -TAIL_Z:
        return -PSI_SYM_MAX - main
    if zp > R_TAIL and zm > R_TAIL:
        return 0.0
    cp = _cdf(-zp)
    cm = _cdf(-zm)
    gp = _gauss(zp)
    gm = _gauss(zm)
    return (PSI_SYM_MAX * (cp - cm)
            - (m - m * m * m / 6.0) * (cp + cm)
            + s * (1.0 - m * m / 2.0) * (gm - gp)
            + 0.5 * m * s * s * (cp + cm + zm * gm + zp * gp)
            + (s * s * s / 6.0) * ((zp * zp + 2.0) * gp - (zm * zm + 2.0) * gm))


cdef inline double _phi_asym(double m, double s) noexcept nogil:
    cdef double b1, b0, f1, f0, g1, g0
    if s < SIGMA_EPS:
        if m <= 0.0:
            return 0.0
        return _psi_asym(m)
    b1 = (1.0 - m) / s
    b0 = -m / s
    if b1 < -TAIL_Z:
        return 0.5
    if b0 > TAIL_Z:
        return 0.0
    f1 = _cdf(b1)
    f0 = _cdf(b0)
    g1 = _gauss(b1)
    g0 = _gauss(b0)
    return ((m - m * m / 2.0 - s * s / 2.0) * (f1 - f0)
            + 0.5 * (1.0 - f1)
            - 0.5 * s * (1.0 - m) * g1
            + s * (1.0 - m / 2.0) * g0)


cdef inline double _phi_asym_dm(double m, double s) noexcept nogil:
    cdef double b1, b0
    if s < SIGMA_EPS:
        if 0.0 <= m <= 1.0:
            return 1.0 - m
        return 0.0
    b1 = (1.0 - m) / s
    b0 = -m / s
    if b1 < -TAIL_Z or b0 > TAIL_Z:
        return 0.0
    return (1.0 - m) * (_cdf(b1) - _cdf(b0)) + s * (_gauss(b1) - _gauss(b0))


cdef inline double _phi_sq(double m, double s) noexcept nogil:
    cdef double zp, zm, cp, cm, gp, gm, m2, s2, main, r2
    if s < SIGMA_EPS:
        m2 = m * m
        if m2 >= 1.0:
            return 0.5
        return m2 - m2 * m2 / 2.0
    zp = (1.0 - m) / s
    zm = (1.0 + m) / s
    if zp < -TAIL_Z or zm < -TAIL_Z:
        return 0.5
    m2 = m * m
    s2 = s * s
    main = m2 + s2 - 0.5 * (m2 * m2 + 6.0 * m2 * s2 + 3.0 * s2 * s2)
    if zp > TAIL_Z and zm > TAIL_Z:
        return main
    cp = _cdf(-zp)
    cm = _cdf(-zm)
    gp = _gauss(zp)
    gm = _gauss(zm)
    r2 = (0.5 * ((m2 - 1.0) * (m2 - 1.0) + (6.0 * m2 - 2.0) * s2 + 3.0 * s2 * s2) * (cm + cp)
          + 0.5 * s * (s2 * (3.0 - 5.0 * m) - (1.0 + m) * (1.0 - m) * (1.0 - m)) * gm
          + 0.5 * s * (s2 * (3.0 + 5.0 * m) - (1.0 - m) * (1.0 + m) * (1.0 + m)) * gp)
    return main + r2


cdef inline double _phi_sq_dm(double m, double s) noexcept nogil:
    cdef double zp, zm, cp, cm, gp, gm, df, s2
    if s < SIGMA_EPS:
        if fabs(m) <= 1.0:
            return 2.0 * (m - m * m * m)
        return 0.0
    zp = (1.0 - m) / s
    zm = (1.0 + m) / s
    if zp < -TAIL_Z or zm < -TAIL_Z:
        return 0.0
    s2 = s * s
    if zp > TAIL_Z and zm > TAIL_Z:
        return 2.0 * ((m - m * m * m) - 3.0 * m * s2)
    cp = _cdf(-zp)
    cm = _cdf(-zm)
    gp = _gauss(zp)
    gm = _gauss(zm)
    df = 1.0 - cp - cm
    return 2.0 * ((m - m * m * m) * df
                  + s * (1.0 - 3.0 * m * m) * (gm - gp)
                  - 3.0 * m * s2 * (df - zp * gp - zm * gm)
                  - s * s2 * ((zm * zm + 2.0) * gm - (zp * zp + 2.0) * gp))


ctypedef double (*kernel_fn)(double, double) noexcept nogil


cdef _apply(kernel_fn fn, cnp.ndarray[cnp.float64_t, ndim=1] m,
            cnp.ndarray[cnp.float64_t, ndim=1] sigma):
    cdef Py_ssize_t n = m.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = fn(m[i], sigma[i])
    return out


def phi_sym(m, sigma):
    return _apply(_phi_sym, m, sigma)


def phi_sym_dm(m, sigma):
    return _apply(_phi_sym_dm, m, sigma)


def r_sym(m, sigma):
    return _apply(_r_sym, m, sigma)


def phi_asym(m, sigma):
    return _apply(_phi_asym, m, sigma)


def phi_asym_dm(m, sigma):
    return _apply(_phi_asym_dm, m, sigma)


def phi_sq(m, sigma):
    return _apply(_phi_sq, m, sigma)


def phi_sq_dm(m, sigma):
    return _apply(_phi_sq_dm, m, sigma)
