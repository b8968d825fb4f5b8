"""NumPy backend for the Gaussian-smoothed influence kernels.

Every function is elementwise over 1-D float64 arrays ``m`` (Gaussian mean)
and ``sigma`` (Gaussian standard deviation, >= 0) and returns a new array.
The compiled backend in ``_kernels_cy`` implements the same contracts; the
two are cross-checked in the test suite and selected in ``kernels.py``.

Conventions shared by both backends:

* ``sigma < SIGMA_EPS`` falls back to the deterministic limit (the closed
  forms divide by sigma inside the normal-CDF arguments).
* When every kink of the piecewise influence function is more than
  ``TAIL_Z`` standard deviations away on the same side, the exact saturation
  value is returned.  This avoids the catastrophic cancellation between the
  polynomial main term and the correction term far outside the kinks; inside
  that window the direct evaluation is accurate because the Gaussian tail
  factors underflow long before any polynomial factor grows.
"""

import numpy as np
from scipy.special import ndtr

SQRT2 = np.sqrt(2.0)
PSI_SYM_MAX = 2.0 * SQRT2 / 3.0
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
SIGMA_EPS = 1e-10
TAIL_Z = 40.0
# r_sym only: with both kinks beyond R_TAIL sigmas the correction is below
# 1e-17 in absolute value (|m| < sqrt2 and sigma < 0.15 are then forced, so
# every polynomial factor is O(1) against a Gaussian tail < 1.2e-20)
R_TAIL = 9.5


def _gauss(z):
    return INV_SQRT_2PI * np.exp(-0.5 * z * z)


def psi_sym_arr(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(
            np.abs(t) <= SQRT2, t - t**3 / 6.0, np.sign(t) * PSI_SYM_MAX
        )


def psi_asym_arr(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(t <= 1.0, t - t * t / 2.0, 0.5)


def psi_sq_arr(t):
    # psi_asym applied to t**2; saturates once |t| >= 1
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        u = t * t
        return np.where(u <= 1.0, u - u * u / 2.0, 0.5)


def phi_sym(m, sigma):
    """E[psi_sym(m + sigma W)], W ~ N(0,1)."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        zp = (SQRT2 - m) / s      # upper kink z-score
        zm = (SQRT2 + m) / s      # lower kink z-score (sign flipped)
        sat_hi = zp < -TAIL_Z     # m far above sqrt(2)
        sat_lo = zm < -TAIL_Z     # m far below -sqrt(2)

        cp = ndtr(-zp)            # F((-sqrt2 + m)/sigma)
        cm = ndtr(-zm)            # F((-sqrt2 - m)/sigma)
        gp = _gauss(zp)
        gm = _gauss(zm)

        main = m * (1.0 - s * s / 2.0) - m**3 / 6.0
        r = (
            PSI_SYM_MAX * (cp - cm)
            - (m - m**3 / 6.0) * (cp + cm)
            + s * (1.0 - m * m / 2.0) * (gm - gp)
            + 0.5 * m * s * s * (cp + cm + zm * gm + zp * gp)
            + (s**3 / 6.0) * ((zp * zp + 2.0) * gp - (zm * zm + 2.0) * gm)
        )
        out = main + r

    out = np.where(sat_hi, PSI_SYM_MAX, out)
    out = np.where(sat_lo, -PSI_SYM_MAX, out)
    return np.where(deg, psi_sym_arr(m), out)


def phi_sym_dm(m, sigma):
    """d/dm of phi_sym: E[(1 - t^2/2) 1(|t| <= sqrt2)], t = m + sigma W."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        zp = (SQRT2 - m) / s
        zm = (SQRT2 + m) / s
        sat = (zp < -TAIL_Z) | (zm < -TAIL_Z)
        cp = ndtr(-zp)
        cm = ndtr(-zm)
        gp = _gauss(zp)
        gm = _gauss(zm)
        # F(zp) - F(-zm) = 1 - cp - cm
        out = (
            (1.0 - m * m / 2.0 - s * s / 2.0) * (1.0 - cp - cm)
            + m * s * (gp - gm)
            + 0.5 * s * s * (zp * gp + zm * gm)
        )

    out = np.where(sat, 0.0, out)
    dpsi = np.where(np.abs(m) <= SQRT2, 1.0 - m * m / 2.0, 0.0)
    return np.where(deg, dpsi, out)


def r_sym(m, sigma):
    """Correction term r with phi_sym = m(1 - sigma^2/2) - m^3/6 + r."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        zp = (SQRT2 - m) / s
        zm = (SQRT2 + m) / s
        sat_hi = zp < -TAIL_Z
        sat_lo = zm < -TAIL_Z
        cp = ndtr(-zp)
        cm = ndtr(-zm)
        gp = _gauss(zp)
        gm = _gauss(zm)
        r = (
            PSI_SYM_MAX * (cp - cm)
            - (m - m**3 / 6.0) * (cp + cm)
            + s * (1.0 - m * m / 2.0) * (gm - gp)
            + 0.5 * m * s * s * (cp + cm + zm * gm + zp * gp)
            + (s**3 / 6.0) * ((zp * zp + 2.0) * gp - (zm * zm + 2.0) * gm)
        )
        main = m * (1.0 - s * s / 2.0) - m**3 / 6.0
        r = np.where(sat_hi, PSI_SYM_MAX - main, r)
        r = np.where(sat_lo, -PSI_SYM_MAX - main, r)
        r = np.where((zp > R_TAIL) & (zm > R_TAIL), 0.0, r)
        r_deg = psi_sym_arr(m) - (m * (1.0 - sigma * sigma / 2.0) - m**3 / 6.0)
    return np.where(deg, r_deg, r)


def phi_asym(m, sigma):
    """E[psi_asym((m + sigma W)_+)], W ~ N(0,1)."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        b1 = (1.0 - m) / s
        b0 = -m / s
        sat_hi = b1 < -TAIL_Z          # all mass beyond the plateau
        sat_lo = b0 > TAIL_Z           # all mass below zero
        f1 = ndtr(b1)
        f0 = ndtr(b0)
        g1 = _gauss(b1)
        g0 = _gauss(b0)
        out = (
            (m - m * m / 2.0 - s * s / 2.0) * (f1 - f0)
            + 0.5 * (1.0 - f1)
            - 0.5 * s * (1.0 - m) * g1
            + s * (1.0 - m / 2.0) * g0
        )

    out = np.where(sat_hi, 0.5, out)
    out = np.where(sat_lo, 0.0, out)
    return np.where(deg, psi_asym_arr(np.maximum(m, 0.0)), out)


def phi_asym_dm(m, sigma):
    """d/dm of phi_asym: E[(1 - t) 1(0 <= t <= 1)], t = m + sigma W."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        b1 = (1.0 - m) / s
        b0 = -m / s
        sat = (b1 < -TAIL_Z) | (b0 > TAIL_Z)
        out = (1.0 - m) * (ndtr(b1) - ndtr(b0)) + s * (_gauss(b1) - _gauss(b0))

    out = np.where(sat, 0.0, out)
    dpsi = np.where((m >= 0.0) & (m <= 1.0), 1.0 - m, 0.0)
    return np.where(deg, dpsi, out)


def phi_sq(m, sigma):
    """E[psi_asym((m + sigma W)^2)], W ~ N(0,1)."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        zp = (1.0 - m) / s
        zm = (1.0 + m) / s
        sat_hi = zp < -TAIL_Z          # m >> 1
        sat_lo = zm < -TAIL_Z          # m << -1
        cp = ndtr(-zp)                 # F((-1 + m)/sigma)
        cm = ndtr(-zm)                 # F((-1 - m)/sigma)
        gp = _gauss(zp)
        gm = _gauss(zm)
        m2 = m * m
        s2 = s * s
        main = m2 + s2 - 0.5 * (m2 * m2 + 6.0 * m2 * s2 + 3.0 * s2 * s2)
        r2 = (
            0.5 * ((m2 - 1.0) ** 2 + (6.0 * m2 - 2.0) * s2 + 3.0 * s2 * s2) * (cm + cp)
            + 0.5 * s * (s2 * (3.0 - 5.0 * m) - (1.0 + m) * (1.0 - m) ** 2) * gm
            + 0.5 * s * (s2 * (3.0 + 5.0 * m) - (1.0 - m) * (1.0 + m) ** 2) * gp
        )
        out = main + r2

    out = np.where(sat_hi | sat_lo, 0.5, out)
    return np.where(deg, psi_sq_arr(m), out)


def phi_sq_dm(m, sigma):
    """d/dm of phi_sq: 2 E[(t - t^3) 1(|t| <= 1)], t = m + sigma W."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    deg = sigma < SIGMA_EPS
    s = np.where(deg, 1.0, sigma)

    with np.errstate(over="ignore", invalid="ignore"):
        zp = (1.0 - m) / s
        zm = (1.0 + m) / s
        sat = (zp < -TAIL_Z) | (zm < -TAIL_Z)
        cp = ndtr(-zp)
        cm = ndtr(-zm)
        gp = _gauss(zp)
        gm = _gauss(zm)
        df = 1.0 - cp - cm            # F(zp) - F(-zm)
        out = 2.0 * (
            (m - m**3) * df
            + s * (1.0 - 3.0 * m * m) * (gm - gp)
            - 3.0 * m * s * s * (df - zp * gp - zm * gm)
            - s**3 * ((zm * zm + 2.0) * gm - (zp * zp + 2.0) * gp)
        )

    out = np.where(sat, 0.0, out)
    dpsi = np.where(np.abs(m) <= 1.0, 2.0 * (m - m**3), 0.0)
    return np.where(deg, dpsi, out)
