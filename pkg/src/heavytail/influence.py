"""Influence functions and their exact Gaussian smoothings.

The two bounded influence functions

    psi_sym(t)  = t - t^3/6 on [-sqrt(2), sqrt(2)], saturating at +-2*sqrt(2)/3
    psi_asym(t) = t - t^2/2 on [0, 1],              saturating at 1/2

replace the identity in all estimators of this package; their key property
is the polynomial sandwich

    -log(1 - t + t^2/2) <= psi_sym(t)  <= log(1 + t + t^2/2)
    -log(1 - t + t^2)   <= psi_asym(t) <= log(1 + t)        (t >= 0).

Because both are piecewise polynomial, the smoothed expectations

    phi_sym(m, s)  = E[psi_sym(m + s W)]
    phi_asym(m, s) = E[psi_asym((m + s W)_+)]
    phi_sq(m, s)   = E[psi_asym((m + s W)^2)]

with W ~ N(0,1) have closed forms in the normal CDF; they are the
computational core of every estimator.  Heavy lifting is delegated to the
selected kernel backend (see ``kernels``).
"""

import math

import numpy as np
from scipy.special import ndtr

from . import kernels
from .kernels import phi_asym, phi_asym_dm, phi_sq, phi_sq_dm, phi_sym, phi_sym_dm, r_sym

__all__ = [
    "SQRT2",
    "PSI_SYM_MAX",
    "psi_sym",
    "psi_asym",
    "std_normal_cdf",
    "truncated_moment",
    "phi_sym",
    "phi_sym_dm",
    "r_sym",
    "phi_asym",
    "phi_asym_dm",
    "phi_sq",
    "phi_sq_dm",
]

SQRT2 = math.sqrt(2.0)
PSI_SYM_MAX = 2.0 * SQRT2 / 3.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def psi_sym(t):
    """Symmetric influence function: odd, bounded by 2*sqrt(2)/3."""
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"psi_sym requires finite input, got {t}")
    if t > SQRT2:
        return PSI_SYM_MAX
    if t < -SQRT2:
        return -PSI_SYM_MAX
    return t - t**3 / 6.0


def psi_asym(t):
    """Asymmetric influence function on t >= 0: range [0, 1/2]."""
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise ValueError(f"psi_asym requires finite t >= 0, got {t}")
    if t >= 1.0:
        return 0.5
    return t - t * t / 2.0


def std_normal_cdf(a):
    """F(a) = P(W <= a) for W ~ N(0,1), accurate to well below 1e-12."""
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("std_normal_cdf requires finite input")
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def _gauss_pdf(a):
    return _INV_SQRT_2PI * math.exp(-0.5 * a * a)


def truncated_moment(a, p):
    """E[1(W <= a) W^p] for W ~ N(0,1) and integer p in 0..4.

    Closed forms in F and the Gaussian density g:

        p=0: F(a)                   p=1: -g(a)
        p=2: F(a) - a g(a)          p=3: -(a^2 + 2) g(a)
        p=4: 3 F(a) - (a^3 + 3a) g(a)
    """
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"truncated_moment requires finite a, got {a}")
    if p not in (0, 1, 2, 3, 4):
        raise ValueError(f"truncated_moment requires p in 0..4, got {p}")
    F = std_normal_cdf(a)
    g = _gauss_pdf(a)
    if p == 0:
        return F
    if p == 1:
        return -g
    if p == 2:
        return F - a * g
    if p == 3:
        return -(a * a + 2.0) * g
    return 3.0 * F - (a**3 + 3.0 * a) * g


def backend():
    """Name of the kernel backend in use ('cython' or 'numpy')."""
    return kernels.BACKEND
