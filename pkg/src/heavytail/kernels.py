"""Backend selection for the influence kernels.

The compiled extension is preferred when it imported cleanly; the NumPy
implementation is the fallback.  ``HEAVYTAIL_BACKEND=numpy|cython`` forces a
choice (forcing ``cython`` when the extension is missing raises).  All seven
kernels are elementwise maps ``(m, sigma) -> value`` over float64 arrays of
identical shape; ``as_pair`` handles broadcasting and layout.
"""

import os

import numpy as np

from . import _kernels_np

try:
    from . import _kernels_cy
except ImportError:  # extension not built; pure-Python install
    _kernels_cy = None

_NAMES = (
    "phi_sym",
    "phi_sym_dm",
    "r_sym",
    "phi_asym",
    "phi_asym_dm",
    "phi_sq",
    "phi_sq_dm",
)

BACKENDS = {"numpy": _kernels_np}
if _kernels_cy is not None:
    BACKENDS["cython"] = _kernels_cy


def _pick_default():
    forced = os.environ.get("HEAVYTAIL_BACKEND")
    if forced:
        if forced not in BACKENDS:
            raise ImportError(
                f"HEAVYTAIL_BACKEND={forced!r} unavailable; built backends: "
                f"{sorted(BACKENDS)}"
            )
        return forced
    return "cython" if "cython" in BACKENDS else "numpy"


BACKEND = _pick_default()
_active = BACKENDS[BACKEND]


def use_backend(name):
    """Switch the active backend (used by tests and benchmarks)."""
    global BACKEND, _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(BACKENDS)}")
    BACKEND = name
    _active = BACKENDS[name]


def as_pair(m, sigma):
    """Broadcast (m, sigma) to matching contiguous 1-D arrays + shape."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m, sigma = np.broadcast_arrays(m, sigma)
    shape = m.shape
    return (
        np.ascontiguousarray(m.reshape(-1)),
        np.ascontiguousarray(sigma.reshape(-1)),
        shape,
    )


def _make(name):
    def call(m, sigma):
        mf, sf, shape = as_pair(m, sigma)
        out = getattr(_active, name)(mf, sf)
        return np.asarray(out).reshape(shape)

    call.__name__ = name
    return call


phi_sym = _make("phi_sym")
phi_sym_dm = _make("phi_sym_dm")
r_sym = _make("r_sym")
phi_asym = _make("phi_asym")
phi_asym_dm = _make("phi_asym_dm")
phi_sq = _make("phi_sq")
phi_sq_dm = _make("phi_sq_dm")
