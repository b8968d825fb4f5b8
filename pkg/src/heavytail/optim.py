"""Shared optimization machinery for the minimax estimator fits.

All estimators in this package reduce to the same geometric problem: an
oracle assigns a value E(u) to each direction u (unit vectors, or unit
rank-one pairs for matrices), and the estimate is a point x whose worst
directional gap  sup_u <u, x> - E(u)  must be driven below a certified
radius (or simply minimized).  Because every oracle here is antisymmetric,
that one-sided sup equals the two-sided sup of |<u, x> - E(u)|.

The engine is a cutting-plane loop: the gap is a supremum of affine
functions of x, so each probed direction yields an exact cut; the inner
problem over the accumulated cuts is solved by least squares first (cheap,
excellent near the optimum of these almost-linear oracles) and by a
Chebyshev linear program once least squares stalls; worst directions are
found by projected gradient ascent on the sphere with random restarts.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog


@dataclass
class SearchConfig:
    """Knobs for the sphere searches used to find worst directions."""

    restarts: int = 16
    max_iters: int = 500
    tol: float = 1e-9
    sweeps: int = 4          # alternating sweeps for pair (bilinear) searches
    certificate_restarts: int = 64


def random_unit(rng, d):
    v = rng.standard_normal(d)
    n = np.linalg.norm(v)
    while n == 0.0:
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
    return v / n


def sphere_ascent(value, grad, theta0, max_iters=500, tol=1e-9):
    """Projected gradient ascent on the unit sphere with backtracking.

    Each iteration first tries the fixed point normalize(grad) — exact for
    linear objectives, and all oracles here are nearly linear — and falls
    back to backtracked projected-gradient steps.  ``grad`` may be a smooth
    surrogate (e.g. ignoring a tiny Monte-Carlo residual); correctness comes
    from accepting steps on ``value`` improvements only.
    """
    theta = np.asarray(theta0, dtype=float)
    theta = theta / np.linalg.norm(theta)
    val = value(theta)
    step = None
    fp_fails = 0
    history = []
    for _ in range(max_iters):
        g = grad(theta)
        pg = g - (g @ theta) * theta
        ng = np.linalg.norm(pg)
        if ng <= tol:
            break
        moved = False
        gn = np.linalg.norm(g)
        if fp_fails < 2 and gn > 0:
            cand = g / gn
            cval = value(cand)
            if cval > val:
                theta, val = cand, cval
                moved = True
                fp_fails = 0
            else:
                fp_fails += 1
        if not moved:
            if step is None:
                step = 1.0 / ng          # first move spans an O(1) angle
            while step * ng > 1e-16:
                cand = theta + step * pg
                cand /= np.linalg.norm(cand)
                cval = value(cand)
                if cval > val:
                    theta, val = cand, cval
                    step *= 1.5
                    moved = True
                    break
                step *= 0.4
        if not moved:
            break
        history.append(val)
        if len(history) >= 5 and history[-1] - history[-5] <= 1e-11 * max(1.0, abs(val)):
            break
    return theta, val


def sphere_max(value, grad, d, rng, warm_starts=(), restarts=16,
               max_iters=500, tol=1e-9):
    """Multi-restart sphere maximization; deterministic given ``rng``."""
    best_theta, best_val = None, -math.inf
    starts = [np.asarray(w, dtype=float) for w in warm_starts if np.linalg.norm(w) > 0]
    while len(starts) < restarts:
        starts.append(random_unit(rng, d))
    for s in starts:
        theta, val = sphere_ascent(value, grad, s, max_iters=max_iters, tol=tol)
        if val > best_val:
            best_theta, best_val = theta, val
    return best_theta, best_val


# ---------------------------------------------------------------------------
# Cutting-plane center fit
# ---------------------------------------------------------------------------

@dataclass
class CenterFit:
    x: np.ndarray
    gaps: tuple            # achieved sup gap per family, at x
    certified: bool
    rounds: int
    oracle_calls: int
    message: str = ""


def _ls_solve(W, e, weights):
    A = W * weights[:, None]
    b = e * weights
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol


def _chebyshev_solve(W, e, rho, x_fallback):
    # min s  s.t.  -s*rho_j <= <w_j, x> - e_j <= s*rho_j
    J, D = W.shape
    c = np.zeros(D + 1)
    c[-1] = 1.0
    A_ub = np.vstack([
        np.hstack([W, -rho[:, None]]),
        np.hstack([-W, -rho[:, None]]),
    ])
    b_ub = np.concatenate([e, -e])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub,
                  bounds=[(None, None)] * D + [(0, None)], method="highs")
    if not res.success:
        return x_fallback, False
    return res.x[:D], True


def fit_minimax_center(dim, families, *, x0=None, tol=1e-9, max_rounds=60,
                       seed=0, rng=None):
    """Drive the worst directional gap of every family below its target.

    Each family provides:
      ``target``              certified radius, or None to plain-minimize
      ``seed_cuts(rng)``      initial list of (w, value) cuts
      ``worst(x, rng)``       (w, value, gap) for the worst direction at x
    where w is the cut direction embedded in R^dim so that the pairing is
    <w, x>.  Cuts are exact (the model underestimates the true gap), and by
    antisymmetry each (w, e) implies the mirrored cut (-w, -e).
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(seed))
    rows, vals, scales = [], [], []
    targets = [f.target for f in families]
    rho = np.array([1.0 if t is None else max(t, 1e-300) for t in targets])

    for fi, fam in enumerate(families):
        for w, e in fam.seed_cuts(rng):
            rows.append(w)
            vals.append(e)
            scales.append(rho[fi])

    anchor = np.asarray(x0, dtype=float) if x0 is not None else None

    def inner(x_prev, use_lp):
        W = np.asarray(rows)
        e = np.asarray(vals)
        s = np.asarray(scales)
        if use_lp:
            x, ok = _chebyshev_solve(W, e, s, x_prev)
            if ok:
                return x
        if anchor is not None:
            # least squares for the correction: keeps x0 in the null space
            # of the accumulated cuts (rank-deficient early rounds)
            return anchor + _ls_solve(W, e - W @ anchor, 1.0 / s)
        return _ls_solve(W, e, 1.0 / s)

    # Solve from the seed cuts before the first certificate search, so that
    # degenerate geometries (e.g. d = 1) return the exact cut solution.
    x = inner(None, False)
    best_x, best_score, best_gaps = None, math.inf, None
    use_lp = False
    stall = 0
    calls = 0
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        gaps = []
        for fi, fam in enumerate(families):
            w, e, gap = fam.worst(x, rng)
            gaps.append(gap)
            rows.append(w)
            vals.append(e)
            scales.append(rho[fi])
        calls = sum(f.calls for f in families)
        if any(t is not None for t in targets):
            score = max(g - (t if t is not None else 0.0)
                        for g, t in zip(gaps, targets))
        else:
            score = max(gaps)
        if score < best_score - 1e-15:
            improvement = best_score - score
            best_x, best_score, best_gaps = x.copy(), score, tuple(gaps)
        else:
            improvement = 0.0
        if all(t is not None for t in targets) and all(
                g <= t + tol for g, t in zip(gaps, targets)):
            return CenterFit(x.copy(), tuple(gaps), True, rounds, calls)
        if improvement <= max(1e-10 * max(abs(best_score), 1.0), 1e-14):
            stall += 1
        else:
            stall = 0
        if stall >= 2:
            if not use_lp:
                use_lp = True     # switch inner solver, give it two more tries
                stall = 0
            else:
                break
        x = inner(x, use_lp)

    certified = all(t is not None for t in targets) and all(
        g <= t + tol for g, t in zip(best_gaps, targets))
    return CenterFit(best_x, best_gaps, certified, rounds, calls,
                     message="gap target not reached" if not certified else "")


# ---------------------------------------------------------------------------
# Ball-constrained quadratic solvers (secular equation on the spectrum)
# ---------------------------------------------------------------------------

def _secular_root(a2, d2, r):
    """Solve sum a2_i/(d2_i + nu)^2 = r^2 for nu >= 0 (decreasing, convex)."""
    norm_a = math.sqrt(np.sum(a2))
    if norm_a == 0.0:
        return 0.0
    lo, hi = 0.0, norm_a / r
    nu = min(hi, max(lo, norm_a / r - np.min(d2)))
    for _ in range(200):
        den = d2 + nu
        phi = np.sum(a2 / den**2) - r * r
        if abs(phi) <= 1e-15 * r * r:
            break
        if phi > 0:
            lo = nu
        else:
            hi = nu
        dphi = -2.0 * np.sum(a2 / den**3)
        step = nu - phi / dphi
        nu = step if lo < step < hi else 0.5 * (lo + hi)
    return nu


class BallLstsq:
    """min_z ||A z - b||  subject to  ||z|| <= r, for varying b and r.

    SVD-based so the per-call work is a couple of diagonal solves; used by
    the bisection in the confidence-region min-norm machinery.
    """

    def __init__(self, A):
        self.U, self.s, self.Vt = np.linalg.svd(np.asarray(A, float),
                                                full_matrices=False)

    def solve(self, b, r):
        b = np.asarray(b, dtype=float)
        c = self.U.T @ b
        perp2 = max(float(b @ b - c @ c), 0.0)
        s = self.s
        act = s > s[0] * 1e-14 if s.size and s[0] > 0 else np.zeros_like(s, bool)
        y0 = np.zeros_like(c)
        y0[act] = c[act] / s[act]
        base2 = perp2 + float(np.sum(c[~act] ** 2))
        if np.linalg.norm(y0) <= r:
            z = self.Vt.T @ y0
            return z, math.sqrt(base2)
        a2 = (s * c) ** 2
        nu = _secular_root(a2, s * s, r)
        y = s * c / (s * s + nu)
        z = self.Vt.T @ y
        resid2 = perp2 + float(np.sum((c - s * y) ** 2))
        return z, math.sqrt(max(resid2, 0.0))


def min_quadratic_on_ball(G, v, radius):
    """Minimize <x, G x> - 2 <x, v> over ||x|| <= radius (G sym PSD)."""
    G = np.asarray(G, dtype=float)
    v = np.asarray(v, dtype=float)
    d, Q = np.linalg.eigh(G)
    d = np.maximum(d, 0.0)
    vt = Q.T @ v
    act = d > max(d[-1], 0.0) * 1e-14 + 0.0
    if d[-1] <= 0:
        act = np.zeros_like(d, bool)
    x0 = np.zeros_like(vt)
    x0[act] = vt[act] / d[act]
    null_force = np.any(~act & (np.abs(vt) > 1e-14 * max(1.0, np.linalg.norm(v))))
    if not null_force and np.linalg.norm(x0) <= radius:
        return Q @ x0
    nu = _secular_root(vt * vt, d, radius)
    if nu <= 0.0:
        nu = np.finfo(float).tiny
    x = vt / (d + nu)
    return Q @ x


def golden_max(f, a, b, iters=60):
    """Golden-section maximization of f on [a, b]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)
