"""Robust estimation of the mean of a heavy-tailed random vector.

The directional estimator smooths each observation's contribution through
the symmetric influence function,

    E(theta) = (1/(n lam)) sum_i phi_sym(lam <theta, X_i>,
                                         lam ||X_i|| / sqrt(beta)),

and with the scale choices

    lam = sqrt(2 log(1/delta) / (n v)),    beta = sqrt(n T) lam,

satisfies  sup_theta |E(theta) - <theta, E X>| <= sqrt(T/n) +
sqrt(2 v log(1/delta)/n)  with probability 1 - delta, for any distribution
with  sup_theta E<theta,X>^2 <= v  and  E||X||^2 <= T.  The mean estimate is
the minimax center of the directional values; its certified radius is twice
the directional one.

Also provided: a sample-splitting variant that accepts centered moment
bounds, and a fully adaptive variant (asymmetric influence function,
exponential grid of lam values with union-bound weights) that needs no
moment constants at all.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import phi_asym, phi_asym_dm, phi_sym, phi_sym_dm
from .optim import CenterFit, SearchConfig, fit_minimax_center, sphere_max

__all__ = [
    "VecMomentBounds",
    "CenteredVecMomentBounds",
    "ScaleParams",
    "AdaptiveGrid",
    "MeanEstimate",
    "directional_estimate",
    "select_params_uncentered",
    "deviation_radius",
    "fit_center",
    "estimate_mean_uncentered",
    "estimate_mean_centered",
    "adaptive_directional_estimate",
    "adaptive_constant",
    "estimate_mean_adaptive",
]

_EW_PLUS = 1.0 / math.sqrt(2.0 * math.pi)   # E max(W, 0) for W ~ N(0,1)


def as_sample(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"sample must be a nonempty n x d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("sample contains non-finite entries")
    return X


def _check_delta(delta):
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return float(delta)


def _unit(theta):
    theta = np.asarray(theta, dtype=float)
    nrm = np.linalg.norm(theta)
    if nrm == 0.0:
        raise ValueError("direction has zero norm")
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError(f"direction must be unit norm (got ||theta|| = {nrm!r})")
    return theta


@dataclass(frozen=True)
class VecMomentBounds:
    """Uncentered bounds: sup_theta E<theta,X>^2 <= v and E||X||^2 <= T."""

    v: float
    T: float

    def __post_init__(self):
        if not (0.0 < self.v <= self.T):
            raise ValueError(f"need 0 < v <= T, got v={self.v}, T={self.T}")


@dataclass(frozen=True)
class CenteredVecMomentBounds:
    """Centered bounds v_bar, T_bar plus b >= ||E X||^2."""

    v_bar: float
    T_bar: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.v_bar <= self.T_bar):
            raise ValueError("need 0 < v_bar <= T_bar")
        if self.b < 0.0:
            raise ValueError("need b >= 0")


@dataclass(frozen=True)
class ScaleParams:
    lam: float
    beta: float

    def __post_init__(self):
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError("lam must be positive and finite")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")


@dataclass(frozen=True)
class AdaptiveGrid:
    """Grid Lambda = { alpha^k / (sigma_guess sqrt(n)) : |k| <= k_max }.

    The weights mu put mass 1/2 on k = 0 and 1/(2(|k|+1)(|k|+2)) elsewhere,
    which sums to one over all of Z.  ``k_max = ceil(log n / log alpha) + 30``
    when not set; outside that window the penalty term dominates every
    achievable value, so the truncation does not move the supremum.
    """

    sigma_guess: float = 1.0
    alpha: float = math.e
    k_max: int | None = None

    def __post_init__(self):
        if not (self.sigma_guess > 0.0):
            raise ValueError("sigma_guess must be positive")
        if not (self.alpha > 1.0):
            raise ValueError("alpha must exceed 1")

    def k_values(self, n):
        km = self.k_max
        if km is None:
            km = math.ceil(math.log(max(n, 2)) / math.log(self.alpha)) + 30
        return np.arange(-km, km + 1)

    def lambdas(self, n):
        return self.alpha ** self.k_values(n).astype(float) / (
            self.sigma_guess * math.sqrt(n)
        )

    def log_inv_weights(self, n):
        k = np.abs(self.k_values(n))
        out = np.log(2.0 * (k + 1.0) * (k + 2.0))
        out[k == 0] = math.log(2.0)
        return out


@dataclass
class MeanEstimate:
    m_hat: np.ndarray
    radius: float
    delta: float
    certified: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "schema": "1",
            "m_hat": [float(x) for x in np.asarray(self.m_hat).ravel()],
            "radius": float(self.radius),
            "delta": float(self.delta),
            "certified": bool(self.certified),
            "diagnostics": {k: v for k, v in sorted(self.diagnostics.items())},
        }


# ---------------------------------------------------------------------------
# Plain (uncentered) estimator
# ---------------------------------------------------------------------------

def select_params_uncentered(n, bounds, delta):
    """lam = sqrt(2 log(1/delta)/(n v)) and beta = sqrt(n T) lam."""
    delta = _check_delta(delta)
    ell = math.log(1.0 / delta)
    lam = math.sqrt(2.0 * ell / (n * bounds.v))
    beta = math.sqrt(n * bounds.T) * lam
    return ScaleParams(lam=lam, beta=beta)


def deviation_radius(n, bounds, delta):
    """Directional half-width sqrt(T/n) + sqrt(2 v log(1/delta)/n).

    The mean estimate built from it is certified at twice this value.
    """
    delta = _check_delta(delta)
    ell = math.log(1.0 / delta)
    return math.sqrt(bounds.T / n) + math.sqrt(2.0 * bounds.v * ell / n)


class _SymOracle:
    """Directional estimator with cached norms; antisymmetric in theta."""

    def __init__(self, X, params):
        self.X = X
        self.n = X.shape[0]
        self.lam = params.lam
        self.sig = params.lam / math.sqrt(params.beta) * np.linalg.norm(X, axis=1)
        self.calls = 0
        # exact linear part of phi_sym: <theta, anchor> with the quadratic
        # norm correction folded in
        self.anchor = (X * (1.0 - self.sig**2 / 2.0)[:, None]).mean(axis=0)

    def value(self, theta):
        self.calls += 1
        m = self.lam * (self.X @ theta)
        return float(np.sum(phi_sym(m, self.sig))) / (self.n * self.lam)

    def grad(self, theta):
        m = self.lam * (self.X @ theta)
        return (self.X.T @ phi_sym_dm(m, self.sig)) / self.n


def directional_estimate(X, theta, params):
    """E(theta) for a unit direction theta."""
    X = as_sample(X)
    theta = _unit(theta)
    return _SymOracle(X, params).value(theta)


class SphereFamily:
    """Directional-cut family over the unit sphere for the center fit."""

    def __init__(self, oracle, d, target, search=None):
        self.oracle = oracle
        self.d = d
        self.target = target
        self.search = search or SearchConfig()
        self._last = None

    @property
    def calls(self):
        return self.oracle.calls

    def seed_cuts(self, rng):
        cuts = []
        for k in range(self.d):
            e_k = np.zeros(self.d)
            e_k[k] = 1.0
            cuts.append((e_k, self.oracle.value(e_k)))
        return cuts

    def worst(self, x, rng):
        def h(th):
            return float(th @ x) - self.oracle.value(th)

        def hg(th):
            return x - self.oracle.grad(th)

        warm = []
        resid = x - getattr(self.oracle, "anchor", 0.0 * x)
        nr = np.linalg.norm(resid)
        if nr > 0:
            warm += [resid / nr, -resid / nr]
        if self._last is not None:
            warm.append(self._last)
        theta, gap = sphere_max(
            h, hg, self.d, rng, warm_starts=warm,
            restarts=self.search.restarts, max_iters=self.search.max_iters,
            tol=self.search.tol,
        )
        self._last = theta
        return theta, float(theta @ x) - gap, gap


def fit_center(oracle, d, radius, tol, *, grad=None, seed=0, search=None,
               anchor=None):
    """Minimax center of an antisymmetric directional oracle.

    ``oracle`` maps a unit direction to a real value; ``radius`` of None
    plain-minimizes the worst gap.  Returns a ``CenterFit`` whose ``x`` is
    the center, with the achieved gap and certificate flag.
    """
    class _Wrap:
        def __init__(self):
            self.calls = 0
            self.anchor = anchor

        def value(self, theta):
            self.calls += 1
            return float(oracle(theta))

        def grad(self, theta):
            if grad is not None:
                return np.asarray(grad(theta), dtype=float)
            h = 1e-7
            g = np.empty(d)
            for k in range(d):
                step = np.zeros(d)
                step[k] = h
                tp = theta + step
                tm = theta - step
                g[k] = (oracle(tp / np.linalg.norm(tp))
                        - oracle(tm / np.linalg.norm(tm))) / (2 * h)
            return g

    wrapped = _Wrap()
    if anchor is None:
        wrapped.anchor = np.zeros(d)
    fam = SphereFamily(wrapped, d, radius, search=search)
    return fit_minimax_center(d, [fam], x0=wrapped.anchor if anchor is not None else None,
                              tol=tol, seed=seed)


def estimate_mean_uncentered(X, bounds, delta, *, seed=0, tol=1e-9,
                             search=None):
    """Mean estimate with certified radius 2 (sqrt(T/n) + sqrt(2 v log(1/delta)/n))."""
    X = as_sample(X)
    n, d = X.shape
    params = select_params_uncentered(n, bounds, delta)
    half = deviation_radius(n, bounds, delta)
    oracle = _SymOracle(X, params)
    fam = SphereFamily(oracle, d, half, search=search)
    fit = fit_minimax_center(d, [fam], x0=oracle.anchor, tol=tol, seed=seed)
    return MeanEstimate(
        m_hat=fit.x,
        radius=2.0 * half,
        delta=delta,
        certified=fit.certified,
        diagnostics={
            "gap": fit.gaps[0],
            "rounds": fit.rounds,
            "oracle_calls": fit.oracle_calls,
            "lam": params.lam,
            "beta": params.beta,
        },
    )


def estimate_mean_centered(X, cbounds, delta, split_k=None, *, seed=0,
                           tol=1e-9, search=None):
    """Sample-splitting estimator from centered moment bounds.

    The first ``split_k`` observations build a preliminary center from the
    inflated uncentered bounds (v_bar + b, T_bar + b); the remainder is
    recentered by it and refitted with bounds (v_bar + A/k, T_bar + A/k),
    where A/k bounds the squared preliminary error.  Total confidence level
    is 1 - 2 delta.
    """
    X = as_sample(X)
    n, d = X.shape
    delta = _check_delta(delta)
    if split_k is None:
        split_k = min(math.ceil(math.sqrt(n)), n - 1)
    if not (1 <= split_k < n):
        raise ValueError(f"split_k must lie in [1, n), got {split_k} for n={n}")
    ell = math.log(1.0 / delta)

    stage1 = estimate_mean_uncentered(
        X[:split_k],
        VecMomentBounds(cbounds.v_bar + cbounds.b, cbounds.T_bar + cbounds.b),
        delta, seed=seed, tol=tol, search=search,
    )
    A = 4.0 * (
        math.sqrt(cbounds.T_bar + cbounds.b)
        + math.sqrt(2.0 * (cbounds.v_bar + cbounds.b) * ell)
    ) ** 2

    bounds2 = VecMomentBounds(cbounds.v_bar + A / split_k,
                              cbounds.T_bar + A / split_k)
    stage2 = estimate_mean_uncentered(
        X[split_k:] - stage1.m_hat, bounds2, delta,
        seed=seed + 1, tol=tol, search=search,
    )
    radius = 2.0 * deviation_radius(n - split_k, bounds2, delta)
    return MeanEstimate(
        m_hat=stage1.m_hat + stage2.m_hat,
        radius=radius,
        delta=2.0 * delta,
        certified=stage1.certified and stage2.certified,
        diagnostics={
            "split_k": split_k,
            "A": A,
            "stage1_gap": stage1.diagnostics["gap"],
            "stage2_gap": stage2.diagnostics["gap"],
            "rounds": stage2.diagnostics["rounds"],
            "oracle_calls": stage1.diagnostics["oracle_calls"]
            + stage2.diagnostics["oracle_calls"],
        },
    )


# ---------------------------------------------------------------------------
# Adaptive estimator (no moment constants needed)
# ---------------------------------------------------------------------------

class _AdaptiveOracle:
    """E(theta) = E_plus(theta) - E_plus(-theta) over the penalized lam grid.

    E_plus(theta) takes, over lam in the grid, the supremum of

        mean_i phi_asym(lam d_i, lam s_i)/lam
            - (beta + 2 log(1/(delta mu(lam)))) / (2 lam n).

    Evaluation prunes the grid with the elementwise bound
    phi_asym(m, s) <= min(1/2, m_+ + s E W_+): candidates are scanned in
    decreasing order of that upper bound until it drops below the best
    value found, which locates the exact grid supremum at a few full kernel
    passes per call.  Ties break toward smaller |k|, then negative k.
    """

    def __init__(self, X, grid, beta, delta):
        self.X = X
        self.n = X.shape[0]
        self.beta = float(beta)
        self.sig_unit = np.linalg.norm(X, axis=1) / math.sqrt(self.beta)
        self.lams = grid.lambdas(self.n)
        ks = grid.k_values(self.n)
        log_pen = grid.log_inv_weights(self.n) + math.log(1.0 / delta)
        self.pen = (self.beta + 2.0 * log_pen) / (2.0 * self.lams * self.n)
        # tie-break rank: smaller |k| first, then negative k
        self.rank = np.lexsort((ks >= 0, np.abs(ks)))
        self.rank_pos = np.empty_like(self.rank)
        self.rank_pos[self.rank] = np.arange(len(ks))
        self.calls = 0
        self.anchor = X.mean(axis=0)

    def _eplus(self, dots):
        pos = np.maximum(dots, 0.0)
        P = float(np.mean(pos + _EW_PLUS * self.sig_unit))
        ubs = np.minimum(0.5 / self.lams, P) - self.pen
        order = np.argsort(-ubs, kind="stable")
        best = -math.inf
        best_rank = math.inf
        best_lam = self.lams[0]
        for idx in order:
            if ubs[idx] <= best:
                break
            lam = self.lams[idx]
            val = float(np.mean(phi_asym(lam * dots, lam * self.sig_unit))) / lam \
                - self.pen[idx]
            if val > best or (val == best and self.rank_pos[idx] < best_rank):
                best = val
                best_rank = self.rank_pos[idx]
                best_lam = lam
        return best, best_lam

    def value_with_lams(self, theta):
        self.calls += 1
        dots = self.X @ theta
        vp, lp = self._eplus(dots)
        vm, lm = self._eplus(-dots)
        return vp - vm, lp, lm

    def value(self, theta):
        return self.value_with_lams(theta)[0]

    def grad(self, theta):
        dots = self.X @ theta
        _, lp = self._eplus(dots)
        _, lm = self._eplus(-dots)
        wp = phi_asym_dm(lp * dots, lp * self.sig_unit)
        wm = phi_asym_dm(-lm * dots, lm * self.sig_unit)
        return (self.X.T @ (wp + wm)) / self.n


def adaptive_directional_estimate(X, theta, grid, beta=None, delta=0.05):
    """Adaptive directional estimate; default beta = 2 log(1/delta)."""
    X = as_sample(X)
    theta = _unit(theta)
    delta = _check_delta(delta)
    if grid.lambdas(X.shape[0]).size == 0:
        raise ValueError("adaptive grid is empty")
    if beta is None:
        beta = 2.0 * math.log(1.0 / delta)
    return _AdaptiveOracle(X, grid, beta, delta).value(theta)


def adaptive_constant(alpha, delta, guess_ratio):
    """Constant C of the adaptive bound, from the multiplicative error of
    sigma_guess^2 against its oracle value (2 v log(1/delta) + T)/(8 log^2)."""
    ell = math.log(1.0 / delta)
    la = math.log(alpha)
    inner = abs(math.log(guess_ratio)) / (math.sqrt(2.0) * la) + 5.0 / math.sqrt(2.0)
    return math.cosh(la / 2.0) + math.sqrt(alpha) / (2.0 * ell) * math.log(inner)


def estimate_mean_adaptive(X, grid, delta, *, bounds=None, seed=0, tol=1e-9,
                           search=None):
    """Adaptive mean estimate.

    When ``bounds`` (the true v, T, known only for diagnostics) is given the
    certified radius 4 C sqrt(2 (2 v log(1/delta) + T)/n) is reported;
    otherwise the radius falls back to twice the achieved minimax gap and is
    flagged non-certified, since the oracle deviation width is unobservable.
    Total confidence level is 1 - 2 delta.
    """
    X = as_sample(X)
    n, d = X.shape
    delta = _check_delta(delta)
    beta = 2.0 * math.log(1.0 / delta)
    oracle = _AdaptiveOracle(X, grid, beta, delta)

    half = None
    C = None
    if bounds is not None:
        ell = math.log(1.0 / delta)
        ratio = (2.0 * bounds.v * ell + bounds.T) / (
            8.0 * grid.sigma_guess**2 * ell**2
        )
        C = adaptive_constant(grid.alpha, delta, ratio)
        half = 2.0 * C * math.sqrt(2.0 * (2.0 * bounds.v * ell + bounds.T) / n)

    fam = SphereFamily(oracle, d, half, search=search)
    fit = fit_minimax_center(d, [fam], x0=oracle.anchor, tol=tol, seed=seed)
    gap = fit.gaps[0]
    if half is not None:
        radius = 2.0 * half
        certified = fit.certified
    else:
        radius = 2.0 * max(gap, 0.0)
        certified = False
    diag = {
        "gap": gap,
        "rounds": fit.rounds,
        "oracle_calls": fit.oracle_calls,
        "beta": beta,
        "certified_radius_available": half is not None,
    }
    if C is not None:
        diag["C"] = C
    return MeanEstimate(m_hat=fit.x, radius=radius, delta=2.0 * delta,
                        certified=certified, diagnostics=diag)
