"""Robust estimation of the mean of a random matrix in operator norm.

The bilinear directional estimator smooths both arguments of
<xi, M theta> through Gaussians N(xi, I/beta), N(theta, I/gamma).  The
inner (xi') integral is exact, which leaves six closed-form terms per
observation plus a residual that is the expectation over the theta' layer
of the phi_sym correction term; that last expectation is evaluated by a
seeded Monte-Carlo average with common random numbers across direction
pairs, and its standard error is reported.

With the scale choice

    lam = sqrt((beta + gamma + 2 log(1/delta)) /
               (n (v + t/beta + u/gamma + T/(beta gamma))))

the estimator deviates from <xi, E(M) theta> by at most B_n uniformly over
unit pairs with probability 1 - delta; beta = gamma = 2 max{(t+u)/v,
sqrt(T/v)} makes B_n <= sqrt(2v/n (2 log(1/delta) + 4 max{...})).  The fit
drives sup over pairs of <xi, m theta> - E(xi, theta) below B_n by cutting
planes, so the returned matrix carries operator radius 2 B_n.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import phi_asym, phi_asym_dm, r_sym
from .optim import SearchConfig, fit_minimax_center, sphere_ascent, random_unit
from .vector_mean import (
    AdaptiveGrid,
    ScaleParams,
    SphereFamily,
    VecMomentBounds,
    _check_delta,
    _SymOracle,
    _unit,
    deviation_radius,
    select_params_uncentered,
)

__all__ = [
    "MatMomentBounds",
    "CenteredMatMomentBounds",
    "BilinearScaleParams",
    "McConfig",
    "MatrixEstimate",
    "bilinear_estimate",
    "select_params_matrix",
    "fit_matrix_operator",
    "fit_matrix_combined",
    "estimate_matrix_centered",
    "adaptive_bilinear_estimate",
    "matrix_adaptive_constant",
    "recommended_chi",
    "estimate_matrix_adaptive",
]

_EW_PLUS = 1.0 / math.sqrt(2.0 * math.pi)


def as_matrix_sample(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 3 or min(M.shape) < 1:
        raise ValueError(f"matrix sample must have shape (n, p, q), got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix sample contains non-finite entries")
    return M


@dataclass(frozen=True)
class MatMomentBounds:
    """v >= sup E<xi,M theta>^2, t >= sup E||M theta||^2,
    u >= sup E||M^T xi||^2, T >= E||M||_HS^2."""

    v: float
    t: float
    u: float
    T: float

    def __post_init__(self):
        if not (0.0 < self.v <= min(self.t, self.u) and max(self.t, self.u) <= self.T):
            raise ValueError(
                "need 0 < v <= t, u <= T, got "
                f"v={self.v}, t={self.t}, u={self.u}, T={self.T}"
            )


@dataclass(frozen=True)
class CenteredMatMomentBounds:
    """Centered analogues plus b >= ||E M||_inf^2 and c >= ||E M||_HS^2."""

    v_bar: float
    t_bar: float
    u_bar: float
    T_bar: float
    b: float
    c: float

    def __post_init__(self):
        if not (0.0 < self.v_bar <= min(self.t_bar, self.u_bar)
                and max(self.t_bar, self.u_bar) <= self.T_bar):
            raise ValueError("centered bounds must satisfy v <= t, u <= T")
        if not (0.0 <= self.b <= self.c):
            raise ValueError("need 0 <= b <= c (operator norm <= HS norm)")


@dataclass(frozen=True)
class BilinearScaleParams:
    lam: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("lam", "beta", "gamma"):
            x = getattr(self, name)
            if not (x > 0.0 and math.isfinite(x)):
                raise ValueError(f"{name} must be positive and finite")


@dataclass(frozen=True)
class McConfig:
    n_draws: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")


@dataclass
class MatrixEstimate:
    m_hat: np.ndarray
    op_radius: float
    hs_radius: float | None
    delta: float
    certified: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "schema": "1",
            "m_hat": [[float(v) for v in row] for row in np.asarray(self.m_hat)],
            "op_radius": float(self.op_radius),
            "hs_radius": None if self.hs_radius is None else float(self.hs_radius),
            "delta": float(self.delta),
            "certified": bool(self.certified),
            "diagnostics": {k: v for k, v in sorted(self.diagnostics.items())},
        }


def select_params_matrix(n, bounds, delta):
    """Remark choice beta = gamma = 2 max{(t+u)/v, sqrt(T/v)}; returns
    (params, B_n)."""
    delta = _check_delta(delta)
    ell = math.log(1.0 / delta)
    beta = 2.0 * max((bounds.t + bounds.u) / bounds.v,
                     math.sqrt(bounds.T / bounds.v))
    gamma = beta
    denom = (bounds.v + bounds.t / beta + bounds.u / gamma
             + bounds.T / (beta * gamma))
    lam = math.sqrt((beta + gamma + 2.0 * ell) / (n * denom))
    B_n = math.sqrt(denom * (beta + gamma + 2.0 * ell) / n)
    return BilinearScaleParams(lam=lam, beta=beta, gamma=gamma), B_n


class BilinearOracle:
    """E(xi, theta) with cached per-sample and per-direction tensors.

    The theta'-layer Monte-Carlo draws are fixed at construction (common
    random numbers), so the oracle is a deterministic smooth function of
    (xi, theta) and the minimax fit sees a consistent objective.
    """

    def __init__(self, M, params, mc):
        M = as_matrix_sample(M)
        self.M = M
        self.n, self.p, self.q = M.shape
        self.lam = params.lam
        self.beta = params.beta
        self.gamma = params.gamma
        self.c = 1.0 / math.sqrt(params.gamma)
        rng = np.random.Generator(np.random.Philox(mc.seed))
        self.W = rng.standard_normal((mc.n_draws, self.q))
        self.hs2 = np.einsum("npq,npq->n", M, M)
        MMt = np.einsum("npq,nrq->npr", M, M)
        self.K = np.einsum("npr,nrq->npq", MMt, M)      # M_i M_i^T M_i
        self.Y0 = np.einsum("npq,kq->knp", M, self.W)   # M_i w_k
        self.Y0n2 = np.einsum("knp,knp->kn", self.Y0, self.Y0)
        self.anchor = M.mean(axis=0)
        self.calls = 0
        self.last_stderr = 0.0
        self.max_stderr = 0.0
        self._tkey = None
        self._xkey = None

    # ---- per-direction caches -------------------------------------------
    def _theta_data(self, theta):
        key = theta.tobytes()
        if self._tkey != key:
            D = np.einsum("npq,q->np", self.M, theta)
            self._tdata = {
                "D": D,
                "Dn2": np.einsum("np,np->n", D, D),
                "cross": np.einsum("knp,np->kn", self.Y0, D),
                "Ktheta": np.einsum("npq,q->np", self.K, theta),
            }
            self._tkey = key
        return self._tdata

    def _xi_data(self, xi):
        key = xi.tobytes()
        if self._xkey != key:
            E = np.einsum("npq,p->nq", self.M, xi)
            self._xdata = {
                "E": E,
                "En2": np.einsum("nq,nq->n", E, E),
                "Z": np.einsum("knp,p->kn", self.Y0, xi),
                "Kxi": np.einsum("npq,p->nq", self.K, xi),
            }
            self._xkey = key
        return self._xdata

    def _residual(self, dots, closed_terms, td, xd):
        """Monte-Carlo part of the theta' layer, with a variance guard.

        For typical observations the correction r is tiny and the closed
        six-term integral carries the value.  Observations that reach the
        saturation region of the influence function (heavy-tail outliers)
        make r cancel a polynomially exploding main term, so sampling r
        alone has unbounded variance; for those the bounded smoothed value
        phi = main + r is averaged per draw directly, and the observation's
        closed-form term is dropped.  Both routes estimate the same
        integral; the switch only reallocates what is sampled.
        """
        a = dots[None, :] + self.c * xd["Z"]
        s2 = td["Dn2"][None, :] + 2.0 * self.c * td["cross"] + self.c**2 * self.Y0n2
        sig = (self.lam / math.sqrt(self.beta)) * np.sqrt(np.maximum(s2, 0.0))
        m = self.lam * a
        R = r_sym(m, sig)
        bad = np.any(np.abs(R) > 0.25, axis=0)
        if np.any(bad):
            main_bad = (m[:, bad] * (1.0 - sig[:, bad] ** 2 / 2.0)
                        - m[:, bad] ** 3 / 6.0)
            per_draw = (R.sum(axis=1) - R[:, bad].sum(axis=1)
                        + (main_bad + R[:, bad]).sum(axis=1)) / (self.lam * self.n)
            offset = -float(closed_terms[bad].sum()) / self.n
        else:
            per_draw = R.sum(axis=1) / (self.lam * self.n)
            offset = 0.0
        mean = float(per_draw.mean()) + offset
        if per_draw.size > 1:
            stderr = float(per_draw.std(ddof=1) / math.sqrt(per_draw.size))
        else:
            stderr = 0.0
        return mean, stderr

    def _closed(self, xi, theta):
        td = self._theta_data(theta)
        xd = self._xi_data(xi)
        dots = td["D"] @ xi
        lam2 = self.lam**2
        closed = (
            dots
            - (lam2 / 6.0) * dots**3
            - (lam2 / (2.0 * self.beta)) * dots * td["Dn2"]
            - (lam2 / (2.0 * self.gamma)) * dots * xd["En2"]
            - (lam2 / (2.0 * self.beta * self.gamma)) * dots * self.hs2
            - (lam2 / (self.beta * self.gamma)) * (td["Ktheta"] @ xi)
        )
        return closed, dots, td, xd

    def closed_value(self, xi, theta):
        """Closed-form part only (search surrogate; the residual is smooth
        and orders of magnitude smaller than the certified radii)."""
        return float(self._closed(xi, theta)[0].mean())

    def value_with_stderr(self, xi, theta):
        self.calls += 1
        closed_terms, dots, td, xd = self._closed(xi, theta)
        resid, stderr = self._residual(dots, closed_terms, td, xd)
        self.last_stderr = stderr
        self.max_stderr = max(self.max_stderr, stderr)
        return float(closed_terms.mean()) + resid, stderr

    def value(self, xi, theta):
        return self.value_with_stderr(xi, theta)[0]

    # Gradients of the closed-form part (the tiny MC residual is treated as
    # locally constant; searches accept steps on full values only).
    def grad_xi(self, xi, theta):
        td = self._theta_data(theta)
        xd = self._xi_data(xi)
        D = td["D"]
        dots = D @ xi
        lam2 = self.lam**2
        w = (1.0
             - (lam2 / 2.0) * dots**2
             - (lam2 / (2.0 * self.beta)) * td["Dn2"]
             - (lam2 / (2.0 * self.gamma)) * xd["En2"]
             - (lam2 / (2.0 * self.beta * self.gamma)) * self.hs2)
        g = (D * w[:, None]).mean(axis=0)
        ME = np.einsum("npq,nq->np", self.M, xd["E"])     # M_i M_i^T xi
        g -= (lam2 / self.gamma) * (ME * dots[:, None]).mean(axis=0)
        g -= (lam2 / (self.beta * self.gamma)) * td["Ktheta"].mean(axis=0)
        return g

    def grad_theta(self, xi, theta):
        td = self._theta_data(theta)
        xd = self._xi_data(xi)
        E = xd["E"]
        dots = td["D"] @ xi
        lam2 = self.lam**2
        w = (1.0
             - (lam2 / 2.0) * dots**2
             - (lam2 / (2.0 * self.beta)) * td["Dn2"]
             - (lam2 / (2.0 * self.gamma)) * xd["En2"]
             - (lam2 / (2.0 * self.beta * self.gamma)) * self.hs2)
        g = (E * w[:, None]).mean(axis=0)
        MtD = np.einsum("npq,np->nq", self.M, td["D"])    # M_i^T M_i theta
        g -= (lam2 / self.beta) * (MtD * dots[:, None]).mean(axis=0)
        g -= (lam2 / (self.beta * self.gamma)) * xd["Kxi"].mean(axis=0)
        return g


def bilinear_estimate(M, xi, theta, params, mc):
    """(value, mc_stderr) of the bilinear directional estimator."""
    xi = _unit(xi)
    theta = _unit(theta)
    return BilinearOracle(M, params, mc).value_with_stderr(xi, theta)


class PairFamily:
    """Rank-one direction pairs (xi, theta) for the matrix center fit."""

    def __init__(self, oracle, target, search=None):
        self.oracle = oracle
        self.p = oracle.p
        self.q = oracle.q
        self.target = target
        self.search = search or SearchConfig()
        self._last = None

    @property
    def calls(self):
        return self.oracle.calls

    def _cut(self, xi, theta):
        return np.outer(xi, theta).ravel()

    def seed_cuts(self, rng):
        cuts = []
        U, _, Vt = np.linalg.svd(self.oracle.anchor)
        for r in range(min(self.p, self.q)):
            xi, th = U[:, r], Vt[r]
            cuts.append((self._cut(xi, th), self.oracle.value(xi, th)))
        for a in range(self.p):
            e_a = np.zeros(self.p)
            e_a[a] = 1.0
            for b in range(self.q):
                e_b = np.zeros(self.q)
                e_b[b] = 1.0
                cuts.append((self._cut(e_a, e_b), self.oracle.value(e_a, e_b)))
        return cuts

    def _ascend_pair(self, X, xi, theta):
        sweeps = self.search.sweeps
        iters = max(self.search.max_iters // (2 * sweeps), 10)
        # ascent runs on the closed form when available; the full value
        # (with the MC residual) is evaluated once on the winner
        fast = getattr(self.oracle, "closed_value", self.oracle.value)
        val = None
        for _ in range(sweeps):
            xi, _ = sphere_ascent(
                lambda z: float(z @ (X @ theta)) - fast(z, theta),
                lambda z: X @ theta - self.oracle.grad_xi(z, theta),
                xi, max_iters=iters, tol=self.search.tol,
            )
            theta, val = sphere_ascent(
                lambda z: float(xi @ (X @ z)) - fast(xi, z),
                lambda z: X.T @ xi - self.oracle.grad_theta(xi, z),
                theta, max_iters=iters, tol=self.search.tol,
            )
        return xi, theta, val

    def worst(self, x, rng):
        X = x.reshape(self.p, self.q)
        resid = X - self.oracle.anchor
        U, _, Vt = np.linalg.svd(resid)
        starts = [(U[:, 0], Vt[0]), (-U[:, 0], Vt[0])]
        if min(self.p, self.q) > 1:
            starts.append((U[:, 1], Vt[1]))
        if self._last is not None:
            starts.append(self._last)
        while len(starts) < self.search.restarts:
            starts.append((random_unit(rng, self.p), random_unit(rng, self.q)))
        best = None
        for xi0, th0 in starts:
            xi, th, val = self._ascend_pair(X, np.array(xi0), np.array(th0))
            if best is None or val > best[2]:
                best = (xi, th, val)
        xi, theta, _ = best
        self._last = (xi, theta)
        e = self.oracle.value(xi, theta)
        gap = float(xi @ (X @ theta)) - e
        return self._cut(xi, theta), e, gap


def fit_matrix_operator(M, bounds, delta, mc=None, *, seed=0, tol=1e-9,
                        search=None):
    """Matrix mean with certified operator radius 2 B_n."""
    M = as_matrix_sample(M)
    n, p, q = M.shape
    mc = mc or McConfig()
    params, B_n = select_params_matrix(n, bounds, delta)
    oracle = BilinearOracle(M, params, mc)
    fam = PairFamily(oracle, B_n, search=search)
    fit = fit_minimax_center(p * q, [fam], x0=oracle.anchor.ravel(), tol=tol,
                             seed=seed)
    return MatrixEstimate(
        m_hat=fit.x.reshape(p, q),
        op_radius=2.0 * B_n,
        hs_radius=None,
        delta=delta,
        certified=fit.certified,
        diagnostics={
            "gap": fit.gaps[0],
            "rounds": fit.rounds,
            "oracle_calls": fit.oracle_calls,
            "mc_stderr": oracle.max_stderr,
            "lam": params.lam,
            "beta": params.beta,
            "gamma": params.gamma,
            "B_n": B_n,
        },
    )


def hs_pipeline(M, bounds, delta):
    """Flattened-vector view: (oracle over R^{pq}, directional radius A_n)."""
    M = as_matrix_sample(M)
    n = M.shape[0]
    flat = M.reshape(n, -1)
    vbounds = VecMomentBounds(bounds.v, bounds.T)
    params = select_params_uncentered(n, vbounds, delta)
    A_n = deviation_radius(n, vbounds, delta)
    return _SymOracle(flat, params), A_n


def fit_matrix_combined(M, bounds, delta, mc=None, *, seed=0, tol=1e-9,
                        search=None):
    """Joint fit: HS radius 2 A_n and operator radius 2 B_n at level 1-2delta."""
    M = as_matrix_sample(M)
    n, p, q = M.shape
    mc = mc or McConfig()
    hs_oracle, A_n = hs_pipeline(M, bounds, delta)
    params, B_n = select_params_matrix(n, bounds, delta)
    op_oracle = BilinearOracle(M, params, mc)
    hs_fam = SphereFamily(hs_oracle, p * q, A_n, search=search)
    op_fam = PairFamily(op_oracle, B_n, search=search)
    fit = fit_minimax_center(p * q, [hs_fam, op_fam], x0=hs_oracle.anchor,
                             tol=tol, seed=seed)
    return MatrixEstimate(
        m_hat=fit.x.reshape(p, q),
        op_radius=2.0 * B_n,
        hs_radius=2.0 * A_n,
        delta=2.0 * delta,
        certified=fit.certified,
        diagnostics={
            "hs_gap": fit.gaps[0],
            "op_gap": fit.gaps[1],
            "rounds": fit.rounds,
            "oracle_calls": fit.oracle_calls,
            "mc_stderr": op_oracle.max_stderr,
            "A_n": A_n,
            "B_n": B_n,
        },
    )


def estimate_matrix_centered(M, cbounds, delta, split_k=None, mc=None, *,
                             seed=0, tol=1e-9, search=None):
    """Sample-splitting estimator from centered matrix bounds.

    Stage one runs the combined fit on the first split at confidence
    1 - delta/2 with the uncentered bounds (v+b, t+b, u+b, T+c); its squared
    errors are bounded by A/k (HS) and B/k (operator), which inflate the
    centered constants for the operator fit on the recentered remainder at
    confidence 1 - delta/2.  Total level 1 - delta, radius 2 C_{n,k}.
    """
    M = as_matrix_sample(M)
    n, p, q = M.shape
    delta = _check_delta(delta)
    mc = mc or McConfig()
    if split_k is None:
        split_k = min(math.ceil(math.sqrt(n)), n - 1)
    if not (1 <= split_k < n):
        raise ValueError(f"split_k must lie in [1, n), got {split_k} for n={n}")
    ell4 = math.log(4.0 / delta)

    bounds1 = MatMomentBounds(
        v=cbounds.v_bar + cbounds.b,
        t=cbounds.t_bar + cbounds.b,
        u=cbounds.u_bar + cbounds.b,
        T=cbounds.T_bar + cbounds.c,
    )
    stage1 = fit_matrix_combined(M[:split_k], bounds1, delta / 4.0,
                                 mc=mc, seed=seed, tol=tol, search=search)

    vb = cbounds.v_bar + cbounds.b
    A = 4.0 * (math.sqrt(2.0 * vb * ell4) + math.sqrt(cbounds.T_bar + cbounds.c)) ** 2
    B = 8.0 * vb * (
        2.0 * ell4
        + 4.0 * max(
            (cbounds.t_bar + cbounds.u_bar + 2.0 * cbounds.b) / vb,
            math.sqrt((cbounds.T_bar + cbounds.c) / vb),
        )
    )

    bounds2 = MatMomentBounds(
        v=cbounds.v_bar + B / split_k,
        t=cbounds.t_bar + B / split_k,
        u=cbounds.u_bar + B / split_k,
        T=cbounds.T_bar + A / split_k,
    )
    stage2 = fit_matrix_operator(
        M[split_k:] - stage1.m_hat, bounds2, delta / 2.0,
        mc=McConfig(mc.n_draws, mc.seed + 1), seed=seed + 1, tol=tol,
        search=search,
    )
    C_nk = stage2.diagnostics["B_n"]
    return MatrixEstimate(
        m_hat=stage1.m_hat + stage2.m_hat,
        op_radius=2.0 * C_nk,
        hs_radius=None,
        delta=delta,
        certified=stage1.certified and stage2.certified,
        diagnostics={
            "split_k": split_k,
            "A": A,
            "B": B,
            "C_nk": C_nk,
            "stage1_op_gap": stage1.diagnostics["op_gap"],
            "stage2_gap": stage2.diagnostics["gap"],
            "oracle_calls": stage1.diagnostics["oracle_calls"]
            + stage2.diagnostics["oracle_calls"],
        },
    )


# ---------------------------------------------------------------------------
# Adaptive estimator
# ---------------------------------------------------------------------------

class _AdaptiveBilinearOracle:
    """E(xi,theta) = E_plus(xi,theta) - E_plus(-xi,theta) over the lam grid.

    The xi' layer is integrated in closed form (phi_asym); only theta' is
    sampled, with common random numbers.  Grid pruning mirrors the vector
    case: phi_asym(m, s) <= min(1/2, m_+ + s E W_+) bounds every candidate
    lam from above, so candidates are scanned in decreasing bound order.
    """

    def __init__(self, M, grid, chi, delta, mc):
        M = as_matrix_sample(M)
        self.M = M
        self.n, self.p, self.q = M.shape
        ell = math.log(1.0 / delta)
        self.beta = 2.0 * chi * ell
        self.gamma = self.beta
        self.c = 1.0 / math.sqrt(self.gamma)
        rng = np.random.Generator(np.random.Philox(mc.seed))
        self.W = rng.standard_normal((mc.n_draws, self.q))
        self.Y0 = np.einsum("npq,kq->knp", M, self.W)
        self.Y0n2 = np.einsum("knp,knp->kn", self.Y0, self.Y0)
        self.lams = grid.lambdas(self.n)
        log_pen = grid.log_inv_weights(self.n) + ell
        self.pen = (self.beta + self.gamma + 2.0 * log_pen) / (
            2.0 * self.lams * self.n
        )
        self.anchor = M.mean(axis=0)
        self.calls = 0
        self._tkey = None
        self._xkey = None

    def _theta_data(self, theta):
        key = theta.tobytes()
        if self._tkey != key:
            D = np.einsum("npq,q->np", self.M, theta)
            Dn2 = np.einsum("np,np->n", D, D)
            cross = np.einsum("knp,np->kn", self.Y0, D)
            s2 = Dn2[None, :] + 2.0 * self.c * cross + self.c**2 * self.Y0n2
            self._tdata = {
                "D": D,
                "sig_unit": np.sqrt(np.maximum(s2, 0.0)) / math.sqrt(self.beta),
            }
            self._tkey = key
        return self._tdata

    def _xi_data(self, xi):
        key = xi.tobytes()
        if self._xkey != key:
            self._xdata = {
                "E": np.einsum("npq,p->nq", self.M, xi),
                "Z": np.einsum("knp,p->kn", self.Y0, xi),
            }
            self._xkey = key
        return self._xdata

    def _eplus(self, a, sig_unit):
        P = float(np.mean(np.maximum(a, 0.0) + _EW_PLUS * sig_unit))
        ubs = np.minimum(0.5 / self.lams, P) - self.pen
        order = np.argsort(-ubs, kind="stable")
        best = -math.inf
        best_lam = self.lams[0]
        for idx in order:
            if ubs[idx] <= best:
                break
            lam = self.lams[idx]
            val = float(np.mean(phi_asym(lam * a, lam * sig_unit))) / lam \
                - self.pen[idx]
            if val > best:
                best, best_lam = val, lam
        return best, best_lam

    def _a(self, xi, theta):
        td = self._theta_data(theta)
        xd = self._xi_data(xi)
        return td["D"] @ xi + self.c * xd["Z"], td["sig_unit"]

    def value(self, xi, theta):
        self.calls += 1
        a, su = self._a(xi, theta)
        vp, _ = self._eplus(a, su)
        vm, _ = self._eplus(-a, su)
        return vp - vm

    def grad_xi(self, xi, theta):
        a, su = self._a(xi, theta)
        _, lp = self._eplus(a, su)
        _, lm = self._eplus(-a, su)
        td = self._theta_data(theta)
        w = phi_asym_dm(lp * a, lp * su) + phi_asym_dm(-lm * a, lm * su)
        K = a.shape[0]
        g = np.einsum("kn,np->p", w, td["D"]) / (self.n * K)
        g += self.c * np.einsum("kn,knp->p", w, self.Y0) / (self.n * K)
        return g

    def grad_theta(self, xi, theta):
        # a depends on theta only through D @ xi; the sigma dependence is a
        # higher-order effect left to the value-based line search
        a, su = self._a(xi, theta)
        _, lp = self._eplus(a, su)
        _, lm = self._eplus(-a, su)
        xd = self._xi_data(xi)
        w = phi_asym_dm(lp * a, lp * su) + phi_asym_dm(-lm * a, lm * su)
        K = a.shape[0]
        return np.einsum("kn,nq->q", w, xd["E"]) / (self.n * K)


def adaptive_bilinear_estimate(M, xi, theta, grid, chi=1.0, delta=0.05,
                               mc=None):
    """Adaptive bilinear estimate with beta = gamma = 2 chi log(1/delta)."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    xi = _unit(xi)
    theta = _unit(theta)
    delta = _check_delta(delta)
    mc = mc or McConfig()
    return _AdaptiveBilinearOracle(M, grid, chi, delta, mc).value(xi, theta)


def matrix_adaptive_constant(alpha, delta, chi, guess_ratio):
    """Constant C of the adaptive matrix bound for a given multiplicative
    error of sigma_guess^2 against its oracle value."""
    ell = math.log(1.0 / delta)
    la = math.log(alpha)
    inner = abs(math.log(guess_ratio)) / (math.sqrt(2.0) * la) + 5.0 / math.sqrt(2.0)
    return math.cosh(la / 2.0) + math.sqrt(alpha) / ((1.0 + chi) * ell) * math.log(inner)


def recommended_chi(T_over_vstar, delta):
    """chi = max{sqrt(T/v*)/log(1/delta), 1}; needs the (rarely known) ratio."""
    return max(math.sqrt(T_over_vstar) / math.log(1.0 / delta), 1.0)


def estimate_matrix_adaptive(M, grid, delta, chi=1.0, mc=None, *, bounds=None,
                             seed=0, tol=1e-9, search=None):
    """Adaptive matrix mean at level 1 - 2 delta.

    With diagnostic ``bounds`` = (v*, t*, u*, T) the certified radius
    2 sup B(xi, theta) is computable and used as the fit target; otherwise
    the radius is twice the achieved gap, flagged non-certified.
    """
    M = as_matrix_sample(M)
    n, p, q = M.shape
    delta = _check_delta(delta)
    if chi <= 0:
        raise ValueError("chi must be positive")
    mc = mc or McConfig()
    oracle = _AdaptiveBilinearOracle(M, grid, chi, delta, mc)

    half = None
    C = None
    if bounds is not None:
        ell = math.log(1.0 / delta)
        inner = (bounds.v * ell + (bounds.t + bounds.u) / chi
                 + bounds.T / (chi**2 * ell))
        ratio = inner / (2.0 * grid.sigma_guess**2 * (1.0 + chi) * ell**2)
        C = matrix_adaptive_constant(grid.alpha, delta, chi, ratio)
        half = 2.0 * C * math.sqrt(2.0 * (1.0 + chi) * inner / n)

    fam = PairFamily(oracle, half, search=search)
    fit = fit_minimax_center(p * q, [fam], x0=oracle.anchor.ravel(), tol=tol,
                             seed=seed)
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
        "chi": chi,
        "beta": oracle.beta,
        "certified_radius_available": half is not None,
    }
    if C is not None:
        diag["C"] = C
    return MatrixEstimate(m_hat=fit.x.reshape(p, q), op_radius=radius,
                          hs_radius=None, delta=2.0 * delta,
                          certified=certified, diagnostics=diag)
