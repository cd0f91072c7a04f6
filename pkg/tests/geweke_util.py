"""Joint-distribution (Geweke) checks: forward simulation from the prior versus
alternating posterior sweeps and data regeneration."""
from __future__ import annotations

import numpy as np

from lgi import baselines, gibbs
from lgi._numerics import expit, inv_gamma
from lgi.data import BINARY, CONTINUOUS, InteractionData, TraitMatrix, blend_correlation
from lgi.state import ParamState, PriorConfig, ShrinkState, stick_break

TEST_PRIOR = PriorConfig(H=2, nu=5.0, alpha=2.0, alpha_theta=3.0, beta_theta=2.0, theta_inf=0.05,
                         a_rho=2.0, b_rho=2.0, a_sigma=5.0, b_sigma=4.0, mu_0=0.0, sigma2_0=1.0,
                         mh_concentration=20.0)


def small_problem(nB=4, nP=5, seed=0, missing=True):
    rng = np.random.default_rng(seed)
    n = rng.integers(0, 4, size=(nB, nP))
    kinds_r = (CONTINUOUS, BINARY)
    kinds_c = (CONTINUOUS, BINARY)
    C_U = np.full((nB, nB), 0.5)
    np.fill_diagonal(C_U, 1.0)
    C_V = np.eye(nP)
    C_V[0, 1] = C_V[1, 0] = 0.75
    miss_r = np.zeros((nB, 2), dtype=bool)
    miss_c = np.zeros((nP, 2), dtype=bool)
    if missing:
        miss_r[0, 0] = miss_r[1, 1] = True
        miss_c[2, 0] = miss_c[3, 1] = True
    return n, kinds_r, kinds_c, miss_r, miss_c, C_U, C_V


def _traits(values, kinds, miss):
    return TraitMatrix(np.where(miss, np.nan, values), kinds, miss)


# --------------------------------------------------------------------------- latent models


def prior_state(prior: PriorConfig, nB, nP, kinds_r, kinds_c, C_U, C_V, rng) -> ParamState:
    H = prior.H
    pB, pP = len(kinds_r), len(kinds_c)
    v = np.append(rng.beta(1.0, prior.alpha, H - 1), 1.0)
    omega, pi = stick_break(v)
    z = rng.choice(H, size=H, p=omega) + 1
    theta = np.where(z <= np.arange(1, H + 1), prior.theta_inf,
                     inv_gamma(rng, prior.alpha_theta, prior.beta_theta, H))
    ig = lambda size: inv_gamma(rng, prior.nu / 2, prior.nu / 2, size)
    sh = ShrinkState(theta=theta, tau_beta=ig((pB, H)), tau_gamma=ig((pP, H)), tau_lam=ig(H),
                     tau_delta=ig(H), tau_zeta=ig(H), v=v, omega=omega, pi=pi, z=z)
    slope = lambda tau, th: rng.standard_normal(tau.shape) * np.sqrt(tau * th)
    intercept = lambda size=None: prior.mu_0 + np.sqrt(prior.sigma2_0) * rng.standard_normal(size)
    rho_U = rng.beta(prior.a_rho, prior.b_rho)
    rho_V = rng.beta(prior.a_rho, prior.b_rho)
    U = rng.multivariate_normal(np.zeros(nB), blend_correlation(C_U, rho_U), size=H).T
    V = rng.multivariate_normal(np.zeros(nP), blend_correlation(C_V, rho_V), size=H).T
    st = ParamState(
        L=np.zeros((nB, nP), dtype=np.int8), U=U, V=V,
        lam0=float(intercept()), lam=slope(sh.tau_lam, theta),
        beta0=intercept(pB), B=slope(sh.tau_beta.T, theta[:, None]),
        sigma2_X=inv_gamma(rng, prior.a_sigma, prior.b_sigma, pB),
        gamma0=intercept(pP), G=slope(sh.tau_gamma.T, theta[:, None]),
        sigma2_W=inv_gamma(rng, prior.a_sigma, prior.b_sigma, pP),
        delta0=float(intercept()), delta=slope(sh.tau_delta, theta),
        zeta0=float(intercept()), zeta=slope(sh.tau_zeta, theta),
        s2_pB=float(inv_gamma(rng, prior.a_sigma, prior.b_sigma)),
        s2_pP=float(inv_gamma(rng, prior.a_sigma, prior.b_sigma)),
        p_row=np.zeros(nB), p_col=np.zeros(nP), rho_U=float(rho_U), rho_V=float(rho_V),
        shrink=sh, X=np.zeros((nB, pB)), W=np.zeros((nP, pP)),
    )
    st.p_row = expit(st.delta0 + U @ st.delta + np.sqrt(st.s2_pB) * rng.standard_normal(nB))
    st.p_col = expit(st.zeta0 + V @ st.zeta + np.sqrt(st.s2_pP) * rng.standard_normal(nP))
    st.L = (rng.random((nB, nP)) < expit(st.interaction_logits())).astype(np.int8)
    st.X = _draw_traits(st.beta0, st.U, st.B, st.sigma2_X, kinds_r, rng)
    st.W = _draw_traits(st.gamma0, st.V, st.G, st.sigma2_W, kinds_c, rng)
    return st


def _draw_traits(c0, F, B, s2, kinds, rng, out=None, mask=None):
    lin = c0 + F @ B
    new = np.empty_like(lin)
    for m, k in enumerate(kinds):
        if k == BINARY:
            new[:, m] = (rng.random(lin.shape[0]) < expit(lin[:, m])).astype(float)
        else:
            new[:, m] = lin[:, m] + np.sqrt(s2[m]) * rng.standard_normal(lin.shape[0])
    if out is None:
        return new
    out[mask] = new[mask]
    return out


def _draw_A(L, p_row, p_col, n, rng):
    det = 1.0 - (1.0 - np.outer(p_row, p_col)) ** n
    return (L.astype(bool) & (rng.random(L.shape) < det)).astype(np.int8)


def latent_stats(st: ParamState) -> np.ndarray:
    return np.array([st.lam0, st.sigma2_X[0], st.s2_pB, st.rho_U, st.p_row.mean(), st.L.mean(),
                     st.U[:, 0].var(), st.shrink.z[0], st.beta0[1], st.lam[0] ** 2])


LATENT_STAT_NAMES = ("lam0", "sigma2_X[0]", "s2_pB", "rho_U", "mean p_row", "mean L", "var U[:,0]",
                     "z_1", "beta0[1]", "lam_1^2")


def geweke_latent(model="latent-bc", n_cycles=20000, seed=0, prior=TEST_PRIOR):
    """Returns (marginal-conditional stats, successive-conditional stats)."""
    n, kinds_r, kinds_c, miss_r, miss_c, C_U, C_V = small_problem()
    nB, nP = n.shape
    bc = model == gibbs.LATENT_BC
    rng = np.random.default_rng(seed)
    obs_r, obs_c = ~miss_r, ~miss_c

    mc = np.empty((n_cycles, len(LATENT_STAT_NAMES)))
    for t in range(n_cycles):
        st = prior_state(prior, nB, nP, kinds_r, kinds_c, C_U, C_V, rng)
        mc[t] = latent_stats(st)

    st = prior_state(prior, nB, nP, kinds_r, kinds_c, C_U, C_V, rng)
    if not bc:
        st.p_row[:] = 1.0
        st.p_col[:] = 1.0
    sc = np.empty_like(mc)
    for t in range(n_cycles):
        if bc:
            A = _draw_A(st.L, st.p_row, st.p_col, n, rng)
        else:
            # the recorded network is the data itself: regenerate it from the logits
            st.L = (rng.random(st.L.shape) < expit(st.interaction_logits())).astype(np.int8)
            A = st.L.copy()
        # overlap only matters through detection; A=1 needs n>=1, which _draw_A guarantees
        data = InteractionData(A, n if bc else np.maximum(n, 1), tuple(map(str, range(nB))),
                               tuple(map(str, range(nP))))
        st.X = _draw_traits(st.beta0, st.U, st.B, st.sigma2_X, kinds_r, rng, st.X, obs_r)
        st.W = _draw_traits(st.gamma0, st.V, st.G, st.sigma2_W, kinds_c, rng, st.W, obs_c)
        tr = _traits(st.X, kinds_r, miss_r)
        tc = _traits(st.W, kinds_c, miss_c)
        problem = gibbs.make_problem(data, tr, tc, C_U, C_V, prior)
        gibbs.sweep(st, problem, rng, model)
        sc[t] = latent_stats(st)
    return mc, sc


# --------------------------------------------------------------------------- covariate models


def prior_cov_state(prior, nB, nP, kinds_r, kinds_c, rng, bc=True) -> baselines.CovState:
    pB, pP = len(kinds_r), len(kinds_c)
    nrm = lambda size=None: prior.mu_0 + np.sqrt(prior.sigma2_0) * rng.standard_normal(size)
    mu_X, mu_W = nrm(pB), nrm(pP)
    s2_X = inv_gamma(rng, prior.a_sigma, prior.b_sigma, pB)
    s2_W = inv_gamma(rng, prior.a_sigma, prior.b_sigma, pP)

    def covs(mu, s2, kinds, n):
        out = np.empty((n, len(kinds)))
        for m, k in enumerate(kinds):
            if k == BINARY:
                out[:, m] = rng.random(n) < expit(mu[m])
            else:
                out[:, m] = mu[m] + np.sqrt(s2[m]) * rng.standard_normal(n)
        return out

    st = baselines.CovState(
        L=np.zeros((nB, nP), dtype=np.int8), alpha0=float(nrm()), alpha_X=nrm(pB), alpha_W=nrm(pP),
        delta0=float(nrm()), delta=nrm(pB), zeta0=float(nrm()), zeta=nrm(pP),
        s2_pB=float(inv_gamma(rng, prior.a_sigma, prior.b_sigma)),
        s2_pP=float(inv_gamma(rng, prior.a_sigma, prior.b_sigma)),
        p_row=np.ones(nB), p_col=np.ones(nP), X=covs(mu_X, s2_X, kinds_r, nB), W=covs(mu_W, s2_W, kinds_c, nP),
        mu_X=mu_X, s2_X=s2_X, mu_W=mu_W, s2_W=s2_W,
    )
    if bc:
        st.p_row = expit(st.delta0 + st.X @ st.delta + np.sqrt(st.s2_pB) * rng.standard_normal(nB))
        st.p_col = expit(st.zeta0 + st.W @ st.zeta + np.sqrt(st.s2_pP) * rng.standard_normal(nP))
    st.L = (rng.random((nB, nP)) < expit(st.logits())).astype(np.int8)
    return st


def cov_stats(st) -> np.ndarray:
    return np.array([st.alpha0, st.alpha_X[0], st.alpha_W[1], st.s2_pB, st.p_row.mean(), st.L.mean(),
                     st.mu_X[0], st.s2_X[0], st.mu_W[1], st.X[0, 0], st.X[1, 1]])


COV_STAT_NAMES = ("alpha0", "alpha_X[0]", "alpha_W[1]", "s2_pB", "mean p_row", "mean L", "mu_X[0]",
                  "s2_X[0]", "mu_W[1]", "X[0,0]", "X[1,1]")


def geweke_cov(model="cov-bc", n_cycles=20000, seed=0, prior=TEST_PRIOR):
    # covariates enter the interaction and detection likelihoods directly, so
    # they cannot be regenerated as data on their own: treat every cell as
    # missing, which makes A the only data and exercises the imputation steps
    n, kinds_r, kinds_c, _, _, _, _ = small_problem()
    nB, nP = n.shape
    miss_r = np.ones((nB, len(kinds_r)), dtype=bool)
    miss_c = np.ones((nP, len(kinds_c)), dtype=bool)
    bc = model == baselines.COV_BC
    rng = np.random.default_rng(seed)
    mc = np.array([cov_stats(prior_cov_state(prior, nB, nP, kinds_r, kinds_c, rng, bc)) for _ in range(n_cycles)])
    st = prior_cov_state(prior, nB, nP, kinds_r, kinds_c, rng, bc)
    sc = np.empty_like(mc)
    ids = (tuple(map(str, range(nB))), tuple(map(str, range(nP))))
    for t in range(n_cycles):
        if bc:
            A = _draw_A(st.L, st.p_row, st.p_col, n, rng)
        else:
            st.L = (rng.random(st.L.shape) < expit(st.logits())).astype(np.int8)
            A = st.L.copy()
        data = InteractionData(A, n if bc else np.maximum(n, 1), *ids)
        tr = _traits(st.X, kinds_r, miss_r)
        tc = _traits(st.W, kinds_c, miss_c)
        baselines.cov_sweep(st, data, tr, tc, prior, rng, bc)
        sc[t] = cov_stats(st)
    return mc, sc


# --------------------------------------------------------------------------- comparison


def batch_se(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Batch-means standard error of the mean for each column of ``x``."""
    m = x.shape[0] // n_batches
    b = x[: m * n_batches].reshape(n_batches, m, -1).mean(axis=1)
    return b.std(axis=0, ddof=1) / np.sqrt(n_batches)


#: statistics that are model parameters of the observed-network variants
OBSERVED_LATENT_STATS = tuple(k for k, n in enumerate(LATENT_STAT_NAMES) if n not in ("s2_pB", "mean p_row"))
OBSERVED_COV_STATS = tuple(k for k, n in enumerate(COV_STAT_NAMES) if n not in ("s2_pB", "mean p_row"))


def geweke_z(mc: np.ndarray, sc: np.ndarray, burn: int = 500) -> np.ndarray:
    sc = sc[burn:]
    se = np.sqrt(mc.var(axis=0, ddof=1) / mc.shape[0] + batch_se(sc) ** 2)
    # constant statistics (p = 1 in the observed variants) give 0/0
    with np.errstate(invalid="ignore", divide="ignore"):
        return (mc.mean(axis=0) - sc.mean(axis=0)) / se
