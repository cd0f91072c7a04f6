"""Comparison models.

* ``cov-bc``: logistic regression of the true network on the observed traits,
  with the same detection mechanism as the latent model (detection regressed
  on traits instead of factors).
* ``cov-obs``: the same regression fitted directly to the recorded network.
* ``latent-obs``: the latent-factor model fitted to the recorded network; it
  runs through :mod:`lgi.gibbs`.

Missing traits in the covariate models follow intercept-only trait models and
are imputed every sweep.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ._numerics import SamplerError, draw_gaussian_canonical, expit, inv_gamma, log_expit, logit, norm_logpdf
from .data import InteractionData, TraitMatrix
from .gibbs import (LATENT_OBS, _mh_detection, _pool_chains, pick_tracked_cells, run_chain, trait_meta)
from .polyagamma import draw_pg1
from .posterior import ChainConfig, PosteriorDraws
from .state import ConfigError, PriorConfig, initial_imputation

log = logging.getLogger(__name__)

COV_BC = "cov-bc"
COV_OBS = "cov-obs"

_UNUSED_BY_COV = ("H", "nu", "alpha", "alpha_theta", "beta_theta", "theta_inf", "a_rho", "b_rho")


@dataclass
class CovState:
    L: np.ndarray
    alpha0: float
    alpha_X: np.ndarray
    alpha_W: np.ndarray
    delta0: float
    delta: np.ndarray
    zeta0: float
    zeta: np.ndarray
    s2_pB: float
    s2_pP: float
    p_row: np.ndarray
    p_col: np.ndarray
    X: np.ndarray
    W: np.ndarray
    mu_X: np.ndarray      # trait-model intercepts (logit scale for binary)
    s2_X: np.ndarray
    mu_W: np.ndarray
    s2_W: np.ndarray

    def logits(self) -> np.ndarray:
        return self.alpha0 + (self.X @ self.alpha_X)[:, None] + (self.W @ self.alpha_W)[None, :]


def interaction_design_gram(X: np.ndarray, W: np.ndarray, omega: np.ndarray, kappa: np.ndarray):
    """D' Omega D and D' kappa for the pair design with rows (1, X_i, W_j),
    without forming the (n_B n_P) x (1 + p_B + p_P) matrix."""
    r = omega.sum(axis=1)
    c = omega.sum(axis=0)
    Xt = np.column_stack([np.ones(X.shape[0]), X])
    top = Xt.T @ (r[:, None] * Xt)                     # (1+pB)^2 block incl. intercept
    cross = Xt.T @ omega @ W                           # (1+pB) x pP
    ww = W.T @ (c[:, None] * W)
    gram = np.block([[top, cross], [cross.T, ww]])
    score = np.concatenate([Xt.T @ kappa.sum(axis=1), W.T @ kappa.sum(axis=0)])
    return gram, score


def _update_alpha(st: CovState, prior: PriorConfig, rng) -> np.ndarray:
    omega = draw_pg1(st.logits(), rng)
    gram, score = interaction_design_gram(st.X, st.W, omega, st.L - 0.5)
    k = gram.shape[0]
    prec0 = np.full(k, 1.0 / prior.sigma2_0)
    coef = draw_gaussian_canonical(gram + np.diag(prec0), score + prec0 * prior.mu_0, rng)
    pB = st.X.shape[1]
    st.alpha0 = float(coef[0])
    st.alpha_X = coef[1:1 + pB]
    st.alpha_W = coef[1 + pB:]
    return omega


def _detection_regression(Z, p, s2, prior, rng):
    n = Z.shape[0]
    D = np.column_stack([np.ones(n), Z])
    y = logit(p)
    prec0 = np.full(D.shape[1], 1.0 / prior.sigma2_0)
    c = draw_gaussian_canonical(D.T @ D / s2 + np.diag(prec0), D.T @ y / s2 + prec0 * prior.mu_0, rng)
    resid = y - D @ c
    s2 = float(inv_gamma(rng, prior.a_sigma + n / 2.0, prior.b_sigma + resid @ resid / 2.0))
    return float(c[0]), c[1:], s2


def _update_trait_models(Xv, traits: TraitMatrix, mu, s2, prior, rng) -> None:
    n = Xv.shape[0]
    for m in range(traits.p):
        x = Xv[:, m]
        if traits.is_binary[m]:
            om = draw_pg1(np.full(n, mu[m]), rng)
            prec = om.sum() + 1.0 / prior.sigma2_0
            mean = (np.sum(x - 0.5) + prior.mu_0 / prior.sigma2_0) / prec
            mu[m] = mean + rng.standard_normal() / np.sqrt(prec)
        else:
            prec = n / s2[m] + 1.0 / prior.sigma2_0
            mean = (x.sum() / s2[m] + prior.mu_0 / prior.sigma2_0) / prec
            mu[m] = mean + rng.standard_normal() / np.sqrt(prec)
            s2[m] = inv_gamma(rng, prior.a_sigma + n / 2.0, prior.b_sigma + np.sum((x - mu[m]) ** 2) / 2.0)


def _impute_side(Xv, traits, coef, psi, omega, kappa, L, det, s2_det, mu, s2, rng, binary: bool):
    """Impute one side's missing cells (rows of ``psi`` index this side).

    ``det`` is ``(logit_p, d0, d)`` for the detection regression or None.
    ``psi`` is updated in place as cells change.
    """
    miss = traits.missing
    for m in np.flatnonzero(miss.any(axis=0)):
        if bool(traits.is_binary[m]) != binary:
            continue
        rows = np.flatnonzero(miss[:, m])
        a = coef[m]
        old = Xv[rows, m]
        psi_m = psi[rows] - a * old[:, None]
        if det is not None:
            lp, d0, d = det
            lin_m = d0 + Xv[rows] @ d - d[m] * old
        if binary:
            ll = np.zeros((rows.size, 2))
            for x in (0, 1):
                eta = psi_m + a * x
                ll[:, x] = np.sum(L[rows] * eta - np.logaddexp(0.0, eta), axis=1)
                if det is not None:
                    ll[:, x] += norm_logpdf(lp[rows], lin_m + d[m] * x, s2_det)
                ll[:, x] += log_expit(mu[m]) if x else log_expit(-mu[m])
            new = (rng.random(rows.size) < expit(ll[:, 1] - ll[:, 0])).astype(float)
        else:
            om = omega[rows]
            prec = a ** 2 * om.sum(axis=1) + 1.0 / s2[m]
            b = a * np.sum(kappa[rows] - om * psi_m, axis=1) + mu[m] / s2[m]
            if det is not None:
                prec += d[m] ** 2 / s2_det
                b += d[m] * (lp[rows] - lin_m) / s2_det
            new = b / prec + rng.standard_normal(rows.size) / np.sqrt(prec)
        Xv[rows, m] = new
        psi[rows] = psi_m + a * new[:, None]


def impute_covariates(st: CovState, traits_row, traits_col, omega, bias_corrected: bool, rng) -> None:
    """All continuous cells (which condition on the PG draws ``omega``) come
    before all binary cells (which use the exact two-point conditional)."""
    psi = st.logits()
    kappa = st.L - 0.5
    det_r = (logit(st.p_row), st.delta0, st.delta) if bias_corrected else None
    det_c = (logit(st.p_col), st.zeta0, st.zeta) if bias_corrected else None
    for binary in (False, True):
        _impute_side(st.X, traits_row, st.alpha_X, psi, omega, kappa, st.L, det_r, st.s2_pB,
                     st.mu_X, st.s2_X, rng, binary)
        psiT = psi.T.copy()
        _impute_side(st.W, traits_col, st.alpha_W, psiT, omega.T, kappa.T, st.L.T, det_c, st.s2_pP,
                     st.mu_W, st.s2_W, rng, binary)
        psi = psiT.T.copy()


def cov_conditional_L(st: CovState, data: InteractionData) -> np.ndarray:
    pp = st.p_row[:, None] * st.p_col[None, :]
    prob = expit(np.clip(st.logits(), -35, 35) + data.n_overlap * np.log1p(-pp))
    return np.where(data.A == 1, 1.0, prob)


def init_cov_state(prior: PriorConfig, data: InteractionData, traits_row, traits_col, rng,
                   bias_corrected: bool) -> CovState:
    pB, pP = traits_row.p, traits_col.p
    L = data.A.copy()
    if bias_corrected:
        unrec = data.A == 0
        L[unrec] = (rng.random(int(unrec.sum())) < 0.1).astype(np.int8)
    p0 = 0.5 if bias_corrected else 1.0
    return CovState(
        L=L, alpha0=float(prior.mu_0), alpha_X=np.zeros(pB), alpha_W=np.zeros(pP),
        delta0=float(prior.mu_0), delta=np.zeros(pB), zeta0=float(prior.mu_0), zeta=np.zeros(pP),
        s2_pB=1.0, s2_pP=1.0, p_row=np.full(data.n_B, p0), p_col=np.full(data.n_P, p0),
        X=initial_imputation(traits_row, rng), W=initial_imputation(traits_col, rng),
        mu_X=np.zeros(pB), s2_X=np.ones(pB), mu_W=np.zeros(pP), s2_W=np.ones(pP),
    )


def cov_sweep(st: CovState, data: InteractionData, traits_row, traits_col, prior: PriorConfig, rng,
              bias_corrected: bool) -> None:
    if bias_corrected:
        unrec = data.A == 0
        prob = cov_conditional_L(st, data)[unrec]
        L = data.A.copy()
        L[unrec] = rng.random(prob.size) < prob
        st.L = L
    omega = _update_alpha(st, prior, rng)
    if bias_corrected:
        st.delta0, st.delta, st.s2_pB = _detection_regression(st.X, st.p_row, st.s2_pB, prior, rng)
        st.zeta0, st.zeta, st.s2_pP = _detection_regression(st.W, st.p_col, st.s2_pP, prior, rng)
        conc = prior.mh_concentration
        st.p_row, _ = _mh_detection(st.p_row, st.p_col, st.L, data.A, data.n_overlap,
                                    st.delta0 + st.X @ st.delta, st.s2_pB, conc, rng)
        st.p_col, _ = _mh_detection(st.p_col, st.p_row, st.L.T, data.A.T, data.n_overlap.T,
                                    st.zeta0 + st.W @ st.zeta, st.s2_pP, conc, rng)
    _update_trait_models(st.X, traits_row, st.mu_X, st.s2_X, prior, rng)
    _update_trait_models(st.W, traits_col, st.mu_W, st.s2_W, prior, rng)
    impute_covariates(st, traits_row, traits_col, omega, bias_corrected, rng)


COV_FIELDS = ("alpha0", "alpha_X", "alpha_W", "delta0", "delta", "zeta0", "zeta", "s2_pB", "s2_pP",
              "p_row", "p_col")


def _cov_chain(args) -> dict:
    data, traits_row, traits_col, prior, config, seed_seq, model, tracked = args
    bc = model == COV_BC
    rng = np.random.default_rng(seed_seq)
    st = init_cov_state(prior, data, traits_row, traits_col, rng, bc)
    K = config.kept_per_chain
    L_sum = np.zeros(data.A.shape)
    P_sum = np.zeros(data.A.shape)
    L_tr = np.zeros((K, tracked.shape[0]), dtype=np.int8)
    kept = []
    t0 = time.perf_counter()
    for it in range(1, config.n_iter + 1):
        cov_sweep(st, data, traits_row, traits_col, prior, rng, bc)
        if not (np.isfinite(st.alpha0) and np.isfinite(st.alpha_X).all() and np.isfinite(st.alpha_W).all()):
            raise SamplerError(f"non-finite parameter state at iteration {it}")
        if config.keeps(it):
            if bc:
                prob = cov_conditional_L(st, data)
                L_sum += st.L
            else:
                prob = np.where(data.A == 1, 1.0, expit(st.logits()))
                L_sum += prob
            P_sum += prob
            if tracked.size:
                L_tr[len(kept)] = st.L[tracked[:, 0], tracked[:, 1]]
            kept.append({k: np.array(getattr(st, k), dtype=float, copy=True) for k in COV_FIELDS})
    samples = {k: np.stack([d[k] for d in kept]) for k in COV_FIELDS} if kept else {}
    return dict(L_sum=L_sum, P_sum=P_sum, samples=samples, L_tracked=L_tr, n_kept=len(kept),
                seconds=time.perf_counter() - t0)


def _notice_unused(prior: PriorConfig) -> None:
    default = PriorConfig()
    changed = [f for f in _UNUSED_BY_COV if getattr(prior, f) != getattr(default, f)]
    if changed:
        log.info("covariate models ignore prior fields %s", changed)


def _fit_cov(model, data, traits_row, traits_col, prior, config, threads, n_tracked) -> PosteriorDraws:
    _notice_unused(prior)
    if traits_row.n != data.n_B or traits_col.n != data.n_P:
        raise ConfigError("trait matrices do not match the network dimensions")
    tracked = pick_tracked_cells(data.A, n_tracked, config.seed)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(data, traits_row, traits_col, prior, config, seeds[c], model, tracked)
            for c in range(config.n_chains)]
    return _pool_chains(jobs, _cov_chain, model, data, tracked, config, prior, threads,
                        trait_meta(traits_row, traits_col))


def fit_cov_bias_corrected(data: InteractionData, traits_row: TraitMatrix, traits_col: TraitMatrix,
                           prior: PriorConfig, config: ChainConfig, threads=None, n_tracked=9) -> PosteriorDraws:
    return _fit_cov(COV_BC, data, traits_row, traits_col, prior, config, threads, n_tracked)


def fit_cov_observed(data: InteractionData, traits_row: TraitMatrix, traits_col: TraitMatrix,
                     prior: PriorConfig, config: ChainConfig, threads=None, n_tracked=9) -> PosteriorDraws:
    return _fit_cov(COV_OBS, data, traits_row, traits_col, prior, config, threads, n_tracked)


def fit_latent_observed(data, traits_row, traits_col, C_U, C_V, prior, config, threads=None,
                        n_tracked=9) -> PosteriorDraws:
    return run_chain(config, prior, data, traits_row, traits_col, C_U, C_V, model=LATENT_OBS,
                     threads=threads, n_tracked=n_tracked)
