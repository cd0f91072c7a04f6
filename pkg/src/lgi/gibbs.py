"""MCMC for the covariate-informed, bias-corrected latent interaction model.

One function per conditional update; :func:`sweep` applies them in a fixed
order and :func:`run_chain` drives complete chains. Every update mutates the
:class:`~lgi.state.ParamState` in place.

The same engine also runs the latent-factor model that takes the recorded
network as the truth (``model="latent-obs"``): L stays equal to A and the
detection submodel is dropped.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._numerics import (SamplerError, beta_logpdf, draw_gaussian_canonical, expit, inv_gamma, log1mexp,
                        logit, norm_logpdf)
from .data import InteractionData, TraitMatrix
from .polyagamma import draw_pg1
from .posterior import ChainConfig, PosteriorDraws
from .state import ParamState, PriorConfig, init_state, stick_break

log = logging.getLogger(__name__)

LATENT_BC = "latent-bc"
LATENT_OBS = "latent-obs"


class FactorPrior:
    """Eigen-decomposition of a taxonomy correlation ``C``.

    Gives the precision and log-density of ``rho * C + (1 - rho) * I`` for any
    ``rho`` without refactorizing.
    """

    def __init__(self, C: np.ndarray):
        c, Q = np.linalg.eigh(np.asarray(C, dtype=float))
        self.C = np.asarray(C, dtype=float)
        self.c = np.clip(c, 0.0, None)
        self.Q = Q
        self._rho = None
        self._prec = None

    @property
    def n(self) -> int:
        return self.c.size

    def eigvals(self, rho: float) -> np.ndarray:
        return rho * self.c + (1.0 - rho)

    def precision(self, rho: float) -> np.ndarray:
        if rho != self._rho:
            P = (self.Q / self.eigvals(rho)) @ self.Q.T
            self._prec = 0.5 * (P + P.T)
            self._rho = rho
        return self._prec

    def logpdf(self, M: np.ndarray, rho: float) -> float:
        """Sum of N(0, Sigma(rho)) log-densities over the columns of ``M``."""
        e = self.eigvals(rho)
        if (e <= 0).any():
            return -np.inf
        Y = self.Q.T @ M
        k = M.shape[1]
        return float(-0.5 * (k * (self.n * np.log(2 * np.pi) + np.log(e).sum()) + (Y ** 2 / e[:, None]).sum()))


@dataclass
class Problem:
    """Static inputs of one fit."""

    data: InteractionData
    traits_row: TraitMatrix
    traits_col: TraitMatrix
    prior: PriorConfig
    fp_U: FactorPrior
    fp_V: FactorPrior


def make_problem(data, traits_row, traits_col, C_U, C_V, prior) -> Problem:
    return Problem(data, traits_row, traits_col, prior, FactorPrior(C_U), FactorPrior(C_V))


# --------------------------------------------------------------------------- L


def conditional_L_probability(state: ParamState, data: InteractionData) -> np.ndarray:
    """P(L_ij = 1 | everything else); equals 1 on recorded cells."""
    psi = np.clip(state.interaction_logits(), -35.0, 35.0)
    pp = state.p_row[:, None] * state.p_col[None, :]
    prob = expit(psi + data.n_overlap * np.log1p(-pp))
    return np.where(data.A == 1, 1.0, prob)


def update_true_interactions(state: ParamState, data: InteractionData, rng: np.random.Generator) -> None:
    """Resample unrecorded cells of L; recorded cells stay at 1 and are skipped."""
    unrec = data.A == 0
    prob = conditional_L_probability(state, data)[unrec]
    L = data.A.copy()
    L[unrec] = rng.random(prob.size) < prob
    state.L = L


# --------------------------------------------------------------------------- lambda


def _product_design_normal_eq(Ut: np.ndarray, Vt: np.ndarray, omega: np.ndarray, kappa: np.ndarray):
    """Gram matrix and score of the design with rows ``Ut[i] * Vt[j]``."""
    K = Ut.shape[1]
    PU = (Ut[:, :, None] * Ut[:, None, :]).reshape(Ut.shape[0], K * K)
    PV = (Vt[:, :, None] * Vt[:, None, :]).reshape(Vt.shape[0], K * K)
    gram = (PU * (omega @ PV)).sum(axis=0).reshape(K, K)
    score = (Ut * (kappa @ Vt)).sum(axis=0)
    return 0.5 * (gram + gram.T), score


def update_interaction_coeffs(state: ParamState, prior: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    """Polya-Gamma update of (lambda_0, lambda); returns the PG draws omega^L."""
    omega = draw_pg1(state.interaction_logits(), rng)
    n_B, n_P = state.L.shape
    Ut = np.column_stack([np.ones(n_B), state.U])
    Vt = np.column_stack([np.ones(n_P), state.V])
    gram, score = _product_design_normal_eq(Ut, Vt, omega, state.L - 0.5)
    sh = state.shrink
    prec0 = np.concatenate(([1.0 / prior.sigma2_0], 1.0 / (sh.tau_lam * sh.theta)))
    mean0 = np.zeros_like(prec0)
    mean0[0] = prior.mu_0
    coef = draw_gaussian_canonical(gram + np.diag(prec0), score + prec0 * mean0, rng)
    state.lam0 = float(coef[0])
    state.lam = coef[1:]
    return omega


# --------------------------------------------------------------------------- traits


def _update_trait_side(U, X, coef0, Bmat, sigma2, is_bin, tau, theta, prior, rng):
    n, p = X.shape
    omega = np.zeros((n, p))
    if p == 0:
        return omega
    D = np.column_stack([np.ones(n), U])
    DtD = D.T @ D
    for m in range(p):
        prec0 = np.concatenate(([1.0 / prior.sigma2_0], 1.0 / (tau[m] * theta)))
        mean0 = np.zeros_like(prec0)
        mean0[0] = prior.mu_0
        x = X[:, m]
        if is_bin[m]:
            psi = coef0[m] + U @ Bmat[:, m]
            om = draw_pg1(psi, rng)
            omega[:, m] = om
            P = D.T @ (om[:, None] * D) + np.diag(prec0)
            b = D.T @ (x - 0.5) + prec0 * mean0
            c = draw_gaussian_canonical(P, b, rng)
        else:
            P = DtD / sigma2[m] + np.diag(prec0)
            b = D.T @ x / sigma2[m] + prec0 * mean0
            c = draw_gaussian_canonical(P, b, rng)
            resid = x - D @ c
            sigma2[m] = inv_gamma(rng, prior.a_sigma + n / 2.0, prior.b_sigma + resid @ resid / 2.0)
        coef0[m] = c[0]
        Bmat[:, m] = c[1:]
    return omega


def update_trait_models(state: ParamState, traits_row: TraitMatrix, traits_col: TraitMatrix,
                        prior: PriorConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Update (beta_m0, beta_m, sigma2_m) for every row trait and likewise for
    column traits. Returns the PG draws of the binary columns (zeros elsewhere)."""
    sh = state.shrink
    om_X = _update_trait_side(state.U, state.X, state.beta0, state.B, state.sigma2_X,
                              traits_row.is_binary, sh.tau_beta, sh.theta, prior, rng)
    om_W = _update_trait_side(state.V, state.W, state.gamma0, state.G, state.sigma2_W,
                              traits_col.is_binary, sh.tau_gamma, sh.theta, prior, rng)
    return om_X, om_W


# --------------------------------------------------------------------------- detection


def _gaussian_regression(U, y, sigma2, tau, theta, prior, rng):
    n = U.shape[0]
    D = np.column_stack([np.ones(n), U])
    prec0 = np.concatenate(([1.0 / prior.sigma2_0], 1.0 / (tau * theta)))
    mean0 = np.zeros_like(prec0)
    mean0[0] = prior.mu_0
    c = draw_gaussian_canonical(D.T @ D / sigma2 + np.diag(prec0), D.T @ y / sigma2 + prec0 * mean0, rng)
    resid = y - D @ c
    s2 = inv_gamma(rng, prior.a_sigma + n / 2.0, prior.b_sigma + resid @ resid / 2.0)
    return c, float(s2)


def update_detection_coeffs(state: ParamState, prior: PriorConfig, rng: np.random.Generator) -> None:
    """Conjugate update of the detection regressions of logit(p) on (1, U) and (1, V)."""
    sh = state.shrink
    c, state.s2_pB = _gaussian_regression(state.U, logit(state.p_row), state.s2_pB,
                                          sh.tau_delta, sh.theta, prior, rng)
    state.delta0, state.delta = float(c[0]), c[1:]
    c, state.s2_pP = _gaussian_regression(state.V, logit(state.p_col), state.s2_pP,
                                          sh.tau_zeta, sh.theta, prior, rng)
    state.zeta0, state.zeta = float(c[0]), c[1:]


# --------------------------------------------------------------------------- latent factors


def _update_factor_side(F, F_other, lam, psi, omega_L, kappa, Xv, coef0, Bmat, sigma2, is_bin, omega_T,
                        det_resp, det0, det, s2_det, prior_prec, rng):
    """Column-by-column update of one side's factors (F is modified in place).

    ``psi`` (n x n_other) is the interaction logit matrix oriented with this
    side on the rows; it is kept current and returned.
    """
    H = F.shape[1]
    cont = ~is_bin
    lin_T = coef0 + F @ Bmat
    lin_det = det0 + F @ det if det is not None else None
    X_c, X_b = Xv[:, cont], Xv[:, is_bin]
    om_b = omega_T[:, is_bin]
    s2_c = sigma2[cont]
    for h in range(H):
        f = F[:, h]
        d = np.zeros(F.shape[0])
        b = np.zeros(F.shape[0])
        bc = Bmat[h, cont]
        if bc.size:
            d += np.sum(bc ** 2 / s2_c)
            part = X_c - (lin_T[:, cont] - np.outer(f, bc))
            b += part @ (bc / s2_c)
        bb = Bmat[h, is_bin]
        if bb.size:
            d += om_b @ (bb ** 2)
            resid = (X_b - 0.5) - om_b * (lin_T[:, is_bin] - np.outer(f, bb))
            b += resid @ bb
        if det is not None:
            d += det[h] ** 2 / s2_det
            b += det[h] / s2_det * (det_resp - (lin_det - f * det[h]))
        g = F_other[:, h]
        lh = lam[h]
        psi_mh = psi - lh * np.outer(f, g)
        d += lh ** 2 * (omega_L @ (g ** 2))
        b += lh * ((kappa - omega_L * psi_mh) @ g)
        new = draw_gaussian_canonical(prior_prec + np.diag(d), b, rng)
        step = new - f
        lin_T += np.outer(step, Bmat[h])
        if det is not None:
            lin_det += step * det[h]
        psi = psi_mh + lh * np.outer(new, g)
        F[:, h] = new
    return psi


def update_latent_factors(state: ParamState, problem: Problem, rng: np.random.Generator,
                          omega_L: np.ndarray, omega_X: np.ndarray, omega_W: np.ndarray,
                          bias_corrected: bool = True) -> None:
    """Gaussian full-conditional draws of every factor column, U then V."""
    kappa = state.L - 0.5
    psi = state.interaction_logits()
    tr, tc = problem.traits_row, problem.traits_col
    psi = _update_factor_side(
        state.U, state.V, state.lam, psi, omega_L, kappa, state.X, state.beta0, state.B, state.sigma2_X,
        tr.is_binary, omega_X,
        logit(state.p_row) if bias_corrected else None, state.delta0,
        state.delta if bias_corrected else None, state.s2_pB,
        problem.fp_U.precision(state.rho_U), rng)
    _update_factor_side(
        state.V, state.U, state.lam, psi.T.copy(), omega_L.T, kappa.T, state.W, state.gamma0, state.G,
        state.sigma2_W, tc.is_binary, omega_W,
        logit(state.p_col) if bias_corrected else None, state.zeta0,
        state.zeta if bias_corrected else None, state.s2_pP,
        problem.fp_V.precision(state.rho_V), rng)


# --------------------------------------------------------------------------- shrinkage


def _mvt_logpdf_diag(x, df, scale_diag):
    from scipy.special import gammaln

    d = x.size
    q = np.sum(x ** 2 / scale_diag)
    return (gammaln((df + d) / 2.0) - gammaln(df / 2.0) - 0.5 * d * np.log(df * np.pi)
            - 0.5 * np.sum(np.log(scale_diag)) - 0.5 * (df + d) * np.log1p(q / df))


def _mvn_logpdf_diag(x, var_diag):
    return float(np.sum(norm_logpdf(x, 0.0, var_diag)))


def shrinkage_blocks(state: ParamState, bias_corrected: bool = True):
    """Per-factor coefficient vectors x_h and their tau vectors (lists of arrays)."""
    sh = state.shrink
    xs, taus = [], []
    for h in range(state.H):
        parts = [state.B[h], state.G[h], [state.lam[h]]]
        tparts = [sh.tau_beta[:, h], sh.tau_gamma[:, h], [sh.tau_lam[h]]]
        if bias_corrected:
            parts += [[state.delta[h]], [state.zeta[h]]]
            tparts += [[sh.tau_delta[h]], [sh.tau_zeta[h]]]
        xs.append(np.concatenate(parts))
        taus.append(np.concatenate(tparts))
    return xs, taus


def z_log_weights(x: np.ndarray, tau: np.ndarray, h: int, omega: np.ndarray, prior: PriorConfig) -> np.ndarray:
    """Unnormalized log P(z_h = l | coefficients of factor h), l = 1..H (``h`` is 1-based)."""
    H = omega.size
    spike = _mvn_logpdf_diag(x, prior.theta_inf * tau)
    slab = _mvt_logpdf_diag(x, 2.0 * prior.alpha_theta, prior.beta_theta / prior.alpha_theta * tau)
    with np.errstate(divide="ignore"):
        lw = np.log(omega)
    ell = np.arange(1, H + 1)
    return lw + np.where(ell <= h, spike, slab)


def update_shrinkage(state: ParamState, prior: PriorConfig, rng: np.random.Generator,
                     bias_corrected: bool = True) -> None:
    """Update the tau scales, then (z, v, theta) of the increasing shrinkage prior.

    z is drawn with theta integrated out, so theta is redrawn from its
    conditional given the new z before anything else reads it.
    """
    sh = state.shrink
    H = state.H
    nu = prior.nu
    shape = (nu + 1.0) / 2.0
    th = sh.theta
    sh.tau_beta = inv_gamma(rng, shape, (nu + state.B.T ** 2 / th) / 2.0)
    sh.tau_gamma = inv_gamma(rng, shape, (nu + state.G.T ** 2 / th) / 2.0)
    sh.tau_lam = inv_gamma(rng, shape, (nu + state.lam ** 2 / th) / 2.0)
    if bias_corrected:
        sh.tau_delta = inv_gamma(rng, shape, (nu + state.delta ** 2 / th) / 2.0)
        sh.tau_zeta = inv_gamma(rng, shape, (nu + state.zeta ** 2 / th) / 2.0)

    xs, taus = shrinkage_blocks(state, bias_corrected)
    z = np.empty(H, dtype=np.int64)
    for h in range(H):
        lw = z_log_weights(xs[h], taus[h], h + 1, sh.omega, prior)
        w = np.exp(lw - lw.max())
        z[h] = rng.choice(H, p=w / w.sum()) + 1
    sh.z = z

    counts = np.bincount(z, minlength=H + 1)[1:]
    above = counts[::-1].cumsum()[::-1]
    greater = np.append(above[1:], 0)
    v = np.ones(H)
    if H > 1:
        v[:-1] = rng.beta(1.0 + counts[:-1], prior.alpha + greater[:-1])
    sh.v = v
    sh.omega, sh.pi = stick_break(v)

    theta = np.empty(H)
    for h in range(H):
        if z[h] <= h + 1:
            theta[h] = prior.theta_inf
        else:
            x, t = xs[h], taus[h]
            theta[h] = inv_gamma(rng, prior.alpha_theta + x.size / 2.0,
                                 prior.beta_theta + np.sum(x ** 2 / t) / 2.0)
    sh.theta = theta


# --------------------------------------------------------------------------- detection probabilities


def detection_log_ratio(x, p, p_other, L, A, n, mean_logit, s2, conc):
    """Log MH acceptance ratio for moving each row's detection probability p -> x.

    Combines the detection likelihood over cells with L = 1, the logit-normal
    prior of the detection submodel (with its change-of-variables factor) and
    the Beta proposal ratio. Rows are independent given ``p_other``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        lq_x = np.log1p(-x[:, None] * p_other[None, :])
        lq_p = np.log1p(-p[:, None] * p_other[None, :])
        rec = (A == 1) & (L == 1)
        miss = (A == 0) & (L == 1)
        like = np.where(rec, log1mexp(n * lq_x) - log1mexp(n * lq_p), 0.0).sum(axis=1)
        like += np.where(miss, n * (lq_x - lq_p), 0.0).sum(axis=1)
        prior_x = norm_logpdf(logit(x), mean_logit, s2) - np.log(x) - np.log1p(-x)
        prior_p = norm_logpdf(logit(p), mean_logit, s2) - np.log(p) - np.log1p(-p)
        prop = beta_logpdf(p, conc * x, conc * (1 - x)) - beta_logpdf(x, conc * p, conc * (1 - p))
    return like + prior_x - prior_p + prop


def _mh_detection(p, p_other, L, A, n, mean_logit, s2, conc, rng):
    x = rng.beta(conc * p, conc * (1.0 - p))
    u = rng.random(p.size)
    valid = (x > 0.0) & (x < 1.0)
    xs = np.where(valid, x, 0.5)
    lr = detection_log_ratio(xs, p, p_other, L, A, n, mean_logit, s2, conc)
    accept = valid & (np.log(u) < lr)
    return np.where(accept, x, p), accept


def update_detection_probs(state: ParamState, data: InteractionData, prior: PriorConfig,
                           rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Beta-proposal Metropolis-Hastings for every p_i, then every p_j.

    Returns the acceptance indicators for rows and columns.
    """
    conc = prior.mh_concentration
    mean_row = state.delta0 + state.U @ state.delta
    state.p_row, acc_r = _mh_detection(state.p_row, state.p_col, state.L, data.A, data.n_overlap,
                                       mean_row, state.s2_pB, conc, rng)
    mean_col = state.zeta0 + state.V @ state.zeta
    state.p_col, acc_c = _mh_detection(state.p_col, state.p_row, state.L.T, data.A.T, data.n_overlap.T,
                                       mean_col, state.s2_pP, conc, rng)
    return acc_r, acc_c


# --------------------------------------------------------------------------- rho


def rho_log_ratio(x: float, rho: float, F: np.ndarray, fp: FactorPrior, prior: PriorConfig) -> float:
    """Log MH ratio for rho -> x: factor-prior densities, Beta prior and proposal ratio."""
    conc = prior.mh_concentration
    return (fp.logpdf(F, x) - fp.logpdf(F, rho)
            + beta_logpdf(x, prior.a_rho, prior.b_rho) - beta_logpdf(rho, prior.a_rho, prior.b_rho)
            + beta_logpdf(rho, conc * x, conc * (1 - x)) - beta_logpdf(x, conc * rho, conc * (1 - rho)))


def _mh_rho(rho, F, fp, prior, rng):
    conc = prior.mh_concentration
    x = float(rng.beta(conc * rho, conc * (1.0 - rho)))
    u = rng.random()
    if not 0.0 < x < 1.0:
        return rho
    lr = rho_log_ratio(x, rho, F, fp, prior)
    return x if np.log(u) < lr else rho


def update_rho(state: ParamState, problem: Problem, rng: np.random.Generator) -> None:
    state.rho_U = _mh_rho(state.rho_U, state.U, problem.fp_U, problem.prior, rng)
    state.rho_V = _mh_rho(state.rho_V, state.V, problem.fp_V, problem.prior, rng)


# --------------------------------------------------------------------------- imputation


def _impute_side(Xv, traits, F, coef0, Bmat, sigma2, rng):
    miss = traits.missing
    if not miss.any():
        return
    lin = coef0 + F @ Bmat
    for m in np.flatnonzero(miss.any(axis=0)):
        rows = miss[:, m]
        mu = lin[rows, m]
        if traits.is_binary[m]:
            Xv[rows, m] = (rng.random(mu.size) < expit(mu)).astype(float)
        else:
            Xv[rows, m] = mu + np.sqrt(sigma2[m]) * rng.standard_normal(mu.size)


def impute_missing_traits(state: ParamState, traits_row: TraitMatrix, traits_col: TraitMatrix,
                          rng: np.random.Generator) -> None:
    """Redraw every missing trait cell from its trait submodel."""
    _impute_side(state.X, traits_row, state.U, state.beta0, state.B, state.sigma2_X, rng)
    _impute_side(state.W, traits_col, state.V, state.gamma0, state.G, state.sigma2_W, rng)


# --------------------------------------------------------------------------- driver


def sweep(state: ParamState, problem: Problem, rng: np.random.Generator, model: str = LATENT_BC) -> None:
    """One full scan: L, lambda, traits, detection coefficients, factors,
    shrinkage, detection probabilities, rho, imputation."""
    bc = model == LATENT_BC
    prior = problem.prior
    if bc:
        update_true_interactions(state, problem.data, rng)
    omega_L = update_interaction_coeffs(state, prior, rng)
    omega_X, omega_W = update_trait_models(state, problem.traits_row, problem.traits_col, prior, rng)
    if bc:
        update_detection_coeffs(state, prior, rng)
    update_latent_factors(state, problem, rng, omega_L, omega_X, omega_W, bias_corrected=bc)
    update_shrinkage(state, prior, rng, bias_corrected=bc)
    if bc:
        update_detection_probs(state, problem.data, prior, rng)
    update_rho(state, problem, rng)
    impute_missing_traits(state, problem.traits_row, problem.traits_col, rng)


SAMPLE_FIELDS = ("lam0", "lam", "U", "V", "beta0", "B", "sigma2_X", "gamma0", "G", "sigma2_W",
                 "delta0", "delta", "zeta0", "zeta", "s2_pB", "s2_pP", "p_row", "p_col", "rho_U", "rho_V")


def snapshot(state: ParamState) -> dict[str, np.ndarray]:
    out = {k: np.array(getattr(state, k), dtype=float, copy=True) for k in SAMPLE_FIELDS}
    out["theta"] = state.shrink.theta.copy()
    out["z"] = state.shrink.z.copy()
    return out


def _check_finite(state: ParamState, it: int) -> None:
    scalars = (state.lam0, state.delta0, state.zeta0, state.s2_pB, state.s2_pP, state.rho_U, state.rho_V)
    arrays = (state.U, state.V, state.lam, state.B, state.G, state.sigma2_X, state.sigma2_W,
              state.p_row, state.p_col, state.shrink.theta)
    if not (np.isfinite(scalars).all() and all(np.isfinite(a).all() for a in arrays)):
        raise SamplerError(f"non-finite parameter state at iteration {it}")


def pick_tracked_cells(A: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 7919])
    cand = np.argwhere(A == 0)
    if cand.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    idx = rng.choice(cand.shape[0], size=min(k, cand.shape[0]), replace=False)
    return cand[np.sort(idx)]


def _chain_worker(args):
    return run_single_chain(*args)


def run_single_chain(problem: Problem, config: ChainConfig, seed_seq, model: str,
                     tracked_cells: np.ndarray, chain: int = 0) -> dict:
    rng = np.random.default_rng(seed_seq)
    data = problem.data
    C_U, C_V = problem.fp_U.C, problem.fp_V.C
    state = init_state(problem.prior, data, problem.traits_row, problem.traits_col, C_U, C_V, rng)
    bc = model == LATENT_BC
    if not bc:
        state.L = data.A.copy()
        state.p_row[:] = 1.0
        state.p_col[:] = 1.0
    K = config.kept_per_chain
    n_B, n_P = data.A.shape
    L_sum = np.zeros((n_B, n_P))
    P_sum = np.zeros((n_B, n_P))
    L_tr = np.zeros((K, tracked_cells.shape[0]), dtype=np.int8)
    kept: list[dict] = []
    t0 = time.perf_counter()
    for it in range(1, config.n_iter + 1):
        sweep(state, problem, rng, model)
        _check_finite(state, it)
        if config.keeps(it):
            k = len(kept)
            if bc:
                L_sum += state.L
                P_sum += conditional_L_probability(state, data)
            else:
                prob = np.where(data.A == 1, 1.0, expit(state.interaction_logits()))
                L_sum += prob
                P_sum += prob
            if tracked_cells.size:
                L_tr[k] = state.L[tracked_cells[:, 0], tracked_cells[:, 1]]
            kept.append(snapshot(state))
    samples = {k: np.stack([d[k] for d in kept]) for k in kept[0]} if kept else {}
    return dict(L_sum=L_sum, P_sum=P_sum, samples=samples, L_tracked=L_tr, n_kept=len(kept),
                seconds=time.perf_counter() - t0, chain=chain)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("LGI_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_chain(config: ChainConfig, prior: PriorConfig, data: InteractionData, traits_row: TraitMatrix,
              traits_col: TraitMatrix, C_U: np.ndarray, C_V: np.ndarray, model: str = LATENT_BC,
              threads: int | None = None, n_tracked: int = 9) -> PosteriorDraws:
    """Run ``config.n_chains`` chains (seeds spawned from ``config.seed``) and pool them."""
    if model not in (LATENT_BC, LATENT_OBS):
        raise ValueError(f"unknown latent model {model!r}")
    problem = make_problem(data, traits_row, traits_col, C_U, C_V, prior)
    tracked = pick_tracked_cells(data.A, n_tracked, config.seed)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(problem, config, seeds[c], model, tracked, c) for c in range(config.n_chains)]
    return _pool_chains(jobs, _chain_worker, model, data, tracked, config, prior, threads,
                        trait_meta(traits_row, traits_col))


def trait_meta(traits_row: TraitMatrix, traits_col: TraitMatrix) -> dict:
    return dict(row_trait_kinds=list(traits_row.kind), col_trait_kinds=list(traits_col.kind),
                row_trait_names=list(traits_row.names), col_trait_names=list(traits_col.names))


def _pool_chains(jobs, worker, model, data, tracked, config, prior, threads, extra_meta=None) -> PosteriorDraws:
    t0 = time.perf_counter()
    nthreads = min(resolve_threads(threads), len(jobs))
    if nthreads > 1:
        with ProcessPoolExecutor(max_workers=nthreads) as ex:
            results = list(ex.map(worker, jobs))
    else:
        results = [worker(j) for j in jobs]
    samples = {k: np.stack([r["samples"][k] for r in results]) for k in results[0]["samples"]}
    return PosteriorDraws(
        model=model,
        A=data.A.copy(),
        L_sum=np.stack([r["L_sum"] for r in results]),
        Lprob_sum=np.stack([r["P_sum"] for r in results]),
        n_kept=np.array([r["n_kept"] for r in results]),
        samples=samples,
        tracked_cells=tracked,
        L_tracked=np.stack([r["L_tracked"] for r in results]),
        row_ids=tuple(data.row_ids),
        col_ids=tuple(data.col_ids),
        meta=dict(chain_config=config.__dict__, prior=prior.__dict__, seeds=[config.seed],
                  chain_seconds=[round(r["seconds"], 3) for r in results],
                  wall_seconds=round(time.perf_counter() - t0, 3), **(extra_meta or {})),
    )
