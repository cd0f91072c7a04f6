"""Posterior interaction summaries and importance-sampling predictions for
species that are absent from every study."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._numerics import SamplerError, expit, log_expit, norm_logpdf

log = logging.getLogger(__name__)

ROW = "row"
COL = "col"


@dataclass
class InteractionPosterior:
    prob: np.ndarray
    mcse: np.ndarray
    recorded: np.ndarray

    @property
    def flags(self) -> np.ndarray:
        return np.where(self.recorded, "recorded", "unrecorded")


def posterior_interaction_matrix(draws, rao_blackwell: bool = False) -> InteractionPosterior:
    """Cellwise posterior mean of L pooled over chains.

    With ``rao_blackwell`` the conditional probabilities P(L=1 | rest) are
    averaged instead of the 0/1 draws. ``mcse`` is the standard error of the
    per-chain means (NaN for a single chain).
    """
    n_kept = np.asarray(draws.n_kept, dtype=float)
    if n_kept.sum() <= 0:
        raise ValueError("posterior has no kept draws")
    sums = draws.Lprob_sum if rao_blackwell else draws.L_sum
    prob = sums.sum(axis=0) / n_kept.sum()
    rec = np.asarray(draws.A) == 1
    prob = np.where(rec, 1.0, np.clip(prob, 0.0, 1.0))
    if sums.shape[0] > 1 and (n_kept > 0).all():
        per_chain = sums / n_kept[:, None, None]
        mcse = per_chain.std(axis=0, ddof=1) / np.sqrt(sums.shape[0])
    else:
        mcse = np.full(prob.shape, np.nan)
    return InteractionPosterior(prob, np.where(rec, 0.0, mcse), rec)


@dataclass
class NewSpecies:
    """A species outside the fitted network.

    ``values`` are on the fitted (standardized) trait scale with NaN for
    missing cells; ``taxonomy`` holds its rank labels.
    """

    values: np.ndarray
    side: str = ROW
    taxonomy: dict = field(default_factory=dict)
    id: str = ""

    def __post_init__(self):
        if self.side not in (ROW, COL):
            raise ValueError(f"side must be 'row' or 'col', got {self.side!r}")
        self.values = np.asarray(self.values, dtype=float)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @classmethod
    def from_raw(cls, raw, traits, side=ROW, taxonomy=None, id=""):
        """Standardize raw trait values with the centering used for ``traits``."""
        return cls(traits.transform(np.asarray(raw, dtype=float)), side, dict(taxonomy or {}), id)


def extend_correlation(C_in: np.ndarray, corr: np.ndarray) -> np.ndarray:
    n = C_in.shape[0]
    C = np.empty((n + 1, n + 1))
    C[:n, :n] = C_in
    C[n, :n] = C[:n, n] = corr
    C[n, n] = 1.0
    return C


def _side_names(side):
    if side == ROW:
        return "U", "beta0", "B", "sigma2_X", "rho_U"
    return "V", "gamma0", "G", "sigma2_W", "rho_V"


def sample_new_latents(draws, new: NewSpecies, C_extended: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw the new species' factors given each kept draw of the in-sample factors.

    ``C_extended`` is the taxonomy correlation with the new species appended
    last. Returns an array (n_draws, H).
    """
    F_name, _, _, _, rho_name = _side_names(new.side)
    F = draws.pooled(F_name)                     # (R, n, H)
    rho = draws.pooled(rho_name)                 # (R,)
    n = F.shape[1]
    C_extended = np.asarray(C_extended, dtype=float)
    if C_extended.shape != (n + 1, n + 1):
        raise ValueError(f"extended correlation must be {(n + 1, n + 1)}, got {C_extended.shape}")
    c, Q = np.linalg.eigh(C_extended[:n, :n])
    qc = Q.T @ C_extended[n, :n]
    e = rho[:, None] * c[None, :] + (1.0 - rho[:, None])       # (R, n)
    if (e <= 1e-12).any():
        raise SamplerError("in-sample factor covariance is singular for some draw")
    # a_r = Sigma_in^{-1} s_r with s_r = rho_r * c_new
    a = (rho[:, None] * qc[None, :] / e) @ Q.T                  # (R, n)
    mean = np.einsum("rn,rnh->rh", a, F)
    var = 1.0 - rho * (a @ C_extended[n, :n]) if n else np.ones_like(rho)
    var = np.clip(var, 0.0, None)
    return mean + np.sqrt(var)[:, None] * rng.standard_normal(mean.shape)


def log_importance_weights(draws, new: NewSpecies, latents: np.ndarray) -> np.ndarray:
    """Log of the per-draw weights: sum over observed traits of the trait-model
    log-likelihood at the sampled factors. Missing traits contribute 0."""
    _, c0_name, coef_name, s2_name, _ = _side_names(new.side)
    c0 = draws.pooled(c0_name)          # (R, p)
    coef = draws.pooled(coef_name)      # (R, H, p)
    s2 = draws.pooled(s2_name)          # (R, p)
    p = c0.shape[1]
    if new.values.size != p:
        raise ValueError(f"new species has {new.values.size} traits, model has {p}")
    kinds = draws.meta.get(f"{new.side}_trait_kinds")
    is_bin = np.array([k == "binary" for k in kinds]) if kinds else np.zeros(p, dtype=bool)
    lw = np.zeros(latents.shape[0])
    lin = c0 + np.einsum("rh,rhp->rp", latents, coef)
    for m in np.flatnonzero(~new.missing):
        x = new.values[m]
        if is_bin[m]:
            lw += log_expit(lin[:, m]) if x == 1 else log_expit(-lin[:, m])
        else:
            lw += norm_logpdf(x, lin[:, m], s2[:, m])
    return lw


def importance_weights(draws, new: NewSpecies, latents: np.ndarray) -> np.ndarray:
    return np.exp(log_importance_weights(draws, new, latents))


@dataclass
class OutOfSamplePrediction:
    prob: np.ndarray
    ess: np.ndarray
    n_draws: int


def _weighted(logw: np.ndarray, Ltilde: np.ndarray):
    """Self-normalized weighted mean over axis 0, with ESS."""
    top = logw.max(axis=0)
    if not np.isfinite(top).all():
        raise SamplerError("all importance weights vanished; rescale the traits of the new species")
    w = np.exp(logw - top)
    s = w.sum(axis=0)
    prob = (w * Ltilde).sum(axis=0) / s
    ess = s ** 2 / (w ** 2).sum(axis=0)
    return prob, ess


def predict_block(draws, rng: np.random.Generator, rows, cols, C_row=None, C_col=None,
                  rao_blackwell: bool = False, n_proposals: int = 1) -> OutOfSamplePrediction:
    """Predictions for every pair in ``rows x cols``.

    Each item of ``rows``/``cols`` is an in-sample index or a :class:`NewSpecies`.
    New species need the fitted :class:`~lgi.data.TaxonomyCorrelation` of their
    side (``C_row``/``C_col``); unseen genera or families correlate 0.
    ``n_proposals`` independent factor draws are made for each new species per
    kept draw; all of them enter the weighted mean.
    """
    if n_proposals < 1:
        raise ValueError("n_proposals must be at least 1")
    U = draws.pooled("U")
    V = draws.pooled("V")
    R = U.shape[0]
    M = int(n_proposals)

    def side(items, side_name, F, Ctax):
        lat = np.empty((R, M, len(items), F.shape[2]))
        logw = np.zeros((R, M, len(items)))
        for k, it in enumerate(items):
            if isinstance(it, NewSpecies):
                if Ctax is None:
                    raise ValueError("taxonomy correlation needed for new species")
                if it.side != side_name:
                    it = NewSpecies(it.values, side_name, it.taxonomy, it.id)
                corr = Ctax.correlation_with(it.taxonomy)
                Cext = extend_correlation(Ctax.C, corr)
                for m in range(M):
                    lat[:, m, k] = sample_new_latents(draws, it, Cext, rng)
                    logw[:, m, k] = log_importance_weights(draws, it, lat[:, m, k])
            else:
                lat[:, :, k] = F[:, int(it)][:, None, :]
        return lat.reshape(R * M, len(items), -1), logw.reshape(R * M, len(items))

    lu, wu = side(rows, ROW, U, C_row)
    lv, wv = side(cols, COL, V, C_col)
    lam0 = np.repeat(draws.pooled("lam0"), M)
    lam = np.repeat(draws.pooled("lam"), M, axis=0)
    psi = lam0[:, None, None] + np.einsum("rah,rh,rbh->rab", lu, lam, lv)
    pl = expit(psi)
    Lt = pl if rao_blackwell else (rng.random(pl.shape) < pl).astype(float)
    prob, ess = _weighted(wu[:, :, None] + wv[:, None, :], Lt)
    low = ess < 0.1 * R * M
    if low.any():
        warnings.warn(f"importance weights degenerate (ESS below 10% of {R * M} draws) for "
                      f"{int(low.sum())} pair(s)", RuntimeWarning, stacklevel=2)
    return OutOfSamplePrediction(prob, ess, R * M)


def predict_out_of_sample(draws, rng: np.random.Generator, new_row=None, new_col=None, row=None, col=None,
                          C_row=None, C_col=None) -> OutOfSamplePrediction:
    """Probability that one pair interacts when at least one member is new.

    Give ``new_row`` (a NewSpecies) or the in-sample index ``row``; same for
    columns. The in-sample member enters with its stored factors and weight 1.
    """
    if new_row is None and new_col is None:
        raise ValueError("at least one species of the pair must be new")
    r = new_row if new_row is not None else row
    c = new_col if new_col is not None else col
    if r is None or c is None:
        raise ValueError("each side needs a new species or an in-sample index")
    out = predict_block(draws, rng, [r], [c], C_row, C_col)
    return OutOfSamplePrediction(out.prob[0, 0], out.ess[0, 0], out.n_draws)
