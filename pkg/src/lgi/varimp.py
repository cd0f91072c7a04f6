"""Permutation importance of traits for the fitted interaction logits.

The statistic for trait k of the row species is the average over draws r and
columns j of corr(l_.j^(r), X_.k)^2, computed on species whose trait value is
observed. Its null comes from permuting the observed trait values.

Writing Z_r for the centered, unit-norm columns of the draw-r logits, the
average equals x' S x / (R n_cols) with S = sum_r Z_r Z_r' and x the centered,
unit-norm trait. S is formed once, so each permutation costs one quadratic
form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TraitMatrix
from .predict import COL, ROW


@dataclass
class ImportanceRow:
    trait: str
    side: str
    group: str
    t_obs: float
    perm_mean: float
    perm_sd: float
    z: float
    B: int


def _unit(x: np.ndarray) -> np.ndarray | None:
    x = x - x.mean()
    nrm = np.sqrt(x @ x)
    return None if nrm <= 1e-12 * max(1.0, np.abs(x).max()) else x / nrm


def logit_gram(draws, side: str, rows: np.ndarray, max_draws: int | None = None) -> tuple[np.ndarray, int]:
    """S = sum over draws and partner species of z z', restricted to ``rows``.

    Zero-variance logit columns are dropped (they contribute 0). Returns S and
    the number of (draw, partner) terms averaged over.
    """
    U = draws.pooled("U")
    V = draws.pooled("V")
    lam0 = draws.pooled("lam0")
    lam = draws.pooled("lam")
    R = U.shape[0]
    idx = np.arange(R)
    if max_draws is not None and R > max_draws:
        idx = np.linspace(0, R - 1, max_draws).round().astype(int)
    S = np.zeros((rows.size, rows.size))
    n_terms = 0
    for r in idx:
        l = lam0[r] + (U[r] * lam[r]) @ V[r].T
        if side == COL:
            l = l.T
        Z = l[rows]
        Z = Z - Z.mean(axis=0)
        nrm = np.sqrt((Z ** 2).sum(axis=0))
        ok = nrm > 1e-12
        Z = Z[:, ok] / nrm[ok]
        S += Z @ Z.T
        n_terms += l.shape[1]
    return S, n_terms


def variable_importance(draws, traits: TraitMatrix, k: int, side: str = ROW, B: int = 500,
                        rng: np.random.Generator | None = None, max_draws: int | None = None,
                        _gram=None) -> ImportanceRow:
    """Observed statistic, permutation null moments and z-score for one trait."""
    if B < 1:
        raise ValueError("need permutations: B must be >= 1")
    if side not in (ROW, COL):
        raise ValueError(f"side must be 'row' or 'col', got {side!r}")
    rng = rng if rng is not None else np.random.default_rng()
    obs = np.flatnonzero(~traits.missing[:, k])
    if obs.size < 2:
        raise ValueError(f"trait {traits.names[k]} needs at least 2 observed species")
    x = traits.values[obs, k]
    xu = _unit(x)
    if xu is None:
        raise ValueError(f"trait {traits.names[k]} is constant over its observed species")
    S, n_terms = _gram if _gram is not None else logit_gram(draws, side, obs, max_draws)
    t_obs = float(xu @ S @ xu) / n_terms
    perms = np.stack([rng.permutation(xu) for _ in range(B)])
    t_null = np.einsum("bi,ij,bj->b", perms, S, perms) / n_terms
    mean = float(t_null.mean())
    sd = float(t_null.std(ddof=1)) if B > 1 else 0.0
    z = (t_obs - mean) / sd if sd > 0 else np.nan
    group = "binary" if traits.is_binary[k] else "continuous"
    return ImportanceRow(traits.names[k], side, group, t_obs, mean, sd, float(z), B)


def importance_table(draws, traits_row: TraitMatrix, traits_col: TraitMatrix, B: int = 500,
                     seed: int = 0, max_draws: int | None = None) -> list[ImportanceRow]:
    """Importance of every trait on both sides; one RNG substream per trait."""
    out = []
    streams = iter(np.random.SeedSequence(seed).spawn(traits_row.p + traits_col.p))
    for side, traits in ((ROW, traits_row), (COL, traits_col)):
        cache = {}
        for k in range(traits.p):
            rng = np.random.default_rng(next(streams))
            obs = np.flatnonzero(~traits.missing[:, k])
            key = obs.tobytes()
            if key not in cache and obs.size >= 2:
                cache[key] = logit_gram(draws, side, obs, max_draws)
            out.append(variable_importance(draws, traits, k, side, B, rng, max_draws, _gram=cache.get(key)))
    return out


def write_importance_csv(rows: list[ImportanceRow], path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trait", "side", "group", "t_obs", "perm_mean", "perm_sd", "z"])
        for r in rows:
            w.writerow([r.trait, r.side, r.group, *(format(v, ".10g") for v in (r.t_obs, r.perm_mean, r.perm_sd, r.z))])
