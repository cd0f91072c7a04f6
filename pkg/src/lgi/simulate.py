"""Synthetic networks with known truth.

Three generators share a covariate bank, taxonomy and effort synthesis:

* dgm 1: interaction logit multiplicative in observed traits,
  kappa_0 + sum_l kappa_l X_il W_jl for l = 1..5;
* dgm 2: additive in observed traits (X2, X3, X5, W2, W10);
* dgm 3: multiplicative in the two unobserved covariates of each side, which
  also drive detection.

Detection logits are 0.5 times the sum of the detection covariates plus an
intercept placing the median detection probability at 0.3. The interaction
intercept kappa_0 is tuned by bisection so that the recorded density hits its
target, using fixed uniforms so the density is monotone in kappa_0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._numerics import expit, logit
from .data import (BINARY, CONTINUOUS, InteractionData, TaxonomyCorrelation, TraitMatrix,
                   build_taxonomy_correlation, standardize_traits)

DEFAULT_DIMS = (242, 511)
DESK_DIMS = (60, 100)
TARGET_DENSITY = 0.031

# observed covariates: kinds and fixed missing fractions
ROW_KINDS = (CONTINUOUS,) * 2 + (BINARY,) * 3
COL_KINDS = (CONTINUOUS,) * 4 + (BINARY,) * 8
ROW_MISSING = (0.0, 0.05, 0.10, 0.20, 0.32)
COL_MISSING = (0.0, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.75, 0.80)
N_UNOBSERVED = 2       # one continuous and one binary per side, stored after the observed ones
BANK_CORRELATION = 0.3

# 0-based bank columns
DETECT_ROW = {1: (0, 2, 3), 2: (0, 2, 3), 3: (5, 6)}
DETECT_COL = {1: (0, 1, 4, 5), 2: (0, 1, 4, 5), 3: (12, 13)}
MULT_PAIRS = {1: ((0, 0), (1, 1), (2, 2), (3, 3), (4, 4)), 3: ((5, 12), (6, 13))}
ADD_ROW = (1, 2, 4)
ADD_COL = (1, 9)
DETECT_SLOPE = 0.5
DETECT_MEDIAN = 0.3
DETECT_NOISE_SD = 0.5


@dataclass
class SyntheticTruth:
    dgm: int
    L_true: np.ndarray
    psi: np.ndarray                 # true interaction logits
    kappa: np.ndarray               # (kappa_0, slopes...)
    p_row: np.ndarray
    p_col: np.ndarray
    bank_row: np.ndarray            # observed + unobserved covariates before missingness
    bank_col: np.ndarray
    holdout_rows: np.ndarray
    holdout_cols: np.ndarray
    target_density: float
    realized_density: float
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def oracle(self) -> np.ndarray:
        """Scores of the known generative model: P(L_ij = 1)."""
        return expit(self.psi)

    def to_json(self) -> str:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticTruth":
        d = json.loads(text)
        arr = ("L_true", "psi", "kappa", "p_row", "p_col", "bank_row", "bank_col", "holdout_rows", "holdout_cols")
        for k in arr:
            d[k] = np.asarray(d[k])
        d["L_true"] = d["L_true"].astype(np.int8)
        d["holdout_rows"] = d["holdout_rows"].astype(np.int64)
        d["holdout_cols"] = d["holdout_cols"].astype(np.int64)
        return cls(**d)


@dataclass
class SyntheticDataset:
    data: InteractionData
    traits_row: TraitMatrix
    traits_col: TraitMatrix
    tax_row: TaxonomyCorrelation
    tax_col: TaxonomyCorrelation
    truth: SyntheticTruth


def random_taxonomy(n: int, ranks: tuple[str, ...], rng: np.random.Generator, prefix: str) -> list[dict]:
    """Nested random taxonomy, coarsest rank first in ``ranks``: species are
    grouped into genera of 1-4, genera into families of 1-4, and so on."""
    levels = [dict() for _ in range(n)]
    group = np.arange(n)
    for r in reversed(ranks):
        n_units = int(group.max()) + 1
        sizes = []
        while sum(sizes) < n_units:
            sizes.append(int(rng.integers(1, 5)))
        group = np.repeat(np.arange(len(sizes)), sizes)[:n_units][group]
        for i in range(n):
            levels[i][r] = f"{prefix}{r[:3]}{group[i] + 1}"
    return levels


def matrix_normal(C: np.ndarray, q: int, corr: float, rng: np.random.Generator) -> np.ndarray:
    """n x q draw with row covariance C and column correlation ``corr``."""
    S = (1.0 - corr) * np.eye(q) + corr * np.ones((q, q))
    w, Q = np.linalg.eigh(C)
    left = Q * np.sqrt(np.clip(w, 0.0, None))
    return left @ rng.standard_normal((C.shape[0], q)) @ np.linalg.cholesky(S).T


def _covariate_bank(C, kinds_all, rng):
    Z = matrix_normal(C, len(kinds_all), BANK_CORRELATION, rng)
    bank = Z.copy()
    for m, k in enumerate(kinds_all):
        if k == BINARY:
            bank[:, m] = (rng.random(C.shape[0]) < expit(Z[:, m])).astype(float)
    return bank


def synthesize_effort(n_B: int, n_P: int, rng: np.random.Generator, n_studies: int | None = None,
                      holdout_rows=(), holdout_cols=()) -> np.ndarray:
    """Study-overlap counts from simulated study membership.

    Studies are bird-focused (few birds, many plants), plant-focused or
    whole-network; species enter studies in proportion to a log-normal
    popularity, which makes effort strongly uneven. Held-out species join no
    study.
    """
    if n_studies is None:
        n_studies = 120
    pop_B = rng.lognormal(0.0, 1.0, n_B)
    pop_P = rng.lognormal(0.0, 1.0, n_P)
    pop_B[list(holdout_rows)] = 0.0
    pop_P[list(holdout_cols)] = 0.0
    pB = pop_B / pop_B.sum()
    pP = pop_P / pop_P.sum()
    avail_B = int((pop_B > 0).sum())
    avail_P = int((pop_P > 0).sum())
    rows_in = np.zeros((n_studies, n_B))
    cols_in = np.zeros((n_studies, n_P))
    kinds = rng.choice(3, size=n_studies, p=(0.35, 0.35, 0.30))
    for s, kind in enumerate(kinds):
        if kind == 0:
            kb = int(rng.integers(1, 4))
            kp = int(round(rng.uniform(0.1, 0.4) * avail_P))
        elif kind == 1:
            kb = int(round(rng.uniform(0.1, 0.4) * avail_B))
            kp = int(rng.integers(1, 4))
        else:
            kb = int(round(rng.uniform(0.1, 0.3) * avail_B))
            kp = int(round(rng.uniform(0.1, 0.3) * avail_P))
        kb = min(max(kb, 1), avail_B)
        kp = min(max(kp, 1), avail_P)
        rows_in[s, rng.choice(n_B, size=kb, replace=False, p=pB)] = 1
        cols_in[s, rng.choice(n_P, size=kp, replace=False, p=pP)] = 1
    return (rows_in.T @ cols_in).astype(np.int64)


def _detection(bank, cols, rng):
    eta = DETECT_SLOPE * bank[:, list(cols)].sum(axis=1) + DETECT_NOISE_SD * rng.standard_normal(bank.shape[0])
    d0 = logit(DETECT_MEDIAN) - np.median(eta)
    return expit(d0 + eta)


def interaction_logits(dgm: int, bank_row, bank_col, kappa) -> np.ndarray:
    """Interaction logits of a generator for intercept and slopes ``kappa``."""
    if dgm in MULT_PAIRS:
        pairs = MULT_PAIRS[dgm]
        psi = np.full((bank_row.shape[0], bank_col.shape[0]), float(kappa[0]))
        for l, (a, b) in enumerate(pairs, start=1):
            psi += kappa[l] * np.outer(bank_row[:, a], bank_col[:, b])
        return psi
    if dgm == 2:
        r = bank_row[:, list(ADD_ROW)] @ kappa[1:1 + len(ADD_ROW)]
        c = bank_col[:, list(ADD_COL)] @ kappa[1 + len(ADD_ROW):]
        return kappa[0] + r[:, None] + c[None, :]
    raise ValueError(f"unknown data-generating mechanism {dgm}")


def n_slopes(dgm: int) -> int:
    if dgm in MULT_PAIRS:
        return len(MULT_PAIRS[dgm])
    if dgm == 2:
        return len(ADD_ROW) + len(ADD_COL)
    raise ValueError(f"unknown data-generating mechanism {dgm}")


def calibrate_intercept(slope_logits, detect_prob, u_L, u_D, target, max_steps=100, tol=1e-4):
    """Bisection for kappa_0 so that mean(L & detected) is closest to ``target``.

    ``slope_logits`` excludes the intercept; uniforms are held fixed, so the
    recorded density is nondecreasing in kappa_0.
    """
    detected = u_D < detect_prob
    if detected.mean() < target:
        raise RuntimeError(f"effort too low: at most {detected.mean():.4f} of pairs can be recorded")

    def density(k0):
        return np.mean((u_L < expit(k0 + slope_logits)) & detected)

    lo, hi = -30.0, 30.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        d = density(mid)
        if abs(d - target) <= tol or hi - lo < 1e-10:
            return mid
        if d < target:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(density(mid) - target) > 0.005:
        raise RuntimeError("intercept calibration did not converge in the allowed bisection steps")
    return mid


def default_holdouts(n: int, full: int) -> int:
    return max(2, int(round(10 * n / full)))


def generate_dataset(dgm: int = 1, dims: tuple[int, int] = DEFAULT_DIMS, seed: int = 0,
                     slopes=None, target_density: float = TARGET_DENSITY,
                     n_holdout: tuple[int, int] | None = None, n_studies: int | None = None,
                     n_overlap: np.ndarray | None = None) -> SyntheticDataset:
    """Draw one synthetic network with known truth.

    ``slopes`` defaults to 1 for every term; ``n_overlap`` replaces the
    synthesized effort matrix when given (held-out species are zeroed).
    """
    if dgm not in (1, 2, 3):
        raise ValueError(f"dgm must be 1, 2 or 3, got {dgm}")
    n_B, n_P = dims
    rng = np.random.default_rng([seed, dgm])
    tax_r = random_taxonomy(n_B, ("order", "family", "genus"), rng, "B")
    tax_c = random_taxonomy(n_P, ("family", "genus"), rng, "P")
    row_ids = tuple(f"B{i + 1:03d}" for i in range(n_B))
    col_ids = tuple(f"P{j + 1:03d}" for j in range(n_P))
    tax_row = build_taxonomy_correlation(dict(zip(row_ids, tax_r)), row_ids)
    tax_col = build_taxonomy_correlation(dict(zip(col_ids, tax_c)), col_ids)

    kinds_r = ROW_KINDS + (CONTINUOUS, BINARY)
    kinds_c = COL_KINDS + (CONTINUOUS, BINARY)
    bank_row = _covariate_bank(tax_row.C, kinds_r, rng)
    bank_col = _covariate_bank(tax_col.C, kinds_c, rng)

    p_row = _detection(bank_row, DETECT_ROW[dgm], rng)
    p_col = _detection(bank_col, DETECT_COL[dgm], rng)

    if n_holdout is None:
        n_holdout = (default_holdouts(n_B, DEFAULT_DIMS[0]), default_holdouts(n_P, DEFAULT_DIMS[1]))
    hold_r = np.sort(rng.choice(n_B, size=n_holdout[0], replace=False))
    hold_c = np.sort(rng.choice(n_P, size=n_holdout[1], replace=False))
    if n_overlap is None:
        n = synthesize_effort(n_B, n_P, rng, n_studies, hold_r, hold_c)
    else:
        n = np.array(n_overlap, dtype=np.int64, copy=True)
        if n.shape != (n_B, n_P):
            raise ValueError("n_overlap does not match dims")
        n[hold_r] = 0
        n[:, hold_c] = 0

    k = n_slopes(dgm)
    slopes = np.ones(k) if slopes is None else np.broadcast_to(np.asarray(slopes, dtype=float), (k,)).copy()
    slope_logits = interaction_logits(dgm, bank_row, bank_col, np.concatenate(([0.0], slopes)))
    u_L = rng.random((n_B, n_P))
    u_D = rng.random((n_B, n_P))
    detect = 1.0 - (1.0 - np.outer(p_row, p_col)) ** n
    k0 = calibrate_intercept(slope_logits, detect, u_L, u_D, target_density)
    psi = k0 + slope_logits
    L = (u_L < expit(psi)).astype(np.int8)
    A = (L.astype(bool) & (u_D < detect)).astype(np.int8)

    def observed(bank, kinds, fracs, ids):
        raw = bank[:, :len(kinds)].copy()
        for m, f in enumerate(fracs):
            k_miss = int(round(f * raw.shape[0]))
            if k_miss:
                raw[rng.choice(raw.shape[0], size=k_miss, replace=False), m] = np.nan
        names = tuple(f"{ids[0][0]}{m + 1}" for m in range(len(kinds)))
        return standardize_traits(raw, kinds, names, ids)

    traits_row = observed(bank_row, ROW_KINDS, ROW_MISSING, row_ids)
    traits_col = observed(bank_col, COL_KINDS, COL_MISSING, col_ids)

    data = InteractionData(A, n, row_ids, col_ids, ())
    truth = SyntheticTruth(
        dgm=dgm, L_true=L, psi=psi, kappa=np.concatenate(([k0], slopes)), p_row=p_row, p_col=p_col,
        bank_row=bank_row, bank_col=bank_col, holdout_rows=hold_r, holdout_cols=hold_c,
        target_density=target_density, realized_density=float(A.mean()), seed=seed,
        extra=dict(true_density=float(L.mean())),
    )
    return SyntheticDataset(data, traits_row, traits_col, tax_row, tax_col, truth)
