"""Convergence checks on identifiable quantities."""
from __future__ import annotations

import csv
import os
import warnings

import numpy as np


def running_means(series: np.ndarray) -> np.ndarray:
    """Cumulative means along the last axis.

    >>> running_means(np.array([1, 0, 1, 0])).round(3)
    array([1.   , 0.5  , 0.667, 0.5  ])
    """
    x = np.asarray(series, dtype=float)
    return np.cumsum(x, axis=-1) / np.arange(1, x.shape[-1] + 1)


def cell_running_means(draws, cells=None) -> np.ndarray:
    """Per-chain running means of L at tracked cells, shape (chains, cells, draws).

    ``cells`` defaults to every tracked cell; requesting a recorded cell warns
    and yields a constant series of 1.
    """
    tracked = [tuple(c) for c in np.asarray(draws.tracked_cells).tolist()]
    if cells is None:
        cells = tracked
    out = []
    for cell in cells:
        i, j = int(cell[0]), int(cell[1])
        if draws.A[i, j] == 1:
            warnings.warn(f"cell ({i}, {j}) is recorded; its running mean is constant 1", RuntimeWarning,
                          stacklevel=2)
            out.append(np.ones((draws.n_chains, draws.L_tracked.shape[1])))
            continue
        if (i, j) not in tracked:
            raise KeyError(f"cell ({i}, {j}) was not tracked during sampling")
        out.append(running_means(draws.L_tracked[:, :, tracked.index((i, j))]))
    return np.stack(out, axis=1) if out else np.zeros((draws.n_chains, 0, 0))


def chain_agreement(chains: np.ndarray) -> float:
    """sqrt(pooled variance / mean within-chain variance) for (chains, draws) input.

    Both variances use ddof=0; identical chains give exactly 1. Chains stuck
    at different constants give inf.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("chain agreement needs at least 2 chains")
    within = x.var(axis=1).mean()
    pooled = x.var()
    if within == 0:
        return 1.0 if pooled == 0 else float("inf")
    return float(np.sqrt(pooled / within))


def tracked_species(n_B: int, n_P: int, seed: int = 0, k: int = 4) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 104729])
    return (np.sort(rng.choice(n_B, size=min(k, n_B), replace=False)),
            np.sort(rng.choice(n_P, size=min(k, n_P), replace=False)))


def diagnostic_streams(draws, seed: int = 0) -> dict[str, np.ndarray]:
    """Identifiable scalar series, each (chains, draws).

    Trait linear predictors and detection probabilities for 4 rows and 4
    columns, rho and the residual variances. Raw factors and their
    coefficients are not identifiable and are left out.
    """
    s = draws.samples
    out: dict[str, np.ndarray] = {}
    for name in ("rho_U", "rho_V", "s2_pB", "s2_pP"):
        if name in s:
            out[name] = s[name]
    for name in ("sigma2_X", "sigma2_W"):
        if name in s:
            for m in range(s[name].shape[2]):
                out[f"{name}[{m}]"] = s[name][:, :, m]
    n_B, n_P = draws.A.shape
    rows, cols = tracked_species(n_B, n_P, seed)
    if "p_row" in s:
        for i in rows:
            out[f"p_row[{i}]"] = s["p_row"][:, :, i]
        for j in cols:
            out[f"p_col[{j}]"] = s["p_col"][:, :, j]
    if "U" in s and "B" in s:
        for i in rows:
            lin = s["beta0"] + np.einsum("ckh,ckhp->ckp", s["U"][:, :, i], s["B"])
            for m in range(lin.shape[2]):
                out[f"row_trait_lp[{i},{m}]"] = lin[:, :, m]
        for j in cols:
            lin = s["gamma0"] + np.einsum("ckh,ckhp->ckp", s["V"][:, :, j], s["G"])
            for m in range(lin.shape[2]):
                out[f"col_trait_lp[{j},{m}]"] = lin[:, :, m]
    return out


def export_diagnostics(draws, out_dir: str, seed: int = 0) -> dict[str, float]:
    """Write trace_<name>.csv, running_means.csv and rhat.csv; return the ratios."""
    os.makedirs(out_dir, exist_ok=True)
    streams = diagnostic_streams(draws, seed)
    ratios = {}
    for name, x in streams.items():
        safe = name.replace("[", "_").replace("]", "").replace(",", "_")
        with open(os.path.join(out_dir, f"trace_{safe}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "draw", "value"])
            for c in range(x.shape[0]):
                for r in range(x.shape[1]):
                    w.writerow([c, r, format(float(x[c, r]), ".10g")])
        if x.shape[0] >= 2:
            ratios[name] = chain_agreement(x)
    rm = cell_running_means(draws)
    with open(os.path.join(out_dir, "running_means.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "chain", "draw", "running_mean"])
        for k, (i, j) in enumerate(np.asarray(draws.tracked_cells).tolist()):
            for c in range(rm.shape[0]):
                for r in range(rm.shape[2]):
                    w.writerow([i, j, c, r, format(float(rm[c, k, r]), ".6g")])
    with open(os.path.join(out_dir, "rhat.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "ratio"])
        for name, v in ratios.items():
            w.writerow([name, format(v, ".6g")])
    return ratios
