"""AUROC evaluation against known truth and hold-out cross-validation."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import EFFORT_BINS, EffortSummary, InteractionData, compute_effort

CATEGORIES = ("unrecorded", "unrecorded-true", "co-existing", "never-co-existing",
              "half-in-sample", "out-of-sample")


def auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counting 1/2.

    >>> auroc([0.9, 0.8, 0.4, 0.2], [1, 0, 1, 0])
    0.75
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative label")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EvalRow:
    method: str
    category: str
    axis: str          # "all", "row" or "col"
    stratum: str       # "all" or an effort percentile range
    auroc: float       # NaN when the stratum holds a single class
    n_cells: int
    n_pos: int
    mean_prob: float


def category_masks(data: InteractionData, holdout_rows, holdout_cols, L_true=None) -> dict[str, np.ndarray]:
    out_r = np.zeros(data.n_B, dtype=bool)
    out_c = np.zeros(data.n_P, dtype=bool)
    out_r[np.asarray(holdout_rows, dtype=int)] = True
    out_c[np.asarray(holdout_cols, dtype=int)] = True
    in_pair = ~out_r[:, None] & ~out_c[None, :]
    unrec = (data.A == 0) & in_pair
    masks = {
        "unrecorded": unrec,
        "co-existing": unrec & (data.n_overlap > 0),
        "never-co-existing": unrec & (data.n_overlap == 0),
        "half-in-sample": out_r[:, None] ^ out_c[None, :],
        "out-of-sample": out_r[:, None] & out_c[None, :],
    }
    if L_true is not None:
        masks["unrecorded-true"] = unrec & (L_true == 1)
    return {c: masks[c] for c in CATEGORIES if c in masks}


def _row(method, cat, axis, stratum, pred, lab, mask):
    p, y = pred[mask], lab[mask]
    n_pos = int(y.sum())
    try:
        a = auroc(p, y)
    except ValueError:
        a = float("nan")
    return EvalRow(method, cat, axis, stratum, a, int(mask.sum()), n_pos,
                   float(p.mean()) if p.size else float("nan"))


def evaluate_stratified(predictions: np.ndarray, truth, data: InteractionData, method: str = "",
                        effort: EffortSummary | None = None) -> list[EvalRow]:
    """AUROC by pair category, and for unrecorded pairs by effort quartile of
    either member. Single-class strata get AUROC NaN (never an error)."""
    pred = np.asarray(predictions, dtype=float)
    if pred.shape != data.A.shape:
        raise ValueError(f"predictions {pred.shape} do not cover the network {data.A.shape}")
    lab = np.asarray(truth.L_true)
    effort = effort or compute_effort(data)
    masks = category_masks(data, truth.holdout_rows, truth.holdout_cols, lab)
    rows = [_row(method, cat, "all", "all", pred, lab, m) for cat, m in masks.items()]
    unrec = masks["unrecorded"]
    for axis, bins in (("row", effort.row_bins[:, None]), ("col", effort.col_bins[None, :])):
        for k in range(1, len(EFFORT_BINS)):
            rows.append(_row(method, "unrecorded", axis, EFFORT_BINS[k], pred, lab, unrec & (bins == k)))
    return rows


def ratio_to_oracle(rows: list[EvalRow], oracle_rows: list[EvalRow]) -> list[EvalRow]:
    """Method AUROC divided by the oracle's in the matching cell."""
    ref = {(r.category, r.axis, r.stratum): r.auroc for r in oracle_rows}
    out = []
    for r in rows:
        o = ref.get((r.category, r.axis, r.stratum), float("nan"))
        out.append(EvalRow(r.method, r.category, r.axis, r.stratum, r.auroc / o if o else float("nan"),
                           r.n_cells, r.n_pos, r.mean_prob))
    return out


def lookup(rows: list[EvalRow], category="unrecorded", axis="all", stratum="all") -> float:
    for r in rows:
        if (r.category, r.axis, r.stratum) == (category, axis, stratum):
            return r.auroc
    raise KeyError((category, axis, stratum))


def write_eval_csv(rows: list[EvalRow], path, ratios: list[EvalRow] | None = None) -> None:
    ratio = {(r.method, r.category, r.axis, r.stratum): r.auroc for r in ratios or []}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "category", "axis", "stratum", "auroc", "ratio_to_oracle", "n_cells", "n_pos",
                    "mean_prob"])
        for r in rows:
            rr = ratio.get((r.method, r.category, r.axis, r.stratum), float("nan"))
            w.writerow([r.method, r.category, r.axis, r.stratum, format(r.auroc, ".6g"), format(rr, ".6g"),
                        r.n_cells, r.n_pos, format(r.mean_prob, ".6g")])


# --------------------------------------------------------------------------- hold-out CV


@dataclass
class CVSplit:
    data: InteractionData     # recorded cells in ``cells`` set to 0, overlap unchanged
    cells: np.ndarray         # (k, 2) held-out (row, col) indices


def holdout_cv(data: InteractionData, k: int = 100, reps: int = 20,
               rng: np.random.Generator | None = None) -> list[CVSplit]:
    """``reps`` maskings, each hiding ``k`` recorded interactions."""
    if k < 1:
        raise ValueError("k must be >= 1: an empty mask leaves the ratio undefined")
    rec = np.argwhere(data.A == 1)
    if k > rec.shape[0]:
        raise ValueError(f"cannot hold out {k} of {rec.shape[0]} recorded interactions")
    rng = rng if rng is not None else np.random.default_rng()
    out = []
    for _ in range(reps):
        cells = rec[np.sort(rng.choice(rec.shape[0], size=k, replace=False))]
        A = data.A.copy()
        A[cells[:, 0], cells[:, 1]] = 0
        out.append(CVSplit(data.with_A(A), cells))
    return out


def cv_ratio(prob: np.ndarray, split: CVSplit) -> tuple[float, float]:
    """(mean, median) posterior probability of the held-out cells over the
    (mean, median) over every unrecorded cell of the masked network. A zero
    denominator gives NaN."""
    held = prob[split.cells[:, 0], split.cells[:, 1]]
    unrec = prob[split.data.A == 0]
    ratio = [float(f(held) / f(unrec)) if f(unrec) > 0 else float("nan") for f in (np.mean, np.median)]
    return ratio[0], ratio[1]
