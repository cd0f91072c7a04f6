"""Ingestion of interaction events, species traits and taxonomy.

Everything here is pure construction: the returned containers are never
mutated by the samplers.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MISSING_TOKEN = "NA"
CONTINUOUS = "continuous"
BINARY = "binary"

#: correlation assigned to the finest shared rank (self, genus, family, order, none)
DEFAULT_LEVEL_WEIGHTS = {"self": 1.0, "genus": 0.75, "family": 0.5, "order": 0.25, "none": 0.0}
RANKS = ("genus", "family", "order")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class InteractionData:
    A: np.ndarray
    n_overlap: np.ndarray
    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    study_ids: tuple[str, ...] = ()

    def __post_init__(self):
        A = np.asarray(self.A)
        n = np.asarray(self.n_overlap)
        if A.ndim != 2 or A.shape != n.shape:
            raise DataError(f"A {A.shape} and n_overlap {n.shape} must be equal 2-d shapes")
        if not np.isin(A, (0, 1)).all():
            raise DataError("A must be binary")
        if (n < 0).any():
            raise DataError("n_overlap must be nonnegative")
        if ((A == 1) & (n < 1)).any():
            raise DataError("recorded interaction without study overlap (A_ij=1 but n_ij=0)")
        if len(self.row_ids) != A.shape[0] or len(self.col_ids) != A.shape[1]:
            raise DataError("species identifiers do not match matrix dimensions")
        object.__setattr__(self, "A", A.astype(np.int8))
        object.__setattr__(self, "n_overlap", n.astype(np.int64))

    @property
    def n_B(self) -> int:
        return self.A.shape[0]

    @property
    def n_P(self) -> int:
        return self.A.shape[1]

    def subset(self, rows=None, cols=None) -> "InteractionData":
        rows = np.arange(self.n_B) if rows is None else np.asarray(rows)
        cols = np.arange(self.n_P) if cols is None else np.asarray(cols)
        return InteractionData(
            A=self.A[np.ix_(rows, cols)],
            n_overlap=self.n_overlap[np.ix_(rows, cols)],
            row_ids=tuple(self.row_ids[i] for i in rows),
            col_ids=tuple(self.col_ids[j] for j in cols),
            study_ids=self.study_ids,
        )

    def with_A(self, A: np.ndarray) -> "InteractionData":
        return InteractionData(A, self.n_overlap, self.row_ids, self.col_ids, self.study_ids)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        if not os.path.exists(source):
            raise DataError(f"file not found: {source}")
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source
    raise TypeError(f"cannot read tabular data from {type(source).__name__}")


def _read_rows(source) -> tuple[list[str], list[tuple[int, list[str]]]]:
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file: a header row is required") from None
        rows = [(reader.line_num, [c.strip() for c in row]) for row in reader if row]
    finally:
        if fh is not source:
            fh.close()
    return header, rows


def load_events(source) -> InteractionData:
    """Build the recorded network and study-overlap counts from event records.

    ``source`` is a path or text stream with header ``study_id,row_species,col_species``.
    Species are indexed in order of first appearance. ``n_overlap[i, j]`` counts
    the studies in which both species took part in at least one recorded event.
    """
    header, rows = _read_rows(source)
    needed = ("study_id", "row_species", "col_species")
    missing = [c for c in needed if c not in header]
    if missing:
        raise DataError(f"events header lacks columns {missing}")
    pos = [header.index(c) for c in needed]

    row_idx: dict[str, int] = {}
    col_idx: dict[str, int] = {}
    study_idx: dict[str, int] = {}
    pairs = set()
    for line, rec in rows:
        try:
            s, b, p = (rec[k] for k in pos)
        except IndexError:
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(rec)}") from None
        if not (s and b and p):
            raise DataError(f"line {line}: empty study_id, row_species or col_species")
        i = row_idx.setdefault(b, len(row_idx))
        j = col_idx.setdefault(p, len(col_idx))
        k = study_idx.setdefault(s, len(study_idx))
        pairs.add((k, i, j))
    if not pairs:
        raise DataError("no events")

    n_B, n_P, n_S = len(row_idx), len(col_idx), len(study_idx)
    A = np.zeros((n_B, n_P), dtype=np.int8)
    row_in = np.zeros((n_S, n_B), dtype=np.int64)
    col_in = np.zeros((n_S, n_P), dtype=np.int64)
    for k, i, j in pairs:
        A[i, j] = 1
        row_in[k, i] = 1
        col_in[k, j] = 1
    n_overlap = row_in.T @ col_in
    return InteractionData(A, n_overlap, tuple(row_idx), tuple(col_idx), tuple(study_idx))


def load_matrices(a_path, n_path) -> InteractionData:
    """Read an already-collapsed network: two CSV matrices with species ids in the
    first column and the header row (as written by :func:`write_matrices`)."""
    A, rows, cols = _read_matrix(a_path)
    n, rows_n, cols_n = _read_matrix(n_path)
    if rows != rows_n or cols != cols_n:
        raise DataError("A and n_overlap matrices label species differently")
    return InteractionData(A.astype(np.int8), n.astype(np.int64), rows, cols)


def _read_matrix(path):
    header, rows = _read_rows(path)
    cols = tuple(header[1:])
    ids = []
    vals = []
    for line, rec in rows:
        if len(rec) != len(header):
            raise DataError(f"{path}, line {line}: expected {len(header)} fields")
        ids.append(rec[0])
        try:
            vals.append([float(v) for v in rec[1:]])
        except ValueError as exc:
            raise DataError(f"{path}, line {line}: {exc}") from None
    return np.array(vals).reshape(len(ids), len(cols)), tuple(ids), cols


def write_matrices(data: InteractionData, a_path, n_path) -> None:
    for path, M in ((a_path, data.A), (n_path, data.n_overlap)):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["species_id", *data.col_ids])
            for sid, row in zip(data.row_ids, M):
                w.writerow([sid, *(int(v) for v in row)])


# --------------------------------------------------------------------------- traits


@dataclass(frozen=True)
class TraitMatrix:
    """Species-by-trait matrix. Continuous columns are standardized; missing
    cells hold NaN and are flagged in ``missing``."""

    values: np.ndarray
    kind: tuple[str, ...]
    missing: np.ndarray
    names: tuple[str, ...] = ()
    ids: tuple[str, ...] = ()
    center: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("trait values must be 2-d")
        miss = np.asarray(self.missing, dtype=bool)
        if miss.shape != v.shape or len(self.kind) != v.shape[1]:
            raise DataError("trait kinds/missing mask inconsistent with values")
        v = np.where(miss, np.nan, v)
        for m, k in enumerate(self.kind):
            if k not in (CONTINUOUS, BINARY):
                raise DataError(f"unknown trait kind {k!r}")
            obs = v[~miss[:, m], m]
            if k == BINARY and not np.isin(obs, (0.0, 1.0)).all():
                i = int(np.flatnonzero(~miss[:, m] & ~np.isin(v[:, m], (0.0, 1.0)))[0])
                raise DataError(f"binary trait column {m} has non-0/1 value at row {i}")
            if np.isnan(obs).any():
                raise DataError(f"trait column {m} has NaN outside the missing mask")
        p = v.shape[1]
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "missing", miss)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"trait{m + 1}" for m in range(p)))
        if self.center is None:
            object.__setattr__(self, "center", np.zeros(p))
        if self.scale is None:
            object.__setattr__(self, "scale", np.ones(p))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def is_binary(self) -> np.ndarray:
        return np.array([k == BINARY for k in self.kind], dtype=bool)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        """Map raw trait values (NaN = missing) onto the fitted standardized scale."""
        raw = np.asarray(raw, dtype=float)
        return (raw - self.center) / self.scale

    def reorder(self, ids: Sequence[str]) -> "TraitMatrix":
        """Rows aligned to ``ids``; raises if any id lacks a trait row."""
        pos = {s: k for k, s in enumerate(self.ids)}
        absent = [s for s in ids if s not in pos]
        if absent:
            raise DataError(f"species without trait rows: {absent}")
        idx = [pos[s] for s in ids]
        return TraitMatrix(self.values[idx], self.kind, self.missing[idx], self.names,
                           tuple(ids), self.center, self.scale)

    def subset(self, rows) -> "TraitMatrix":
        rows = np.asarray(rows)
        ids = tuple(self.ids[i] for i in rows) if self.ids else ()
        return TraitMatrix(self.values[rows], self.kind, self.missing[rows], self.names, ids,
                           self.center, self.scale)


def empty_traits(n: int) -> TraitMatrix:
    return TraitMatrix(np.zeros((n, 0)), (), np.zeros((n, 0), dtype=bool))


def standardize_traits(raw: np.ndarray, kind: Sequence[str], names=(), ids=()) -> TraitMatrix:
    """Center/scale continuous columns over their observed cells (sd with ddof=1)."""
    raw = np.asarray(raw, dtype=float)
    missing = np.isnan(raw)
    p = raw.shape[1]
    center = np.zeros(p)
    scale = np.ones(p)
    for m, k in enumerate(kind):
        if k != CONTINUOUS:
            continue
        obs = raw[~missing[:, m], m]
        if obs.size >= 2:
            center[m] = obs.mean()
            sd = obs.std(ddof=1)
            scale[m] = sd if sd > 0 else 1.0
        elif obs.size == 1:
            center[m] = obs[0]
    values = (raw - center) / scale
    return TraitMatrix(values, tuple(kind), missing, tuple(names), tuple(ids), center, scale)


def load_traits(source, kinds: Mapping[str, str] | Sequence[str] | None = None) -> TraitMatrix:
    """Read ``species_id,<trait>,...`` with ``NA`` for missing cells.

    ``kinds`` maps trait name to ``"continuous"``/``"binary"`` (or lists them in
    column order). Columns absent from ``kinds`` are binary when every observed
    value is 0 or 1, continuous otherwise.
    """
    header, rows = _read_rows(source)
    if not header or header[0] != "species_id":
        raise DataError("trait file must start with a species_id column")
    names = header[1:]
    ids = []
    raw = np.full((len(rows), len(names)), np.nan)
    for r, (line, rec) in enumerate(rows):
        if len(rec) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
        ids.append(rec[0])
        for m, cell in enumerate(rec[1:]):
            if cell == MISSING_TOKEN or cell == "":
                continue
            try:
                raw[r, m] = float(cell)
            except ValueError:
                raise DataError(f"line {line}, column {names[m]!r}: not a number: {cell!r}") from None
    if len(set(ids)) != len(ids):
        raise DataError("duplicate species_id in trait file")

    if kinds is None:
        kinds = {}
    if not isinstance(kinds, Mapping):
        kinds = dict(zip(names, kinds))
    kind = []
    for m, name in enumerate(names):
        k = kinds.get(name)
        if k is None:
            obs = raw[~np.isnan(raw[:, m]), m]
            k = BINARY if obs.size and np.isin(obs, (0.0, 1.0)).all() else CONTINUOUS
        if k == BINARY:
            bad = ~np.isnan(raw[:, m]) & ~np.isin(raw[:, m], (0.0, 1.0))
            if bad.any():
                r = int(np.flatnonzero(bad)[0])
                raise DataError(f"binary trait {name!r} has value {raw[r, m]:g} "
                                f"at line {rows[r][0]} (species {ids[r]})")
        kind.append(k)
    return standardize_traits(raw, kind, names, ids)


def write_traits(traits: TraitMatrix, path, raw: bool = True) -> None:
    vals = traits.values * traits.scale + traits.center if raw else traits.values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["species_id", *traits.names])
        for sid, row, miss in zip(traits.ids, vals, traits.missing):
            w.writerow([sid, *(MISSING_TOKEN if mm else repr(float(v)) for v, mm in zip(row, miss))])


# --------------------------------------------------------------------------- taxonomy


@dataclass(frozen=True)
class TaxonomyCorrelation:
    C: np.ndarray
    levels: tuple[dict, ...]
    level_weights: Mapping[str, float]
    ids: tuple[str, ...] = ()

    def correlation_with(self, labels: Mapping[str, str]) -> np.ndarray:
        """Correlation of a new species (given its rank labels) with every known one."""
        return np.array([_pair_weight(labels, lv, self.level_weights) for lv in self.levels])

    def extended(self, new_levels: Sequence[Mapping[str, str]]) -> np.ndarray:
        """C with ``new_levels`` appended as extra rows/columns."""
        all_levels = list(self.levels) + [dict(l) for l in new_levels]
        return _correlation_matrix(all_levels, self.level_weights)

    @property
    def n(self) -> int:
        return self.C.shape[0]


def _pair_weight(a: Mapping[str, str], b: Mapping[str, str], w: Mapping[str, float]) -> float:
    for rank in RANKS:
        x, y = a.get(rank), b.get(rank)
        if x and y and x == y:
            return float(w[rank])
    return float(w["none"])


def _correlation_matrix(levels, weights) -> np.ndarray:
    n = len(levels)
    C = np.full((n, n), float(weights["none"]))
    for rank in reversed(RANKS):
        labels = [lv.get(rank) or None for lv in levels]
        groups: dict[str, list[int]] = {}
        for i, lab in enumerate(labels):
            if lab is not None:
                groups.setdefault(lab, []).append(i)
        for members in groups.values():
            C[np.ix_(members, members)] = weights[rank]
    np.fill_diagonal(C, weights["self"])
    return C


def build_taxonomy_correlation(taxonomy: Mapping[str, Mapping[str, str]] | Sequence[Mapping[str, str]],
                               species: Sequence[str] | None = None,
                               level_weights: Mapping[str, float] | None = None) -> TaxonomyCorrelation:
    """Correlation set by the finest taxonomic rank two species share.

    ``taxonomy`` maps species id to ``{"genus":..., "family":..., "order":...}``
    (order optional), or is a list of such dicts already in species order.
    """
    weights = dict(DEFAULT_LEVEL_WEIGHTS)
    if level_weights:
        weights.update(level_weights)
    if isinstance(taxonomy, Mapping):
        if species is None:
            species = list(taxonomy)
        absent = [s for s in species if s not in taxonomy]
        if absent:
            raise DataError(f"species missing from taxonomy: {absent}")
        levels = [dict(taxonomy[s]) for s in species]
    else:
        levels = [dict(t) for t in taxonomy]
        species = tuple(species or ())
    for s, lv in zip(species or range(len(levels)), levels):
        if not lv.get("genus") or not lv.get("family"):
            raise DataError(f"species {s} needs genus and family labels")
    C = _correlation_matrix(levels, weights)
    return TaxonomyCorrelation(C, tuple(levels), weights, tuple(species or ()))


def load_taxonomy(source) -> dict[str, dict[str, str]]:
    header, rows = _read_rows(source)
    for col in ("species_id", "genus", "family"):
        if col not in header:
            raise DataError(f"taxonomy header lacks {col!r}")
    out = {}
    for line, rec in rows:
        if len(rec) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
        d = dict(zip(header, rec))
        sid = d.pop("species_id")
        out[sid] = {k: v for k, v in d.items() if k in RANKS and v and v != MISSING_TOKEN}
    return out


def write_taxonomy(levels: Iterable[Mapping[str, str]], ids: Sequence[str], path) -> None:
    levels = list(levels)
    has_order = any("order" in lv for lv in levels)
    cols = ["genus", "family"] + (["order"] if has_order else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["species_id", *cols])
        for sid, lv in zip(ids, levels):
            w.writerow([sid, *(lv.get(c, "") for c in cols)])


def blend_correlation(C: np.ndarray | TaxonomyCorrelation, rho: float) -> np.ndarray:
    """Prior covariance of a latent-factor column: ``rho * C + (1 - rho) * I``."""
    if isinstance(C, TaxonomyCorrelation):
        C = C.C
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return rho * C + (1.0 - rho) * np.eye(C.shape[0])


# --------------------------------------------------------------------------- effort


@dataclass(frozen=True)
class EffortSummary:
    row_effort: np.ndarray
    col_effort: np.ndarray
    row_bins: np.ndarray
    col_bins: np.ndarray

    @property
    def row_out_of_sample(self) -> np.ndarray:
        return self.row_effort == 0

    @property
    def col_out_of_sample(self) -> np.ndarray:
        return self.col_effort == 0


#: labels of the effort strata; bin index k>0 means percentile range EFFORT_BINS[k]
EFFORT_BINS = ("0-25", "25-50", "50-75", "75-100")


def _quartile_bins(effort: np.ndarray) -> np.ndarray:
    bins = np.full(effort.shape, -1, dtype=np.int64)
    pos = effort > 0
    if not pos.any():
        return bins
    q = np.percentile(effort[pos], [25, 50, 75])
    bins[pos] = np.searchsorted(q, effort[pos], side="left")
    return bins


def compute_effort(data: InteractionData) -> EffortSummary:
    """Row/column sums of the overlap counts, with quartile bins of the positive
    efforts (-1 marks species with no effort, i.e. out-of-sample)."""
    row = data.n_overlap.sum(axis=1)
    col = data.n_overlap.sum(axis=0)
    return EffortSummary(row, col, _quartile_bins(row), _quartile_bins(col))
