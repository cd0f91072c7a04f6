"""Chain controls and the container for thinned posterior output."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .state import ConfigError


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 5000
    burn_in: int = 2500
    thin: int = 5
    n_chains: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1 or self.n_chains < 1:
            raise ConfigError("n_iter and n_chains must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ConfigError(f"burn_in must lie in [0, n_iter), got {self.burn_in}")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")

    @property
    def kept_per_chain(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def keeps(self, it: int) -> bool:
        """Whether 1-based iteration ``it`` is stored."""
        k = it - self.burn_in
        return k > 0 and k % self.thin == 0

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown chain keys: {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    "desk": ChainConfig(n_iter=5000, burn_in=2500, thin=5, n_chains=3),
    "paper": ChainConfig(n_iter=80000, burn_in=40000, thin=40, n_chains=3),
}


@dataclass
class PosteriorDraws:
    """Pooled output of one fit.

    ``L_sum[c]`` is the running sum of the interaction indicator over the kept
    draws of chain ``c``; for models that take the recorded network as truth it
    accumulates the fitted interaction probability instead. ``Lprob_sum`` holds
    the Rao-Blackwellized counterpart (the conditional P(L=1 | rest)).
    ``samples[name]`` has shape ``(n_chains, n_kept, ...)``.
    """

    model: str
    A: np.ndarray
    L_sum: np.ndarray
    Lprob_sum: np.ndarray
    n_kept: np.ndarray
    samples: dict[str, np.ndarray]
    tracked_cells: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    L_tracked: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), dtype=np.int8))
    row_ids: tuple[str, ...] = ()
    col_ids: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.L_sum.shape[0]

    @property
    def total_kept(self) -> int:
        return int(self.n_kept.sum())

    def pooled(self, name: str) -> np.ndarray:
        """Samples of ``name`` with the chain axis merged into the draw axis."""
        s = self.samples[name]
        return s.reshape((-1,) + s.shape[2:])

    # ------------------------------------------------------------------ io

    def save(self, out_dir: str) -> None:
        os.makedirs(os.path.join(out_dir, "draws"), exist_ok=True)
        from .predict import posterior_interaction_matrix  # local: avoid import cycle

        post = posterior_interaction_matrix(self)
        write_matrix_csv(os.path.join(out_dir, "posterior_L_mean.csv"), post.prob,
                         self.row_ids, self.col_ids)
        arrays = {f"s_{k}": v for k, v in self.samples.items()}
        np.savez_compressed(
            os.path.join(out_dir, "draws", "params.npz"),
            A=self.A, L_sum=self.L_sum, Lprob_sum=self.Lprob_sum, n_kept=self.n_kept,
            tracked_cells=self.tracked_cells, L_tracked=self.L_tracked, **arrays,
        )
        for name in SCALAR_SUMMARIES:
            if name in self.samples:
                _write_trace(os.path.join(out_dir, "draws", f"{name}.csv"), self.samples[name])
        meta = dict(self.meta)
        meta.update(model=self.model, row_ids=list(self.row_ids), col_ids=list(self.col_ids),
                    n_kept=[int(k) for k in self.n_kept])
        with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def load(cls, out_dir: str) -> "PosteriorDraws":
        with open(os.path.join(out_dir, "meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        with np.load(os.path.join(out_dir, "draws", "params.npz")) as z:
            arrays = {k: z[k] for k in z.files}
        samples = {k[2:]: v for k, v in arrays.items() if k.startswith("s_")}
        model = meta.pop("model")
        row_ids = tuple(meta.pop("row_ids"))
        col_ids = tuple(meta.pop("col_ids"))
        meta.pop("n_kept", None)
        return cls(model=model, A=arrays["A"], L_sum=arrays["L_sum"], Lprob_sum=arrays["Lprob_sum"],
                   n_kept=arrays["n_kept"], samples=samples, tracked_cells=arrays["tracked_cells"],
                   L_tracked=arrays["L_tracked"], row_ids=row_ids, col_ids=col_ids, meta=meta)


#: scalar quantities exported as one trace CSV each
SCALAR_SUMMARIES = ("rho_U", "rho_V", "lam0", "s2_pB", "s2_pP", "alpha0")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _fmt(v: float) -> str:
    return format(float(v), ".10g")


def write_matrix_csv(path, M, row_ids, col_ids) -> None:
    row_ids = row_ids or [str(i) for i in range(M.shape[0])]
    col_ids = col_ids or [str(j) for j in range(M.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["species_id", *col_ids])
        for sid, row in zip(row_ids, M):
            w.writerow([sid, *(_fmt(v) for v in row)])


def _write_trace(path, arr) -> None:
    arr = np.asarray(arr)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "draw", "value"])
        for c in range(arr.shape[0]):
            for r in range(arr.shape[1]):
                w.writerow([c, r, _fmt(arr[c, r])])
