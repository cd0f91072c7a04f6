"""Command-line interface: ``lgi <command> [options]``.

Exit status is 0 on success, 2 for invalid input or usage and 1 when sampling
itself fails.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import __version__
from ._numerics import SamplerError
from .data import (DataError, InteractionData, TraitMatrix, build_taxonomy_correlation, load_events,
                   load_matrices, load_taxonomy, load_traits, write_matrices, write_taxonomy, write_traits)
from .posterior import PRESETS, ChainConfig, PosteriorDraws
from .state import ConfigError, PriorConfig

log = logging.getLogger("lgi")

MODELS = ("latent-bc", "latent-obs", "cov-bc", "cov-obs")
EXTRA_KEYS = {"preset", "row_trait_kinds", "col_trait_kinds", "B", "k", "reps", "model", "dims", "dgm"}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {f.name for f in fields(PriorConfig)} | {f.name for f in fields(ChainConfig)} | EXTRA_KEYS
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return cfg


def resolve_configs(cfg: dict, args) -> tuple[PriorConfig, ChainConfig]:
    preset = getattr(args, "preset", None) or cfg.get("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    chain = asdict(PRESETS[preset])
    prior = {}
    if preset == "desk":
        prior["H"] = 5
    for f in fields(ChainConfig):
        if f.name in cfg:
            chain[f.name] = cfg[f.name]
    for f in fields(PriorConfig):
        if f.name in cfg:
            prior[f.name] = cfg[f.name]
    for name in ("n_iter", "burn_in", "thin", "n_chains"):
        v = getattr(args, name, None)
        if v is not None:
            chain[name] = v
    if getattr(args, "H", None) is not None:
        prior["H"] = args.H
    if args.seed is not None:
        chain["seed"] = args.seed
    if chain["burn_in"] >= chain["n_iter"] and "burn_in" not in cfg and getattr(args, "burn_in", None) is None:
        chain["burn_in"] = chain["n_iter"] // 2
    return PriorConfig.from_dict(prior), ChainConfig.from_dict(chain)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def prepare_out(path: str | None, force: bool) -> str:
    if not path:
        raise UsageError("--out is required")
    if os.path.exists(path) and not force:
        raise UsageError(f"output directory {path} exists; pass --force to overwrite")
    os.makedirs(path, exist_ok=True)
    return path


def write_manifest(out_dir, command, argv, inputs, resolved, seeds, t0) -> None:
    manifest = dict(
        command=command,
        argv=list(argv),
        config_hash=config_hash(resolved),
        config=resolved,
        inputs={os.path.basename(p) if p else k: dict(path=p, sha256=file_digest(p))
                for k, p in inputs.items() if p and os.path.isfile(p)},
        seeds=list(seeds),
        versions=dict(lgi=__version__, python=platform.python_version(), numpy=np.__version__,
                      scipy=__import__("scipy").__version__),
        wall_seconds=round(time.perf_counter() - t0, 3),
    )
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


# --------------------------------------------------------------------------- inputs


def read_network(args) -> tuple[InteractionData, dict]:
    if bool(args.events) == bool(args.network):
        raise UsageError("give exactly one of --events or --network")
    if args.events:
        return load_events(args.events), {"events": args.events}
    a = os.path.join(args.network, "A.csv")
    n = os.path.join(args.network, "n_overlap.csv")
    return load_matrices(a, n), {"A": a, "n_overlap": n}


def read_side(trait_path, tax_path, ids, kinds):
    if trait_path:
        traits = load_traits(trait_path, kinds).reorder(ids)
    else:
        traits = TraitMatrix(np.zeros((len(ids), 0)), (), np.zeros((len(ids), 0), dtype=bool), (), tuple(ids))
    if tax_path:
        tax = build_taxonomy_correlation(load_taxonomy(tax_path), list(ids))
    else:
        tax = build_taxonomy_correlation([{"genus": f"g{i}", "family": f"f{i}"} for i in range(len(ids))], ids)
    return traits, tax


def read_inputs(args, cfg):
    data, inputs = read_network(args)
    traits_row, tax_row = read_side(args.traits_rows, args.taxonomy_rows, data.row_ids, cfg.get("row_trait_kinds"))
    traits_col, tax_col = read_side(args.traits_cols, args.taxonomy_cols, data.col_ids, cfg.get("col_trait_kinds"))
    inputs.update(traits_rows=args.traits_rows, traits_cols=args.traits_cols,
                  taxonomy_rows=args.taxonomy_rows, taxonomy_cols=args.taxonomy_cols, config=args.config)
    return data, traits_row, traits_col, tax_row, tax_col, inputs


def run_fit(model, data, traits_row, traits_col, tax_row, tax_col, prior, chain, threads) -> PosteriorDraws:
    from . import baselines, gibbs

    if model == "latent-bc":
        return gibbs.run_chain(chain, prior, data, traits_row, traits_col, tax_row.C, tax_col.C, threads=threads)
    if model == "latent-obs":
        return baselines.fit_latent_observed(data, traits_row, traits_col, tax_row.C, tax_col.C, prior, chain,
                                             threads=threads)
    if model == "cov-bc":
        return baselines.fit_cov_bias_corrected(data, traits_row, traits_col, prior, chain, threads=threads)
    if model == "cov-obs":
        return baselines.fit_cov_observed(data, traits_row, traits_col, prior, chain, threads=threads)
    raise UsageError(f"unknown model {model!r}")


def save_inputs(out_dir, data, traits_row, traits_col, tax_row, tax_col) -> None:
    d = os.path.join(out_dir, "inputs")
    os.makedirs(d, exist_ok=True)
    write_matrices(data, os.path.join(d, "A.csv"), os.path.join(d, "n_overlap.csv"))
    write_traits(traits_row, os.path.join(d, "traits_rows.csv"))
    write_traits(traits_col, os.path.join(d, "traits_cols.csv"))
    write_taxonomy(tax_row.levels, data.row_ids, os.path.join(d, "taxonomy_rows.csv"))
    write_taxonomy(tax_col.levels, data.col_ids, os.path.join(d, "taxonomy_cols.csv"))
    with open(os.path.join(d, "trait_kinds.json"), "w", encoding="utf-8") as fh:
        json.dump(dict(rows=dict(zip(traits_row.names, traits_row.kind)),
                       cols=dict(zip(traits_col.names, traits_col.kind))), fh, indent=2)


def load_fit(fit_dir):
    """Posterior draws plus the inputs saved next to them."""
    if not os.path.isdir(fit_dir):
        raise DataError(f"fit directory not found: {fit_dir}")
    draws = PosteriorDraws.load(fit_dir)
    d = os.path.join(fit_dir, "inputs")
    with open(os.path.join(d, "trait_kinds.json"), encoding="utf-8") as fh:
        kinds = json.load(fh)
    data = load_matrices(os.path.join(d, "A.csv"), os.path.join(d, "n_overlap.csv"))

    def side(tr, tx, ids, k):
        if k:
            traits = load_traits(os.path.join(d, tr), k).reorder(ids)
        else:
            traits = TraitMatrix(np.zeros((len(ids), 0)), (), np.zeros((len(ids), 0), dtype=bool), (), tuple(ids))
        tax = build_taxonomy_correlation(load_taxonomy(os.path.join(d, tx)), list(ids))
        return traits, tax

    tr, xr = side("traits_rows.csv", "taxonomy_rows.csv", data.row_ids, kinds["rows"])
    tc, xc = side("traits_cols.csv", "taxonomy_cols.csv", data.col_ids, kinds["cols"])
    return draws, data, tr, tc, xr, xc


# --------------------------------------------------------------------------- commands


def cmd_fit(args, argv, t0):
    from .diagnostics import export_diagnostics

    cfg = load_config(args.config)
    prior, chain = resolve_configs(cfg, args)
    model = args.model or cfg.get("model")
    if model not in MODELS:
        raise UsageError(f"--model must be one of {MODELS}")
    data, tr, tc, xr, xc, inputs = read_inputs(args, cfg)
    out = prepare_out(args.out, args.force)
    draws = run_fit(model, data, tr, tc, xr, xc, prior, chain, args.threads)
    draws.save(out)
    save_inputs(out, data, tr, tc, xr, xc)
    if draws.n_chains >= 2:
        export_diagnostics(draws, os.path.join(out, "diagnostics"), chain.seed)
    resolved = dict(model=model, prior=asdict(prior), chain=asdict(chain))
    write_manifest(out, "fit", argv, inputs, resolved, [chain.seed], t0)
    print(f"fit {model}: {draws.total_kept} draws from {draws.n_chains} chain(s) -> {out}")


def read_new_species(path, traits_row, traits_col):
    """CSV with species_id, side (row|col), genus, family, [order], then trait columns."""
    from .data import _read_rows
    from .predict import COL, ROW, NewSpecies

    header, rows = _read_rows(path)
    for col in ("species_id", "side", "genus", "family"):
        if col not in header:
            raise DataError(f"{path}: header lacks {col!r}")
    out = []
    for line, rec in rows:
        if len(rec) != len(header):
            raise DataError(f"{path}, line {line}: expected {len(header)} fields")
        d = dict(zip(header, rec))
        side = d["side"]
        if side not in (ROW, COL):
            raise DataError(f"{path}, line {line}: side must be 'row' or 'col'")
        traits = traits_row if side == ROW else traits_col
        raw = np.full(traits.p, np.nan)
        for m, name in enumerate(traits.names):
            v = d.get(name, "NA")
            if v not in ("", "NA"):
                try:
                    raw[m] = float(v)
                except ValueError:
                    raise DataError(f"{path}, line {line}: trait {name!r} not a number") from None
        tax = {k: d[k] for k in ("genus", "family", "order") if d.get(k)}
        out.append(NewSpecies.from_raw(raw, traits, side, tax, d["species_id"]))
    return out


def cmd_predict(args, argv, t0):
    from .predict import COL, ROW, posterior_interaction_matrix, predict_block

    draws, data, tr, tc, xr, xc = load_fit(args.fit)
    out = prepare_out(args.out, args.force)
    post = posterior_interaction_matrix(draws, rao_blackwell=args.rao_blackwell)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    path = os.path.join(out, "predictions.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_species", "col_species", "prob", "mcse", "ess_weights", "flag"])
        for i, a in enumerate(data.row_ids):
            for j, b in enumerate(data.col_ids):
                w.writerow([a, b, format(post.prob[i, j], ".10g"), format(post.mcse[i, j], ".6g"), "",
                            "recorded" if post.recorded[i, j] else "unrecorded"])
        if args.new_species:
            if "U" not in draws.samples:
                raise UsageError("new-species prediction needs a latent-factor fit")
            new = read_new_species(args.new_species, tr, tc)
            new_r = [s for s in new if s.side == ROW]
            new_c = [s for s in new if s.side == COL]
            cols = new_c + list(range(data.n_P))
            if new_r:
                res = predict_block(draws, rng, new_r, cols, xr, xc, args.rao_blackwell, args.proposals)
                names_c = [s.id for s in new_c] + list(data.col_ids)
                for a, s in enumerate(new_r):
                    for b, name in enumerate(names_c):
                        flag = "out-of-sample" if b < len(new_c) else "half-in-sample"
                        w.writerow([s.id, name, format(res.prob[a, b], ".10g"), "", format(res.ess[a, b], ".6g"), flag])
            if new_c:
                res = predict_block(draws, rng, list(range(data.n_B)), new_c, xr, xc, args.rao_blackwell,
                                    args.proposals)
                for a, name in enumerate(data.row_ids):
                    for b, s in enumerate(new_c):
                        w.writerow([name, s.id, format(res.prob[a, b], ".10g"), "", format(res.ess[a, b], ".6g"),
                                    "half-in-sample"])
    write_manifest(out, "predict", argv, dict(new_species=args.new_species),
                   dict(fit=args.fit, proposals=args.proposals),
                   [args.seed or 0], t0)
    print(f"predictions -> {path}")


def cmd_importance(args, argv, t0):
    from .varimp import importance_table, write_importance_csv

    cfg = load_config(args.config)
    draws, data, tr, tc, _, _ = load_fit(args.fit)
    if "U" not in draws.samples:
        raise UsageError("variable importance needs a latent-factor fit")
    B = args.B if args.B is not None else cfg.get("B", 500)
    out = prepare_out(args.out, args.force)
    seed = args.seed if args.seed is not None else 0
    rows = importance_table(draws, tr, tc, B=B, seed=seed)
    write_importance_csv(rows, os.path.join(out, "importance.csv"))
    write_manifest(out, "importance", argv, dict(config=args.config), dict(fit=args.fit, B=B), [seed], t0)
    print(f"importance for {len(rows)} traits -> {out}")


def parse_dims(text):
    try:
        a, b = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--dims must look like 60x100, got {text!r}") from None
    return a, b


def cmd_simulate(args, argv, t0):
    from .simulate import DEFAULT_DIMS, DESK_DIMS, generate_dataset

    cfg = load_config(args.config)
    dgm = args.dgm if args.dgm is not None else cfg.get("dgm", 1)
    if args.dims:
        dims = parse_dims(args.dims)
    elif "dims" in cfg:
        dims = tuple(cfg["dims"])
    else:
        dims = DESK_DIMS if (args.preset or cfg.get("preset", "paper")) == "desk" else DEFAULT_DIMS
    seed = args.seed if args.seed is not None else 0
    out = prepare_out(args.out or f"sim_dgm{dgm}_seed{seed}", args.force)
    ds = generate_dataset(int(dgm), dims, seed)
    write_matrices(ds.data, os.path.join(out, "A.csv"), os.path.join(out, "n_overlap.csv"))
    write_traits(ds.traits_row, os.path.join(out, "traits_rows.csv"))
    write_traits(ds.traits_col, os.path.join(out, "traits_cols.csv"))
    write_taxonomy(ds.tax_row.levels, ds.data.row_ids, os.path.join(out, "taxonomy_rows.csv"))
    write_taxonomy(ds.tax_col.levels, ds.data.col_ids, os.path.join(out, "taxonomy_cols.csv"))
    with open(os.path.join(out, "truth.json"), "w", encoding="utf-8") as fh:
        fh.write(ds.truth.to_json())
    with open(os.path.join(out, "trait_kinds.json"), "w", encoding="utf-8") as fh:
        json.dump(dict(row_trait_kinds=dict(zip(ds.traits_row.names, ds.traits_row.kind)),
                       col_trait_kinds=dict(zip(ds.traits_col.names, ds.traits_col.kind))), fh, indent=2)
    write_manifest(out, "simulate", argv, dict(config=args.config), dict(dgm=dgm, dims=list(dims)), [seed], t0)
    print(f"dgm{dgm} {dims[0]}x{dims[1]}: recorded density {ds.truth.realized_density:.4f} -> {out}")


def cmd_evaluate(args, argv, t0):
    from .evaluate import evaluate_stratified, ratio_to_oracle, write_eval_csv
    from .predict import posterior_interaction_matrix
    from .simulate import SyntheticTruth

    if not os.path.exists(args.truth):
        raise DataError(f"file not found: {args.truth}")
    with open(args.truth, encoding="utf-8") as fh:
        truth = SyntheticTruth.from_json(fh.read())
    out = prepare_out(args.out, args.force)
    rows, ratios = [], []
    data = None
    for fit_dir in args.fit:
        draws, data, *_ = load_fit(fit_dir)
        prob = posterior_interaction_matrix(draws).prob
        r = evaluate_stratified(prob, truth, data, draws.model)
        rows += r
        ratios += r
    if data is None:
        raise UsageError("give at least one --fit directory")
    oracle = evaluate_stratified(truth.oracle, truth, data, "oracle")
    write_eval_csv(oracle + rows, os.path.join(out, "eval_table.csv"), ratio_to_oracle(ratios + oracle, oracle))
    write_manifest(out, "evaluate", argv, dict(truth=args.truth), dict(fits=args.fit), [], t0)
    print(f"evaluation of {len(args.fit)} fit(s) -> {out}")


def cmd_cv(args, argv, t0):
    from .evaluate import cv_ratio, holdout_cv
    from .predict import posterior_interaction_matrix

    cfg = load_config(args.config)
    prior, chain = resolve_configs(cfg, args)
    model = args.model or cfg.get("model")
    if model not in MODELS:
        raise UsageError(f"--model must be one of {MODELS}")
    k = args.k if args.k is not None else cfg.get("k", 100)
    reps = args.reps if args.reps is not None else cfg.get("reps", 20)
    data, tr, tc, xr, xc, inputs = read_inputs(args, cfg)
    out = prepare_out(args.out, args.force)
    splits = holdout_cv(data, k, reps, np.random.default_rng([chain.seed, 31]))
    with open(os.path.join(out, "cv.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "model", "mean_ratio", "median_ratio"])
        for r, split in enumerate(splits):
            draws = run_fit(model, split.data, tr, tc, xr, xc, prior, chain, args.threads)
            mean_r, med_r = cv_ratio(posterior_interaction_matrix(draws).prob, split)
            w.writerow([r, model, format(mean_r, ".6g"), format(med_r, ".6g")])
            fh.flush()
    resolved = dict(model=model, prior=asdict(prior), chain=asdict(chain), k=k, reps=reps)
    write_manifest(out, "cv", argv, inputs, resolved, [chain.seed], t0)
    print(f"cv {model}: {reps} repetitions -> {out}")


def cmd_diagnose(args, argv, t0):
    from .diagnostics import export_diagnostics

    draws = PosteriorDraws.load(args.fit)
    if draws.n_chains < 2:
        raise UsageError("diagnostics need at least 2 chains")
    out = prepare_out(args.out, args.force)
    ratios = export_diagnostics(draws, out, args.seed or 0)
    write_manifest(out, "diagnose", argv, {}, dict(fit=args.fit), [args.seed or 0], t0)
    worst = max(ratios.items(), key=lambda kv: kv[1]) if ratios else ("-", float("nan"))
    print(f"{len(ratios)} quantities; largest chain ratio {worst[1]:.3f} ({worst[0]}) -> {out}")


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgi", description="Latent-factor inference of species interactions.")
    p.add_argument("--version", action="version", version=f"lgi {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON file with prior/chain field names")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--force", action="store_true", help="overwrite an existing output directory")
        sp.add_argument("--threads", type=int, help="worker processes (default: LGI_THREADS or all cores)")

    def inputs(sp):
        sp.add_argument("--events", help="study_id,row_species,col_species records")
        sp.add_argument("--network", help="directory holding A.csv and n_overlap.csv")
        sp.add_argument("--traits-rows")
        sp.add_argument("--traits-cols")
        sp.add_argument("--taxonomy-rows")
        sp.add_argument("--taxonomy-cols")
        sp.add_argument("--model", choices=MODELS)
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--n-iter", dest="n_iter", type=int)
        sp.add_argument("--burn-in", dest="burn_in", type=int)
        sp.add_argument("--thin", type=int)
        sp.add_argument("--chains", dest="n_chains", type=int)
        sp.add_argument("--H", type=int)

    sp = sub.add_parser("fit", help="run the MCMC for one model")
    common(sp)
    inputs(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="posterior interaction matrix and new-species predictions")
    common(sp)
    sp.add_argument("--fit", required=True)
    sp.add_argument("--new-species")
    sp.add_argument("--rao-blackwell", action="store_true")
    sp.add_argument("--proposals", type=int, default=1, help="factor draws per kept draw for new species")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("importance", help="permutation importance of traits")
    common(sp)
    sp.add_argument("--fit", required=True)
    sp.add_argument("--B", type=int)
    sp.set_defaults(func=cmd_importance)

    sp = sub.add_parser("simulate", help="synthetic dataset with known truth")
    common(sp, out_required=False)
    sp.add_argument("--dgm", type=int, choices=(1, 2, 3))
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--dims", help="ROWSxCOLS, e.g. 60x100")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("evaluate", help="AUROC tables against a simulation truth")
    common(sp)
    sp.add_argument("--fit", action="append", required=True)
    sp.add_argument("--truth", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("cv", help="hold-out cross-validation of recorded interactions")
    common(sp)
    inputs(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--reps", type=int)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("diagnose", help="trace, running-mean and chain-agreement exports")
    common(sp)
    sp.add_argument("--fit", required=True)
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is None and os.environ.get("LGI_THREADS"):
        try:
            args.threads = int(os.environ["LGI_THREADS"])
        except ValueError:
            print("error: LGI_THREADS must be an integer", file=sys.stderr)
            return 2
    t0 = time.perf_counter()
    try:
        args.func(args, argv, t0)
    except (UsageError, DataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SamplerError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
