"""``elmv`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data or artifact
error, 3 pipeline (stage) failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import config as C
from .artifacts import (
    ArtifactError,
    check_hash,
    load_registry,
    load_subsets,
    load_support,
    project_table,
    save_registry,
    save_subsets,
    save_support,
    write_predictions,
)
from .data import ObservationTable, TableParseError, assess, build_mask, load_table, load_iris
from .ensemble import EnsemblePredictor, Standardizer, build_support_set, default_support_size
from .features import rank_features, reports_from_registry
from .learner import OBJECTIVES, cross_validate
from .metrics import classification_metrics
from .pipeline import qualified_subsets, train_registry
from .simulation import holdout_split, run_trials, write_results
from .subsets import NoQualifiedSubsetsError

logger = logging.getLogger("elmv")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PIPELINE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers -------------------------------------------------------------

def _csv_list(cast):
    def parse(text):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _out_path(cfg: dict, name) -> Path:
    """``name`` inside the output directory; anything escaping it is refused."""
    root = Path(cfg["output_dir"]).resolve()
    p = Path(name)
    p = (p if p.is_absolute() else root / p).resolve()
    if p != root and root not in p.parents:
        raise UsageError(f"{name}: outputs must stay inside the output directory {root}")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load(cfg: dict, path, labelled: bool = True) -> ObservationTable:
    if path is None:
        raise UsageError("no input table given (--input or data.input)")
    d = cfg["data"]
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().rstrip("\n").split(d["sep"])]
    id_col = d["id_column"] if d["id_column"] in header else None
    label_col = d["label_column"] if d["label_column"] in header else None
    if labelled and label_col is None:
        raise TableParseError(f"{path}: label column {d['label_column']!r} not in header")
    if id_col is None:
        logger.info("%s has no %r column; records are numbered by row", path, d["id_column"])
    return load_table(path, d["missing_tokens"], label_column=label_col, id_column=id_col,
                      sep=d["sep"])


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (NoQualifiedSubsetsError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def _file_sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


# -- stages shared by the single commands and run-all --------------------

def _do_subsets(cfg, table):
    coll = _stage("subset_gen", qualified_subsets, table, C.elmv_config(cfg))
    logger.info("%d qualified subsets", len(coll))
    return coll


def _do_train(cfg, table, collection):
    ecfg = C.elmv_config(cfg)
    ecfg = dataclasses.replace(ecfg, workers=C.resolve_workers(cfg))
    records = _stage("base_learner", train_registry, table, collection, ecfg,
                     loocv=bool(cfg["train"]["loocv"]))
    k = ecfg.support_size or default_support_size(table.n_patients)
    support = _stage("ensemble", build_support_set, table, min(k, table.n_patients), ecfg.seed)
    scaler = Standardizer.fit(table)
    logger.info("trained %d models; support set of %d records", len(records), support.k)
    return records, support, scaler


def _do_predict(cfg, records, support, scaler, queries):
    e = cfg["ensemble"]
    ecfg = C.elmv_config(cfg)
    q, absent = project_table(queries, scaler.feature_names)
    if absent:
        logger.warning("queries lack %d registry features, treated as missing: %s",
                       len(absent), ", ".join(absent))
    predictor = _stage("ensemble", EnsemblePredictor, records, support, scaler,
                       ecfg.weights, ecfg.selection)
    logger.debug("ensemble k1=%s k2=%s w_f=%s w_m=%s", e["k1"], e["k2"], e["w_f"], e["w_m"])
    return _stage("ensemble", predictor.predict, q)


def _do_features(cfg, records, table=None):
    f = cfg["features"]
    if table is not None:
        params = C.learner_params(cfg)
        for r in records:
            if r.loocv_accuracy is None:
                sub = table.restrict(r.subset.row_ids, r.subset.col_ids)
                r.loocv_accuracy = _stage("feature_id", cross_validate, sub, params,
                                          scheme="loocv").accuracy
    reports = _stage("feature_id", reports_from_registry, records, f["k3"])
    return _stage("feature_id", rank_features, reports, cfg["subsets"]["rate_bin_width"], f["k4"])


def _check_support(registry_meta, support, path) -> None:
    check_hash(path, support[1], registry_meta["config_hash"])
    ss = support[0]
    if list(ss.table.feature_names) != list(registry_meta["feature_names"]):
        raise ArtifactError(f"{path}: support features differ from the registry's")


# -- commands ------------------------------------------------------------

def cmd_assess(args, cfg) -> int:
    table = _load(cfg, cfg["data"]["input"], labelled=False)
    mask = build_mask(table)
    report = assess(mask, cfg["assess"]["threshold"])
    _write_json(_out_path(cfg, args.out), {"config_hash": C.assess_hash(cfg), **report.to_dict()})
    if args.mask_out:
        mask.to_tsv(_out_path(cfg, args.mask_out))
    print(f"overall missing rate {report.overall_rate:.4f}: {report.recommendation}")
    return EXIT_OK


def cmd_subsets(args, cfg) -> int:
    table = _load(cfg, cfg["data"]["input"], labelled=False)
    coll = _do_subsets(cfg, table)
    save_subsets(_out_path(cfg, args.out), coll, C.subsets_hash(cfg))
    print(f"{len(coll)} qualified subsets")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    table = _load(cfg, cfg["data"]["input"])
    upstream = C.subsets_hash(cfg)
    if args.subsets:
        coll, found = load_subsets(args.subsets)
        check_hash(args.subsets, found, upstream)
        rows, cols = set(table.patient_ids), set(table.feature_names)
        for s in coll:
            if not (set(s.row_ids) <= rows and set(s.col_ids) <= cols):
                raise ArtifactError(f"{args.subsets}: subsets refer to records or features "
                                    f"absent from {cfg['data']['input']}")
    else:
        coll = _do_subsets(cfg, table)
    records, support, scaler = _do_train(cfg, table, coll)
    h = C.train_hash(upstream, cfg)
    save_registry(_out_path(cfg, args.out), records, scaler, support, h, upstream)
    save_support(_out_path(cfg, args.support_out), support, h)
    print(f"{len(records)} models")
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    if not args.registry or not args.support:
        raise UsageError("predict needs --registry and --support")
    records, scaler, meta = load_registry(args.registry)
    support = load_support(args.support, meta.get("support_seed"))
    _check_support(meta, support, args.support)
    queries = _load(cfg, cfg["data"]["queries"] or cfg["data"]["input"], labelled=False)
    preds = _do_predict(cfg, records, support[0], scaler, queries)
    h = C.predict_hash(meta["config_hash"], cfg)
    write_predictions(_out_path(cfg, args.out), queries.patient_ids, preds, h,
                      None if queries.labels is None else list(queries.labels))
    print(f"{len(preds)} predictions")
    return EXIT_OK


def cmd_features(args, cfg) -> int:
    if not args.registry:
        raise UsageError("features needs --registry")
    records, _, meta = load_registry(args.registry)
    table = None
    if any(r.loocv_accuracy is None for r in records):
        if not cfg["data"]["input"]:
            raise ArtifactError(f"{args.registry}: records lack LOOCV accuracies; "
                                "pass --input to compute them")
        table = _load(cfg, cfg["data"]["input"])
    ranking = _do_features(cfg, records, table)
    ranking.to_tsv(_out_path(cfg, args.out), C.features_hash(meta["config_hash"], cfg))
    print("\n".join(ranking.features))
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    sim = C.simulation_config(cfg)
    sim = dataclasses.replace(sim, workers=C.resolve_workers(cfg))
    seed_path = cfg["simulation"]["seed_input"]
    seed_table = _load(cfg, seed_path) if seed_path else load_iris()
    out = _out_path(cfg, args.out)
    results = run_trials(sim, seed_table)
    summary = write_results(results, out, C.simulation_hash(cfg), cfg["simulation"]["window"])
    for method, rates in summary["methods"].items():
        accs = " ".join(f"{r}:{e['accuracy']['mean']:.3f}" for r, e in rates.items())
        print(f"{method}\t{accs}")
    return EXIT_OK


def cmd_run_all(args, cfg) -> int:
    table = _load(cfg, cfg["data"]["input"])
    report = assess(build_mask(table), cfg["assess"]["threshold"])
    h_sub = C.subsets_hash(cfg)
    _write_json(_out_path(cfg, "assessment.json"),
                {"config_hash": C.assess_hash(cfg), **report.to_dict()})

    if cfg["data"]["queries"]:
        train_t, queries = table, _load(cfg, cfg["data"]["queries"], labelled=False)
    else:
        train_t, queries = _stage("data_model", holdout_split, table,
                                  cfg["run"]["holdout_fraction"], cfg["seed"])
        logger.info("no queries given; holding out %d records", queries.n_patients)

    coll = _do_subsets(cfg, train_t)
    save_subsets(_out_path(cfg, "subsets.json"), coll, h_sub)

    records, support, scaler = _do_train(cfg, train_t, coll)
    h_train = C.train_hash(h_sub, cfg)
    save_registry(_out_path(cfg, "models.json"), records, scaler, support, h_train, h_sub)
    save_support(_out_path(cfg, "support.csv"), support, h_train)

    preds = _do_predict(cfg, records, support, scaler, queries)
    labels = None if queries.labels is None else list(queries.labels)
    write_predictions(_out_path(cfg, "predictions.tsv"), queries.patient_ids, preds,
                      C.predict_hash(h_train, cfg), labels)

    ranking = _do_features(cfg, records, train_t)
    ranking.to_tsv(_out_path(cfg, "ranking.tsv"), C.features_hash(h_train, cfg))

    artifacts = ["assessment.json", "subsets.json", "models.json", "support.csv",
                 "predictions.tsv", "ranking.tsv"]
    manifest = {
        "config_hash": C.config_hash(cfg),
        "stage_hashes": {
            "subset_gen": h_sub,
            "base_learner": h_train,
            "ensemble": C.predict_hash(h_train, cfg),
            "feature_id": C.features_hash(h_train, cfg),
        },
        "seeds": {"seed": cfg["seed"], "support": support.seed, "cv": cfg["seed"]},
        "config": C.hashed_view(cfg),
        "input_sha256": _file_sha(cfg["data"]["input"]),
        "n_subsets": len(coll),
        "n_models": len(records),
        "n_queries": queries.n_patients,
        "artifacts": {a: _file_sha(_out_path(cfg, a)) for a in artifacts},
    }
    if labels is not None:
        manifest["query_metrics"] = classification_metrics(
            labels, [p.label for p in preds]).to_dict(folds=False)
    _write_json(_out_path(cfg, "manifest.json"), manifest)
    print(f"{len(coll)} subsets, {len(records)} models, {len(preds)} predictions; "
          f"config hash {manifest['config_hash']}")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------

# flag dest -> dotted config key
_FLAG_KEYS = {
    "seed": "seed", "workers": "workers", "output_dir": "output_dir",
    "input": "data.input", "queries": "data.queries", "label_column": "data.label_column",
    "id_column": "data.id_column", "missing_tokens": "data.missing_tokens", "sep": "data.sep",
    "threshold": "assess.threshold",
    "cap": "subsets.cap", "rate_bin_width": "subsets.rate_bin_width",
    "min_rows": "subsets.min_rows", "min_cols": "subsets.min_cols",
    "num_rounds": "learner.num_rounds", "learning_rate": "learner.learning_rate",
    "max_depth": "learner.max_depth", "min_leaf_count": "learner.min_leaf_count",
    "lambda_regularization": "learner.lambda_regularization", "objective": "learner.objective",
    "cv_folds": "train.cv_folds", "support_size": "train.support_size", "loocv": "train.loocv",
    "k1": "ensemble.k1", "k2": "ensemble.k2", "wf": "ensemble.w_f", "wm": "ensemble.w_m",
    "k3": "features.k3", "k4": "features.k4", "holdout_fraction": "run.holdout_fraction",
    "rates": "simulation.missing_rates", "trial_seeds": "simulation.trial_seeds",
    "methods": "simulation.methods", "knn_k": "simulation.knn_k",
    "external_imputed_dir": "simulation.external_imputed_dir",
    "mask_dir": "simulation.mask_dir",
}


def _add_data(p, queries=False):
    g = p.add_argument_group("data")
    g.add_argument("--input", help="input CSV")
    if queries:
        g.add_argument("--queries", help="CSV of records to classify")
    g.add_argument("--label-column")
    g.add_argument("--id-column")
    g.add_argument("--missing-tokens", type=_csv_list(str), help="comma-separated tokens")
    g.add_argument("--sep")


def _add_subsets(p):
    g = p.add_argument_group("subset generation")
    g.add_argument("--cap", type=float, help="maximum missing rate of a qualified subset")
    g.add_argument("--rate-bin-width", type=float)
    g.add_argument("--min-rows", type=int)
    g.add_argument("--min-cols", type=int)


def _add_train(p):
    g = p.add_argument_group("training")
    g.add_argument("--num-rounds", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--max-depth", type=int)
    g.add_argument("--min-leaf-count", type=int)
    g.add_argument("--lambda", dest="lambda_regularization", type=float)
    g.add_argument("--objective", choices=list(OBJECTIVES))
    g.add_argument("--cv-folds", type=int)
    g.add_argument("--support-size", type=int)
    g.add_argument("--loocv", action=argparse.BooleanOptionalAction, default=None,
                   help="compute per-subset LOOCV accuracy (needed for features)")


def _add_ensemble(p):
    g = p.add_argument_group("ensemble")
    g.add_argument("--wf", type=float, help="feature-distance weight")
    g.add_argument("--wm", type=float, help="missingness-distance weight")
    g.add_argument("--k1", type=int, help="similar support records considered")
    g.add_argument("--k2", type=int, help="correct answers needed for eligibility")


def _add_features(p):
    g = p.add_argument_group("features")
    g.add_argument("--k3", type=int, help="top features per subset")
    g.add_argument("--k4", type=int, help="size of the global ranking")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file; flags override it")
    common.add_argument("--output-dir", help="directory all outputs are written under")
    common.add_argument("--workers", type=int, help=f"worker processes (default ${C.WORKERS_ENV} or 1)")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="elmv", description="Ensemble learning for data with missing values.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("assess", parents=[common], help="report missingness")
    _add_data(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", default="assessment.json")
    p.add_argument("--mask-out", help="also write the 0/1 missingness mask as TSV")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("subsets", parents=[common], help="generate qualified subsets")
    _add_data(p)
    _add_subsets(p)
    p.add_argument("--out", default="subsets.json")
    p.set_defaults(func=cmd_subsets)

    p = sub.add_parser("train", parents=[common], help="train the per-subset model registry")
    _add_data(p)
    _add_subsets(p)
    _add_train(p)
    p.add_argument("--subsets", help="subsets.json from `elmv subsets` (generated if omitted)")
    p.add_argument("--out", default="models.json")
    p.add_argument("--support-out", default="support.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="classify records with the ensemble")
    _add_data(p)
    _add_ensemble(p)
    p.add_argument("--registry", help="models.json from `elmv train`")
    p.add_argument("--support", help="support.csv from `elmv train`")
    p.add_argument("--out", default="predictions.tsv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("features", parents=[common], help="rank critical features")
    _add_data(p)
    _add_features(p)
    _add_train(p)
    p.add_argument("--rate-bin-width", type=float)
    p.add_argument("--registry", help="models.json from `elmv train`")
    p.add_argument("--out", default="ranking.tsv")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("simulate", parents=[common], help="run the simulation protocol")
    _add_subsets(p)
    _add_train(p)
    _add_ensemble(p)
    g = p.add_argument_group("simulation")
    g.add_argument("--rates", type=_csv_list(float), help="comma-separated missing rates")
    g.add_argument("--trial-seeds", type=_csv_list(int))
    g.add_argument("--methods", type=_csv_list(str))
    g.add_argument("--knn-k", type=int)
    g.add_argument("--external-imputed-dir",
                   help="directory of externally imputed tables rate<r>_seed<s>.csv")
    g.add_argument("--mask-dir", help="directory of custom 0/1 masks rate<r>_seed<s>.tsv "
                                      "used instead of random masking")
    p.add_argument("--out", default="simulation")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run-all", parents=[common], help="all stages end to end")
    _add_data(p, queries=True)
    p.add_argument("--threshold", type=float)
    _add_subsets(p)
    _add_train(p)
    _add_ensemble(p)
    _add_features(p)
    p.add_argument("--holdout-fraction", type=float,
                   help="share of records held out as queries when --queries is absent")
    p.set_defaults(func=cmd_run_all)
    return parser


def _overrides(args) -> dict:
    ns = vars(args)
    return {key: ns[dest] for dest, key in _FLAG_KEYS.items() if dest in ns}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error; return the code instead
        return int(exc.code or 0)
    level = logging.WARNING - 10 * args.verbose if not args.quiet else logging.ERROR
    logging.basicConfig(level=max(level, logging.DEBUG), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = C.load_config(args.config, _overrides(args))
        return args.func(args, cfg)
    except (UsageError, C.ConfigError) as exc:
        print(f"elmv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"elmv: error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (TableParseError, ArtifactError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"elmv: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
