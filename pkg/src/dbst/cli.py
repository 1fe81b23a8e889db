"""Command-line entry point.

Subcommands::

    dbst data split         --config C --seed S --out DIR
    dbst selftrain run      --config C --seed S --out DIR
    dbst selftrain baseline --method dst|dest --config C --seed S --out DIR
    dbst adapt run          --config C --seed S --out DIR
    dbst eval report        --run DIR --out DIR
    dbst synth blobs        --classes K --per-class N --sep D --dim P --seed S --out PATH

Exit status is 0 on success, 2 on a usage or configuration error and 1 on
any other failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import _random, __version__
from .cluster import EmbeddingSet, FACET_1, FACET_2, adapt, nearest_centroid_classify, prune, save_clusters
from .config import ExperimentConfig, load_config
from .data import (
    ABSENT,
    PSEUDO,
    RawDataset,
    from_manifest,
    load_csv,
    load_idx,
    load_manifest,
    save_manifest,
    split,
    standardize,
    write_csv,
)
from .errors import ConfigError, DBSTError
from .metrics import hidden_labels, report, save_report
from .selftrain import DBST, DEST, DST, RunLog, SelfTrainer, write_plot_csv
from .synth import TwoFacetProblem, blobs

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# -- data ------------------------------------------------------------------------

def _raw_datasets(cfg):
    d = cfg.data
    if d.source == "blobs":
        train = blobs(d.classes, d.per_class, d.separation, d.dim, cfg.seed)
        test = blobs(d.classes, d.test_per_class, d.separation, d.dim, cfg.seed, stream="blobs_test") \
            if d.test_per_class > 0 else None
        return train, test
    if d.source == "csv":
        if not d.path:
            raise ConfigError("data.path is required for csv data")
        train = load_csv(d.path, d.label_column)
        test = load_csv(d.test_path, d.label_column) if d.test_path else None
        return train, test
    if not d.images or not d.labels:
        raise ConfigError("data.images and data.labels are required for idx data")
    train = _idx(d.images, d.labels, d)
    test = _idx(d.test_images, d.test_labels, d) if d.test_images and d.test_labels else None
    return train, test


def _idx(images, labels, d):
    X, y = load_idx(images, labels)
    if d.limit is not None:
        X, y = X[: d.limit], y[: d.limit]
    X = X.reshape(len(X), -1).astype(np.float64) * d.scale
    return RawDataset(X, y.astype(np.int64))


def build_split(cfg):
    """Load the configured data and split it; returns ``(split, standardisation stats or None)``."""
    train, test = _raw_datasets(cfg)
    d = cfg.data
    if d.manifest:
        s = from_manifest(train, load_manifest(d.manifest), test)
    else:
        s = split(train, cfg.seed, d.per_class_train, d.per_class_valid, test)
    stats = None
    if d.standardize:
        s, mean, sd = standardize(s)
        stats = {"mean": mean.tolist(), "sd": sd.tolist()}
    return s, stats


def _config(args, require_selftrain=False):
    cfg = load_config(args.config, args.profile, require_selftrain=require_selftrain)
    d = cfg.to_dict()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    cfg = ExperimentConfig.from_dict(d)
    if cfg.out is None:
        raise ConfigError("an output directory is required (--out or the config's out key)")
    return cfg


def _out_dir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    return out


def cmd_data_split(args):
    cfg = _config(args)
    out = _out_dir(cfg)
    s, stats = build_split(cfg)
    save_manifest(out / "split.json", s, cfg.seed)
    if stats is not None:
        (out / "standardize.json").write_text(json.dumps(stats) + "\n")
    print(f"train={len(s.train)} valid={len(s.valid)} test={len(s.test)} unlabeled={len(s.unlabeled)}")
    return EXIT_OK


# -- self-training ---------------------------------------------------------------

def _write_labels(path, split_):
    t = split_.train
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "label", "origin", "weight"])
        for i, lbl, o, wt in zip(t.ids, t.y, t.origin, t.weight):
            w.writerow([int(i), int(lbl), o, repr(float(wt))])


def _run_metrics(trainer):
    s = trainer.split
    t = s.train
    mask = t.origin == PSEUDO
    out = {
        "method": trainer.method,
        "iterations": trainer.r,
        "n_pseudo": int(mask.sum()),
        "n_unlabeled": len(s.unlabeled),
        "kappa_pool": trainer.records[-1].kappa_pool if trainer.records else None,
        "kappa_admitted": trainer.records[-1].kappa_admitted if trainer.records else None,
    }
    pool_rep = None
    if np.any(mask):
        truth = hidden_labels(s, t.ids[mask])
        keep = truth >= 0
        if np.any(keep):
            pool_rep = report(truth[keep], t.y[mask][keep], s.num_classes)
    test_rep = None
    if len(s.test) and trainer.models:
        probs = np.mean([m.predict_proba(s.test.X) for m in trainer.models], axis=0)
        test_rep = report(s.test.y, np.argmax(probs, axis=1), s.num_classes).to_dict()
    out["test"] = test_rep
    return pool_rep, out


def _selftrain(args, method):
    cfg = _config(args, require_selftrain=True)
    if method == DEST and args.ensemble_size is not None:
        d = cfg.to_dict()
        d["selftrain"]["ensemble_size"] = args.ensemble_size
        cfg = ExperimentConfig.from_dict(d)
    out = _out_dir(cfg)
    s, _ = build_split(cfg)
    log = RunLog(out / "run_log.jsonl", out / "timings.jsonl")
    trainer = SelfTrainer(s, cfg.selftrain, method, log=log)
    records = trainer.run()
    write_plot_csv(out / "plot.csv", records)
    with open(out / "admissions.jsonl", "w") as f:
        for a in trainer.admissions:
            f.write(json.dumps(a, sort_keys=True) + "\n")
    _write_labels(out / "labels.csv", trainer.split)
    save_manifest(out / "split.json", trainer.split, cfg.seed)
    pool_rep, extra = _run_metrics(trainer)
    save_report(out / "metrics.json", pool_rep, **extra)
    last = records[-1]
    print(f"{method}: r={last.r} admitted={extra['n_pseudo']} unlabeled={last.n_unlabeled} "
          f"kappa_pool={last.kappa_pool} kappa_admitted={last.kappa_admitted}")
    return EXIT_OK


def cmd_selftrain_run(args):
    return _selftrain(args, DBST)


def cmd_selftrain_baseline(args):
    return _selftrain(args, args.method)


# -- adaptation ------------------------------------------------------------------

def _embedding_csv(path, label_column, facet):
    raw = load_csv(path, label_column)
    labels = None if np.all(raw.y == ABSENT) else raw.y
    return EmbeddingSet(raw.X, labels, facet)


def cmd_adapt_run(args):
    cfg = _config(args)
    a = cfg.adapt
    out = _out_dir(cfg)
    if a.source == "two_facet":
        prob = TwoFacetProblem(cfg.seed, classes=a.classes, modes=a.modes, dim=a.dim, angle=a.angle,
                               offset=a.offset)
        D1, D2, T1, V1 = prob.D1, prob.D2, prob.T1, prob.V1
        embed2, raw1 = prob.embed2, prob.raw1_train
    else:
        for key in ("d1", "d1_facet2", "d2", "test", "valid"):
            if not getattr(a, key):
                raise ConfigError(f"adapt.{key} is required for csv adaptation")
        D1 = _embedding_csv(a.d1, a.label_column, FACET_1)
        carried = _embedding_csv(a.d1_facet2, a.label_column, FACET_2).vectors
        if len(carried) != len(D1):
            raise ConfigError("adapt.d1_facet2 must have one row per adapt.d1 row")
        D2 = _embedding_csv(a.d2, a.label_column, FACET_2)
        T1 = _embedding_csv(a.test, a.label_column, FACET_2)
        V1 = _embedding_csv(a.valid, a.label_column, FACET_2)
        embed2, raw1 = (lambda idx: carried[idx]), None
    rng = _random.stream(cfg.seed, "kmeans")
    A, parts = adapt(D1, D2, embed2, a.k, rng, raw1=raw1, per_centroid=a.per_centroid, n_init=a.n_init)
    C = parts["C"]
    final = prune(A, T1 if a.leaky_prune else V1) if a.prune else A
    save_clusters(out / "clusters.json", A)
    save_clusters(out / "clusters_pruned.json", final)
    pred, acc = nearest_centroid_classify(T1, final)
    _, acc_c = nearest_centroid_classify(T1, C)
    _, acc_a = nearest_centroid_classify(T1, A)
    _, val_a = nearest_centroid_classify(V1, A)
    _, val_final = nearest_centroid_classify(V1, final)
    with open(out / "predictions.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["row", "label"])
        w.writerows([i, int(p)] for i, p in enumerate(pred))
    rep = report(T1.labels, pred, int(max(T1.labels.max(), A.labels.max())) + 1) \
        if T1.labels is not None else None
    save_report(out / "metrics.json", rep, test_accuracy_facet2_only=acc_c, test_accuracy_augmented=acc_a,
                test_accuracy_final=acc, valid_accuracy_augmented=val_a, valid_accuracy_final=val_final,
                n_centroids=len(A), n_centroids_final=len(final))
    print(f"facet-2 only={acc_c} augmented={acc_a} final={acc} centroids {len(A)} -> {len(final)}")
    return EXIT_OK


# -- evaluation and synthesis ----------------------------------------------------

def cmd_eval_report(args):
    run = Path(args.run)
    cfg_path = run / "config.json"
    if not cfg_path.is_file():
        raise ConfigError(f"{run} has no config.json")
    cfg = ExperimentConfig.from_dict(json.loads(cfg_path.read_text()))
    labels_path = run / "labels.csv"
    if not labels_path.is_file():
        raise ConfigError(f"{run} has no labels.csv (is it a self-training run?)")
    s, _ = build_split(cfg)
    ids, assigned = [], []
    with open(labels_path, newline="") as f:
        for row in csv.DictReader(f):
            if row["origin"] == PSEUDO:
                ids.append(int(row["id"]))
                assigned.append(int(row["label"]))
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    rep = None
    truth = hidden_labels(s, ids)
    keep = truth >= 0
    if np.any(keep):
        rep = report(truth[keep], np.asarray(assigned)[keep], s.num_classes)
    payload = rep.to_dict(one_minus=args.one_minus) if rep is not None else None
    (out / "report.json").write_text(json.dumps({"n_scored": int(keep.sum()), "metrics": payload},
                                                indent=1, sort_keys=True) + "\n")
    print(json.dumps({"n_scored": int(keep.sum()), "kappa": None if rep is None else rep.kappa}))
    return EXIT_OK


def cmd_synth_blobs(args):
    if args.sep < 0 or args.classes < 1 or args.per_class < 1 or args.seed < 0:
        raise ConfigError("need classes >= 1, per-class >= 1, sep >= 0 and seed >= 0")
    ds = blobs(args.classes, args.per_class, args.sep, args.dim, args.seed)
    out = Path(args.out)
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "blobs.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ds.X, ds.y)
    print(out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--profile", help="named profile to start from")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = _Parser(prog="dbst", description="Uncertainty-weighted self-training toolkit.")
    parser.add_argument("--version", action="version", version=f"dbst {__version__}")
    sub = parser.add_subparsers(dest="group", parser_class=_Parser)

    data = sub.add_parser("data", help="dataset preparation").add_subparsers(dest="cmd", parser_class=_Parser)
    p = data.add_parser("split", help="write a train/valid/test/unlabeled split manifest")
    _common(p)
    p.set_defaults(func=cmd_data_split)

    st = sub.add_parser("selftrain", help="self-training runs").add_subparsers(dest="cmd", parser_class=_Parser)
    p = st.add_parser("run", help="uncertainty-weighted Bayesian self-training")
    _common(p)
    p.set_defaults(func=cmd_selftrain_run)
    p = st.add_parser("baseline", help="deterministic (dst) or ensemble (dest) self-training")
    _common(p)
    p.add_argument("--method", required=True, choices=[DST, DEST])
    p.add_argument("--ensemble-size", type=int, help="ensemble members for dest")
    p.set_defaults(func=cmd_selftrain_baseline)

    ad = sub.add_parser("adapt", help="cross-facet cluster adaptation").add_subparsers(dest="cmd",
                                                                                      parser_class=_Parser)
    p = ad.add_parser("run", help="build, adapt and prune a centroid set")
    _common(p)
    p.set_defaults(func=cmd_adapt_run)

    ev = sub.add_parser("eval", help="evaluation").add_subparsers(dest="cmd", parser_class=_Parser)
    p = ev.add_parser("report", help="score a finished self-training run against hidden labels")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--out", help="where to write report.json (default: the run directory)")
    p.add_argument("--one-minus", action="store_true", help="report 1 - score for every metric")
    p.set_defaults(func=cmd_eval_report)

    sy = sub.add_parser("synth", help="synthetic data").add_subparsers(dest="cmd", parser_class=_Parser)
    p = sy.add_parser("blobs", help="Gaussian blobs on a regular simplex, as CSV")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--sep", type=float, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path, or a directory to hold blobs.csv")
    p.set_defaults(func=cmd_synth_blobs)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        sys.stderr.write(parser.format_usage())
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            raise _UsageError(parser.format_usage())
        return args.func(args)
    except _UsageError as exc:
        sys.stderr.write(str(exc).rstrip("\n") + "\n")
        return EXIT_CONFIG
    except ConfigError as exc:
        sys.stderr.write(f"dbst: config error: {exc}\n")
        return EXIT_CONFIG
    except (DBSTError, OSError, ValueError) as exc:
        sys.stderr.write(f"dbst: error: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
