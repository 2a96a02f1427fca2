"""Batch command-line front end.

Exit codes: 0 success, 2 I/O or data, 3 configuration, 4 numerical.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import RunConfig, load_config
from .errors import ConfigError, KernelFusionError
from .features import distance_histogram, histogram_edges, stat_feature_names
from .ingest import load_dataset, split_dataset, write_dataset
from .synthetic import make_dataset

log = logging.getLogger("kernelfusion")

TRAIN_FILES = ("checkpoint.kfc", "metrics.txt", "loss.csv", "confusion.csv")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k, None) for k in ("data", "seed", "out", "variant", "train_fraction")}
    cfg = cfg.replace(**overrides)
    return cfg


def _dataset(cfg):
    if not cfg.data:
        raise ConfigError("no data file given (use --data or the config's 'data' key)")
    path = Path(cfg.data)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    return load_dataset(path)


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def metrics_text(variant, metrics):
    lines = [f"variant={variant}",
             f"balanced_accuracy={_fmt(metrics.balanced_accuracy)}",
             f"accuracy={_fmt(metrics.accuracy)}",
             f"n_test={metrics.n}",
             f"absent_classes={','.join(map(str, metrics.absent_classes))}"]
    lines += [f"recall_class_{c}={_fmt(r)}" for c, r in enumerate(metrics.per_class_recall)]
    return "\n".join(lines) + "\n"


def write_confusion(path, cm):
    n = cm.shape[0]
    _write_csv(path, ["true\\pred", *range(n)], [[c, *cm[c].tolist()] for c in range(n)])


def variant_dirname(variant):
    return variant.replace(":", "-")


# --- commands ------------------------------------------------------------------

def cmd_synth(args):
    ds = make_dataset(args.frames, n_classes=args.classes, seed=args.seed or 0)
    write_dataset(args.out, ds.frames)
    print(f"wrote {len(ds)} frames to {args.out}")
    return 0


def cmd_featurize(args):
    cfg = _config(args)
    ds = _dataset(cfg)
    feats = pipeline.compute_frame_features(ds, cfg)
    split = split_dataset(ds, cfg.train_fraction, cfg.seed)
    edges = histogram_edges([feats.distances[i] for i in split.train_indices], cfg.bins)
    out = Path(cfg.out) / "features"
    out.mkdir(parents=True, exist_ok=True)
    ids, labels = ds.ids, ds.labels
    _write_csv(out / "stat_features.csv", ["id", "label", *stat_feature_names(ds.axis_count)],
               [[i, y, *map(_fmt, row)] for i, y, row in zip(ids, labels, feats.stats)])
    hists = [distance_histogram(d, edges) for d in feats.distances]
    _write_csv(out / "shape_histograms.csv", ["id", "label", *(f"h{b}" for b in range(cfg.bins))],
               [[i, y, *map(_fmt, h)] for i, y, h in zip(ids, labels, hists)])
    print(f"wrote features for {len(ds)} frames to {out}")
    return 0


def _prepared(cfg, ds, rebuild=False):
    kdir = Path(cfg.out) / "kernels"
    digest = pipeline.data_digest(cfg.data)
    if not rebuild and (kdir / "manifest.json").exists():
        log.info("loading kernels from %s", kdir)
        return pipeline.load_prepared(kdir, ds, cfg, digest)
    pk = pipeline.prepare(ds, cfg)
    pipeline.save_prepared(pk, kdir, cfg, digest)
    return pk


def cmd_kernels(args):
    cfg = _config(args)
    ds = _dataset(cfg)
    pk = _prepared(cfg, ds, rebuild=True)
    print(f"wrote {pk.kernel_set.M_tilde} kernels to {Path(cfg.out) / 'kernels'}")
    return 0


def cmd_train(args):
    cfg = _config(args)
    ds = _dataset(cfg)
    pk = _prepared(cfg, ds)
    result = pipeline.run_variant(
        pk, cfg, log_epoch=lambda r: log.debug("epoch %d loss %.5f acc %.4f", r["epoch"], r["loss"], r["accuracy"]))
    log.info("trained %s in %.2fs", cfg.variant, result.report.wall_time)
    out = Path(cfg.out) / variant_dirname(cfg.variant)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.save_model(out / "checkpoint.kfc", result, pk, cfg)
    (out / "metrics.txt").write_text(metrics_text(cfg.variant, result.metrics))
    _write_csv(out / "loss.csv", ["epoch", "loss", "accuracy", "batch_loss"],
               [[e["epoch"], _fmt(e["loss"]), _fmt(e["accuracy"]), "" if e["epoch"] == 0 else _fmt(e["batch_loss"])]
                for e in result.report.epochs])
    write_confusion(out / "confusion.csv", result.metrics.confusion)
    print(metrics_text(cfg.variant, result.metrics), end="")
    return 0


def cmd_eval(args):
    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    if not args.data or not Path(args.data).is_file():
        raise FileNotFoundError(f"data file not found: {args.data}")
    ds = load_dataset(args.data)
    lm = pipeline.load_model(args.checkpoint)
    metrics = pipeline.evaluate_checkpoint(args.checkpoint, ds, args.split)
    text = metrics_text(lm.meta["variant"], metrics)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(text)
        write_confusion(out / "confusion.csv", metrics.confusion)
    print(text, end="")
    return 0


def cmd_ablate(args):
    cfg = _config(args)
    ds = _dataset(cfg)
    pk = _prepared(cfg, ds)
    rows = pipeline.run_ablation(pk, cfg, include_uniform=args.uniform)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "ablation.csv", ["variant", "balanced_accuracy", "accuracy"],
               [[r["variant"], _fmt(r["balanced_accuracy"]), _fmt(r["accuracy"])] for r in rows])
    for r in rows:
        print(f"{r['variant']:<22} {100 * r['balanced_accuracy']:6.2f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="kernelfusion", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--data", help="frame CSV file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--train-fraction", dest="train_fraction", type=float)
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("synth", help="write a synthetic 3-axis frame file")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=600)
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    for name, func, text in (("featurize", cmd_featurize, "dump per-frame features"),
                             ("kernels", cmd_kernels, "build base and composition Gram files")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("train", help="train one variant and write a checkpoint")
    common(sp)
    sp.add_argument("--variant", help="a | b | c | proposed | uniform | single:<kernel>")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", choices=("test", "all"), default="test")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train every comparison variant")
    common(sp)
    sp.add_argument("--uniform", action="store_true", help="include the all-sum single-tower row")
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KernelFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
