"""Command line entry point.

Subcommands:
    synth      generate a synthetic Gaussian-blob dataset CSV
    train      fit the twin-network embedding and save model.npz
    embed      run a saved model over a CSV and write the embeddings
    calibrate  build and save the calibration table
    predict    predict the test split and write predictions.csv
    evaluate   full pipeline: predictions plus report and curves
    report     recompute report/curves from an existing predictions.csv

`train`, `calibrate`, `predict` and `evaluate` are prefixes of the same
deterministic pipeline; flags mirror the config-file keys and override them.
"""

from __future__ import annotations

import argparse
import sys

from ivenn.data import load_csv, save_csv, synth_gaussians
from ivenn.metrics import build_report, curves_csv, report_text
from ivenn.mlp import forward_batch, load_params
from ivenn.pipeline import (
    PipelineError,
    RunConfig,
    load_predictions,
    parse_config,
    run_pipeline,
)

# (flag, RunConfig field, type) — type None means plain string
_PIPELINE_FLAGS = [
    ("--data", "data_csv", None),
    ("--out-dir", "out_dir", None),
    ("--seed", "seed", int),
    ("--taxonomy", "taxonomy", None),
    ("--class-count", "class_count", int),
    ("--k", "k", int),
    ("--theta", "theta", float),
    ("--max-output-threshold", "max_output_threshold", float),
    ("--second-output-threshold", "second_output_threshold", float),
    ("--output-gap-threshold", "output_gap_threshold", float),
    ("--embedding", "embedding", None),
    ("--model", "model_path", None),
    ("--softmax-source", "softmax_source", None),
    ("--hidden-dims", "hidden_dims", None),
    ("--embedding-dim", "embedding_dim", int),
    ("--margin", "margin", float),
    ("--learning-rate", "learning_rate", float),
    ("--epochs", "epochs", int),
    ("--batch-size", "batch_size", int),
    ("--pairs-per-epoch", "pairs_per_epoch", int),
    ("--test-fraction", "test_fraction", float),
    ("--calibration-fraction", "calibration_fraction", float),
    ("--bins", "bins", int),
]


def _add_pipeline_flags(sub):
    sub.add_argument("--config", help="key = value config file; flags override it")
    for flag, field, typ in _PIPELINE_FLAGS:
        sub.add_argument(flag, dest=field, type=typ, default=None)


def _build_config(args):
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            cfg = parse_config(f.read())
    else:
        cfg = RunConfig()
    for _, field, _ in _PIPELINE_FLAGS:
        value = getattr(args, field)
        if value is None:
            continue
        if field == "hidden_dims":
            value = tuple(int(v) for v in value.split(",") if v.strip())
        setattr(cfg, field, value)
    cfg.validate()
    return cfg


def _run(args, stop_after):
    cfg = _build_config(args)
    result = run_pipeline(cfg, stop_after=stop_after)
    print(f"wrote artifacts to {cfg.out_dir}")
    if result.report is not None:
        sys.stdout.write(report_text(result.report))
    return 0


def _cmd_synth(args):
    ds = synth_gaussians(
        class_count=args.classes,
        dim=args.dim,
        n_per_class=args.n_per_class,
        separation=args.separation,
        seed=args.seed,
    )
    save_csv(ds, args.out)
    print(f"wrote {len(ds)} examples to {args.out}")
    return 0


def _cmd_embed(args):
    params = load_params(args.model)
    ds = load_csv(args.data)
    emb = forward_batch(params, ds.features)
    cols = ["id", "label"] + [f"e{i}" for i in range(emb.shape[1])]
    lines = [",".join(cols)]
    for i in range(len(ds)):
        row = [str(int(ds.ids[i])), str(int(ds.labels[i]))]
        row += [repr(float(v)) for v in emb[i]]
        lines.append(",".join(row))
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    print(f"wrote {len(ds)} embeddings to {args.out}")
    return 0


def _cmd_report(args):
    records = load_predictions(args.predictions)
    report = build_report(records, bins=args.bins)
    with open(args.report_out, "w", encoding="utf-8") as f:
        f.write(report_text(report))
    with open(args.curves_out, "w", encoding="utf-8") as f:
        f.write(curves_csv(report.curves))
    sys.stdout.write(report_text(report))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ivenn",
        description="Venn prediction with learned distance metrics",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("synth", help="generate a synthetic Gaussian dataset")
    sub.add_argument("--classes", type=int, default=3)
    sub.add_argument("--dim", type=int, default=3)
    sub.add_argument("--n-per-class", type=int, default=500)
    sub.add_argument("--separation", type=float, default=4.0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_synth)

    for name, stop, text in [
        ("train", "train", "train the embedding network"),
        ("calibrate", "calibrate", "build the calibration table"),
        ("predict", "predict", "predict the test split"),
        ("evaluate", "report", "full pipeline with report"),
    ]:
        sub = subs.add_parser(name, help=text)
        _add_pipeline_flags(sub)
        sub.set_defaults(func=lambda a, s=stop: _run(a, s))

    sub = subs.add_parser("embed", help="embed a CSV with a saved model")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_embed)

    sub = subs.add_parser("report", help="recompute metrics from predictions")
    sub.add_argument("--predictions", required=True)
    sub.add_argument("--bins", type=int, default=10)
    sub.add_argument("--report-out", default="report.txt")
    sub.add_argument("--curves-out", default="curves.csv")
    sub.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
