"""Command-line interface: ``dmdsc {gen-data,train,eval,ablate,ir-study}``.

Exit codes: 0 on success, 1 for invalid input (bad flags, config, files),
2 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from dmdsc import __version__
from dmdsc._io import atomic_write_text
from dmdsc.checkpoint import load_checkpoint, save_checkpoint
from dmdsc.config import build_config, dump_config
from dmdsc.datasets import generate_synthetic, make_trial_splits, read_csv, write_csv
from dmdsc.errors import DMDSCError, ValidationError
from dmdsc.evaluation import average_reports, evaluate_trial
from dmdsc.experiments import METRICS, ablate_lambda, ablate_margin, ir_study
from dmdsc.trainer import train

log = logging.getLogger("dmdsc")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

DATA_FILES = {
    "train": ("train.csv", "known-train"),
    "test_known": ("test_known.csv", "known-test"),
    "test_unknown": ("test_unknown.csv", "unknown-test"),
    "background": ("background.csv", "background"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON experiment config (flags override it)")
    p.add_argument("--seed", type=int, help="seed for data, init and shuffling")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_synth(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--known", type=int, dest="num_known")
    g.add_argument("--unknown", type=int, dest="num_unknown")
    g.add_argument("--dim", type=int, dest="input_dim")
    g.add_argument("--majority", type=int, dest="samples_per_majority_class")
    g.add_argument("--ir", type=float, dest="imbalance_ratio", help="imbalance ratio (>= 1)")
    g.add_argument("--cluster-std", type=float)
    g.add_argument("--separation", type=float, dest="center_separation")
    g.add_argument("--bg-samples", type=int)
    g.add_argument("--unknown-samples", type=int, dest="samples_per_unknown_class")


def _add_train(p):
    g = p.add_argument_group("network")
    g.add_argument("--hidden", type=_ints, dest="hidden_dims", help="e.g. 64,64 (empty for linear)")
    g.add_argument("--activation", choices=("relu", "tanh"))
    g.add_argument("--embed-dim", type=int)
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int, dest="batch_size_known")
    g.add_argument("--bg-batch-size", type=int, dest="batch_size_bg")
    g.add_argument("--lr", type=float, dest="learning_rate")
    g.add_argument("--rms-decay", type=float)
    g.add_argument("--rms-epsilon", type=float)
    g.add_argument("--lambda-inter", type=float)
    g.add_argument("--lambda-bg", type=float)
    g.add_argument("--m-min", type=float)
    g.add_argument("--m-max", type=float)
    g.add_argument("--radius", type=float)
    g.add_argument("--eval-every", type=int)
    g.add_argument("--margin-mode", choices=("dynamic", "uniform"))
    g.add_argument("--square-margin", action="store_true", default=None)


_SYNTH_KEYS = (
    "num_known", "num_unknown", "input_dim", "samples_per_majority_class", "imbalance_ratio",
    "cluster_std", "center_separation", "bg_samples", "samples_per_unknown_class",
)
_NET_KEYS = ("hidden_dims", "activation", "embed_dim")
_TRAIN_KEYS = (
    "epochs", "batch_size_known", "batch_size_bg", "learning_rate", "rms_decay", "rms_epsilon",
    "lambda_inter", "lambda_bg", "m_min", "m_max", "radius", "eval_every", "margin_mode",
    "square_margin",
)


def _config_from_args(args):
    ns = vars(args)
    overrides = {
        "seed": ns.get("seed"),
        "trials": ns.get("trials"),
        "seeds": ns.get("seeds"),
        "out": str(ns["out"]) if ns.get("out") is not None else None,
        "synth": {k: ns.get(k) for k in _SYNTH_KEYS},
        "net": {k: ns.get(k) for k in _NET_KEYS},
        "train": {k: ns.get(k) for k in _TRAIN_KEYS},
    }
    return build_config(ns.get("config"), overrides)


def _manifest(command, cfg, **extra):
    doc = {
        "command": command,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg.seed,
        "config": json.loads(dump_config(cfg)),
    }
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _trial_dirs(root, trials):
    root = Path(root)
    if trials <= 1:
        return [root]
    return [root / f"trial_{k}" for k in range(trials)]


def _detect_trials(root):
    root = Path(root)
    n = 0
    while (root / f"trial_{n}").is_dir():
        n += 1
    return max(n, 1)


def cmd_gen_data(args):
    cfg = _config_from_args(args)
    out = Path(cfg.out)
    splits = [None]
    if cfg.trials > 1:
        total = cfg.synth.num_known + cfg.synth.num_unknown
        splits = make_trial_splits(total, cfg.synth.num_known, cfg.trials, cfg.seed)
    for split, d in zip(splits, _trial_dirs(out, cfg.trials)):
        datasets = dict(zip(DATA_FILES, generate_synthetic(cfg.synth, split)))
        for key, (name, _) in DATA_FILES.items():
            write_csv(datasets[key], d / name)
        extra = {"files": [name for name, _ in DATA_FILES.values()]}
        if split is not None:
            extra["trial"] = asdict(split)
        extra["class_counts"] = list(datasets["train"].class_counts.values())
        atomic_write_text(d / "manifest.json", _manifest("gen-data", cfg, **extra))
        print(f"wrote {d}")
    return EXIT_OK


def _load_training_data(args, data_dir):
    train_path = args.train_csv or data_dir / DATA_FILES["train"][0]
    bg_path = args.background_csv
    if bg_path is None and data_dir is not None:
        candidate = data_dir / DATA_FILES["background"][0]
        bg_path = candidate if candidate.exists() else None
    train_ds = read_csv(train_path, "known-train")
    bg = read_csv(bg_path, "background") if bg_path is not None else None
    return train_ds, bg


def cmd_train(args):
    cfg = _config_from_args(args)
    if args.data is None and args.train_csv is None:
        raise ValidationError("train needs --data DIR or --train-csv PATH")
    out = Path(cfg.out)
    trials = _detect_trials(args.data) if args.data is not None else 1
    data_dirs = _trial_dirs(args.data, trials) if args.data is not None else [None]
    for data_dir, run_dir in zip(data_dirs, _trial_dirs(out, trials)):
        train_ds, bg = _load_training_data(args, data_dir)
        num_classes = int(train_ds.labels.max()) + 1
        net_cfg = cfg.net_config(train_ds.input_dim, num_classes)
        ckpt, trainlog = train(train_ds, bg, net_cfg, cfg.train)
        save_checkpoint(ckpt, run_dir / "checkpoint.json")
        atomic_write_text(run_dir / "trainlog.csv", trainlog.to_csv())
        atomic_write_text(
            run_dir / "manifest.json",
            _manifest("train", cfg, data=str(data_dir) if data_dir else str(args.train_csv)),
        )
        last = trainlog.records[-1]
        print(f"{run_dir}: epoch {last.epoch} total={last.total:.6g} train_acc={last.train_acc:.4f}")
    return EXIT_OK


def cmd_eval(args):
    if args.data is None or args.checkpoint is None:
        raise ValidationError("eval needs --checkpoint and --data")
    trials = args.trials or _detect_trials(args.data)
    out = Path(args.out) if args.out is not None else Path("runs")
    ckpt_path = Path(args.checkpoint)
    reports = []
    for k, (data_dir, run_dir) in enumerate(zip(_trial_dirs(args.data, trials), _trial_dirs(out, trials))):
        if ckpt_path.is_dir():
            ckpt_file = _trial_dirs(ckpt_path, trials)[k] / "checkpoint.json"
        else:
            ckpt_file = ckpt_path
        if not ckpt_file.exists():
            raise FileNotFoundError(f"checkpoint not found: {ckpt_file}")
        ckpt = load_checkpoint(ckpt_file)
        test_known = read_csv(data_dir / DATA_FILES["test_known"][0], "known-test")
        test_unknown = read_csv(data_dir / DATA_FILES["test_unknown"][0], "unknown-test")
        report = evaluate_trial(ckpt, test_known, test_unknown)
        atomic_write_text(run_dir / "report.json", report.to_json())
        atomic_write_text(run_dir / "curve.csv", report.curve_csv())
        reports.append(report)
        print(f"{run_dir}: acc={report.acc:.4f} auroc={report.auroc:.4f} oscr={report.oscr:.4f}")
    avg = average_reports(reports)
    doc = {"average": avg.to_dict(), "trials": [r.to_dict() for r in reports]}
    atomic_write_text(out / "report_average.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"average over {len(reports)}: acc={avg.acc:.4f} auroc={avg.auroc:.4f} oscr={avg.oscr:.4f}")
    return EXIT_OK


def _write_table(out, name, table, cfg, command, grid=None):
    atomic_write_text(out / f"{name}.csv", table.to_csv())
    if grid is not None:
        for metric in METRICS:
            atomic_write_text(out / f"{name}_{metric}.csv", table.grid_csv(metric, *grid))
    atomic_write_text(out / "manifest.json", _manifest(command, cfg))
    sys.stdout.write(table.to_csv())


def cmd_ablate(args):
    cfg = _config_from_args(args)
    out = Path(cfg.out)
    if args.grid == "lambda":
        table = ablate_lambda(cfg, args.lambda_inter_values, args.lambda_bg_values, args.jobs)
        grid = ("lambda_inter", "lambda_bg")
    else:
        table = ablate_margin(cfg, args.m_min_values, args.m_max_values, args.jobs)
        grid = ("m_min", "m_max")
    _write_table(out, f"ablate_{args.grid}", table, cfg, "ablate", grid)
    return EXIT_OK


def cmd_ir_study(args):
    cfg = _config_from_args(args)
    table = ir_study(cfg, args.irs, args.jobs)
    _write_table(Path(cfg.out), "ir_study", table, cfg, "ir-study", ("imbalance_ratio", "margin_mode"))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="dmdsc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic benchmark as CSV files")
    _add_common(p)
    _add_synth(p)
    p.add_argument("--trials", type=int, help="number of random known/unknown splits")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an embedding network")
    _add_common(p)
    _add_train(p)
    p.add_argument("--data", type=Path, help="directory written by gen-data")
    p.add_argument("--train-csv", type=Path, help="training CSV (overrides --data)")
    p.add_argument("--background-csv", type=Path, help="background CSV (overrides --data)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on held-out data")
    p.add_argument("--checkpoint", type=Path, help="checkpoint file or run directory")
    p.add_argument("--data", type=Path, help="directory written by gen-data")
    p.add_argument("--trials", type=int, help="number of trial_k directories to evaluate")
    p.add_argument("--out", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    for name, func, helptext in (
        ("ablate", cmd_ablate, "sweep loss weights or margin bounds"),
        ("ir-study", cmd_ir_study, "uniform vs dynamic margins across imbalance ratios"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_synth(p)
        _add_train(p)
        p.add_argument("--trials", type=int)
        p.add_argument("--seeds", type=int, help="seeds averaged per cell")
        p.add_argument("--jobs", type=int, default=1, help="cells run in parallel")
        if name == "ablate":
            p.add_argument("--grid", choices=("lambda", "margin"), default="lambda")
            p.add_argument("--lambda-inter-values", type=_floats, default=[0.0, 0.1, 1.0])
            p.add_argument("--lambda-bg-values", type=_floats, default=[0.0, 0.1, 1.0])
            p.add_argument("--m-min-values", type=_floats, default=[25.0, 35.0])
            p.add_argument("--m-max-values", type=_floats, default=[55.0, 65.0])
        else:
            p.add_argument("--irs", type=_floats, default=[1.0, 10.0, 100.0])
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DMDSCError, OSError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
