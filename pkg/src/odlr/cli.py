"""Command-line front end: train / eval / restore / compare / report.

Configuration is flat INI text (sections of key = value) merged with
command-line flags; flags win. Every run directory gets a manifest
sufficient to re-run it bit-identically (metric columns) in deterministic
mode. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint
from .corruption import TASKS, TRAIN_LEVELS
from .dataset import (
    dataset_digest,
    denormalize,
    ingest,
    mean_fill,
    read_image_normalized,
    split,
    write_image,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    NumericError,
    OdlrError,
)
from .harness import TrainConfig, evaluate_test, tile_restore, train
from .metrics import psnr
from .optim import OptimizerConfig
from .reports import (
    ensure_dir,
    read_epoch_reports,
    write_allocation_history,
    write_comparison,
    write_epoch_reports,
    write_sweep,
    write_test_report,
)
from .rng import derive_seed
from .schedulers import SchedulerKind

DATA_ROOT_ENV = "ODLR_DATA_ROOT"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must exit 1, not argparse's 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration model
# ---------------------------------------------------------------------------

CONFIG_KEYS = {
    "run": ("task", "scheduler", "epochs", "batch_size", "n_subtasks", "seed",
            "stage_length", "checkpoint_every", "val_corruption",
            "hard_warmup_epochs", "hard_select_k", "hard_pool_size",
            "batches_per_epoch", "deterministic"),
    "optimizer": ("lr", "beta1", "beta2", "eps"),
    "network": ("encoder_channels", "precision", "input_size"),
    "data": ("train_size", "val_size", "test_size", "split_seed"),
    "compare": ("schedulers", "trials"),
    "eval": ("trials", "levels"),
}
INFO_SECTIONS = ("seeds", "manifest")  # written for the record, never read

DEFAULTS = {
    "run": {"task": "denoise", "scheduler": "on-demand", "epochs": 150,
            "batch_size": 100, "n_subtasks": TRAIN_LEVELS, "seed": 0,
            "stage_length": None, "checkpoint_every": 0,
            "val_corruption": "per_epoch", "hard_warmup_epochs": 50,
            "hard_select_k": 10, "hard_pool_size": None,
            "batches_per_epoch": None, "deterministic": True},
    "optimizer": {"lr": 0.0002, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8},
    "network": {"encoder_channels": "64,128,256,512", "precision": "float32",
                "input_size": 64},
    "data": {"train_size": 2000, "val_size": 200, "test_size": 200,
             "split_seed": 1},
}


def load_config_file(path) -> dict:
    """Parse an INI config/manifest; unknown keys are usage errors."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise DataError(f"config file {path} not found or unreadable")
    out: dict = {}
    for section in parser.sections():
        if section in INFO_SECTIONS:
            continue
        if section not in CONFIG_KEYS:
            raise UsageError(f"unknown config section [{section}] in {path}")
        for key, value in parser.items(section):
            if key not in CONFIG_KEYS[section]:
                raise UsageError(
                    f"unknown config key '{key}' in section [{section}] of {path}"
                )
            out.setdefault(section, {})[key] = value
    return out


def _as_int(v, none_ok=False):
    if v in (None, "", "none", "None") and none_ok:
        return None
    return int(v)


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def _merged(file_cfg: dict, args) -> dict:
    """defaults <- config file <- CLI flags."""
    cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    for section, items in file_cfg.items():
        cfg.setdefault(section, {}).update(items)
    flag_map = {
        ("run", "task"): "task", ("run", "scheduler"): "scheduler",
        ("run", "epochs"): "epochs", ("run", "batch_size"): "batch",
        ("run", "seed"): "seed", ("run", "stage_length"): "stage_length",
        ("run", "checkpoint_every"): "checkpoint_every",
        ("run", "n_subtasks"): "subtasks",
        ("network", "encoder_channels"): "width",
        ("network", "precision"): "precision",
        ("optimizer", "lr"): "lr",
        ("data", "train_size"): "train_size",
        ("data", "val_size"): "val_size",
        ("data", "test_size"): "test_size",
        ("data", "split_seed"): "split_seed",
    }
    for (section, key), attr in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.setdefault(section, {})[key] = value
    return cfg


def build_train_config(cfg: dict) -> TrainConfig:
    run, opt, net = cfg["run"], cfg["optimizer"], cfg["network"]
    channels = tuple(int(c) for c in str(net["encoder_channels"]).split(","))
    try:
        return TrainConfig(
            task=str(run["task"]),
            scheduler=SchedulerKind.parse(str(run["scheduler"])),
            n_subtasks=int(run["n_subtasks"]),
            batch_size=int(run["batch_size"]),
            epochs=int(run["epochs"]),
            batches_per_epoch=_as_int(run["batches_per_epoch"], none_ok=True),
            seed=int(run["seed"]),
            encoder_channels=channels,
            input_size=int(net["input_size"]),
            precision=str(net["precision"]),
            optimizer=OptimizerConfig(lr=float(opt["lr"]), beta1=float(opt["beta1"]),
                                      beta2=float(opt["beta2"]), eps=float(opt["eps"])),
            stage_length=_as_int(run["stage_length"], none_ok=True),
            checkpoint_every=int(run["checkpoint_every"]),
            hard_warmup_epochs=int(run["hard_warmup_epochs"]),
            hard_select_k=int(run["hard_select_k"]),
            hard_pool_size=_as_int(run["hard_pool_size"], none_ok=True),
            val_corruption=str(run["val_corruption"]),
        )
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad configuration value: {exc}") from exc


def write_manifest(path, cfg: dict, tc: TrainConfig, extra: dict) -> None:
    parser = configparser.ConfigParser()
    for section in ("run", "optimizer", "network", "data"):
        parser[section] = {k: str(v) for k, v in cfg[section].items()}
    parser["run"]["scheduler"] = tc.scheduler.label()
    parser["seeds"] = {
        "master": str(tc.seed),
        "init": str(tc.init_seed),
        "data": str(tc.data_seed),
        "corruption": str(tc.corruption_seed),
        "validation": str(tc.val_seed),
        "split": str(cfg["data"]["split_seed"]),
    }
    parser["manifest"] = {k: str(v) for k, v in extra.items()}
    with open(path, "w") as fh:
        parser.write(fh)


# ---------------------------------------------------------------------------
# data loading shared by train/eval/compare
# ---------------------------------------------------------------------------

def _data_dir(args) -> Path:
    d = getattr(args, "data", None) or os.environ.get(DATA_ROOT_ENV)
    if not d:
        raise UsageError(
            f"no data directory: pass --data or set ${DATA_ROOT_ENV}"
        )
    return Path(d)


def load_split_sets(data_dir, cfg: dict, channels: int):
    records = ingest(data_dir, channels=channels)
    data = cfg["data"]
    sizes = (int(data["train_size"]), int(data["val_size"]), int(data["test_size"]))
    ds = split(records, sizes, int(data["split_seed"]))
    train_set, val_set, test_set = ds.resolve(records)
    return records, train_set, val_set, test_set


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    file_cfg = load_config_file(args.config) if args.config else {}
    cfg = _merged(file_cfg, args)
    tc = build_train_config(cfg)
    out_dir = ensure_dir(args.out)
    data_dir = _data_dir(args)

    records, train_set, val_set, _ = load_split_sets(data_dir, cfg, tc.channels)
    fill = mean_fill(train_set)

    reports_path = out_dir / "epoch_reports.csv"
    ck_final = out_dir / "checkpoint_final.odlr"
    resume_state = None
    prior_reports = []
    if args.resume and reports_path.exists():
        prior_reports = read_epoch_reports(reports_path)
        snaps = sorted(out_dir.glob("checkpoint_epoch_*.odlr"))
        usable = [
            (int(p.stem.rsplit("_", 1)[1]), p) for p in snaps
            if int(p.stem.rsplit("_", 1)[1]) < len(prior_reports)
        ]
        if usable:
            epoch_done, snap = max(usable)
            prior_reports = prior_reports[:epoch_done + 1]
            net0 = load_checkpoint(snap).train()
            resume_state = (net0, epoch_done + 1,
                            list(prior_reports[-1].psnr))
            print(f"resuming after epoch {epoch_done} from {snap.name}")
        else:
            prior_reports = []

    write_manifest(out_dir / "manifest.ini", cfg, tc, {
        "version": __version__,
        "data_dir": str(data_dir),
        "dataset_digest": dataset_digest(records),
        "mean_fill": ",".join(repr(float(v)) for v in fill),
        "epoch_reports": "epoch_reports.csv",
        "final_checkpoint": ck_final.name,
        "training_instances": str(
            tc.epochs * (tc.batches_per_epoch or len(train_set) // tc.batch_size)
            * tc.batch_size),
    })

    all_reports = list(prior_reports)

    def on_epoch(report):
        all_reports.append(report)
        write_epoch_reports(reports_path, all_reports)
        print(f"epoch {report.epoch:4d}  loss {report.train_loss:.5f}  "
              f"psnr {['%.2f' % p for p in report.psnr]}  "
              f"next {list(report.next_allocation)}  "
              f"{report.wall_time_s:.1f}s")

    net, _ = train(tc, train_set, val_set, checkpoint_dir=out_dir,
                   progress=on_epoch, resume_state=resume_state)
    write_allocation_history(out_dir / "allocation_history.csv", all_reports)
    print(f"run complete: {out_dir}")
    return EXIT_OK


def _eval_into(net, task, data_dir, cfg, out_dir, trials, levels, seed):
    _, train_set, _, test_set = load_split_sets(data_dir, cfg, net.input_channels)
    fill = mean_fill(train_set)
    report = evaluate_test(net, test_set, task, trials=trials,
                           levels=levels, master_seed=derive_seed(seed, "eval"),
                           fill=fill, batch_size=100)
    write_test_report(out_dir / "test_report.csv", report)
    write_sweep(out_dir / "sweep.csv", report)
    l2, ps = report.summary()
    return report, l2, ps


def _checked_task(net, task_arg) -> str:
    net_task = getattr(net, "cfg", None) and net.cfg.task
    if task_arg and net_task and task_arg != net_task:
        raise DataError(
            f"checkpoint was trained for task {net_task!r} but --task "
            f"{task_arg!r} was requested"
        )
    task = task_arg or net_task
    if not task:
        raise UsageError("checkpoint carries no task; pass --task")
    expected = 1 if task == "denoise" else 3
    if net.input_channels != expected:
        raise DataError(
            f"task {task!r} needs {expected}-channel input but checkpoint "
            f"has {net.input_channels}"
        )
    return task


def cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    task = _checked_task(net, args.task)
    file_cfg = load_config_file(args.config) if args.config else {}
    cfg = _merged(file_cfg, args)
    out_dir = ensure_dir(args.out)
    levels = tuple(range(1, args.levels + 1))
    report, l2, ps = _eval_into(net, task, _data_dir(args), cfg, out_dir,
                                args.trials, levels, int(cfg["run"]["seed"]))
    print(f"levels: {list(report.levels)}")
    print(f"per-level psnr (dB): {[f'{v:.2f}' for v in report.psnr_mean]}")
    print(f"summary over levels 1-{TRAIN_LEVELS}: "
          f"L2 {l2:.3f} permille, PSNR {ps:.2f} dB")
    return EXIT_OK


def cmd_restore(args) -> int:
    net = load_checkpoint(args.checkpoint)
    img = read_image_normalized(args.input, net.input_channels)
    h, w = img.shape[2], img.shape[3]
    if h < net.input_size or w < net.input_size:
        raise DataError(
            f"input {h}x{w} is smaller than {net.input_size}x"
            f"{net.input_size}; upscale the image first"
        )
    restored = tile_restore(net, img)
    write_image(args.out, denormalize(restored))
    print(f"restored image written to {args.out}")
    if args.reference:
        ref = read_image_normalized(args.reference, net.input_channels)
        if ref.shape != restored.shape:
            raise DataError(
                f"reference shape {ref.shape} != restored {restored.shape}"
            )
        print(f"psnr vs reference: {psnr(restored, ref):.2f} dB")
    return EXIT_OK


def cmd_compare(args) -> int:
    file_cfg = load_config_file(args.config) if args.config else {}
    cfg = _merged(file_cfg, args)
    kinds_text = cfg.get("compare", {}).get("schedulers", "on-demand,rigid-joint")
    trials = int(cfg.get("compare", {}).get("trials", 5))
    kinds = [SchedulerKind.parse(k) for k in str(kinds_text).split(",") if k.strip()]
    out_dir = ensure_dir(args.out)
    data_dir = _data_dir(args)

    rows = []
    failures = []
    for kind in kinds:
        sub_cfg = {s: dict(v) for s, v in cfg.items()}
        sub_cfg["run"]["scheduler"] = kind.label()
        tc = build_train_config(sub_cfg)
        run_dir = ensure_dir(out_dir / kind.label().replace(":", "_"))
        try:
            records, train_set, val_set, test_set = load_split_sets(
                data_dir, sub_cfg, tc.channels)
            fill = mean_fill(train_set)
            reports_path = run_dir / "epoch_reports.csv"
            all_reports = []

            def on_epoch(r, _path=reports_path, _acc=all_reports):
                _acc.append(r)
                write_epoch_reports(_path, _acc)

            net, _ = train(tc, train_set, val_set, checkpoint_dir=run_dir,
                           progress=on_epoch)
            write_manifest(run_dir / "manifest.ini", sub_cfg, tc, {
                "version": __version__,
                "data_dir": str(data_dir),
                "dataset_digest": dataset_digest(records),
            })
            report = evaluate_test(
                net, test_set, tc.task, trials=trials,
                levels=tuple(range(1, TRAIN_LEVELS + 2)),
                master_seed=derive_seed(tc.seed, "eval"), fill=fill)
            write_test_report(run_dir / "test_report.csv", report)
            write_sweep(run_dir / "sweep.csv", report)
            l2, ps = report.summary()
            bpe = tc.batches_per_epoch or len(train_set) // tc.batch_size
            rows.append({
                "scheduler": kind.label(), "l2pm": l2, "psnr": ps,
                "level6_psnr": float(report.psnr_mean[-1]),
                "instances": tc.epochs * bpe * tc.batch_size,
            })
            print(f"{kind.label()}: L2 {l2:.3f} permille, PSNR {ps:.2f} dB")
        except OdlrError as exc:
            failures.append((kind.label(), exc))
            print(f"{kind.label()}: FAILED ({exc})", file=sys.stderr)
    if rows:
        write_comparison(out_dir / "comparison.csv", rows)
        print(f"comparison written to {out_dir / 'comparison.csv'}")
    if failures:
        raise failures[0][1]
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    reports_path = run_dir / "epoch_reports.csv"
    if not reports_path.exists():
        raise DataError(f"no epoch_reports.csv under {run_dir}")
    reports = read_epoch_reports(reports_path)
    out = Path(args.out) if args.out else run_dir / "allocation_history.csv"
    write_allocation_history(out, reports)
    print(f"allocation history for {len(reports)} epochs written to {out}")
    for r in reports[-5:]:
        print(f"epoch {r.epoch:4d}  counts {list(r.allocation)}  "
              f"psnr {['%.2f' % p for p in r.psnr]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="odlr",
                     description="restoration training across the difficulty "
                                 "spectrum with demand-driven scheduling")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common_train_flags(p):
        p.add_argument("--config", help="INI config or prior run manifest")
        p.add_argument("--data", help=f"image directory (default ${DATA_ROOT_ENV})")
        p.add_argument("--task", choices=TASKS)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch", type=int, help="batch size")
        p.add_argument("--subtasks", type=int, help="number of difficulty bins")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--stage-length", dest="stage_length", type=int)
        p.add_argument("--train-size", dest="train_size", type=int)
        p.add_argument("--val-size", dest="val_size", type=int)
        p.add_argument("--test-size", dest="test_size", type=int)
        p.add_argument("--split-seed", dest="split_seed", type=int)
        p.add_argument("--width", help="encoder channels, e.g. 16,32,64,128")
        p.add_argument("--precision", choices=("float32", "float64"))
        p.add_argument("--lr", type=float)
        p.add_argument("--deterministic", action="store_true", default=None,
                       help="single-threaded, bit-reproducible mode (the "
                            "implementation is always sequential; this flag "
                            "records the contract in the manifest)")

    p_train = sub.add_parser("train", help="train one scheduler on one task")
    add_common_train_flags(p_train)
    p_train.add_argument("--scheduler")
    p_train.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the latest snapshot in --out")
    p_train.add_argument("--out", required=True, help="run directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint across levels")
    add_common_train_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--trials", type=int, default=20)
    p_eval.add_argument("--levels", type=int, default=TRAIN_LEVELS + 1,
                        help="evaluate levels 1..N (default includes the "
                             "extra-credit level)")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval, scheduler=None)

    p_rest = sub.add_parser("restore", help="restore an image of any size >= 64")
    p_rest.add_argument("--checkpoint", required=True)
    p_rest.add_argument("--input", required=True)
    p_rest.add_argument("--out", required=True)
    p_rest.add_argument("--reference", help="clean image to report PSNR against")
    p_rest.set_defaults(func=cmd_restore)

    p_cmp = sub.add_parser("compare",
                           help="train several schedulers under one budget")
    add_common_train_flags(p_cmp)
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare, scheduler=None)

    p_rep = sub.add_parser("report", help="emit a run's allocation history")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigurationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
