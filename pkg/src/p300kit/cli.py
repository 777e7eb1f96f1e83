"""Command-line entry point: synth, preprocess, train, eval-within,
eval-cross, analyze, report.

Every command is reproducible from its flags plus --seed (fallback: the
P300_SEED environment variable, then 0). A plain-text config file of
key=value lines can supply defaults; explicit flags win. --dry-run prints
the resolved run configuration and exits without side effects.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .arch import (ArchitectureSpec, builtin_names, format_architecture,
                   get_architecture)
from .complexity import (count_params, format_report_csv, format_report_text,
                         report_as_dict)
from .data import SyntheticConfig, read_epochs, synth_generate, write_epochs
from .epochs import EpochSet
from .evaluate import (EvalReport, run_cross_subject, run_within_subject,
                       stratified_kfold)
from .signal import (bandpass_epochs, design_butterworth_bandpass, detrend_linear,
                     remove_dc, standardize_channels)
from .train import TrainConfig, loss_for_spec, train_model

# flags that a key=value config file may default (flag wins when given)
_CONFIG_CASTS = {
    "seed": int, "jobs": int, "epochs": int, "patience": int, "batch": int,
    "lr": float, "reps": int, "folds": int, "channels": int, "samples": int,
    "filters": str, "format": str, "subjects": int, "trials": int,
    "ratio": float, "rate": float, "amplitude": float, "noise": float,
    "low": float, "high": float, "order": int, "val_fraction": float,
}


@dataclass
class RunConfig:
    command: str
    seed: int
    jobs: int
    fmt: str
    out: str | None
    dry_run: bool
    options: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        rows = [f"command={self.command}", f"seed={self.seed}",
                f"jobs={self.jobs}", f"format={self.fmt}", f"out={self.out}"]
        rows += [f"{k}={v}" for k, v in sorted(self.options.items())]
        return rows


def _load_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_CASTS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_CASTS[key](val)
    return values


def _apply_config_defaults(args, parser_defaults: dict):
    if not getattr(args, "config", None):
        return
    values = _load_config_file(args.config)
    for key, value in values.items():
        dest = "fmt" if key == "format" else key
        if getattr(args, dest, None) is None and hasattr(args, dest):
            setattr(args, dest, value)


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("P300_SEED")
    if env is not None:
        return int(env)
    return 0


def _resolve_jobs(args) -> int:
    jobs = getattr(args, "jobs", None)
    if jobs is None:
        return os.cpu_count() or 1
    if jobs < 1:
        raise ValueError("--jobs must be >= 1")
    return jobs


def _check_inputs_exist(paths):
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"input path does not exist: {p}")


def _train_config(args, seed: int) -> TrainConfig:
    cfg = TrainConfig(seed=seed)
    overrides = {}
    if getattr(args, "epochs", None) is not None:
        overrides["max_epochs"] = args.epochs
    if getattr(args, "patience", None) is not None:
        overrides["patience"] = args.patience
    if getattr(args, "batch", None) is not None:
        overrides["batch_size"] = args.batch
    if getattr(args, "lr", None) is not None:
        overrides["learning_rate"] = args.lr
    return cfg.replace(**overrides) if overrides else cfg


def _parse_filter_list(raw: str | None) -> list[int] | None:
    if raw is None:
        return None
    try:
        values = [int(v) for v in str(raw).split(",") if v != ""]
    except ValueError as exc:
        raise ValueError(f"--filters expects integers, got {raw!r}") from exc
    if not values:
        raise ValueError("--filters is empty")
    return values


def _arch_for(args, filters: int | None = None,
              data: EpochSet | None = None) -> ArchitectureSpec:
    """Architecture for the flags, shaped like the data unless overridden."""
    channels = args.channels
    samples = args.samples
    if data is not None:
        channels = channels if channels is not None else data.n_channels
        samples = samples if samples is not None else data.n_samples
    channels = channels if channels is not None else 6
    samples = samples if samples is not None else 206
    return get_architecture(args.arch, channels, samples, filters)


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    seed = _resolve_seed(args)
    cfg = SyntheticConfig(
        n_subjects=args.subjects if args.subjects is not None else 3,
        trials_per_subject=args.trials if args.trials is not None else 600,
        target_ratio=args.ratio if args.ratio is not None else 1.0 / 6.0,
        channels=args.channels if args.channels is not None else 6,
        samples=args.samples if args.samples is not None else 206,
        sample_rate_hz=args.rate if args.rate is not None else 256.0,
        p300_amplitude=args.amplitude if args.amplitude is not None else 1.0,
        noise_amplitude=args.noise if args.noise is not None else 1.0,
        seed=seed,
    )
    run = RunConfig("synth", seed, 1, "text", args.out, args.dry_run,
                    {k: getattr(cfg, k) for k in ("n_subjects", "trials_per_subject",
                                                  "target_ratio", "channels", "samples",
                                                  "sample_rate_hz", "p300_amplitude",
                                                  "noise_amplitude")})
    if args.dry_run:
        print("\n".join(run.lines()))
        return 0
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, subject in enumerate(synth_generate(cfg)):
        path = out_dir / f"subject_{i:02d}.epo"
        write_epochs(path, subject)
        print(f"wrote {path} ({subject.n_trials} trials, "
              f"{int(subject.labels.sum())} targets)")
    return 0


def cmd_preprocess(args) -> int:
    seed = _resolve_seed(args)
    low = args.low if args.low is not None else 0.1
    high = args.high if args.high is not None else 12.0
    order = args.order if args.order is not None else 4
    run = RunConfig("preprocess", seed, 1, "text", args.out, args.dry_run,
                    {"low_hz": low, "high_hz": high, "order": order,
                     "inputs": ",".join(args.inputs)})
    if args.dry_run:
        print("\n".join(run.lines()))
        return 0
    _check_inputs_exist(args.inputs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in args.inputs:
        epochs = read_epochs(src)
        filt = design_butterworth_bandpass(order, low, high, epochs.sample_rate_hz)
        cleaned = detrend_linear(remove_dc(bandpass_epochs(filt, epochs)))
        dst = out_dir / Path(src).name
        write_epochs(dst, cleaned)
        print(f"wrote {dst}")
    return 0


def _split_train_val(epochs: EpochSet, fraction: float, seed: int):
    folds = max(2, int(round(1.0 / fraction)))
    rng = np.random.default_rng([seed, 5])
    parts = stratified_kfold(epochs.labels, folds, rng)
    val_idx = parts[0]
    train_idx = np.concatenate(parts[1:])
    return epochs.subset(train_idx), epochs.subset(val_idx)


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    filters = _parse_filter_list(args.filters)
    if filters is not None and len(filters) != 1:
        raise ValueError("train takes a single --filters value")
    spec = _arch_for(args, filters[0] if filters else None)
    if not spec.is_trainable():
        raise ValueError(
            f"architecture {spec.name!r} is analysis-only; trainable "
            f"architectures: sepconv1d, fcnn, oclnn")
    config = _train_config(args, seed).replace(loss=loss_for_spec(spec))
    run = RunConfig("train", seed, 1, "text", args.out, args.dry_run,
                    {"arch": spec.name, "train": args.train, "val": args.val,
                     "val_fraction": args.val_fraction or 0.2,
                     "max_epochs": config.max_epochs, "patience": config.patience,
                     "batch_size": config.batch_size,
                     "learning_rate": config.learning_rate, "loss": config.loss})
    if args.dry_run:
        print("\n".join(run.lines()))
        return 0
    _check_inputs_exist([args.train] + ([args.val] if args.val else []))
    train_epochs = read_epochs(args.train)
    spec = _arch_for(args, filters[0] if filters else None, data=train_epochs)
    if args.val:
        val_epochs = read_epochs(args.val)
    else:
        train_epochs, val_epochs = _split_train_val(
            train_epochs, args.val_fraction or 0.2, seed)
    train_std, [val_std] = standardize_channels(train_epochs, [val_epochs])
    model, history = train_model(spec, train_std, val_std, config)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, spec_text=format_architecture(spec), params=model.params,
             seed=seed)
    history_path = args.history or str(out.with_suffix("")) + "_history.csv"
    history.to_csv(history_path)
    print(f"wrote {out} ({model.params.size} parameters) and {history_path}; "
          f"best val loss {history.best_val_loss:.6f} at epoch "
          f"{history.best_epoch}/{history.epochs_ran}")
    return 0


def _write_eval_outputs(report: EvalReport, out_prefix: str, suffix: str = ""):
    base = Path(f"{out_prefix}{suffix}")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    json_path = base.with_suffix(".json")
    report.to_csv(csv_path)
    report.to_json(json_path)
    mean_auc, std_auc = report.aggregate()
    print(f"wrote {csv_path} and {json_path}: {len(report.records)} records, "
          f"AUC {mean_auc:.4f} +/- {std_auc:.4f}")
    return mean_auc, std_auc


def _run_eval(args, protocol: str) -> int:
    seed = _resolve_seed(args)
    jobs = _resolve_jobs(args)
    filters = _parse_filter_list(args.filters)
    reps = args.reps if args.reps is not None else 10
    folds = args.folds if args.folds is not None else 5
    datasets = args.data if isinstance(args.data, list) else [args.data]
    run = RunConfig(protocol, seed, jobs, args.fmt or "csv", args.out, args.dry_run,
                    {"arch": args.arch, "data": ",".join(datasets),
                     "filters": ",".join(str(f) for f in filters) if filters else "default",
                     "reps": reps, "folds": folds})
    if args.dry_run:
        print("\n".join(run.lines()))
        return 0
    _check_inputs_exist(datasets)

    subjects = [read_epochs(p) for p in datasets]
    for subject, path in zip(subjects, datasets):
        if subject.subject_id is None:
            subject.subject_id = Path(path).stem

    base_config = _train_config(args, seed)
    sweep = filters if filters is not None else [None]
    sweep_rows = []
    for f in sweep:
        spec = _arch_for(args, f, data=subjects[0])
        if not spec.is_trainable():
            raise ValueError(
                f"architecture {spec.name!r} is analysis-only; trainable "
                f"architectures: sepconv1d, fcnn, oclnn")
        config = base_config.replace(loss=loss_for_spec(spec))
        if protocol == "eval-within":
            if len(subjects) != 1:
                raise ValueError("eval-within takes exactly one --data file")
            report = run_within_subject(spec, subjects[0], config,
                                        repetitions=reps, k=folds, jobs=jobs)
        else:
            report = run_cross_subject(spec, subjects, config, jobs=jobs)
        suffix = f"_f{f}" if len(sweep) > 1 else ""
        mean_auc, std_auc = _write_eval_outputs(report, args.out, suffix)
        sweep_rows.append((f, mean_auc, std_auc))
    if len(sweep) > 1:
        sweep_path = Path(f"{args.out}_sweep.csv")
        lines = ["filters,mean_auc,std_auc"]
        lines += [f"{f},{m!r},{s!r}" for f, m, s in sweep_rows]
        sweep_path.write_text("\n".join(lines) + "\n")
        print(f"wrote {sweep_path}")
    return 0


def cmd_eval_within(args) -> int:
    return _run_eval(args, "eval-within")


def cmd_eval_cross(args) -> int:
    return _run_eval(args, "eval-cross")


def cmd_analyze(args) -> int:
    seed = _resolve_seed(args)
    fmt = args.fmt or "text"
    channels = args.channels if args.channels is not None else 6
    samples = args.samples if args.samples is not None else 206
    filters = _parse_filter_list(args.filters)
    if filters is not None and len(filters) != 1:
        raise ValueError("analyze takes a single --filters value")
    names = builtin_names() if args.arch == "all" else [args.arch]
    run = RunConfig("analyze", seed, 1, fmt, args.out, args.dry_run,
                    {"arch": args.arch, "channels": channels, "samples": samples,
                     "bn_running_stats": bool(args.bn_running_stats)})
    if args.dry_run:
        print("\n".join(run.lines()))
        return 0
    chunks = []
    payload = []
    for name in names:
        spec = get_architecture(name, channels, samples,
                                filters[0] if filters and name == "sepconv1d" else None)
        report = count_params(spec, count_bn_running_stats=bool(args.bn_running_stats))
        if fmt == "csv":
            chunks.append(format_report_csv(report))
        elif fmt == "json":
            payload.append(report_as_dict(report))
        else:
            chunks.append(format_report_text(report))
    text = json.dumps(payload if len(payload) != 1 else payload[0], indent=2) + "\n" \
        if fmt == "json" else "\n".join(chunks)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _read_records_csv(path):
    rows = []
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        if not line:
            continue
        rows.append(dict(zip(header, line.split(","))))
    return rows


def cmd_report(args) -> int:
    seed = _resolve_seed(args)
    fmt = args.fmt or "text"
    run = RunConfig("report", seed, 1, fmt, args.out, args.dry_run,
                    {"records": ",".join(args.records), "sweep": bool(args.sweep)})
    if args.dry_run:
        print("\n".join(run.lines()))
        return 0
    _check_inputs_exist(args.records)
    summaries = []
    for path in args.records:
        rows = _read_records_csv(path)
        aucs = np.asarray([float(r["auc"]) for r in rows])
        entry = {"file": path, "n_records": len(rows),
                 "mean_auc": float(aucs.mean()), "std_auc": float(aucs.std())}
        if args.sweep:
            stem = Path(path).stem
            if "_f" not in stem:
                raise ValueError(
                    f"--sweep expects files named <prefix>_f<filters>.csv, got {path}")
            entry["filters"] = int(stem.rsplit("_f", 1)[1])
        summaries.append(entry)
    if args.sweep:
        summaries.sort(key=lambda e: e["filters"])

    if fmt == "json":
        text = json.dumps(summaries, indent=2) + "\n"
    elif fmt == "csv":
        if args.sweep:
            lines = ["filters,mean_auc,std_auc"]
            lines += [f"{e['filters']},{e['mean_auc']!r},{e['std_auc']!r}"
                      for e in summaries]
        else:
            lines = ["file,n_records,mean_auc,std_auc"]
            lines += [f"{e['file']},{e['n_records']},{e['mean_auc']!r},{e['std_auc']!r}"
                      for e in summaries]
        text = "\n".join(lines) + "\n"
    else:
        lines = []
        for e in summaries:
            label = f"filters={e['filters']}" if args.sweep else e["file"]
            lines.append(f"{label}: n={e['n_records']} "
                         f"AUC {e['mean_auc']:.4f} +/- {e['std_auc']:.4f}")
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(sub, *, jobs=False, fmt=False):
    sub.add_argument("--seed", type=int, default=None,
                     help="random seed (default: $P300_SEED or 0)")
    sub.add_argument("--config", default=None,
                     help="key=value file supplying flag defaults")
    sub.add_argument("--dry-run", action="store_true",
                     help="print the resolved run configuration and exit")
    if jobs:
        sub.add_argument("--jobs", type=int, default=None,
                         help="worker processes for folds (default: CPU count)")
    if fmt:
        sub.add_argument("--format", dest="fmt",
                         choices=("text", "csv", "json"), default=None)


def build_parser():
    import argparse

    parser = argparse.ArgumentParser(
        prog="p300kit",
        description="Single-trial P300 detection toolkit: synthetic cohorts, "
                    "EEG preprocessing, lightweight CNN training, "
                    "cross-validation evaluation, and architecture analysis.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic oddball cohort")
    p.add_argument("--out", required=True, help="output directory for EPO1 files")
    p.add_argument("--subjects", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None, help="target trial ratio")
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None, help="target bump amplitude")
    p.add_argument("--noise", type=float, default=None, help="background noise amplitude")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("preprocess", help="bandpass + DC removal + detrend")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--low", type=float, default=None)
    p.add_argument("--high", type=float, default=None)
    p.add_argument("--order", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("train", help="train one model on an epoch file")
    p.add_argument("--arch", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--filters", default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--out", required=True, help="model file (.npz)")
    p.add_argument("--history", default=None, help="history CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    for name, helptext in (("eval-within", "repeated stratified k-fold on one subject"),
                           ("eval-cross", "leave-two-out across subjects")):
        p = subs.add_parser(name, help=helptext)
        p.add_argument("--arch", required=True)
        p.add_argument("--data", nargs="+", required=True)
        p.add_argument("--filters", default=None,
                       help="filter count, or comma list for a sweep")
        p.add_argument("--channels", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--folds", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--patience", type=int, default=None)
        p.add_argument("--batch", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--out", required=True, help="output prefix")
        _add_common(p, jobs=True, fmt=True)
        p.set_defaults(func=cmd_eval_within if name == "eval-within" else cmd_eval_cross)

    p = subs.add_parser("analyze", help="static shape/parameter/FLOP report")
    p.add_argument("--arch", required=True, help="architecture name or 'all'")
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--filters", default=None)
    p.add_argument("--bn-running-stats", action="store_true",
                   help="count BatchNorm running statistics as parameters")
    p.add_argument("--out", default=None)
    _add_common(p, fmt=True)
    p.set_defaults(func=cmd_analyze)

    p = subs.add_parser("report", help="aggregate evaluation record CSVs")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--sweep", action="store_true",
                   help="treat inputs as a filter sweep (<prefix>_f<N>.csv)")
    p.add_argument("--out", default=None)
    _add_common(p, fmt=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config_defaults(args, {})
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
