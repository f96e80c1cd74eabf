"""``lobkit`` command line: one subcommand per pipeline stage.

Exit status is 0 on success, 1 on a data error and 2 on a usage or
configuration error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import baseline, forecast_eval, lobster_io, microstructure, pipeline, synthgen
from .errors import DataError, InvalidConfig, LengthMismatch

log = logging.getLogger("lobkit")

DATA_ENV = "LOBKIT_DATA"
SUBCOMMANDS = ("synth", "clean", "stats", "label", "normalize", "sample",
               "train-baseline", "predict", "evaluate", "report")


# --- helpers ------------------------------------------------------------------

def _map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _data_root(args):
    root = args.data or os.environ.get(DATA_ENV)
    if not root:
        raise InvalidConfig(f"no --data given and ${DATA_ENV} is unset")
    if not os.path.isdir(root):
        raise DataError(f"data directory {root} does not exist")
    return root


def _days(root, stocks=None):
    files = lobster_io.discover_days(root, stocks)
    if not files:
        raise DataError(f"no day files found under {root}")
    return files


def _by_stock(files):
    out = defaultdict(list)
    for f in files:
        out[f.stock].append(f)
    return out


def _day_seed(seed, stock, date):
    return int(np.random.SeedSequence([seed, zlib.crc32(stock.encode()), date.toordinal()])
               .generate_state(1)[0])


# --- stages -------------------------------------------------------------------

def cmd_synth(args):
    cfg = synthgen.GeneratorConfig(
        seed=args.seed, regime=synthgen.Regime(args.regime), rate=args.rate,
        initial_mid=args.initial_mid, max_events=args.max_events,
        crossed_fraction=args.crossed_fraction, duplicate_fraction=args.duplicate_fraction,
        stock=args.stock, date=dt.date.fromisoformat(args.start),
    )
    cfg.validate()
    summary = {}
    for syn in synthgen.generate_days(cfg, args.days):
        synthgen.write_synthetic_day(syn, args.out)
        summary[syn.day.date.isoformat()] = {
            "rows": len(syn.day),
            "crossed_rows": syn.defects.crossed_rows,
            "duplicate_rows": syn.defects.duplicate_rows,
        }
    _dump_json({"stock": args.stock, "regime": cfg.regime.value, "seed": args.seed, "days": summary},
               os.path.join(args.out, f"{args.stock}_synth_log.json"))
    log.info("wrote %d synthetic days to %s", args.days, args.out)


def _clean_one(task):
    files, out_dir, fmt = task
    raw = files.load()
    day = lobster_io.clean_day(raw)
    lobster_io.save_day(day, out_dir, fmt)
    return files.stock, files.date.isoformat(), len(raw), len(day)


def cmd_clean(args):
    root = _data_root(args)
    files = [f for f in _days(root, args.stocks) if f.fmt == "csv"]
    rows = _map(_clean_one, [(f, args.out, args.out_format) for f in files], args.jobs)
    summary = [{"stock": s, "date": d, "raw_rows": r, "clean_rows": c} for s, d, r, c in rows]
    _dump_json(summary, os.path.join(args.out, "clean_summary.json"))


def _stats_one(task):
    files, horizons = task
    acc = microstructure.YearStats()
    acc.add_day(files.load(), horizons=horizons)
    return files.date.year, acc


def cmd_stats(args):
    from . import report

    root = _data_root(args)
    files = [f for f in _days(root, [args.stock])
             if not args.years or f.date.year in set(args.years)]
    if not files:
        raise DataError(f"no days for {args.stock} in years {args.years}")
    parts = _map(_stats_one, [(f, tuple(args.horizons)) for f in files], args.jobs)
    years = {}
    for year, acc in parts:
        years[year] = years[year].merge(acc) if year in years else acc
    summaries = {y: years[y].summary() for y in sorted(years)}
    cls = microstructure.classify_tick_size([summaries[y]["mean_spread"] for y in summaries])
    rep = microstructure.MicrostructureReport(args.stock, summaries, cls).to_json()
    os.makedirs(args.out, exist_ok=True)
    _dump_json(rep, os.path.join(args.out, f"{args.stock}_stats.json"))
    report.stats_tables([rep], args.out)
    if not args.no_figures:
        report.stats_figures([rep], args.out)


def _labels_path(out, stock, date, horizon):
    return os.path.join(out, f"{stock}_{date.isoformat()}_h{horizon}.labels.npy")


def cmd_label(args):
    root = _data_root(args)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for f in _days(root, args.stocks):
        day = f.load()
        for h in args.horizons:
            labels = pipeline.label_events(day, h)
            np.save(_labels_path(args.out, f.stock, f.date, h), labels)
            rows.append({"stock": f.stock, "date": f.date.isoformat(), "horizon": h,
                         "counts": dict(zip(("down", "stable", "up"),
                                            pipeline.class_distribution(labels)))})
    _dump_json(rows, os.path.join(args.out, "class_distribution.json"))


def _norm_path(out, stock, date):
    return os.path.join(out, f"{stock}_{date.isoformat()}.norm.npy")


def cmd_normalize(args):
    root = _data_root(args)
    os.makedirs(args.out, exist_ok=True)
    states = {}
    for stock, files in _by_stock(_days(root, args.stocks)).items():
        days = [f.load() for f in files]
        for nd in pipeline.iter_normalized(days):
            np.save(_norm_path(args.out, stock, nd.date), nd.features.astype(np.float32))
            states[f"{stock}_{nd.date.isoformat()}"] = {
                "history": [d.isoformat() for d in nd.state.source_dates],
                "mean": nd.state.mean.tolist(),
                "std": nd.state.std.tolist(),
                "eps": nd.state.eps,
            }
    _dump_json(states, os.path.join(args.out, "normalization_state.json"))


def _load_norm_days(norm_dir):
    out = []
    for name in sorted(os.listdir(norm_dir)):
        if name.endswith(".norm.npy"):
            stock, date = name[: -len(".norm.npy")].rsplit("_", 1)
            out.append((stock, dt.date.fromisoformat(date), os.path.join(norm_dir, name)))
    if not out:
        raise DataError(f"no normalized days under {norm_dir}")
    return out


def cmd_sample(args):
    days = _load_norm_days(args.normalized)
    if args.calendar:
        cal = args.calendar
    else:
        cal = pipeline.SplitCalendar.chronological([d for _, d, _ in days])
        log.info("no calendar configured; using chronological split %s", cal.to_mapping())
    os.makedirs(args.out, exist_ok=True)
    h = args.horizon
    streams = {"train": [], "validation": [], "test": []}
    for stock, date, path in days:
        split = cal.split_of(date)
        if split is None:
            continue
        feats = np.load(path)
        lab_path = _labels_path(args.labels, stock, date, h)
        if not os.path.exists(lab_path):
            raise DataError(f"missing labels {lab_path}; run `lobkit label --horizon {h}` first")
        labels = np.load(lab_path)
        if split == "train":
            idx = pipeline.balanced_sample(labels, args.cap, _day_seed(args.seed, stock, date))
        else:
            idx = pipeline.valid_indices(len(labels))
        streams[split].append(pipeline.make_records(feats, idx, labels, h, stock, date))
    summary = {"horizon": h, "cap": args.cap, "seed": args.seed, "calendar": cal.to_mapping()}
    for split, parts in streams.items():
        rec = np.concatenate(parts) if parts else np.zeros(0, dtype=pipeline.window_dtype())
        path = os.path.join(args.out, f"{split}_windows.{args.format}")
        pipeline.write_windows(path, rec, args.format, {"split": split, "horizon": h})
        summary[split] = int(len(rec))
        if split != "train":
            days_col = [f"{r['stock'].decode()}_{pipeline.int_date(r['day'])}" for r in rec]
            forecast_eval.write_targets(os.path.join(args.out, f"{split}_targets.csv"),
                                        np.arange(len(rec)), rec["label"], days_col)
    _dump_json(summary, os.path.join(args.out, "sample_summary.json"))


def cmd_train(args):
    rec = pipeline.read_windows(args.windows)
    if len(rec) == 0:
        raise DataError(f"{args.windows} holds no windows")
    model = baseline.train(rec["features"], rec["label"], epochs=args.epochs, lr=args.lr,
                           seed=args.seed, l2=args.l2)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    model.save(args.out)
    log.info("final training loss %.5f", model.meta["final_loss"])


def cmd_predict(args):
    model = baseline.LinearModel.load(args.model)
    rec = pipeline.read_windows(args.windows)
    probs = np.zeros((0, 3))
    if len(rec):
        probs = np.concatenate([
            baseline.predict(model, rec["features"][i:i + 4096]).reshape(-1, 3)
            for i in range(0, len(rec), 4096)
        ])
    forecast_eval.write_predictions(args.out, np.arange(len(rec)), probs)


def cmd_evaluate(args):
    from . import report

    t_idx, labels, days = forecast_eval.read_targets(args.targets)
    p_idx, probs = forecast_eval.read_predictions(args.predictions)
    if len(t_idx) != len(p_idx):
        raise LengthMismatch(len(t_idx), len(p_idx), "targets and predictions")
    if not np.array_equal(t_idx, p_idx):
        raise DataError("prediction indices do not match target indices")
    rep = forecast_eval.evaluate(labels, probs, args.thresholds, t_idx, days)
    rep.update({"stock": args.stock, "horizon": args.horizon, "tick_class": args.tick_class})
    os.makedirs(args.out, exist_ok=True)
    name = f"{args.stock or 'eval'}_h{args.horizon or 'x'}_eval"
    _dump_json(rep, os.path.join(args.out, name + ".json"))
    report.eval_tables([rep], args.out, prefix=name + "_")


def cmd_report(args):
    from . import report

    summary = report.build(args.inputs, args.out)
    if not summary["n_stats_reports"] and not summary["n_eval_reports"]:
        raise DataError(f"no stats or evaluation JSON found under {args.inputs}")


# --- argument parsing -----------------------------------------------------------

def _thresholds(text):
    try:
        return forecast_eval.parse_thresholds(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML run config; flags override it")
    common.add_argument("--out", help="output directory (file for train-baseline/predict)")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lobkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic LOBSTER days")
    s.add_argument("--regime", choices=[r.value for r in synthgen.Regime], default="large")
    s.add_argument("--days", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--stock", default="SYN")
    s.add_argument("--start", default="2019-06-03", help="first date (weekends skipped)")
    s.add_argument("--rate", type=float, default=50.0, help="events per second")
    s.add_argument("--initial-mid", type=float, default=50.0)
    s.add_argument("--max-events", type=int)
    s.add_argument("--crossed-fraction", type=float, default=0.0)
    s.add_argument("--duplicate-fraction", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("clean", parents=[common], help="clean raw LOBSTER days")
    s.add_argument("--data")
    s.add_argument("--stocks", nargs="+")
    s.add_argument("--out-format", choices=("csv", "bin"), default="csv")
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("stats", parents=[common], help="microstructure statistics for one stock")
    s.add_argument("--data")
    s.add_argument("--stock")
    s.add_argument("--years", type=int, nargs="*")
    s.add_argument("--horizons", type=int, nargs="+")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("label", parents=[common], help="label cleaned days")
    s.add_argument("--data")
    s.add_argument("--stocks", nargs="+")
    s.add_argument("--horizon", type=int, dest="horizons", action="append")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("normalize", parents=[common], help="rolling z-score of cleaned days")
    s.add_argument("--data")
    s.add_argument("--stocks", nargs="+")
    s.set_defaults(func=cmd_normalize)

    s = sub.add_parser("sample", parents=[common], help="build train/validation/test windows")
    s.add_argument("--normalized", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--horizon", type=int)
    s.add_argument("--cap", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--format", choices=("bin", "csv"), default="bin")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("train-baseline", parents=[common], help="fit the softmax baseline")
    s.add_argument("--windows", required=True)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--l2", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="write a prediction CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--windows", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common], help="score predictions against targets")
    s.add_argument("--targets", required=True)
    s.add_argument("--predictions", required=True)
    s.add_argument("--thresholds", type=_thresholds)
    s.add_argument("--stock")
    s.add_argument("--horizon", type=int)
    s.add_argument("--tick-class", choices=[c.value for c in microstructure.TickClass])
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="collate JSON outputs into tables and figures")
    s.add_argument("--inputs", required=True)
    s.set_defaults(func=cmd_report)
    return p


_DEFAULTS = {
    "jobs": None,
    "seed": 0,
    "cap": 5000,
    "horizon": 10,
    "horizons": [10, 50, 100],
    "epochs": 20,
    "lr": 0.05,
    "l2": 0.0,
    "thresholds": forecast_eval.DEFAULT_THRESHOLDS,
}


def _apply_config(args, parser):
    cfg = {}
    if args.config:
        try:
            cfg = pipeline.load_mapping(args.config)
        except (OSError, ValueError) as exc:
            raise InvalidConfig(f"cannot read config {args.config}: {exc}") from None
    aliases = {"data": "data_root", "out": "output_dir"}
    for key in list(vars(args)):
        if getattr(args, key) is not None or key in ("func", "command", "config"):
            continue
        for name in (key, aliases.get(key)):
            if name and name in cfg:
                setattr(args, key, cfg[name])
                break
        else:
            if key in _DEFAULTS:
                setattr(args, key, _DEFAULTS[key])
    if args.command == "label" and isinstance(args.horizons, int):
        args.horizons = [args.horizons]
    if isinstance(getattr(args, "thresholds", None), (list, tuple)):
        args.thresholds = ",".join(map(str, args.thresholds))
    if isinstance(getattr(args, "thresholds", None), str):
        try:
            args.thresholds = forecast_eval.parse_thresholds(args.thresholds)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
    if args.command == "sample":
        args.calendar = pipeline.SplitCalendar.from_mapping(cfg["calendar"]) if "calendar" in cfg else None
    if args.command == "stats" and not args.stock:
        parser.error("--stock is required (flag or config)")
    if args.jobs is None:
        args.jobs = os.cpu_count() or 1
    if args.out is None:
        if args.command != "report":
            parser.error("--out is required (flag or output_dir in config)")
        args.out = args.inputs


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="lobkit: %(message)s", stream=sys.stderr)
    try:
        _apply_config(args, parser)
        if args.command not in ("train-baseline", "predict"):
            os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except InvalidConfig as exc:
        print(f"lobkit: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"lobkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
