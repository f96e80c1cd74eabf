"""CSV tables and figures collated from ``stats`` and ``evaluate`` JSON outputs."""

from __future__ import annotations

import csv
import glob
import json
import os
from collections import defaultdict

import numpy as np

from . import plotting
from .forecast_eval import average_confusion


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def stats_tables(reports, out_dir):
    """One CSV per statistic, each row keyed by (stock, year)."""
    os.makedirs(out_dir, exist_ok=True)
    spread, vol, depth, horizon, ir, table6 = [], [], [], [], [], []
    for rep in reports:
        s = rep["stock"]
        for year, e in rep["years"].items():
            table6.append((s, year, f"{e['mean_price']:.4f}", f"{e['mean_spread']:.6f}", rep["tick_class"]))
            ir.append((s, year, e["n_updates"], e["n_price_changes"], f"{e['ir']:.4f}"))
            spread += [(s, year, k, v) for k, v in e["spread_pdf"].items()]
            vol += [(s, year, v, p) for v, p in e["best_volume_ccdf"]]
            for side in ("ask", "bid"):
                depth += [(s, year, side, k, v) for k, v in e[f"depth_pdf_{side}"].items()]
            horizon += [(s, year, h, *p) for h, p in e["horizon_time_probs"].items()]
    return [
        _write_csv(os.path.join(out_dir, "spread_pdf.csv"), ("stock", "year", "spread_ticks", "pdf"), spread),
        _write_csv(os.path.join(out_dir, "volume_ccdf.csv"), ("stock", "year", "signed_volume", "ccdf"), vol),
        _write_csv(os.path.join(out_dir, "depth_pdf.csv"), ("stock", "year", "side", "xi_ticks", "pdf"), depth),
        _write_csv(os.path.join(out_dir, "horizon_probs.csv"),
                   ("stock", "year", "horizon", "p_lt_1s", "p_1s_10s", "p_ge_10s"), horizon),
        _write_csv(os.path.join(out_dir, "ir.csv"),
                   ("stock", "year", "lob_updates", "price_changes", "ir"), ir),
        _write_csv(os.path.join(out_dir, "tick_size.csv"),
                   ("stock", "year", "mean_price", "mean_spread", "tick_class"), table6),
    ]


def stats_figures(reports, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return [
        plotting.spread_pdf(reports, os.path.join(out_dir, "spread_pdf.png")),
        plotting.volume_ccdf(reports, os.path.join(out_dir, "volume_ccdf.png")),
        plotting.depth_pdf(reports, os.path.join(out_dir, "depth_pdf.png")),
    ]


def _fmt(v, spec=".4f"):
    return "" if v is None else format(v, spec)


def eval_tables(reports, out_dir, prefix=""):
    os.makedirs(out_dir, exist_ok=True)
    sweep, table7 = [], []
    for rep in reports:
        key = (rep.get("stock", ""), rep.get("horizon", ""))
        for r in rep["thresholds"]:
            sig = r.get("significance") or {}
            sweep.append((*key, r["threshold"], _fmt(r["mcc"]), _fmt(r["f1_macro"]),
                          _fmt(r["accuracy"]), f"{r['remaining_fraction']:.6f}",
                          r["PT"], r["TT"], r["CT"], f"{r['p_T']:.6f}", sig.get("mark", "")))
            table7.append((*key, r["threshold"], r["PT"], f"{r['p_T']:.4f}",
                           _fmt(r["mcc"]), _fmt(r["f1_macro"])))
    return [
        _write_csv(os.path.join(out_dir, f"{prefix}sweep.csv"),
                   ("stock", "horizon", "threshold", "mcc", "f1_macro", "accuracy",
                    "remaining_fraction", "PT", "TT", "CT", "p_T", "significance"), sweep),
        _write_csv(os.path.join(out_dir, f"{prefix}transactions.csv"),
                   ("stock", "horizon", "threshold", "PT", "p_T", "mcc", "f1_macro"), table7),
    ]


def eval_figures(reports, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        plotting.metric_sweep(reports, "mcc", os.path.join(out_dir, "mcc_sweep.png"), "MCC"),
        plotting.metric_sweep(reports, "f1_macro", os.path.join(out_dir, "f1_sweep.png"), "F1 (macro)"),
        plotting.metric_sweep(reports, "accuracy", os.path.join(out_dir, "accuracy_sweep.png"), "accuracy"),
        plotting.metric_sweep(reports, "p_T", os.path.join(out_dir, "pt_sweep.png"), "p_T"),
    ]
    groups = defaultdict(list)
    for rep in reports:
        groups[(rep.get("tick_class") or "all", rep.get("horizon", ""))].append(
            np.array(rep["thresholds"][0]["confusion_matrix"]))
    for (cls, h), mats in sorted(groups.items(), key=lambda kv: str(kv[0])):
        avg = average_confusion(mats)
        paths.append(plotting.confusion_heatmap(
            avg, os.path.join(out_dir, f"confusion_{cls}_H{h}.png"), f"{cls} H{h}"))
    return paths


def collect(inputs):
    """Split every JSON under ``inputs`` into stats reports and evaluation reports."""
    stats, evals = [], []
    for path in sorted(glob.glob(os.path.join(inputs, "**", "*.json"), recursive=True)):
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, ValueError):
            continue
        if not isinstance(obj, dict):
            continue
        if "years" in obj and "tick_class" in obj:
            stats.append(obj)
        elif "thresholds" in obj and "n_records" in obj:
            evals.append(obj)
    return stats, evals


def build(inputs, out_dir):
    stats, evals = collect(inputs)
    written = []
    if stats:
        written += stats_tables(stats, out_dir) + stats_figures(stats, out_dir)
    if evals:
        written += eval_tables(evals, out_dir) + eval_figures(evals, out_dir)
    summary = {"n_stats_reports": len(stats), "n_eval_reports": len(evals),
               "files": [os.path.basename(p) for p in written]}
    with open(os.path.join(out_dir, "report_index.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
