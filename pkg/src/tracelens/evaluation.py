"""Macro-F1 metrics per resolution, the alpha grid search, and the
seeded experiment sweep.

Metrics are computed per log at trace, event, and attribute resolution;
padded positions are excluded (no ground truth exists there). The macro
F1 is the unweighted mean of the per-class F1 scores for the normal and
anomaly classes. Sweep aggregation is per-log-first: metrics are
computed per log, then averaged over the logs of a group, with the
spread reported as the standard deviation over logs.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace, asdict
from pathlib import Path

import numpy as np

from . import anomalies, detectors, encoding, neuralnet, procgen
from .eventlog import ANOMALY, LabelSet
from .seeds import derive_seed

RESULT_SCHEMA_VERSION = 1

RESULT_COLUMNS = (
    "model", "noise", "seed", "detector", "resolution",
    "f1_macro", "f1_normal", "f1_anomaly",
    "precision_normal", "precision_anomaly",
    "recall_normal", "recall_anomaly",
    "support_normal", "support_anomaly",
)

DEFAULT_ALPHA_GRID = tuple(round(1.0 + 0.25 * i, 2) for i in range(13))  # 1.0 .. 4.0


@dataclass(frozen=True)
class MetricRow:
    resolution: str
    precision_normal: float
    recall_normal: float
    f1_normal: float
    precision_anomaly: float
    recall_anomaly: float
    f1_anomaly: float
    support_normal: int
    support_anomaly: int

    @property
    def macro_f1(self) -> float:
        return (self.f1_normal + self.f1_anomaly) / 2.0


def _prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return precision, recall, f1


def _metric_row(resolution, y_true, y_pred) -> MetricRow:
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    tp_a = int(np.sum(y_true & y_pred))
    fp_a = int(np.sum(~y_true & y_pred))
    fn_a = int(np.sum(y_true & ~y_pred))
    tn_a = int(np.sum(~y_true & ~y_pred))
    p_a, r_a, f_a = _prf(tp_a, fp_a, fn_a)
    # the normal class swaps the roles
    p_n, r_n, f_n = _prf(tn_a, fn_a, fp_a)
    return MetricRow(
        resolution=resolution,
        precision_normal=p_n, recall_normal=r_n, f1_normal=f_n,
        precision_anomaly=p_a, recall_anomaly=r_a, f1_anomaly=f_a,
        support_normal=int(np.sum(~y_true)), support_anomaly=int(np.sum(y_true)),
    )


def score_to_metrics(report: detectors.ScoreReport, labels: LabelSet,
                     alpha: float | None = None) -> list[MetricRow]:
    """Confusion metrics per resolution for one scored log."""
    missing = [c for c in report.case_ids if c not in labels.by_case]
    if missing:
        raise ValueError(f"labels missing for case ids {missing[:5]}")

    trace_true, event_true, attr_true = [], [], []
    event_pred, attr_pred = [], []
    ev = report.event_verdicts(alpha)
    av = report.attr_verdicts(alpha)
    n_fields = len(report.field_names)
    for r, case_id in enumerate(report.case_ids):
        lab = labels.by_case[case_id]
        m = int(report.n_events[r])
        if len(lab.events) != m:
            raise ValueError(
                f"case {case_id!r}: report has {m} events, labels have "
                f"{len(lab.events)}")
        if any(len(row) != n_fields for row in lab.attrs):
            raise ValueError(f"case {case_id!r}: attribute label width mismatch")
        trace_true.append(lab.is_anomalous())
        event_true.extend(v == ANOMALY for v in lab.events)
        event_pred.extend(bool(x) for x in ev[r, :m])
        for p in range(m):
            attr_true.extend(v == ANOMALY for v in lab.attrs[p])
            attr_pred.extend(bool(x) for x in av[r, p, :])
    return [
        _metric_row("trace", trace_true, report.trace_verdicts(alpha)),
        _metric_row("event", event_true, event_pred),
        _metric_row("attribute", attr_true, attr_pred),
    ]


def grid_search_alpha(runs: list[tuple[detectors.ScoreReport, LabelSet]],
                      candidates=DEFAULT_ALPHA_GRID) -> float:
    """Single global alpha maximizing the mean trace-level macro F1
    across all provided (report, labels) pairs."""
    if not runs:
        raise ValueError("grid search needs at least one scored log")
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate list")
    best_alpha, best_score = None, -1.0
    for alpha in candidates:
        scores = []
        for report, labels in runs:
            y_true = [labels.by_case[c].is_anomalous() for c in report.case_ids]
            row = _metric_row("trace", y_true, report.trace_verdicts(alpha))
            scores.append(row.macro_f1)
        mean = float(np.mean(scores))
        if mean > best_score:
            best_alpha, best_score = alpha, mean
    return best_alpha


# ---------------------------------------------------------------------------
# experiment sweep


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid of (model profile x noise level x seed) cells.

    `noise_levels` applies to the training log; test logs are injected
    at the fixed `test_noise` so the test set keeps both classes even
    when training noise reaches 1.0.
    """

    models: tuple[str, ...] = ("small",)
    noise_levels: tuple[float, ...] = (0.1, 0.3, 0.5)
    seeds: tuple[int, ...] = (1,)
    detectors: tuple[str, ...] = ("dae", "tstide", "tstide+", "random")
    n_train: int = 2000
    n_test: int = 500
    test_noise: float = 0.3
    alpha: float = 2.0
    window_k: int = 4
    anomaly_types: tuple[str, ...] = anomalies.ANOMALY_TYPES
    train_config: neuralnet.TrainConfig = neuralnet.TrainConfig()
    out_dir: str = "sweep"

    def __post_init__(self):
        if not (self.models and self.noise_levels and self.seeds and self.detectors):
            raise ValueError("experiment spec must contain at least one cell")

    def cells(self):
        for model in self.models:
            for noise in self.noise_levels:
                for seed in self.seeds:
                    yield model, noise, seed


def _resolve_model(name: str, seed: int):
    if name == "p2p":
        return procgen.builtin_p2p()
    cfg = procgen.PROFILES.get(name)
    if cfg is None:
        raise ValueError(f"unknown model profile {name!r}")
    cfg = replace(cfg, seed=derive_seed(seed, "model", name))
    model = procgen.generate_model(cfg)
    return procgen.assign_users(model, derive_seed(seed, "users", name),
                                n_users=cfg.n_users,
                                max_users_per_activity=cfg.max_users_per_activity)


def run_cell(spec: ExperimentSpec, model_name: str, noise: float, seed: int):
    """Generate, inject, train, and score one sweep cell.

    Returns (rows, timing) where rows are flat result dicts, one per
    (detector, resolution).
    """
    model = _resolve_model(model_name, seed)
    probs = procgen.draw_variant_probs(
        len(model.variants), np.random.default_rng(derive_seed(seed, "probs", model_name)))
    train_clean = procgen.sample_log(model, spec.n_train,
                                     derive_seed(seed, "train", model_name), probs)
    test_clean = procgen.sample_log(model, spec.n_test,
                                    derive_seed(seed, "test", model_name), probs)
    capacity = max(train_clean.max_trace_len, test_clean.max_trace_len)
    train_log, train_labels, _ = anomalies.inject(
        train_clean, model,
        anomalies.InjectConfig(noise, spec.anomaly_types,
                               derive_seed(seed, "inject-train", model_name)),
        capacity=capacity)
    test_log, test_labels, _ = anomalies.inject(
        test_clean, model,
        anomalies.InjectConfig(spec.test_noise, spec.anomaly_types,
                               derive_seed(seed, "inject-test", model_name)),
        capacity=capacity)

    rows = []
    timing = {}
    reports = score_cell_detectors(
        spec, model, train_log, test_log, seed, model_name, timing)
    for det_name, report in reports.items():
        for row in score_to_metrics(report, test_labels):
            rows.append(_result_row(model_name, noise, seed, det_name, row))
    return rows, timing


def score_cell_detectors(spec, model, train_log, test_log, seed, model_name, timing):
    reports = {}
    for det in spec.detectors:
        started = time.perf_counter()
        if det == "dae":
            layout = encoding.build_layout(
                train_log, max_len=model.max_variant_len(),
                activity_values=model.activities,
                attribute_values={"user": model.users})
            batch = encoding.encode(train_log, layout)
            cfg = replace(spec.train_config, seed=derive_seed(seed, "nn", model_name))
            trained = neuralnet.train(batch, cfg)
            reports[det] = detectors.dae_score(trained, test_log, alpha=spec.alpha)
        elif det == "tstide":
            wm = detectors.tstide_fit(train_log, k=spec.window_k, include_attributes=False)
            reports[det] = detectors.tstide_score(wm, test_log, alpha=spec.alpha)
        elif det == "tstide+":
            wm = detectors.tstide_fit(train_log, k=spec.window_k, include_attributes=True)
            reports[det] = detectors.tstide_score(wm, test_log, alpha=spec.alpha)
        elif det == "random":
            reports[det] = detectors.random_baseline(
                test_log, seed=derive_seed(seed, "random", model_name))
        else:
            raise ValueError(f"unknown detector {det!r}")
        timing[det] = time.perf_counter() - started
    return reports


def _result_row(model_name, noise, seed, det_name, row: MetricRow) -> dict:
    return {
        "model": model_name,
        "noise": f"{noise:.2f}",
        "seed": seed,
        "detector": det_name,
        "resolution": row.resolution,
        "f1_macro": f"{row.macro_f1:.6f}",
        "f1_normal": f"{row.f1_normal:.6f}",
        "f1_anomaly": f"{row.f1_anomaly:.6f}",
        "precision_normal": f"{row.precision_normal:.6f}",
        "precision_anomaly": f"{row.precision_anomaly:.6f}",
        "recall_normal": f"{row.recall_normal:.6f}",
        "recall_anomaly": f"{row.recall_anomaly:.6f}",
        "support_normal": row.support_normal,
        "support_anomaly": row.support_anomaly,
    }


def run_sweep(spec: ExperimentSpec) -> Path:
    """Run every cell, resumably, and write results/summary CSVs.

    Finished cells leave a marker CSV under cells/ and are skipped on
    re-runs. Wall-clock timings go to a separate timings.csv so the
    result files stay byte-reproducible. Per-cell failures are recorded
    in failures.csv and the sweep continues.
    """
    out = Path(spec.out_dir)
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    timings = []
    for model_name, noise, seed in spec.cells():
        marker = cells_dir / f"{model_name}-{noise:.2f}-{seed}.csv"
        if marker.exists():
            continue
        try:
            rows, timing = run_cell(spec, model_name, noise, seed)
        except Exception as exc:  # cell isolation: record and continue
            failures.append({"model": model_name, "noise": f"{noise:.2f}",
                             "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
            continue
        _write_csv(marker, RESULT_COLUMNS, [tuple(r[c] for c in RESULT_COLUMNS) for r in rows])
        for det, seconds in timing.items():
            timings.append((model_name, f"{noise:.2f}", seed, det, f"{seconds:.2f}"))

    all_rows = []
    for marker in sorted(cells_dir.glob("*.csv")):
        with open(marker, newline="", encoding="utf-8") as fh:
            all_rows.extend(tuple(row) for row in list(csv.reader(fh))[1:])
    all_rows.sort()
    _write_csv(out / "results.csv", RESULT_COLUMNS, all_rows)
    _write_summary(out / "summary.csv", all_rows)
    if timings:
        _append_csv(out / "timings.csv",
                    ("model", "noise", "seed", "detector", "train_seconds"), timings)
    if failures:
        _write_csv(out / "failures.csv", ("model", "noise", "seed", "error"),
                   [(f["model"], f["noise"], f["seed"], f["error"]) for f in failures])
    with open(out / "spec.json", "w", encoding="utf-8") as fh:
        obj = asdict(spec)
        obj["schema_version"] = RESULT_SCHEMA_VERSION
        json.dump(obj, fh, indent=2, default=str)
        fh.write("\n")
    return out / "results.csv"


def _write_summary(path, rows):
    """Mean and std of macro F1 across seeds per (model, noise, detector,
    resolution) group; std over the logs in the group."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        model, noise, _seed, det, res = row[:5]
        groups.setdefault((model, noise, det, res), []).append(float(row[5]))
    out_rows = []
    for key in sorted(groups):
        vals = np.array(groups[key])
        out_rows.append(key + (f"{vals.mean():.6f}", f"{vals.std():.6f}", len(vals)))
    _write_csv(path, ("model", "noise", "detector", "resolution",
                      "f1_macro_mean", "f1_macro_std_over_logs", "n_logs"), out_rows)


def summary_markdown(summary_csv_path, resolution: str = "trace") -> str:
    """Render a summary CSV as a Markdown table (detectors x noise),
    one cell per group as "mean +- std"."""
    with open(summary_csv_path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r["resolution"] == resolution]
    noises = sorted({r["noise"] for r in rows})
    dets = sorted({r["detector"] for r in rows})
    cell = {(r["detector"], r["noise"]):
            f"{float(r['f1_macro_mean']):.2f} ± {float(r['f1_macro_std_over_logs']):.2f}"
            for r in rows}
    lines = ["| detector | " + " | ".join(noises) + " |",
             "|---" * (len(noises) + 1) + "|"]
    for det in dets:
        lines.append("| " + det + " | "
                     + " | ".join(cell.get((det, n), "-") for n in noises) + " |")
    return "\n".join(lines) + "\n"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _append_csv(path, header, rows):
    new = not Path(path).exists()
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(header)
        writer.writerows(rows)
