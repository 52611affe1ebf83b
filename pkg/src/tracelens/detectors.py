"""Anomaly scoring at trace, event, and attribute resolution.

All detectors emit a ScoreReport with raw scores per resolution and a
Threshold. A score is anomalous when it strictly exceeds tau, and tau is
the scaled mean of the detector's training-set scores:

    tau = alpha * mean(training scores)

The autoencoder detector scores by reconstruction error (trace = MSE
over the whole padded row, event = MSE over the event's columns,
attribute = MSE over the slot's columns). The sliding-window detectors
score windows by negative log relative frequency in the training log;
a trace scores as its worst window, and each window passes its score to
its last event and that event's slots.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .encoding import decompose_errors, encode
from .eventlog import EventLog, Trace
from .neuralnet import TrainedNetwork

RESOLUTIONS = ("trace", "event", "attribute")

# traces shorter than the window length contribute one truncated window
# terminated by this marker
END_MARKER = "⟨end⟩"

DEFAULT_ALPHA = 2.0
WINDOW_SMOOTHING = 0.5


@dataclass(frozen=True)
class Threshold:
    """Per-resolution thresholds tau = alpha * mean training error."""

    alpha: float
    means: dict[str, float]

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    def tau(self, resolution: str) -> float:
        return self.alpha * self.means[resolution]

    @property
    def taus(self) -> dict[str, float]:
        return {r: self.tau(r) for r in self.means}


def fit_threshold(errors_by_resolution: dict[str, np.ndarray],
                  alpha: float) -> Threshold:
    """Eq-style threshold fit: tau = alpha * mean(errors), per resolution."""
    means = {}
    for resolution, errors in errors_by_resolution.items():
        arr = np.asarray(errors, dtype=np.float64)
        if arr.size == 0:
            raise ValueError(f"no errors supplied for resolution {resolution!r}")
        means[resolution] = float(arr.mean())
    return Threshold(alpha=alpha, means=means)


@dataclass
class ScoreReport:
    """Scores, verdicts, and the heatmap matrix for one scored log.

    Event and attribute score arrays are padded with NaN beyond each
    trace's real length; padded slots carry no verdict.
    """

    detector: str
    threshold: Threshold
    case_ids: tuple[str, ...]
    field_names: tuple[str, ...]
    n_events: np.ndarray            # (n,)
    trace_scores: np.ndarray        # (n,)
    event_scores: np.ndarray        # (n, L), NaN padded
    attr_scores: np.ndarray         # (n, L, F), NaN padded

    @property
    def max_len(self) -> int:
        return self.event_scores.shape[1]

    def event_mask(self) -> np.ndarray:
        return np.arange(self.max_len)[None, :] < self.n_events[:, None]

    def trace_verdicts(self, alpha: float | None = None) -> np.ndarray:
        return self.trace_scores > self._tau("trace", alpha)

    def event_verdicts(self, alpha: float | None = None) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(np.isnan(self.event_scores), False,
                            self.event_scores > self._tau("event", alpha))

    def attr_verdicts(self, alpha: float | None = None) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(np.isnan(self.attr_scores), False,
                            self.attr_scores > self._tau("attribute", alpha))

    def _tau(self, resolution, alpha):
        if alpha is None:
            return self.threshold.tau(resolution)
        return alpha * self.threshold.means[resolution]

    def heatmap_matrix(self) -> np.ndarray:
        """(n, max_len * n_fields) slot scores; padded slots as 0."""
        n = len(self.case_ids)
        return np.nan_to_num(self.attr_scores, nan=0.0).reshape(n, -1)


# ---------------------------------------------------------------------------
# denoising autoencoder detector


def dae_score(model: TrainedNetwork, log: EventLog,
              alpha: float = DEFAULT_ALPHA) -> ScoreReport:
    """Score a log by reconstruction error under a trained autoencoder."""
    batch = encode(log, model.layout)
    recon = model.reconstruct(batch.matrix)
    slot_mse, event_mse, trace_mse = decompose_errors(batch.matrix, recon, model.layout)
    mask = np.arange(model.layout.max_len)[None, :] < batch.n_events[:, None]
    event_scores = np.where(mask, event_mse, np.nan)
    attr_scores = np.where(mask[:, :, None], slot_mse, np.nan)
    return ScoreReport(
        detector="dae",
        threshold=Threshold(alpha=alpha, means=dict(model.mean_errors)),
        case_ids=batch.case_ids,
        field_names=model.layout.field_names,
        n_events=batch.n_events,
        trace_scores=trace_mse,
        event_scores=event_scores,
        attr_scores=attr_scores,
    )


# ---------------------------------------------------------------------------
# t-STIDE family


@dataclass
class WindowModel:
    """Sliding-window frequency table fitted on a training log.

    `include_attributes` selects between the activity-only variant and
    the variant whose window elements are (activity, *attributes)
    tuples. `score_means` holds the training-set mean scores per
    resolution for Eq-style thresholding.
    """

    k: int
    include_attributes: bool
    counts: dict[tuple, int]
    total: int
    field_names: tuple[str, ...]
    score_means: dict[str, float]

    def window_score(self, window: tuple) -> float:
        count = self.counts.get(window, 0)
        return -math.log(max(count, WINDOW_SMOOTHING) / self.total)


def _event_key(event, include_attributes, attr_names):
    if not include_attributes:
        return event.activity
    return (event.activity,) + tuple(event.attrs[a] for a in attr_names)


def trace_windows(trace: Trace, k: int, include_attributes: bool,
                  attr_names) -> list[tuple]:
    """All sliding windows of a trace; shorter traces yield one
    truncated window terminated by END_MARKER."""
    keys = [_event_key(e, include_attributes, attr_names) for e in trace.events]
    if len(keys) < k:
        return [tuple(keys) + (END_MARKER,)]
    return [tuple(keys[i : i + k]) for i in range(len(keys) - k + 1)]


def tstide_fit(log: EventLog, k: int = 4,
               include_attributes: bool = False) -> WindowModel:
    """Count all windows of the training log, then record the training
    score means used for thresholding."""
    if k < 2:
        raise ValueError("window length k must be at least 2")
    counts: dict[tuple, int] = {}
    total = 0
    for trace in log.traces:
        for w in trace_windows(trace, k, include_attributes, log.attr_names):
            counts[w] = counts.get(w, 0) + 1
            total += 1
    wm = WindowModel(k=k, include_attributes=include_attributes, counts=counts,
                     total=total, field_names=("activity",) + log.attr_names,
                     score_means={r: 0.0 for r in RESOLUTIONS})
    trace_s, event_s, attr_s = _tstide_raw_scores(wm, log)
    mask = ~np.isnan(event_s)
    wm.score_means = {
        "trace": float(trace_s.mean()),
        "event": float(event_s[mask].mean()),
        "attribute": float(attr_s[~np.isnan(attr_s)].mean()),
    }
    return wm


def _tstide_raw_scores(wm: WindowModel, log: EventLog):
    n = len(log.traces)
    max_len = log.max_trace_len
    n_fields = len(wm.field_names)
    trace_scores = np.zeros(n)
    event_scores = np.full((n, max_len), np.nan)
    attr_scores = np.full((n, max_len, n_fields), np.nan)
    for r, trace in enumerate(log.traces):
        m = len(trace)
        event_scores[r, :m] = 0.0
        attr_scores[r, :m, :] = 0.0
        best = 0.0
        windows = trace_windows(trace, wm.k, wm.include_attributes, log.attr_names)
        for i, w in enumerate(windows):
            s = wm.window_score(w)
            best = max(best, s)
            # a window informs its last event (and that event's slots);
            # conflicts resolve by max. Window scores are never negative,
            # so events covered by no window keep score 0.
            last = m - 1 if m < wm.k else i + wm.k - 1
            event_scores[r, last] = max(event_scores[r, last], s)
            attr_scores[r, last, :] = np.maximum(attr_scores[r, last, :], s)
        trace_scores[r] = best
    return trace_scores, event_scores, attr_scores


def tstide_score(wm: WindowModel, log: EventLog,
                 alpha: float = DEFAULT_ALPHA) -> ScoreReport:
    """Score a log against a fitted window model."""
    trace_s, event_s, attr_s = _tstide_raw_scores(wm, log)
    return ScoreReport(
        detector="tstide+" if wm.include_attributes else "tstide",
        threshold=Threshold(alpha=alpha, means=dict(wm.score_means)),
        case_ids=log.case_ids(),
        field_names=wm.field_names,
        n_events=np.array([len(t) for t in log.traces]),
        trace_scores=trace_s,
        event_scores=event_s,
        attr_scores=attr_s,
    )


# ---------------------------------------------------------------------------
# random baseline


def random_baseline(log: EventLog, anomaly_rate_guess: float = 0.5,
                    seed: int = 0) -> ScoreReport:
    """Uniformly random verdicts: scores ~ U[0,1) against tau = 1 - p."""
    if not (0.0 <= anomaly_rate_guess <= 1.0):
        raise ValueError("anomaly_rate_guess must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n = len(log.traces)
    max_len = log.max_trace_len
    n_fields = 1 + len(log.attr_names)
    n_events = np.array([len(t) for t in log.traces])
    mask = np.arange(max_len)[None, :] < n_events[:, None]
    trace_scores = rng.random(n)
    event_scores = np.where(mask, rng.random((n, max_len)), np.nan)
    attr_scores = np.where(mask[:, :, None], rng.random((n, max_len, n_fields)), np.nan)
    tau = 1.0 - anomaly_rate_guess
    return ScoreReport(
        detector="random",
        threshold=Threshold(alpha=1.0, means={r: tau for r in RESOLUTIONS}),
        case_ids=log.case_ids(),
        field_names=("activity",) + log.attr_names,
        n_events=n_events,
        trace_scores=trace_scores,
        event_scores=event_scores,
        attr_scores=attr_scores,
    )


# ---------------------------------------------------------------------------
# report serialization


def write_report(report: ScoreReport, path, meta_path=None) -> None:
    """One JSON object per trace; detector metadata in a sidecar."""
    tv = report.trace_verdicts()
    ev = report.event_verdicts()
    av = report.attr_verdicts()
    verdict = lambda flag: "anomaly" if flag else "normal"
    with open(path, "w", encoding="utf-8") as fh:
        for r, case_id in enumerate(report.case_ids):
            m = int(report.n_events[r])
            obj = {
                "case_id": case_id,
                "trace": {"score": float(report.trace_scores[r]),
                          "verdict": verdict(bool(tv[r]))},
                "events": [
                    {"score": float(report.event_scores[r, p]),
                     "verdict": verdict(bool(ev[r, p]))}
                    for p in range(m)
                ],
                "attrs": [
                    [{"score": float(report.attr_scores[r, p, f]),
                      "verdict": verdict(bool(av[r, p, f]))}
                     for f in range(len(report.field_names))]
                    for p in range(m)
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
    if meta_path is not None:
        meta = {
            "detector": report.detector,
            "alpha": report.threshold.alpha,
            "means": report.threshold.means,
            "taus": report.threshold.taus,
            "field_names": list(report.field_names),
            "n_traces": len(report.case_ids),
        }
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")


def read_report_verdicts(path):
    """Load per-trace verdict rows back from a report JSONL file."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_heatmap_csv(report: ScoreReport, path) -> None:
    """Slot-score matrix: one row per trace, one column per slot."""
    matrix = report.heatmap_matrix()
    headers = ["case_id"] + [
        f"event{p + 1:02d}:{field}"
        for p in range(report.max_len)
        for field in report.field_names
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for r, case_id in enumerate(report.case_ids):
            writer.writerow([case_id] + [f"{x:.10g}" for x in matrix[r]])


def write_heatmap_svg(report: ScoreReport, log: EventLog, path,
                      max_traces: int = 12, max_events: int = 6,
                      labels=None) -> None:
    """Render a slot grid like the reference error heatmap: one row per
    trace, one cell per (event, field), darkness proportional to score,
    cell text showing the logged value."""
    by_case = {t.case_id: t for t in log.traces}
    n = min(max_traces, len(report.case_ids))
    n_ev = min(max_events, report.max_len)
    fields = report.field_names
    cell_w, cell_h, left, top = 110, 22, 170, 34
    width = left + n_ev * cell_w + 10
    height = top + n * len(fields) * cell_h + 10
    scores = np.nan_to_num(report.attr_scores, nan=0.0)
    vmax = float(scores[:n, :n_ev, :].max()) or 1.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="10">'
    ]
    for e in range(n_ev):
        parts.append(
            f'<text x="{left + e * cell_w + cell_w / 2}" y="{top - 18}" '
            f'text-anchor="middle">event {e + 1}</text>')
    y = top
    for r in range(n):
        case_id = report.case_ids[r]
        trace = by_case[case_id]
        tag = labels.get(case_id, "") if labels else ""
        parts.append(
            f'<text x="4" y="{y + cell_h * len(fields) / 2 + 4}">'
            f'{_svg_escape(case_id)} {_svg_escape(tag)}</text>')
        for f, field in enumerate(fields):
            for e in range(n_ev):
                x = left + e * cell_w
                s = float(scores[r, e, f])
                shade = 255 - int(round(215 * min(s / vmax, 1.0)))
                if e < len(trace.events):
                    ev = trace.events[e]
                    value = ev.activity if field == "activity" else ev.attrs.get(field, "")
                else:
                    value = ""
                parts.append(
                    f'<rect x="{x}" y="{y + f * cell_h}" width="{cell_w - 2}" '
                    f'height="{cell_h - 2}" fill="rgb({shade},{shade},255)" '
                    f'stroke="#999"/>')
                if value:
                    color = "#000" if shade > 120 else "#fff"
                    parts.append(
                        f'<text x="{x + 4}" y="{y + f * cell_h + 15}" fill="{color}">'
                        f'{_svg_escape(value)}</text>')
        y += cell_h * len(fields)
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


def _svg_escape(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))
