"""Event log data model plus JSONL (native), CSV, and XES readers/writers.

The native format is JSON Lines with one trace object per line:

    {"case_id": str, "events": [{"activity": str, "timestamp": str|null,
                                 "attrs": {name: str, ...}}, ...]}

Anomaly ground truth travels in a JSONL sidecar keyed by case id:

    {"case_id": str, "trace": "normal"|"<anomaly-type>",
     "events": [...], "attrs": [[...]]}

where the per-event and per-attribute entries are "normal", "anomaly",
or "pad" for positions beyond the trace's real length.
"""

from __future__ import annotations

import csv
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence


NORMAL = "normal"
ANOMALY = "anomaly"
PAD = "pad"


class LogFormatError(ValueError):
    """Malformed log or label file. Carries file path and position."""

    def __init__(self, message: str, path=None, position=None):
        loc = str(path) if path is not None else "<input>"
        if position is not None:
            loc = f"{loc}:{position}"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.position = position


@dataclass(frozen=True)
class Event:
    """One executed activity with its categorical attributes.

    `attrs` maps attribute name to value; insertion order is the schema
    order for the whole log. `timestamp` is kept verbatim (ordering only,
    never used as a feature).
    """

    activity: str
    attrs: dict[str, str] = field(default_factory=dict)
    timestamp: str | None = None

    def __post_init__(self):
        if not self.activity:
            raise ValueError("activity label must be non-empty")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if len(self.events) == 0:
            raise ValueError(f"trace {self.case_id!r} has no events")

    def __len__(self):
        return len(self.events)

    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)


@dataclass(frozen=True)
class EventLog:
    """Ordered traces plus the alphabets derived from them.

    Alphabets are in first-occurrence order, so the same file always
    yields the same alphabets. `max_trace_len` is the actual maximum
    event count over all traces.
    """

    traces: tuple[Trace, ...]
    activity_alphabet: tuple[str, ...]
    attr_names: tuple[str, ...]
    attribute_alphabets: dict[str, tuple[str, ...]]
    max_trace_len: int

    @staticmethod
    def from_traces(traces: Sequence[Trace]) -> "EventLog":
        if len(traces) == 0:
            raise ValueError("event log must contain at least one trace")
        attr_names = tuple(traces[0].events[0].attrs.keys())
        activities: dict[str, None] = {}
        attr_values: dict[str, dict[str, None]] = {a: {} for a in attr_names}
        for trace in traces:
            for i, ev in enumerate(trace.events):
                if tuple(ev.attrs.keys()) != attr_names:
                    raise ValueError(
                        f"trace {trace.case_id!r} event {i} attribute keys "
                        f"{tuple(ev.attrs)} differ from log schema {attr_names}"
                    )
                activities.setdefault(ev.activity, None)
                for name in attr_names:
                    attr_values[name].setdefault(ev.attrs[name], None)
        return EventLog(
            traces=tuple(traces),
            activity_alphabet=tuple(activities),
            attr_names=attr_names,
            attribute_alphabets={a: tuple(v) for a, v in attr_values.items()},
            max_trace_len=max(len(t) for t in traces),
        )

    def __len__(self):
        return len(self.traces)

    def case_ids(self) -> tuple[str, ...]:
        return tuple(t.case_id for t in self.traces)


@dataclass(frozen=True)
class TraceLabels:
    """Ground truth for one trace at all three resolutions.

    `trace` is "normal" or the injected anomaly type. `events` holds one
    verdict per real event; `attrs` one verdict per (event, field) where
    fields are the activity followed by the log's attributes.
    """

    trace: str
    events: tuple[str, ...]
    attrs: tuple[tuple[str, ...], ...]

    def is_anomalous(self) -> bool:
        return self.trace != NORMAL


@dataclass(frozen=True)
class LabelSet:
    """Per-case labels; `field_names` is ("activity", *attr_names)."""

    field_names: tuple[str, ...]
    by_case: dict[str, TraceLabels]

    def __len__(self):
        return len(self.by_case)

    def n_anomalous(self) -> int:
        return sum(1 for lab in self.by_case.values() if lab.is_anomalous())

    def validate_consistency(self) -> None:
        """Check the cross-resolution invariant on every trace.

        A trace is anomalous iff at least one of its events is, iff at
        least one attribute verdict is.
        """
        for case_id, lab in self.by_case.items():
            ev_anom = any(v == ANOMALY for v in lab.events)
            at_anom = any(v == ANOMALY for row in lab.attrs for v in row)
            if not (lab.is_anomalous() == ev_anom == at_anom):
                raise ValueError(
                    f"label inconsistency for case {case_id!r}: "
                    f"trace={lab.trace!r} event-any={ev_anom} attr-any={at_anom}"
                )
            for verdicts, row in zip(lab.events, lab.attrs):
                if (verdicts == ANOMALY) != any(v == ANOMALY for v in row):
                    raise ValueError(
                        f"label inconsistency for case {case_id!r}: event verdict "
                        "does not match its attribute verdicts"
                    )


def _parse_timestamp(value: str):
    # 3.10's fromisoformat rejects a trailing 'Z'; normalize to an offset.
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    return datetime.fromisoformat(value)


def _sort_events(events: list[Event]) -> list[Event]:
    """Stable sort by timestamp; falls back to file order when timestamps
    are absent, unparseable, or mix naive and aware datetimes."""
    if any(e.timestamp is None for e in events):
        return events
    try:
        keys = [_parse_timestamp(e.timestamp) for e in events]
        aware = [k.tzinfo is not None for k in keys]
        if any(aware) and not all(aware):
            raise ValueError("mixed naive/aware timestamps")
    except ValueError:
        keys = [e.timestamp for e in events]
    order = sorted(range(len(events)), key=lambda i: (keys[i], i))
    return [events[i] for i in order]


# ---------------------------------------------------------------------------
# native JSONL


def _trace_to_obj(trace: Trace) -> dict:
    return {
        "case_id": trace.case_id,
        "events": [
            {"activity": e.activity, "timestamp": e.timestamp, "attrs": dict(e.attrs)}
            for e in trace.events
        ],
    }


def _trace_from_obj(obj: dict, path, lineno: int) -> Trace:
    try:
        events = tuple(
            Event(activity=e["activity"], timestamp=e.get("timestamp"), attrs=dict(e.get("attrs", {})))
            for e in obj["events"]
        )
        return Trace(case_id=str(obj["case_id"]), events=events)
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(f"bad trace object: {exc}", path=path, position=lineno) from exc


def read_jsonl_log(path) -> EventLog:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"invalid JSON: {exc.msg}", path=path, position=lineno) from exc
            traces.append(_trace_from_obj(obj, path, lineno))
    if not traces:
        raise LogFormatError("empty event log", path=path)
    return EventLog.from_traces(traces)


def write_jsonl_log(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in log.traces:
            fh.write(json.dumps(_trace_to_obj(trace), ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------------------
# CSV

CSV_FIXED_COLUMNS = ("case_id", "timestamp", "activity")


def read_csv_log(path) -> EventLog:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise LogFormatError("empty event log", path=path)
        missing = [c for c in CSV_FIXED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise LogFormatError(f"missing required columns {missing}", path=path, position=1)
        attr_names = [c for c in reader.fieldnames if c not in CSV_FIXED_COLUMNS]
        by_case: dict[str, list[Event]] = {}
        for lineno, row in enumerate(reader, start=2):
            if any(row.get(c) in (None, "") for c in ("case_id", "activity")):
                raise LogFormatError("row missing case_id or activity", path=path, position=lineno)
            ev = Event(
                activity=row["activity"],
                timestamp=row["timestamp"] or None,
                attrs={a: row[a] for a in attr_names},
            )
            by_case.setdefault(row["case_id"], []).append(ev)
    if not by_case:
        raise LogFormatError("empty event log", path=path)
    traces = [Trace(case_id=cid, events=tuple(_sort_events(evs))) for cid, evs in by_case.items()]
    return EventLog.from_traces(traces)


def write_csv_log(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(CSV_FIXED_COLUMNS) + list(log.attr_names))
        for trace in log.traces:
            for ev in trace.events:
                writer.writerow(
                    [trace.case_id, ev.timestamp or "", ev.activity]
                    + [ev.attrs[a] for a in log.attr_names]
                )


# ---------------------------------------------------------------------------
# XES (read-only subset: concept:name and time:timestamp)


def _xes_localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def read_xes_log(path, max_trace_len: int | None = None) -> EventLog:
    """Import an XES file, keeping activity names and timestamps only.

    `max_trace_len` optionally drops traces longer than the given length
    (real-life logs can contain a handful of extreme outlier traces).
    """
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise LogFormatError(f"invalid XML: {exc}", path=path) from exc
    root = tree.getroot()
    traces = []
    for t_idx, trace_el in enumerate(el for el in root if _xes_localname(el.tag) == "trace"):
        case_id = f"trace_{t_idx}"
        events = []
        for child in trace_el:
            name = _xes_localname(child.tag)
            if name == "string" and child.get("key") == "concept:name":
                case_id = child.get("value", case_id)
            elif name == "event":
                activity = None
                timestamp = None
                for attr in child:
                    key = attr.get("key")
                    if key == "concept:name":
                        activity = attr.get("value")
                    elif key == "time:timestamp":
                        timestamp = attr.get("value")
                if activity is None:
                    raise LogFormatError(
                        "event without concept:name", path=path, position=f"trace[{t_idx}]"
                    )
                events.append(Event(activity=activity, timestamp=timestamp))
        if not events:
            continue
        if max_trace_len is not None and len(events) > max_trace_len:
            continue
        traces.append(Trace(case_id=case_id, events=tuple(_sort_events(events))))
    if not traces:
        raise LogFormatError("empty event log", path=path)
    return EventLog.from_traces(traces)


# ---------------------------------------------------------------------------
# dispatch


def read_log(path, format: str | None = None, max_trace_len: int | None = None) -> EventLog:
    """Read an event log; format inferred from the suffix when omitted."""
    fmt = format or _infer_format(path)
    if fmt == "jsonl":
        return read_jsonl_log(path)
    if fmt == "csv":
        return read_csv_log(path)
    if fmt == "xes":
        return read_xes_log(path, max_trace_len=max_trace_len)
    raise ValueError(f"unknown log format {fmt!r}")


def write_log(log: EventLog, path, format: str | None = None) -> None:
    fmt = format or _infer_format(path)
    if fmt == "jsonl":
        write_jsonl_log(log, path)
    elif fmt == "csv":
        write_csv_log(log, path)
    else:
        raise ValueError(f"unknown or read-only log format {fmt!r}")


def _infer_format(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    return {"jsonl": "jsonl", "json": "jsonl", "csv": "csv", "xes": "xes"}.get(suffix, suffix)


# ---------------------------------------------------------------------------
# label sidecars


def write_labels(labels: LabelSet, path) -> None:
    """Write a JSONL sidecar, padding verdict lists to a common width."""
    width = max((len(lab.events) for lab in labels.by_case.values()), default=0)
    n_fields = len(labels.field_names)
    with open(path, "w", encoding="utf-8") as fh:
        for case_id, lab in labels.by_case.items():
            events = list(lab.events) + [PAD] * (width - len(lab.events))
            attrs = [list(row) for row in lab.attrs]
            attrs += [[PAD] * n_fields for _ in range(width - len(lab.attrs))]
            obj = {"case_id": case_id, "trace": lab.trace, "events": events, "attrs": attrs}
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def read_labels(path, log: EventLog | None = None) -> LabelSet:
    """Read a label sidecar; validates case ids against `log` when given."""
    known = set(log.case_ids()) if log is not None else None
    field_names = ("activity",) + (log.attr_names if log is not None else ())
    by_case: dict[str, TraceLabels] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                case_id = str(obj["case_id"])
                events = tuple(v for v in obj["events"] if v != PAD)
                attrs = tuple(tuple(row) for row in obj["attrs"] if PAD not in row)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise LogFormatError(f"bad label line: {exc}", path=path, position=lineno) from exc
            if known is not None and case_id not in known:
                raise LogFormatError(f"label references unknown case_id {case_id!r}",
                                     path=path, position=lineno)
            by_case[case_id] = TraceLabels(trace=obj["trace"], events=events, attrs=attrs)
    if log is not None and len(by_case) == 0 and len(log) > 0:
        raise LogFormatError("empty label sidecar", path=path)
    return LabelSet(field_names=field_names, by_case=by_case)
