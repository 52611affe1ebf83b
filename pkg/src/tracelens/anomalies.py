"""Anomaly injection with ground-truth labels at all three resolutions.

A fixed fraction of traces (floor(noise_level * n)) is mutated, chosen
uniformly without replacement. Each mutated trace receives exactly one
anomaly, its type uniform over the enabled types applicable to that
trace:

  skip            remove one event (needs length >= 2)
  switch          swap two adjacent events with distinct activities
  rework          duplicate one event in place (needs room below the
                  encoder capacity)
  incorrect_user  replace one event's user with a non-permitted user
  incorrect_ltd   replace the user at the dependent position of the
                  trace's long-term dependency with a permitted-but-
                  different user

The last two require a process model. Labels mark the minimal slots a
perfect localizer should flag: skip marks the activity now occupying the
removed position (the final event when the last was removed), switch
marks both swapped activity slots, rework marks the duplicate's activity
slot, and the user anomalies mark the altered user slot.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .eventlog import ANOMALY, NORMAL, Event, EventLog, LabelSet, Trace, TraceLabels
from .procgen import ProcessModel

ANOMALY_TYPES = ("skip", "switch", "rework", "incorrect_user", "incorrect_ltd")
MODEL_REQUIRED = ("incorrect_user", "incorrect_ltd")


class InjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class InjectConfig:
    noise_level: float
    enabled_types: tuple[str, ...] = ANOMALY_TYPES
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.noise_level <= 1.0):
            raise ValueError("noise_level must lie in [0, 1]")
        if not self.enabled_types:
            raise ValueError("enabled_types must not be empty")
        unknown = set(self.enabled_types) - set(ANOMALY_TYPES)
        if unknown:
            raise ValueError(f"unknown anomaly types: {sorted(unknown)}")


@dataclass(frozen=True)
class AnomalyRecord:
    case_id: str
    type: str
    event_positions: tuple[int, ...]
    # (event position, field name) pairs, field "activity" or an attribute
    attr_slots: tuple[tuple[int, str], ...]


def _switch_positions(trace: Trace) -> list[int]:
    return [
        p for p in range(len(trace) - 1)
        if trace.events[p].activity != trace.events[p + 1].activity
    ]


def _user_positions(trace: Trace, model: ProcessModel) -> list[int]:
    pool = set(model.users)
    out = []
    for p, ev in enumerate(trace.events):
        permitted = model.permitted_users.get(ev.activity)
        if permitted is not None and pool - set(permitted):
            out.append(p)
    return out


def _ltd_slot(trace: Trace, model: ProcessModel, variant_index: dict):
    variant = variant_index.get(trace.activities())
    if variant is None or variant.ltd is None:
        return None
    i, j = variant.ltd
    permitted_j = model.permitted_users[variant.activities[j]]
    source_user = trace.events[i].attrs.get("user")
    choices = [u for u in permitted_j if u != source_user]
    if not choices:
        return None
    return i, j, choices


def _applicable_types(trace, model, variant_index, cfg, capacity):
    types = []
    for t in cfg.enabled_types:
        if t in MODEL_REQUIRED and model is None:
            continue
        if t == "skip" and len(trace) >= 2:
            types.append(t)
        elif t == "switch" and _switch_positions(trace):
            types.append(t)
        elif t == "rework" and len(trace) + 1 <= capacity:
            types.append(t)
        elif t == "incorrect_user" and _user_positions(trace, model):
            types.append(t)
        elif t == "incorrect_ltd" and _ltd_slot(trace, model, variant_index):
            types.append(t)
    return types


def _replace_user(event: Event, user: str) -> Event:
    attrs = dict(event.attrs)
    attrs["user"] = user
    return Event(activity=event.activity, attrs=attrs, timestamp=event.timestamp)


def _mutate(trace, anomaly, model, variant_index, rng):
    """Apply one anomaly; returns (new events, event positions, attr slots)."""
    events = list(trace.events)
    if anomaly == "skip":
        p = int(rng.integers(len(events)))
        del events[p]
        mark = min(p, len(events) - 1)
        return events, (mark,), ((mark, "activity"),)
    if anomaly == "switch":
        candidates = _switch_positions(trace)
        p = candidates[int(rng.integers(len(candidates)))]
        events[p], events[p + 1] = events[p + 1], events[p]
        return events, (p, p + 1), ((p, "activity"), (p + 1, "activity"))
    if anomaly == "rework":
        p = int(rng.integers(len(events)))
        events.insert(p + 1, events[p])
        return events, (p + 1,), ((p + 1, "activity"),)
    if anomaly == "incorrect_user":
        candidates = _user_positions(trace, model)
        p = candidates[int(rng.integers(len(candidates)))]
        outside = sorted(set(model.users) - set(model.permitted_users[events[p].activity]),
                         key=model.users.index)
        user = outside[int(rng.integers(len(outside)))]
        events[p] = _replace_user(events[p], user)
        return events, (p,), ((p, "user"),)
    if anomaly == "incorrect_ltd":
        i, j, choices = _ltd_slot(trace, model, variant_index)
        user = choices[int(rng.integers(len(choices)))]
        events[j] = _replace_user(events[j], user)
        return events, (j,), ((j, "user"),)
    raise InjectionError(f"unknown anomaly type {anomaly!r}")


def inject(log: EventLog, model: ProcessModel | None, cfg: InjectConfig,
           capacity: int | None = None):
    """Mutate floor(noise_level * n) traces and label every trace.

    `capacity` is the encoder's maximum trace length; rework is refused
    on traces already at capacity so no trace outgrows the encoding.
    Returns (mutated log, labels, anomaly records).
    """
    if any(t in MODEL_REQUIRED for t in cfg.enabled_types) and model is None:
        raise ValueError(
            "incorrect_user/incorrect_ltd require a process model; "
            "disable them or pass the model")
    if capacity is None:
        capacity = log.max_trace_len
    rng = np.random.default_rng(cfg.seed)
    n_mut = int(np.floor(cfg.noise_level * len(log)))
    if cfg.noise_level > 0 and n_mut == 0:
        warnings.warn("noise_level too small for this log size; zero mutations")
    chosen = set(int(i) for i in rng.choice(len(log), size=n_mut, replace=False))

    variant_index = {}
    if model is not None:
        variant_index = {v.activities: v for v in model.variants}

    field_names = ("activity",) + log.attr_names
    traces: list[Trace] = []
    by_case: dict[str, TraceLabels] = {}
    records: list[AnomalyRecord] = []
    for idx, trace in enumerate(log.traces):
        if idx not in chosen:
            traces.append(trace)
            by_case[trace.case_id] = _normal_labels(trace, field_names)
            continue
        types = _applicable_types(trace, model, variant_index, cfg, capacity)
        if not types:
            raise InjectionError(
                f"no applicable anomaly type for trace {trace.case_id!r} "
                f"(enabled: {list(cfg.enabled_types)})")
        anomaly = types[int(rng.integers(len(types)))]
        events, positions, slots = _mutate(trace, anomaly, model, variant_index, rng)
        mutated = Trace(case_id=trace.case_id, events=tuple(events))
        traces.append(mutated)
        by_case[trace.case_id] = _anomaly_labels(mutated, field_names, anomaly, slots)
        records.append(AnomalyRecord(
            case_id=trace.case_id, type=anomaly,
            event_positions=positions, attr_slots=slots))

    labels = LabelSet(field_names=field_names, by_case=by_case)
    labels.validate_consistency()
    return EventLog.from_traces(traces), labels, records


def _normal_labels(trace: Trace, field_names) -> TraceLabels:
    n_fields = len(field_names)
    return TraceLabels(
        trace=NORMAL,
        events=(NORMAL,) * len(trace),
        attrs=tuple((NORMAL,) * n_fields for _ in range(len(trace))),
    )


def _anomaly_labels(trace: Trace, field_names, anomaly, slots) -> TraceLabels:
    marked = set(slots)
    attrs = tuple(
        tuple(ANOMALY if (p, f) in marked else NORMAL for f in field_names)
        for p in range(len(trace))
    )
    events = tuple(
        ANOMALY if any(v == ANOMALY for v in row) else NORMAL for row in attrs
    )
    return TraceLabels(trace=anomaly, events=events, attrs=attrs)
