"""One-hot trace encoding with zero padding and error decomposition.

Each event is encoded as the concatenation of one-hot vectors for its
activity and each attribute, events are concatenated in order, and
shorter traces are zero-padded on the right up to `max_len` events. A
log with 10 activities, 20 users, and max length 12 therefore encodes
to vectors of width (10 + 20) * 12 = 360.

A *slot* is the column range of one (event index, field) pair, where the
fields are "activity" followed by the attribute names. Reconstruction
errors decompose into per-slot mean squared errors; the per-event error
is the MSE over the event's whole column range and the trace error is
the MSE over the full (padded) row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eventlog import EventLog

UNKNOWN = "⟨unknown⟩"


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingLayout:
    field_names: tuple[str, ...]
    field_values: tuple[tuple[str, ...], ...]
    max_len: int
    include_unknown: bool = False

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        if len(self.field_names) != len(self.field_values):
            raise ValueError("field_names and field_values must align")
        index_maps = tuple(
            {v: i for i, v in enumerate(values)} for values in self.field_values
        )
        object.__setattr__(self, "_index_maps", index_maps)

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    @property
    def field_sizes(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.field_values)

    @property
    def field_offsets(self) -> tuple[int, ...]:
        offsets, acc = [], 0
        for size in self.field_sizes:
            offsets.append(acc)
            acc += size
        return tuple(offsets)

    @property
    def event_width(self) -> int:
        return sum(self.field_sizes)

    @property
    def total_width(self) -> int:
        return self.event_width * self.max_len

    def slot_columns(self, event_idx: int, field: str) -> tuple[int, int]:
        """[start, stop) column range of one (event, field) slot."""
        if not (0 <= event_idx < self.max_len):
            raise EncodingError(f"event index {event_idx} outside [0, {self.max_len})")
        f = self.field_names.index(field)
        start = event_idx * self.event_width + self.field_offsets[f]
        return start, start + self.field_sizes[f]

    def value_index(self, field_idx: int, value: str) -> int | None:
        return self._index_maps[field_idx].get(value)

    def to_json_obj(self) -> dict:
        return {
            "field_names": list(self.field_names),
            "field_values": [list(v) for v in self.field_values],
            "max_len": self.max_len,
            "include_unknown": self.include_unknown,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "EncodingLayout":
        return EncodingLayout(
            field_names=tuple(obj["field_names"]),
            field_values=tuple(tuple(v) for v in obj["field_values"]),
            max_len=int(obj["max_len"]),
            include_unknown=bool(obj["include_unknown"]),
        )


@dataclass(frozen=True)
class EncodedBatch:
    """Rows of one-hot trace vectors plus the true (unpadded) lengths."""

    matrix: np.ndarray
    n_events: np.ndarray
    case_ids: tuple[str, ...]
    layout: EncodingLayout

    def __len__(self):
        return self.matrix.shape[0]


def build_layout(log: EventLog, max_len: int | None = None,
                 activity_values=None, attribute_values=None,
                 include_unknown: bool = False) -> EncodingLayout:
    """Derive the encoding layout from a log.

    Alphabets default to the log's first-occurrence alphabets; supersets
    can be supplied (e.g. a process model's full activity and user sets)
    so one layout covers every log sampled from the same model. With
    `include_unknown`, each alphabet gets one extra column that absorbs
    categories unseen at fit time.
    """
    fields = [("activity", tuple(activity_values) if activity_values is not None
               else log.activity_alphabet)]
    for name in log.attr_names:
        values = None
        if attribute_values is not None:
            values = attribute_values.get(name)
        fields.append((name, tuple(values) if values is not None
                       else log.attribute_alphabets[name]))
    if include_unknown:
        fields = [(name, values + (UNKNOWN,)) for name, values in fields]
    for name, values in fields:
        missing = _missing_values(log, name, values)
        if missing:
            raise EncodingError(
                f"log contains {name} values absent from the supplied alphabet: "
                f"{missing[:5]}")
    return EncodingLayout(
        field_names=tuple(name for name, _ in fields),
        field_values=tuple(values for _, values in fields),
        max_len=max_len if max_len is not None else log.max_trace_len,
        include_unknown=include_unknown,
    )


def _missing_values(log, field_name, values) -> list[str]:
    have = set(values)
    if field_name == "activity":
        return sorted(set(log.activity_alphabet) - have)
    return sorted(set(log.attribute_alphabets[field_name]) - have)


def encode(log: EventLog, layout: EncodingLayout) -> EncodedBatch:
    """One-hot encode every trace; hot entries are exactly 1.0."""
    n = len(log.traces)
    matrix = np.zeros((n, layout.total_width), dtype=np.float64)
    n_events = np.zeros(n, dtype=np.int64)
    for r, trace in enumerate(log.traces):
        if len(trace) > layout.max_len:
            raise EncodingError(
                f"trace {trace.case_id!r} has {len(trace)} events; "
                f"layout allows {layout.max_len}")
        n_events[r] = len(trace)
        for p, event in enumerate(trace.events):
            base = p * layout.event_width
            for f, field_name in enumerate(layout.field_names):
                value = event.activity if field_name == "activity" else event.attrs[field_name]
                col = layout.value_index(f, value)
                if col is None:
                    if layout.include_unknown:
                        col = layout.field_sizes[f] - 1
                    else:
                        raise EncodingError(
                            f"trace {trace.case_id!r} event {p}: {field_name} value "
                            f"{value!r} not in the layout alphabet")
                matrix[r, base + layout.field_offsets[f] + col] = 1.0
    return EncodedBatch(matrix=matrix, n_events=n_events,
                        case_ids=log.case_ids(), layout=layout)


def decode_slot(vector: np.ndarray, layout: EncodingLayout,
                event_idx: int, field: str) -> tuple[int, str]:
    """Argmax category of one slot; returns (index, value)."""
    start, stop = layout.slot_columns(event_idx, field)
    idx = int(np.argmax(vector[start:stop]))
    return idx, layout.field_values[layout.field_names.index(field)][idx]


def decode_trace(vector: np.ndarray, layout: EncodingLayout, n_events: int):
    """Decode the first `n_events` events of a row back to values."""
    out = []
    for p in range(n_events):
        out.append({
            field: decode_slot(vector, layout, p, field)[1]
            for field in layout.field_names
        })
    return out


def slot_errors(input_row: np.ndarray, output_row: np.ndarray,
                layout: EncodingLayout):
    """Per-slot MSE matrix of shape (max_len, n_fields) plus the
    trace-level MSE over the entire padded row."""
    slot, _event, trace = decompose_errors(
        input_row.reshape(1, -1), output_row.reshape(1, -1), layout)
    return slot[0], float(trace[0])


def decompose_errors(inputs: np.ndarray, outputs: np.ndarray,
                     layout: EncodingLayout):
    """Vectorized error decomposition for a batch.

    Returns (slot_mse, event_mse, trace_mse) with shapes
    (n, max_len, n_fields), (n, max_len), and (n,). The trace error
    averages over all columns including padding; per-event and per-slot
    values are raw means over their own column ranges.
    """
    if inputs.shape != outputs.shape or inputs.shape[1] != layout.total_width:
        raise EncodingError(
            f"expected rows of width {layout.total_width}, got {inputs.shape}")
    n = inputs.shape[0]
    sq = (inputs - outputs) ** 2
    trace_mse = sq.mean(axis=1)
    per_event = sq.reshape(n, layout.max_len, layout.event_width)
    event_mse = per_event.mean(axis=2)
    slot_mse = np.empty((n, layout.max_len, layout.n_fields))
    for f in range(layout.n_fields):
        start = layout.field_offsets[f]
        stop = start + layout.field_sizes[f]
        slot_mse[:, :, f] = per_event[:, :, start:stop].mean(axis=2)
    return slot_mse, event_mse, trace_mse
