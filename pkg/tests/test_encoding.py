import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracelens import procgen
from tracelens.encoding import (
    EncodingError, EncodingLayout, build_layout, decode_slot, decode_trace,
    decompose_errors, encode, slot_errors,
)
from tracelens.eventlog import Event, EventLog, Trace

from conftest import make_log, make_plain_log


def synthetic_layout(n_acts=10, n_users=20, max_len=12):
    return EncodingLayout(
        field_names=("activity", "user"),
        field_values=(tuple(f"A{i}" for i in range(n_acts)),
                      tuple(f"U{i}" for i in range(n_users))),
        max_len=max_len,
    )


def test_width_arithmetic():
    layout = synthetic_layout(10, 20, 12)
    assert layout.event_width == 30
    assert layout.total_width == 360


def test_degenerate_width():
    layout = EncodingLayout(("activity",), (("only",),), max_len=1)
    assert layout.total_width == 1


def test_slot_column_index_oracle():
    layout = synthetic_layout(10, 20, 12)
    # brute-force index arithmetic for event 3 (0-based 2), user "U7"
    event_idx, user = 2, "U7"
    start, stop = layout.slot_columns(event_idx, "user")
    expected_start = 2 * layout.event_width + 10  # activities precede users
    assert (start, stop) == (expected_start, expected_start + 20)
    row = np.zeros(layout.total_width)
    row[start + 7] = 1.0
    assert decode_slot(row, layout, event_idx, "user") == (7, user)


def test_encode_count_of_ones(p2p, p2p_log):
    layout = build_layout(p2p_log)
    batch = encode(p2p_log, layout)
    for r, trace in enumerate(p2p_log.traces[:25]):
        row = batch.matrix[r]
        assert row.sum() == 2 * len(trace)  # one activity + one user per event
        assert set(np.unique(row)) <= {0.0, 1.0}


def test_padding_all_zero(p2p_log):
    layout = build_layout(p2p_log)
    batch = encode(p2p_log, layout)
    for r, trace in enumerate(p2p_log.traces[:25]):
        row = batch.matrix[r]
        assert not row[len(trace) * layout.event_width :].any()


def test_round_trip_decode(p2p_log):
    layout = build_layout(p2p_log)
    batch = encode(p2p_log, layout)
    for r, trace in enumerate(p2p_log.traces[:50]):
        decoded = decode_trace(batch.matrix[r], layout, len(trace))
        for ev, d in zip(trace.events, decoded):
            assert d["activity"] == ev.activity
            assert d["user"] == ev.attrs["user"]


def test_layout_deterministic(p2p_log):
    import json
    a = json.dumps(build_layout(p2p_log).to_json_obj())
    b = json.dumps(build_layout(p2p_log).to_json_obj())
    assert a == b


def test_interleaving_order():
    log = make_log([("c", [("A", "u"), ("B", "v")])])
    layout = build_layout(log)
    batch = encode(log, layout)
    # a1 || u1 || a2 || u2: activity columns come first within each event
    row = batch.matrix[0]
    assert row[0] == 1.0                      # A at event 1
    assert row[2] == 1.0                      # u at event 1
    assert row[layout.event_width + 1] == 1.0  # B at event 2
    assert row[layout.event_width + 3] == 1.0  # v at event 2


def test_out_of_alphabet_errors_name_position(p2p_log):
    layout = build_layout(p2p_log)
    bad = EventLog.from_traces([
        Trace("odd", (Event("PR Created", {"user": "Nobody"}),))])
    with pytest.raises(EncodingError) as err:
        encode(bad, layout)
    assert "odd" in str(err.value) and "Nobody" in str(err.value)


def test_unknown_column_mode(p2p_log):
    layout = build_layout(p2p_log, include_unknown=True)
    bad = EventLog.from_traces([
        Trace("odd", (Event("PR Created", {"user": "Nobody"}),))])
    batch = encode(bad, layout)
    start, stop = layout.slot_columns(0, "user")
    assert batch.matrix[0, stop - 1] == 1.0  # unknown column is last


def test_too_long_trace_errors():
    log = make_plain_log([("c", ["A", "B", "C"])])
    layout = build_layout(log, max_len=2)
    # build_layout(max_len=...) does not validate lengths; encode must
    with pytest.raises(EncodingError):
        encode(log, layout)


def test_superset_alphabets():
    log = make_log([("c", [("A", "u")])])
    layout = build_layout(log, activity_values=("A", "B"),
                          attribute_values={"user": ("u", "v")}, max_len=4)
    assert layout.total_width == 4 * 4
    with pytest.raises(EncodingError):
        build_layout(log, activity_values=("B",))  # missing "A"


# --- error decomposition ----------------------------------------------------


def test_slot_errors_zero_when_equal():
    layout = synthetic_layout(4, 3, 5)
    row = np.zeros(layout.total_width)
    slots, trace = slot_errors(row, row.copy(), layout)
    assert trace == 0.0
    assert not slots.any()


def test_single_flipped_pair_arithmetic():
    # slot of width 5 with one 1<->0 flip pair: slot MSE 2/5, trace MSE 2/W
    layout = EncodingLayout(("activity", "user"), (("a", "b", "c", "d", "e"), ("u",)),
                            max_len=2)
    x = np.zeros(layout.total_width)
    y = np.zeros(layout.total_width)
    x[0] = 1.0
    y[1] = 1.0
    slots, trace = slot_errors(x, y, layout)
    assert slots[0, 0] == pytest.approx(2 / 5, abs=0)
    assert trace == pytest.approx(2 / layout.total_width, abs=0)
    assert slots[0, 1] == 0.0 and not slots[1].any()


def test_brute_force_slot_error_oracle(rng):
    layout = synthetic_layout(3, 4, 6)
    x = rng.random((layout.total_width,))
    y = rng.random((layout.total_width,))
    slots, trace = slot_errors(x, y, layout)
    assert trace == pytest.approx(np.mean((x - y) ** 2), rel=1e-15)
    for p in range(layout.max_len):
        for f, name in enumerate(layout.field_names):
            start, stop = layout.slot_columns(p, name)
            manual = np.mean((x[start:stop] - y[start:stop]) ** 2)
            assert slots[p, f] == pytest.approx(manual, rel=1e-12)


def test_trace_mse_is_width_weighted_slot_mean(rng):
    layout = synthetic_layout(5, 2, 4)
    x = rng.random((3, layout.total_width))
    y = rng.random((3, layout.total_width))
    slots, events, traces = decompose_errors(x, y, layout)
    widths = np.array(layout.field_sizes, dtype=float)
    recon = (slots * widths).sum(axis=(1, 2)) / layout.total_width
    assert np.allclose(recon, traces, atol=1e-12, rtol=0)
    # event errors likewise decompose over the event's columns
    ev_recon = (slots * widths).sum(axis=2) / layout.event_width
    assert np.allclose(ev_recon, events, atol=1e-12, rtol=0)


def test_width_mismatch_errors():
    layout = synthetic_layout(2, 2, 2)
    with pytest.raises(EncodingError):
        slot_errors(np.zeros(3), np.zeros(3), layout)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
       st.lists(st.sampled_from("abcd"), min_size=1, max_size=8))
def test_encode_decode_round_trip_property(acts1, acts2):
    log = make_plain_log([("t1", acts1), ("t2", acts2)])
    layout = build_layout(log)
    batch = encode(log, layout)
    for r, trace in enumerate(log.traces):
        decoded = decode_trace(batch.matrix[r], layout, len(trace))
        assert [d["activity"] for d in decoded] == list(trace.activities())
