import numpy as np
import pytest

from tracelens import procgen
from tracelens.anomalies import (
    ANOMALY_TYPES, AnomalyRecord, InjectConfig, InjectionError, inject,
)
from tracelens.eventlog import ANOMALY, NORMAL

from conftest import make_log


def test_exact_mutation_count(p2p):
    log = procgen.sample_log(p2p, 1000, seed=1)
    for noise in (0.1, 0.3, 0.77):
        _out, labels, records = inject(log, p2p, InjectConfig(noise, seed=2))
        assert len(records) == int(np.floor(noise * 1000))
        assert labels.n_anomalous() == len(records)


def test_noise_zero_is_identity(p2p, p2p_log):
    out, labels, records = inject(p2p_log, p2p, InjectConfig(0.0, seed=3))
    assert out == p2p_log
    assert records == []
    assert labels.n_anomalous() == 0
    assert all(lab.trace == NORMAL for lab in labels.by_case.values())


def test_tiny_noise_warns(p2p):
    log = procgen.sample_log(p2p, 5, seed=4)
    with pytest.warns(UserWarning):
        _out, _labels, records = inject(log, p2p, InjectConfig(0.1, seed=5))
    assert records == []


def test_normal_traces_untouched(p2p, p2p_log, p2p_injected):
    out, labels, _records = p2p_injected
    originals = {t.case_id: t for t in p2p_log.traces}
    for trace in out.traces:
        if labels.by_case[trace.case_id].trace == NORMAL:
            assert trace == originals[trace.case_id]


def test_one_record_per_anomalous_trace(p2p_injected):
    _out, labels, records = p2p_injected
    anomalous = {c for c, lab in labels.by_case.items() if lab.trace != NORMAL}
    assert {r.case_id for r in records} == anomalous
    assert len(records) == len(anomalous)


def test_type_uniformity_multinomial(p2p):
    # capacity head-room makes all five types applicable on every trace,
    # so type counts are multinomial(n, 1/5 each); check within 3 sigma
    log = procgen.sample_log(p2p, 1000, seed=6)
    counts = {t: 0 for t in ANOMALY_TYPES}
    n_total = 0
    for rep in range(10):
        _out, _labels, records = inject(
            log, p2p, InjectConfig(1.0, seed=100 + rep),
            capacity=log.max_trace_len + 1)
        for r in records:
            counts[r.type] += 1
        n_total += len(records)
    assert n_total == 10_000
    expected = n_total / 5
    sigma = np.sqrt(n_total * 0.2 * 0.8)
    for t, c in counts.items():
        assert abs(c - expected) <= 3 * sigma, (t, c)


def structural_check(original, mutated, record, labels, model):
    lab = labels.by_case[record.case_id]
    assert lab.trace == record.type
    if record.type == "skip":
        assert len(mutated) == len(original) - 1
    elif record.type == "rework":
        assert len(mutated) == len(original) + 1
        p = record.event_positions[0]
        assert mutated.events[p] == mutated.events[p - 1]
    elif record.type == "switch":
        assert len(mutated) == len(original)
        assert sorted(mutated.activities()) == sorted(original.activities())
        p, q = record.event_positions
        assert q == p + 1
        assert mutated.events[p].activity != mutated.events[q].activity
        assert (mutated.events[p], mutated.events[q]) == (original.events[q], original.events[p])
    elif record.type == "incorrect_user":
        (p, field), = record.attr_slots
        assert field == "user"
        user = mutated.events[p].attrs["user"]
        assert user not in model.permitted_users[mutated.events[p].activity]
    elif record.type == "incorrect_ltd":
        (j, field), = record.attr_slots
        assert field == "user"
        variant = {v.activities: v for v in model.variants}[original.activities()]
        i, jj = variant.ltd
        assert j == jj
        user = mutated.events[j].attrs["user"]
        assert user in model.permitted_users[mutated.events[j].activity]
        assert user != mutated.events[i].attrs["user"]
    # labels mark exactly the recorded slots
    marked = {(p, f) for p in range(len(mutated))
              for f, name in enumerate(("activity",) + ("user",))
              if lab.attrs[p][f] == ANOMALY}
    want = {(p, ("activity", "user").index(f)) for p, f in record.attr_slots}
    assert marked == want


def test_structural_postconditions_bulk(p2p):
    # 10,000 randomized injections, zero violations
    log = procgen.sample_log(p2p, 1000, seed=7)
    originals = {t.case_id: t for t in log.traces}
    checked = 0
    for rep in range(10):
        out, labels, records = inject(
            log, p2p, InjectConfig(1.0, seed=200 + rep),
            capacity=log.max_trace_len + 1)
        labels.validate_consistency()
        mutated = {t.case_id: t for t in out.traces}
        for record in records:
            structural_check(originals[record.case_id], mutated[record.case_id],
                             record, labels, p2p)
            checked += 1
    assert checked == 10_000


def test_rework_respects_capacity(p2p):
    log = procgen.sample_log(p2p, 400, seed=8)
    capacity = log.max_trace_len + 1
    out, _labels, records = inject(
        log, p2p, InjectConfig(1.0, enabled_types=("rework",), seed=9),
        capacity=capacity)
    assert all(r.type == "rework" for r in records)
    assert all(len(t) <= capacity for t in out.traces)
    assert max(len(t) for t in out.traces) == capacity


def test_max_length_trace_falls_back_to_other_type(p2p):
    log = procgen.sample_log(p2p, 400, seed=10)
    out, labels, records = inject(
        log, p2p, InjectConfig(1.0, seed=11), capacity=log.max_trace_len)
    by_case = {r.case_id: r for r in records}
    originals = {t.case_id: t for t in log.traces}
    at_cap = [c for c, t in originals.items() if len(t) == log.max_trace_len]
    assert at_cap, "sample should contain max-length traces"
    assert all(by_case[c].type != "rework" for c in at_cap)


def test_rework_only_on_all_max_traces_errors():
    log = make_log([("c1", [("A", "u"), ("B", "v")])])
    with pytest.raises(InjectionError) as err:
        inject(log, None, InjectConfig(1.0, enabled_types=("rework",), seed=1),
               capacity=2)
    assert "c1" in str(err.value)


def test_switch_requires_distinct_adjacent():
    # identical adjacent events cannot be switched; skip still applies
    log = make_log([("c1", [("A", "u"), ("A", "u")])])
    _out, _labels, records = inject(
        log, None, InjectConfig(1.0, enabled_types=("switch", "skip"), seed=2))
    assert records[0].type == "skip"


def test_user_anomalies_require_model(p2p_log):
    with pytest.raises(ValueError):
        inject(p2p_log, None, InjectConfig(0.5, seed=1))


def test_invalid_config():
    with pytest.raises(ValueError):
        InjectConfig(1.5)
    with pytest.raises(ValueError):
        InjectConfig(0.5, enabled_types=())
    with pytest.raises(ValueError):
        InjectConfig(0.5, enabled_types=("time_travel",))


def test_skip_label_marks_shifted_position(p2p):
    log = procgen.sample_log(p2p, 300, seed=12)
    out, labels, records = inject(
        log, p2p, InjectConfig(0.9, enabled_types=("skip",), seed=13))
    mutated = {t.case_id: t for t in out.traces}
    for r in records:
        (p, field), = r.attr_slots
        assert field == "activity"
        assert 0 <= p < len(mutated[r.case_id])
        assert labels.by_case[r.case_id].attrs[p][0] == ANOMALY
