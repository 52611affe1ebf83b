"""
Inject labeled anomalies into a clean log
=========================================

A fixed fraction of traces is mutated, one anomaly per trace:

  skip / switch / rework        control-flow anomalies
  incorrect_user                a user who is not permitted at all
  incorrect_ltd                 a permitted user who breaks the
                                long-term same-user dependency

Ground truth is recorded at three resolutions: the trace verdict, a
verdict per event, and a verdict per (event, attribute) slot.
"""

from collections import Counter

from tracelens import InjectConfig, builtin_p2p, inject, sample_log, write_labels

p2p = builtin_p2p()
clean = sample_log(p2p, n_traces=1000, seed=1)

noisy, labels, records = inject(clean, p2p, InjectConfig(noise_level=0.3, seed=2))

print(f"mutated {labels.n_anomalous()} of {len(noisy)} traces "
      f"(floor(0.3 * 1000))")
print("by type:", dict(Counter(r.type for r in records)))

# the labels satisfy the cross-resolution invariant: a trace is anomalous
# iff one of its events is, iff one of its attribute slots is
labels.validate_consistency()
print("cross-resolution label invariant holds")

# look at one mutation in detail
rec = next(r for r in records if r.type == "incorrect_user")
lab = labels.by_case[rec.case_id]
trace = next(t for t in noisy.traces if t.case_id == rec.case_id)
pos, field = rec.attr_slots[0]
print(f"\n{rec.case_id}: {rec.type} at event {pos} ({field})")
for p, ev in enumerate(trace.events):
    marks = [f for f, v in zip(labels.field_names, lab.attrs[p]) if v == "anomaly"]
    flag = f"  <- anomalous {marks}" if marks else ""
    print(f"  {p}: {ev.activity:15s} {ev.attrs['user']:10s}{flag}")
permitted = p2p.permitted_users[trace.events[pos].activity]
print(f"permitted users there: {permitted}")

write_labels(labels, "/tmp/p2p_demo_labels.jsonl")
print("\nwrote /tmp/p2p_demo_labels.jsonl (sidecar keyed by case id)")
