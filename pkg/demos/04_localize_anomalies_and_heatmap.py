"""
Localize anomalies down to the event and attribute
==================================================

The reconstruction error decomposes over the one-hot layout: per event
(the event's column range) and per attribute slot (the activity or user
columns of one event). The slot with the highest error points at the
cause of the anomaly, which is rendered as an error heatmap.

Reuses the artifact from demo 03 if present; otherwise run that first.
"""

from pathlib import Path

import numpy as np

from tracelens import InjectConfig, TrainedNetwork, builtin_p2p, dae_score, inject, sample_log
from tracelens.detectors import write_heatmap_csv, write_heatmap_svg

artifact = Path("/tmp/p2p_dae.bin")
if not artifact.exists():
    raise SystemExit("run demos/03_train_autoencoder_and_score.py first")

p2p = builtin_p2p()
trained = TrainedNetwork.load(artifact)
clean = sample_log(p2p, 500, seed=12)
test_log, labels, records = inject(clean, p2p, InjectConfig(0.3, seed=14),
                                   capacity=trained.layout.max_len)

report = dae_score(trained, test_log, alpha=1.5)

# how often does the worst slot of a detected incorrect_user trace point
# at exactly the manipulated user?
verdicts = report.trace_verdicts()
index = {c: i for i, c in enumerate(report.case_ids)}
hits = total = 0
for rec in records:
    if rec.type != "incorrect_user" or not verdicts[index[rec.case_id]]:
        continue
    i = index[rec.case_id]
    flat = np.nan_to_num(report.attr_scores[i], nan=-1.0).reshape(-1)
    slot = int(np.argmax(flat))
    pos, field = divmod(slot, len(report.field_names))
    total += 1
    hits += (pos, report.field_names[field]) == rec.attr_slots[0]
print(f"incorrect_user localization: worst slot = true slot in {hits}/{total} detected traces")

# order a few interesting traces to the front for the rendering, like a
# gallery: two normal ones, then one of each anomaly type
order = [c for c, lab in labels.by_case.items() if lab.trace == "normal"][:2]
for kind in ("skip", "switch", "rework", "incorrect_user", "incorrect_ltd"):
    for rec in records:
        if rec.type == kind:
            order.append(rec.case_id)
            break

pick = [index[c] for c in order]
gallery = report.__class__(
    detector=report.detector, threshold=report.threshold,
    case_ids=tuple(report.case_ids[i] for i in pick),
    field_names=report.field_names,
    n_events=report.n_events[pick],
    trace_scores=report.trace_scores[pick],
    event_scores=report.event_scores[pick],
    attr_scores=report.attr_scores[pick],
)
tags = {c: labels.by_case[c].trace for c in gallery.case_ids}
write_heatmap_csv(report, "/tmp/p2p_heatmap.csv")
write_heatmap_svg(gallery, test_log, "/tmp/p2p_heatmap.svg",
                  max_traces=8, max_events=6, labels=tags)
print("wrote /tmp/p2p_heatmap.csv (full matrix) and /tmp/p2p_heatmap.svg "
      "(first events of a gallery of traces; darker = higher error)")
