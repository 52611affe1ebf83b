"""
Build a process model and sample event logs from it
====================================================

A process model is an acyclic activity graph. Every valid path from
start to end is a *variant*, each activity has a set of permitted
users, and every variant carries one long-term dependency: two
positions that must be executed by the same user.
"""

import numpy as np

from tracelens import (
    GenConfig, assign_users, builtin_p2p, draw_variant_probs,
    generate_model, sample_log, write_log,
)

# The built-in purchase-to-pay model has interpretable activity names.
p2p = builtin_p2p()
print(f"P2P: {p2p.node_count()} nodes, {p2p.edge_count()} edges, "
      f"{len(p2p.variants)} variants, max length {p2p.max_variant_len()}")
for v in p2p.variants:
    i, j = v.ltd
    print(f"  {' -> '.join(v.activities)}")
    print(f"      same user at positions {i} and {j} "
          f"({v.activities[i]} / {v.activities[j]})")

# Random models are built from a node/edge budget. The generator keeps
# the node count exact and the edge count within 10%.
cfg = GenConfig(n_activities=20, target_edges=26, seed=7, n_users=15)
model = generate_model(cfg)
model = assign_users(model, seed=8, n_users=cfg.n_users)
print(f"\nrandom model: {model.node_count()} nodes, {model.edge_count()} edges, "
      f"{len(model.variants)} variants")

# Variants are not equally likely in real processes. Each log draws its
# own skewed distribution (normal weights around 1, clamped, normalized).
probs = draw_variant_probs(len(p2p.variants), np.random.default_rng(4))
print(f"\nvariant distribution: {np.round(probs, 3)}")

log = sample_log(p2p, n_traces=500, seed=5, variant_probs=probs)
print(f"sampled {len(log)} traces, activities {len(log.activity_alphabet)}, "
      f"users {len(log.attribute_alphabets['user'])}")
print("first trace:")
for ev in log.traces[0].events:
    print(f"  {ev.timestamp}  {ev.activity:15s} {ev.attrs['user']}")

write_log(log, "/tmp/p2p_demo.jsonl")
print("\nwrote /tmp/p2p_demo.jsonl (one trace per line)")
