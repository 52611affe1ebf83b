"""Random process-model generation and event-log sampling.

Models are layered directed acyclic graphs with XOR semantics: every
trace follows exactly one START-to-END path (a *variant*). Each activity
carries a set of permitted users drawn from a per-model user pool, and
each variant carries one long-term dependency: a pair of positions whose
events must be executed by the same user.

Logs are sampled by drawing variants with replacement under a skewed
per-log variant distribution (weights from Normal(1, 0.2), clamped and
normalized) and drawing users uniformly from the permitted sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta

import numpy as np

from .eventlog import Event, EventLog, Trace

START = "__START__"
END = "__END__"

VARIANT_CAP = 10_000

# Fixed pool of user names; a model's users are a seeded sample of these.
USER_NAMES = (
    "Roy", "Earl", "James", "Ryan", "Marilyn", "Emily", "Johnny", "Craig",
    "Amanda", "Linda", "Frank", "Carol", "Steve", "Diane", "Victor", "Gloria",
    "Harold", "Janet", "Keith", "Laura", "Marcus", "Nina", "Oscar", "Paula",
    "Quentin", "Rita", "Sam", "Tina", "Walter", "Yvonne", "Alice", "Boris",
    "Clara", "Dexter", "Elena", "Felix", "Grace", "Hugo", "Irene", "Jonas",
)


class GenerationError(RuntimeError):
    """Model generation could not satisfy its constraints."""


@dataclass(frozen=True)
class Variant:
    """One valid START-to-END path (endpoints excluded) plus its
    long-term dependency: positions (i, j), i < j, sharing one user."""

    activities: tuple[str, ...]
    ltd: tuple[int, int] | None = None


@dataclass(frozen=True)
class GenConfig:
    n_activities: int
    target_edges: int
    seed: int = 0
    n_users: int = 20
    max_users_per_activity: int = 5
    variant_prob_mu: float = 1.0
    variant_prob_sigma: float = 0.2

    def __post_init__(self):
        if self.n_activities < 2:
            raise ValueError("n_activities must be at least 2")
        if self.target_edges < self.n_activities - 1:
            raise ValueError("target_edges must be at least n_activities - 1")
        if not (10 <= self.n_users <= 30):
            raise ValueError("n_users must lie between 10 and 30")
        if not (1 <= self.max_users_per_activity <= 5):
            raise ValueError("max_users_per_activity must lie between 1 and 5")
        if self.variant_prob_sigma < 0:
            raise ValueError("variant_prob_sigma must be non-negative")


@dataclass(frozen=True)
class ProcessModel:
    """Acyclic activity graph with users, variants, and a default
    variant distribution. `activities` excludes START/END; `edges` may
    reference them."""

    name: str
    activities: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    users: tuple[str, ...]
    permitted_users: dict[str, tuple[str, ...]]
    variants: tuple[Variant, ...]
    variant_probs: np.ndarray

    def node_count(self) -> int:
        return len(self.activities) + 2

    def edge_count(self) -> int:
        return len(self.edges)

    def max_variant_len(self) -> int:
        return max(len(v.activities) for v in self.variants)

    def mean_out_degree(self) -> float:
        return self.edge_count() / self.node_count()

    def is_assigned(self) -> bool:
        return bool(self.users) and all(v.ltd is not None for v in self.variants)

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "activities": list(self.activities),
            "edges": [list(e) for e in self.edges],
            "users": list(self.users),
            "permitted_users": {a: list(u) for a, u in self.permitted_users.items()},
            "variants": [
                {"activities": list(v.activities), "ltd": list(v.ltd) if v.ltd else None}
                for v in self.variants
            ],
            "variant_probs": [float(p) for p in self.variant_probs],
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "ProcessModel":
        return ProcessModel(
            name=obj["name"],
            activities=tuple(obj["activities"]),
            edges=tuple((u, v) for u, v in obj["edges"]),
            users=tuple(obj["users"]),
            permitted_users={a: tuple(u) for a, u in obj["permitted_users"].items()},
            variants=tuple(
                Variant(tuple(v["activities"]), tuple(v["ltd"]) if v["ltd"] else None)
                for v in obj["variants"]
            ),
            variant_probs=np.asarray(obj["variant_probs"], dtype=float),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2, ensure_ascii=False)
            fh.write("\n")

    @staticmethod
    def load(path) -> "ProcessModel":
        with open(path, "r", encoding="utf-8") as fh:
            return ProcessModel.from_json_obj(json.load(fh))


def enumerate_variants(activities, edges, cap: int = VARIANT_CAP) -> list[tuple[str, ...]]:
    """All START-to-END paths (endpoints stripped), in lexicographic
    order of node index. Raises GenerationError beyond `cap` paths."""
    index = {a: i for i, a in enumerate(activities)}
    succ: dict[str, list[str]] = {}
    for u, v in edges:
        succ.setdefault(u, []).append(v)
    for u in succ:
        succ[u].sort(key=lambda a: -1 if a == END else index[a])
    paths: list[tuple[str, ...]] = []

    def walk(node, prefix):
        if node == END:
            paths.append(tuple(prefix))
            if len(paths) > cap:
                raise GenerationError(f"more than {cap} variants; graph too permissive")
            return
        for nxt in succ.get(node, ()):
            walk(nxt, prefix + [nxt] if nxt != END else prefix)

    walk(START, [])
    return paths


def count_paths(activities, edges) -> int:
    """Path count by memoized recursion (independent of enumeration order)."""
    succ: dict[str, list[str]] = {}
    for u, v in edges:
        succ.setdefault(u, []).append(v)
    memo: dict[str, int] = {}

    def count(node) -> int:
        if node == END:
            return 1
        if node not in memo:
            memo[node] = sum(count(n) for n in succ.get(node, ()))
        return memo[node]

    return count(START)


def topological_order(activities, edges) -> list[str]:
    """Kahn's algorithm over all nodes; raises GenerationError on a cycle."""
    nodes = [START] + list(activities) + [END]
    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in edges:
        succ[u].append(v)
        indeg[v] += 1
    queue = [n for n in nodes if indeg[n] == 0]
    order = []
    while queue:
        n = queue.pop(0)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    if len(order) != len(nodes):
        raise GenerationError("graph contains a cycle")
    return order


def _distribute(total: int, n_slots: int, minimum: int, rng) -> list[int]:
    """Random composition of `total` into n_slots parts, each >= minimum."""
    if total < n_slots * minimum:
        raise GenerationError("not enough activities for the requested structure")
    parts = [minimum] * n_slots
    for _ in range(total - n_slots * minimum):
        parts[int(rng.integers(n_slots))] += 1
    return parts


def _build_graph(cfg: GenConfig, rng: np.random.Generator):
    """Build a block-structured DAG: chain segments alternating with XOR
    split blocks whose branches rejoin.

    With S split blocks of widths g_1..g_S the edge count is exactly
    n_activities + 1 + sum(g_i - 1) and the variant count is the product
    of the widths. Few wide splits therefore keep variants near the
    edge surplus while spending the whole edge budget, which is how the
    reference model statistics behave (variants barely above the edge
    surplus even for large graphs).
    """
    n = cfg.n_activities
    extra = max(1, cfg.target_edges - (n + 1))

    # split widths: one wide split for small budgets, one or two otherwise
    if extra <= 6 or n < 12 or rng.random() < 0.35:
        parts = [extra]
    else:
        d = int(rng.integers(0, 2))
        parts = [extra - 1 - d, 1 + d]
    widths = [p + 1 for p in parts]

    # every branch needs one activity; interior chains need one (the join)
    n_splits = len(widths)
    min_chain = max(1, n_splits - 1)
    for _ in range(64):
        chain_frac = 0.35 - (cfg.target_edges / (n + 2) - 1.18)
        if n_splits > 1:
            chain_frac *= 0.6
        chain_total = int(round(n * float(np.clip(chain_frac, 0.10, 0.55))))
        chain_total = max(min_chain, min(chain_total, n - sum(widths)))
        if chain_total >= min_chain and n - chain_total >= sum(widths):
            break
        # shrink the widest split until the node budget fits
        widest = max(range(n_splits), key=lambda s: widths[s])
        if widths[widest] <= 2:
            raise GenerationError(
                f"cannot fit {cfg.target_edges} edges over {n} activities")
        widths[widest] -= 1

    branch_total = n - chain_total
    # each split needs one activity per branch; spread the surplus
    # proportionally to split width so branches stay short
    per_split = list(widths)
    for _ in range(branch_total - sum(widths)):
        r = rng.random() * sum(widths)
        acc = 0.0
        for s in range(n_splits):
            acc += widths[s]
            if r < acc:
                per_split[s] += 1
                break
    # interior chains first (>=1 each), leading/trailing chains may be empty
    chains = _distribute(chain_total, n_splits + 1, 0, rng)
    for s in range(1, n_splits):
        while chains[s] == 0:
            donor = max(range(n_splits + 1), key=lambda c: chains[c])
            chains[donor] -= 1
            chains[s] += 1

    counter = 0

    def new_activity():
        nonlocal counter
        name = f"a{counter:03d}"
        counter += 1
        return name

    names: list[str] = []
    edges: list[tuple[str, str]] = []
    prev = START
    for s in range(n_splits):
        for _ in range(chains[s]):
            act = new_activity()
            names.append(act)
            edges.append((prev, act))
            prev = act
        g = widths[s]
        branch_lens = _distribute(per_split[s], g, 1, rng)
        tails = []
        for length in branch_lens:
            head = prev
            for _ in range(length):
                act = new_activity()
                names.append(act)
                edges.append((head, act))
                head = act
            tails.append(head)
        # join: first node of the next chain, or END after the last block
        if s < n_splits - 1 or chains[n_splits] > 0:
            join = new_activity()
            names.append(join)
            chains[s + 1] -= 1  # join consumes one node of the next chain
        else:
            join = END
        for tail in tails:
            edges.append((tail, join))
        prev = join
    for _ in range(chains[n_splits]):
        act = new_activity()
        names.append(act)
        edges.append((prev, act))
        prev = act
    if prev != END:
        edges.append((prev, END))
    return names, edges


def generate_model(cfg: GenConfig) -> ProcessModel:
    """Generate an unassigned model matching cfg's node/edge targets.

    The node count is exact and the edge count is best-effort within
    10% (a pure-chain budget gets one extra branch so at least two
    variants exist). Deterministic for a fixed seed.
    """
    last_error = None
    for attempt in range(24):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, attempt]))
        try:
            names, edges = _build_graph(cfg, rng)
            paths = enumerate_variants(names, edges)
        except GenerationError as exc:
            last_error = exc
            continue
        if len(paths) < 2 or len(names) != cfg.n_activities:
            continue
        if abs(len(edges) - cfg.target_edges) > max(1, 0.1 * cfg.target_edges):
            continue
        variants = tuple(Variant(p) for p in paths)
        probs = np.full(len(variants), 1.0 / len(variants))
        return ProcessModel(
            name=f"random-{cfg.n_activities}x{cfg.target_edges}-s{cfg.seed}",
            activities=tuple(names),
            edges=tuple(edges),
            users=(),
            permitted_users={},
            variants=variants,
            variant_probs=probs,
        )
    raise GenerationError(
        f"could not generate an acyclic model with ~{cfg.target_edges} edges "
        f"over {cfg.n_activities} activities after bounded retries"
        + (f" (last: {last_error})" if last_error else "")
    )


def assign_users(model: ProcessModel, seed: int, n_users: int = 20,
                 max_users_per_activity: int = 5) -> ProcessModel:
    """Attach a user pool, per-activity permitted sets, and one long-term
    dependency per variant.

    Permitted set sizes are uniform on [1, max_users_per_activity]. The
    dependency pair is uniform over position pairs whose activities'
    permitted sets intersect; user sets are resampled (bounded retries)
    when some variant has no such pair.
    """
    if not (10 <= n_users <= 30):
        raise ValueError("n_users must lie between 10 and 30")
    rng = np.random.default_rng(seed)
    if n_users > len(USER_NAMES):
        raise ValueError("user pool larger than the available name list")
    pool = tuple(rng.choice(USER_NAMES, size=n_users, replace=False))

    for attempt in range(64):
        permitted = {}
        for act in model.activities:
            size = int(rng.integers(1, min(max_users_per_activity, n_users) + 1))
            chosen = rng.choice(n_users, size=size, replace=False)
            permitted[act] = tuple(pool[i] for i in sorted(chosen))
        variants = []
        ok = True
        for variant in model.variants:
            pairs = [
                (i, j)
                for i in range(len(variant.activities))
                for j in range(i + 1, len(variant.activities))
                if set(permitted[variant.activities[i]]) & set(permitted[variant.activities[j]])
            ]
            if not pairs:
                ok = False
                break
            i, j = pairs[int(rng.integers(len(pairs)))]
            variants.append(Variant(variant.activities, ltd=(i, j)))
        if ok:
            return replace(model, users=pool, permitted_users=permitted,
                           variants=tuple(variants))
    raise GenerationError("could not find intersecting user sets for every variant")


def draw_variant_probs(n_variants: int, rng: np.random.Generator,
                       mu: float = 1.0, sigma: float = 0.2) -> np.ndarray:
    """Per-log variant distribution: Normal(mu, sigma) weights, clamped
    below at 0.05 (the normal can go non-positive), normalized to 1."""
    w = rng.normal(mu, sigma, size=n_variants)
    w = np.maximum(w, 0.05)
    return w / w.sum()


_BASE_TIME = datetime(2015, 1, 1, 8, 0, 0)


def sample_log(model: ProcessModel, n_traces: int, seed: int,
               variant_probs: np.ndarray | None = None,
               case_prefix: str = "case") -> EventLog:
    """Sample traces from the model's variants with replacement.

    When `variant_probs` is None a fresh per-log distribution is drawn
    from the seeded RNG. Users are uniform over permitted sets except at
    the long-term dependency, whose shared user is uniform over the
    intersection of the two permitted sets. Timestamps are synthetic and
    strictly increasing within each trace.
    """
    if n_traces <= 0:
        raise ValueError("n_traces must be positive")
    if not model.is_assigned():
        raise ValueError("model has no users assigned; run assign_users first")
    rng = np.random.default_rng(seed)
    probs = variant_probs if variant_probs is not None else draw_variant_probs(
        len(model.variants), rng)
    if abs(float(np.sum(probs)) - 1.0) > 1e-9:
        raise ValueError("variant_probs must sum to 1")

    intersections = {}
    for v_idx, variant in enumerate(model.variants):
        i, j = variant.ltd
        inter = sorted(
            set(model.permitted_users[variant.activities[i]])
            & set(model.permitted_users[variant.activities[j]]),
            key=model.users.index,
        )
        if not inter:
            raise ValueError(f"variant {v_idx} has an unsatisfiable dependency")
        intersections[v_idx] = inter

    width = max(5, len(str(n_traces)))
    traces = []
    for t in range(n_traces):
        v_idx = int(rng.choice(len(model.variants), p=probs))
        variant = model.variants[v_idx]
        users = [
            model.permitted_users[act][int(rng.integers(len(model.permitted_users[act])))]
            for act in variant.activities
        ]
        i, j = variant.ltd
        inter = intersections[v_idx]
        shared = inter[int(rng.integers(len(inter)))]
        users[i] = shared
        users[j] = shared
        start = _BASE_TIME + timedelta(hours=t)
        events = tuple(
            Event(
                activity=act,
                attrs={"user": users[p]},
                timestamp=(start + timedelta(minutes=p)).isoformat(),
            )
            for p, act in enumerate(variant.activities)
        )
        traces.append(Trace(case_id=f"{case_prefix}_{t + 1:0{width}d}", events=events))
    return EventLog.from_traces(traces)


def trace_matches_variant(model: ProcessModel, trace: Trace) -> bool:
    return trace.activities() in {v.activities for v in model.variants}


# ---------------------------------------------------------------------------
# built-in purchase-to-pay fixture
#
# A hand-built procurement model with interpretable activity names. Its
# statistics are fixed: 14 nodes, 16 edges, 6 variants, max variant
# length 9, mean out-degree 16/14. Two entry branches (purchase
# requisition vs. shopping cart) converge on purchase-order processing,
# which ends in goods receipt and payment or in cancellation.

_P2P_EDGES = (
    (START, "PR Created"),
    (START, "SC Created"),
    ("PR Created", "PR Released"),
    ("PR Released", "PO Created"),
    ("SC Created", "SC Purchased"),
    ("SC Purchased", "SC Approved"),
    ("SC Approved", "PO Created"),
    ("PO Created", "PO Released"),
    ("PO Released", "Goods Receipt"),
    ("PO Released", "PO Decreased"),
    ("PO Released", "PO Canceled"),
    ("PO Decreased", "Goods Receipt"),
    ("Goods Receipt", "Invoice Receipt"),
    ("Invoice Receipt", "Payment Done"),
    ("Payment Done", END),
    ("PO Canceled", END),
)

_P2P_ACTIVITIES = (
    "PR Created", "PR Released", "SC Created", "SC Purchased", "SC Approved",
    "PO Created", "PO Released", "PO Decreased", "PO Canceled",
    "Goods Receipt", "Invoice Receipt", "Payment Done",
)

_P2P_USERS = (
    "Roy", "Earl", "James", "Ryan", "Marilyn", "Emily",
    "Johnny", "Craig", "Amanda", "Linda", "Frank", "Carol",
)

_P2P_PERMITTED = {
    "PR Created": ("Roy", "James", "Linda"),
    "PR Released": ("Earl", "Frank"),
    "SC Created": ("Marilyn", "Linda"),
    "SC Purchased": ("Emily", "Frank", "Carol"),
    "SC Approved": ("Roy", "Earl", "Amanda"),
    "PO Created": ("James", "Johnny", "Marilyn"),
    "PO Released": ("Roy", "Carol"),
    "PO Decreased": ("Craig", "Johnny"),
    "PO Canceled": ("Carol", "Roy"),
    "Goods Receipt": ("Ryan", "Amanda", "Craig"),
    "Invoice Receipt": ("Emily", "James", "Frank"),
    "Payment Done": ("Amanda", "Ryan"),
}

# dependency positions per variant, keyed by activity sequence
_P2P_LTDS = {
    ("PR Created", "PR Released", "PO Created", "PO Released",
     "Goods Receipt", "Invoice Receipt", "Payment Done"): (0, 3),
    ("PR Created", "PR Released", "PO Created", "PO Released",
     "PO Decreased", "Goods Receipt", "Invoice Receipt", "Payment Done"): (5, 7),
    ("PR Created", "PR Released", "PO Created", "PO Released", "PO Canceled"): (0, 4),
    ("SC Created", "SC Purchased", "SC Approved", "PO Created", "PO Released",
     "Goods Receipt", "Invoice Receipt", "Payment Done"): (2, 7),
    ("SC Created", "SC Purchased", "SC Approved", "PO Created", "PO Released",
     "PO Decreased", "Goods Receipt", "Invoice Receipt", "Payment Done"): (2, 8),
    ("SC Created", "SC Purchased", "SC Approved", "PO Created", "PO Released",
     "PO Canceled"): (2, 5),
}


def builtin_p2p() -> ProcessModel:
    """The fixed purchase-to-pay fixture model, fully assigned."""
    paths = enumerate_variants(_P2P_ACTIVITIES, _P2P_EDGES)
    variants = tuple(Variant(p, ltd=_P2P_LTDS[p]) for p in paths)
    probs = np.full(len(variants), 1.0 / len(variants))
    return ProcessModel(
        name="p2p",
        activities=_P2P_ACTIVITIES,
        edges=_P2P_EDGES,
        users=_P2P_USERS,
        permitted_users=dict(_P2P_PERMITTED),
        variants=variants,
        variant_probs=probs,
    )


# Table-style generation profiles (node counts include START/END)
PROFILES = {
    "small": GenConfig(n_activities=20, target_edges=26, n_users=20),
    "medium": GenConfig(n_activities=32, target_edges=48, n_users=20),
    "large": GenConfig(n_activities=42, target_edges=56, n_users=20),
    "huge": GenConfig(n_activities=54, target_edges=75, n_users=20),
    "wide": GenConfig(n_activities=34, target_edges=53, n_users=20),
}
