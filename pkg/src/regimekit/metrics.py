"""Summary metrics of fitted context trees.

Every metric reads next-state distributions ``p(.|c)`` from either a single
:class:`~regimekit.vlmc.ContextTree` or a cross-tree
:class:`AggregatedContexts` table. Contexts are written oldest to newest, so
``R5R1`` ends in ``R1``. A context absent from the source contributes zero.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .ingest import N_STATES, STATE_LABELS
from .vlmc import Context, ContextTree, context_label, parse_context

R1, R2, R3, R4, R5 = range(5)
CALM = (R2, R3, R4)


@dataclass(frozen=True)
class UnconditionalStats:
    p: tuple[float, ...]
    tail_ratio: float
    entropy: float


def unconditional_stats(p, atol: float = 1e-9) -> UnconditionalStats:
    """Tail ratio ``(p1 + p5) / (p2 + p3 + p4)`` and base-2 Shannon entropy.

    ``tail_ratio`` is ``inf`` when the middle states carry no mass. ``atol``
    bounds how far ``sum(p)`` may stray from 1 (rounded published rows need
    about 1e-3).
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (N_STATES,):
        raise ValueError(f"expected {N_STATES} probabilities, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"not a probability vector: {p.tolist()}")
    middle = p[R2] + p[R3] + p[R4]
    tails = p[R1] + p[R5]
    with np.errstate(over="ignore"):
        ratio = math.inf if middle == 0 else float(tails / middle)
    nz = p[p > 0]
    entropy = float(-np.sum(nz * np.log2(nz))) + 0.0
    return UnconditionalStats(tuple(float(v) for v in p), ratio, entropy)


@dataclass
class AggregatedContexts:
    """Cross-tree context table.

    ``tree_count[c]`` is the number of trees holding context ``c``,
    ``counts[c]`` the summed occurrence counts and ``probs[c]`` the unweighted
    mean of the per-tree distributions. ``length_totals[k]`` sums the
    occurrence counts of every length-``k`` context in every tree, including
    contexts dropped by the ``min_tree_count`` filter.
    """

    tree_count: dict[Context, int]
    counts: dict[Context, int]
    probs: dict[Context, NDArray[np.float64]]
    length_totals: dict[int, int] = field(default_factory=dict)
    n_trees: int = 0

    def get(self, ctx) -> NDArray[np.float64] | None:
        return self.probs.get(tuple(ctx))

    def contexts(self, length: int | None = None) -> list[Context]:
        return sorted(c for c in self.probs if length is None or len(c) == length)

    @classmethod
    def from_table(cls, rows) -> "AggregatedContexts":
        """Build from ``(label, tree_count, probs)`` rows such as a published table."""
        tc, probs = {}, {}
        for label, n, p in rows:
            c = parse_context(label)
            tc[c] = int(n)
            probs[c] = np.asarray(p, dtype=np.float64)
        return cls(tc, dict(tc), probs)

    def to_csv(self, path) -> None:
        """Rows ``context,count,p1..p5`` where ``count`` is the tree count."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["context", "count", "n_obs"] + [f"p{i + 1}" for i in range(N_STATES)])
            for c in sorted(self.probs, key=lambda c: (c[-1:] if c else (-1,), len(c), c)):
                w.writerow([context_label(c) or "*", self.tree_count[c], self.counts[c]]
                           + [f"{v:.17g}" for v in self.probs[c]])

    @classmethod
    def from_csv(cls, path) -> "AggregatedContexts":
        tc, counts, probs = {}, {}, {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                c = parse_context(row["context"])
                tc[c] = int(row["count"])
                counts[c] = int(row["n_obs"])
                probs[c] = np.array([float(row[f"p{i + 1}"]) for i in range(N_STATES)])
        return cls(tc, counts, probs)


def aggregate_contexts(trees: list[ContextTree], min_tree_count: int = 3) -> AggregatedContexts:
    if not trees:
        raise ValueError("aggregate_contexts needs at least one tree")
    present: dict[Context, list] = {}
    totals: dict[int, int] = {}
    for tree in trees:
        for c in sorted(tree.nodes):
            node = tree.nodes[c]
            present.setdefault(c, []).append(node)
            totals[len(c)] = totals.get(len(c), 0) + int(node.count)
    tc, counts, probs = {}, {}, {}
    for c, nodes in present.items():
        if len(nodes) < min_tree_count:
            continue
        tc[c] = len(nodes)
        counts[c] = sum(int(n.count) for n in nodes)
        probs[c] = np.mean(np.vstack([n.probs for n in nodes]), axis=0)
    return AggregatedContexts(tc, counts, probs, totals, len(trees))


Source = ContextTree | AggregatedContexts


def _dist(src: Source, ctx) -> NDArray[np.float64] | None:
    if isinstance(src, ContextTree):
        node = src.get(ctx)
        return None if node is None else node.probs
    return src.get(ctx)


def _count(src: Source, ctx) -> int:
    if isinstance(src, ContextTree):
        node = src.get(ctx)
        return 0 if node is None else int(node.count)
    return int(src.counts.get(tuple(ctx), 0))


def _length_total(src: Source, k: int) -> int:
    if isinstance(src, ContextTree):
        return sum(int(src.nodes[c].count) for c in src.contexts(k))
    if k in src.length_totals:
        return int(src.length_totals[k])
    return sum(int(src.counts[c]) for c in src.contexts(k))


def _p(src: Source, ctx, state: int) -> float:
    d = _dist(src, ctx)
    return 0.0 if d is None else float(d[state])


@dataclass(frozen=True)
class Order1Metrics:
    M: tuple[float, ...]
    V1: float
    V2: float
    missing: tuple[str, ...] = ()


def order1_metrics(src: Source) -> Order1Metrics:
    """``M_i = p(R_i | R_i)``, ``V1 = (p(R5|R1) + p(R1|R5)) / 2``, ``V2`` likewise for R2/R4."""
    missing = tuple(STATE_LABELS[i] for i in range(N_STATES) if _dist(src, (i,)) is None)
    M = tuple(_p(src, (i,), i) for i in range(N_STATES))
    V1 = 0.5 * (_p(src, (R1,), R5) + _p(src, (R5,), R1))
    V2 = 0.5 * (_p(src, (R2,), R4) + _p(src, (R4,), R2))
    return Order1Metrics(M, V1, V2, missing)


@dataclass(frozen=True)
class OrderKMetrics:
    k: int
    C: float
    E: float
    Z: float
    B: float


def _alternating(end: int, other: int, k: int) -> Context:
    """Length-``k`` alternation of ``end``/``other`` finishing on ``end``."""
    return tuple(end if (k - 1 - i) % 2 == 0 else other for i in range(k))


def higher_order_metrics(src: Source, k: int) -> OrderKMetrics:
    """Continuation, exhaustion, zigzag and burst-from-calm over length-``k`` contexts."""
    if k < 2:
        raise ValueError("order-k metrics need k >= 2")
    total = _length_total(src, k)
    C = 0.0
    B = 0.0
    if total > 0:
        for i in range(N_STATES):
            run = (i,) * k
            if _dist(src, run) is not None:
                C += _count(src, run) / total * _p(src, run, i)
        ctxs = src.contexts(k)
        for c in ctxs:
            if all(s in CALM for s in c):
                d = _dist(src, c)
                B += _count(src, c) / total * float(d[R1] + d[R5])
    E = 0.5 * (_p(src, (R1,) * k, R5) + _p(src, (R5,) * k, R1))
    Z = 0.5 * (_p(src, _alternating(R1, R5, k), R5) + _p(src, _alternating(R5, R1, k), R1))
    return OrderKMetrics(k, C, E, Z, B)


def group_unconditional(trees: list[ContextTree]) -> UnconditionalStats:
    """Statistics of the unweighted mean of the trees' root distributions."""
    p = np.mean(np.vstack([t.root.probs for t in trees]), axis=0)
    return unconditional_stats(p)


@dataclass
class MetricsReport:
    unconditional: UnconditionalStats
    order1: Order1Metrics
    order2: OrderKMetrics
    order3: OrderKMetrics | None = None

    def to_dict(self) -> dict:
        u = asdict(self.unconditional)
        if math.isinf(u["tail_ratio"]):
            u["tail_ratio"] = "inf"
        out = {"unconditional": u, "order1": asdict(self.order1), "order2": asdict(self.order2)}
        out["order1"]["missing"] = list(self.order1.missing)
        out["order1"]["M"] = list(self.order1.M)
        out["unconditional"]["p"] = list(self.unconditional.p)
        if self.order3 is not None:
            out["order3"] = asdict(self.order3)
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def metrics_report(trees: list[ContextTree], min_tree_count: int = 3,
                   agg: AggregatedContexts | None = None) -> MetricsReport:
    """Group report: unconditional row from mean roots, order metrics from the aggregate."""
    agg = agg or aggregate_contexts(trees, min_tree_count)
    depth = max(t.max_depth for t in trees)
    return MetricsReport(group_unconditional(trees), order1_metrics(agg),
                         higher_order_metrics(agg, 2),
                         higher_order_metrics(agg, 3) if depth >= 3 else None)
