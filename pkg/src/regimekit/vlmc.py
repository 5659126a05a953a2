"""Variable-length Markov chains over the five return states.

Contexts are tuples of state codes written oldest to newest, so the context
``(4, 0)`` is "R5 two days ago, then R1 yesterday". The parent (suffix) of a
context drops its oldest element; the children of a node prepend one older
state. Lookups match the longest stored suffix of a history.

A branch ``c`` is kept when ``2 * n_c * KL(p_c || p_parent(c)) > cutoff`` or
when one of its descendants is kept, so that suffix lookup can reach every
retained context. Distributions are maximum-likelihood with exact zeros.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import SequenceTooShortError, SupportViolationError
from .ingest import N_STATES, STATE_LABELS, StateSequence

Context = tuple[int, ...]

DEFAULT_CUTOFF = 3.372
DEFAULT_MAX_DEPTH = 4


@dataclass(frozen=True)
class PruneConfig:
    cutoff: float = DEFAULT_CUTOFF
    max_depth: int = DEFAULT_MAX_DEPTH
    min_count: int = 1

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")


@dataclass
class Node:
    context: Context
    count: int
    probs: NDArray[np.float64]
    next_counts: NDArray[np.int64] | None = None


def as_codes(seq) -> NDArray[np.int8]:
    """State codes from a StateSequence, labels (``"R3"``) or integers."""
    if isinstance(seq, StateSequence):
        return np.asarray(seq.states, dtype=np.int8)
    items = list(seq)
    if items and isinstance(items[0], str):
        items = [STATE_LABELS.index(s) for s in items]
    codes = np.asarray(items, dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= N_STATES):
        raise ValueError(f"state codes must lie in 0..{N_STATES - 1}")
    return codes.astype(np.int8)


def context_label(ctx: Context) -> str:
    return "".join(STATE_LABELS[s] for s in ctx)


def parse_context(text: str) -> Context:
    """``"R5R1"`` or ``"R5 R1"`` -> ``(4, 0)``."""
    text = text.replace(" ", "")
    if not text or text == "*":
        return ()
    parts = text.split("R")[1:]
    return tuple(int(p) - 1 for p in parts)


@dataclass
class ContextTree:
    nodes: dict[Context, Node]
    max_depth: int
    n_states: int = N_STATES
    pruned: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def root(self) -> Node:
        return self.nodes[()]

    @property
    def depth(self) -> int:
        return max(len(c) for c in self.nodes)

    def __contains__(self, ctx):
        return tuple(ctx) in self.nodes

    def __len__(self):
        return len(self.nodes)

    def get(self, ctx) -> Node | None:
        return self.nodes.get(tuple(ctx))

    def children(self, ctx) -> list[Node]:
        ctx = tuple(ctx)
        return [self.nodes[(s,) + ctx] for s in range(self.n_states) if (s,) + ctx in self.nodes]

    def contexts(self, length: int | None = None) -> list[Context]:
        return sorted(c for c in self.nodes if length is None or len(c) == length)

    def deepest_suffix(self, history) -> Context:
        h = tuple(int(s) for s in as_codes(history))
        best: Context = ()
        for k in range(1, min(len(h), self.max_depth) + 1):
            ctx = h[len(h) - k:]
            if ctx not in self.nodes:
                break
            best = ctx
        return best

    def predict_next(self, history=()) -> NDArray[np.float64]:
        return self.nodes[self.deepest_suffix(history)].probs.copy()

    @classmethod
    def from_distributions(cls, dists: dict, counts: dict | None = None,
                           max_depth: int | None = None) -> "ContextTree":
        """Tree from explicit ``{context: probabilities}``; keys may be labels."""
        nodes = {}
        for key, p in dists.items():
            ctx = parse_context(key) if isinstance(key, str) else tuple(key)
            n = int(counts.get(key, 0)) if counts else 0
            nodes[ctx] = Node(ctx, n, np.asarray(p, dtype=np.float64))
        if () not in nodes:
            raise ValueError("a context tree needs a root distribution")
        depth = max_depth or max(len(c) for c in nodes) or 1
        return cls(nodes, depth, pruned=True)

    def to_dict(self) -> dict:
        def build(ctx):
            node = self.nodes[ctx]
            out = {"context": [STATE_LABELS[s] for s in ctx],
                   "count": node.count,
                   "probs": [float(v) for v in node.probs]}
            if node.next_counts is not None:
                out["next_counts"] = [int(v) for v in node.next_counts]
            out["children"] = [build(ch.context) for ch in self.children(ctx)]
            return out

        return {"max_depth": self.max_depth, "n_states": self.n_states,
                "pruned": self.pruned, "meta": self.meta, "root": build(())}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "ContextTree":
        nodes = {}

        def walk(d):
            ctx = tuple(STATE_LABELS.index(s) for s in d["context"])
            nc = d.get("next_counts")
            nodes[ctx] = Node(ctx, int(d["count"]), np.asarray(d["probs"], dtype=np.float64),
                              None if nc is None else np.asarray(nc, dtype=np.int64))
            for ch in d.get("children", []):
                walk(ch)

        walk(data["root"])
        return cls(nodes, int(data["max_depth"]), int(data.get("n_states", N_STATES)),
                   bool(data.get("pruned", False)), dict(data.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> "ContextTree":
        return cls.from_dict(json.loads(text))


def build_context_tree(s, cfg: PruneConfig = PruneConfig()) -> ContextTree:
    """Unpruned tree of every context of length ``0..max_depth`` that has a successor."""
    x = as_codes(s).astype(np.int64)
    n = x.size
    if n <= cfg.max_depth:
        raise SequenceTooShortError(f"sequence of length {n} is too short for max_depth={cfg.max_depth}")

    nodes: dict[Context, Node] = {}
    nxt = x[1:]
    for length in range(cfg.max_depth + 1):
        # windows ending at t = length-1 .. n-2, each followed by x[t+1]
        ends = np.arange(length - 1, n - 1) if length else np.arange(n - 1)
        code = np.zeros(ends.size, dtype=np.int64)
        for i in range(length):
            code = code * N_STATES + x[ends - length + 1 + i]
        keys, inverse = np.unique(code, return_inverse=True)
        table = np.zeros((keys.size, N_STATES), dtype=np.int64)
        np.add.at(table, (inverse, nxt[ends]), 1)
        for key, row in zip(keys, table):
            ctx = []
            k = int(key)
            for _ in range(length):
                ctx.append(k % N_STATES)
                k //= N_STATES
            ctx = tuple(reversed(ctx))
            total = int(row.sum())
            nodes[ctx] = Node(ctx, total, row / total, row)
    return ContextTree(nodes, cfg.max_depth)


def kl_divergence(p, q) -> float:
    """``sum p_i ln(p_i / q_i)`` in nats with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    support = p > 0
    if np.any(q[support] <= 0):
        raise SupportViolationError("p puts mass where q has none")
    return max(float(np.sum(p[support] * np.log(p[support] / q[support]))), 0.0)


def likelihood_ratio(tree: ContextTree, ctx) -> float:
    """``2 n_c KL(p_c || p_suffix(c))`` for a non-root context."""
    ctx = tuple(ctx)
    if not ctx:
        raise ValueError("the root has no parent")
    node = tree.nodes[ctx]
    return 2.0 * node.count * kl_divergence(node.probs, tree.nodes[ctx[1:]].probs)


def prune_tree(t: ContextTree, cfg: PruneConfig = PruneConfig()) -> ContextTree:
    significant = {
        c for c, node in t.nodes.items()
        if c and node.count >= cfg.min_count and likelihood_ratio(t, c) > cfg.cutoff
    }
    keep = {()}
    for c in significant:
        for k in range(1, len(c) + 1):
            keep.add(c[len(c) - k:])
    nodes = {c: t.nodes[c] for c in sorted(keep, key=lambda c: (len(c), c))}
    return ContextTree(nodes, t.max_depth, t.n_states, pruned=True, meta=dict(t.meta))


def fit_vlmc(s, cfg: PruneConfig = PruneConfig()) -> ContextTree:
    return prune_tree(build_context_tree(s, cfg), cfg)


def predict_next(t: ContextTree, history=()) -> NDArray[np.float64]:
    return t.predict_next(history)


def simulate(tree: ContextTree, n: int, rng=None, burn_in: int = 100) -> NDArray[np.int8]:
    """Draw a state path from a tree used as a generator."""
    rng = np.random.default_rng(rng)
    x = []
    for _ in range(n + burn_in):
        p = tree.predict_next(x[-tree.max_depth:])
        x.append(int(rng.choice(tree.n_states, p=p / p.sum())))
    return np.asarray(x[burn_in:], dtype=np.int8)


class VLMC(BaseEstimator):
    """Estimator wrapper: ``fit`` a state path, then query ``predict_proba``.

    Parameters
    ----------
    cutoff : float
        Retention threshold on ``2 n_c KL``.
    max_depth : int
        Longest context considered.
    min_count : int
        Contexts seen fewer times than this are never retained.
    """

    def __init__(self, cutoff=DEFAULT_CUTOFF, max_depth=DEFAULT_MAX_DEPTH, min_count=1):
        self.cutoff = cutoff
        self.max_depth = max_depth
        self.min_count = min_count

    def fit(self, X, y=None):
        cfg = PruneConfig(self.cutoff, self.max_depth, self.min_count)
        self.full_tree_ = build_context_tree(X, cfg)
        self.tree_ = prune_tree(self.full_tree_, cfg)
        return self

    def predict_proba(self, histories):
        check_is_fitted(self, "tree_")
        return np.vstack([self.tree_.predict_next(h) for h in histories])

    def predict(self, histories):
        return np.argmax(self.predict_proba(histories), axis=1)
