import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regimekit.exceptions import SequenceTooShortError, SupportViolationError
from regimekit.ingest import StateSequence
from regimekit.vlmc import (
    VLMC,
    ContextTree,
    PruneConfig,
    as_codes,
    build_context_tree,
    context_label,
    fit_vlmc,
    kl_divergence,
    likelihood_ratio,
    parse_context,
    predict_next,
    prune_tree,
    simulate,
)

from . import oracles
from .reference_tables import NYA_2008_TREE, TOY_TREE

sequences = st.lists(st.integers(0, 4), min_size=5, max_size=60)


def expected_kept(seq, cfg):
    """Contexts kept by the retention rule, recomputed from oracle counts."""
    counts = oracles.sliding_window_counts(seq, cfg.max_depth)
    keep = {()}
    for ctx, row in counts.items():
        if ctx and sum(row) >= cfg.min_count:
            if oracles.lambda_stat(row, counts[ctx[1:]]) > cfg.cutoff:
                keep.update(ctx[len(ctx) - k:] for k in range(1, len(ctx) + 1))
    return keep


# context helpers --------------------------------------------------------------

def test_context_labels_round_trip():
    assert parse_context("R5R1") == (4, 0)
    assert parse_context("R5 R1") == (4, 0)
    assert parse_context("*") == ()
    assert context_label((4, 0)) == "R5R1"


def test_as_codes_inputs():
    assert as_codes(["R1", "R5"]).tolist() == [0, 4]
    seq = StateSequence(np.array(["2020-01-01", "2020-01-02"], dtype="datetime64[D]"),
                        np.array([2, 3], dtype=np.int8), "X")
    assert as_codes(seq).tolist() == [2, 3]
    with pytest.raises(ValueError):
        as_codes([0, 5])


# counting ---------------------------------------------------------------------

def test_counts_of_short_sequence():
    t = build_context_tree([0, 0, 1, 0, 0, 1], PruneConfig(max_depth=2))
    assert t.root.next_counts.tolist() == [3, 2, 0, 0, 0]
    assert t.get((0,)).next_counts.tolist() == [2, 2, 0, 0, 0]
    assert t.get((0, 0)).next_counts.tolist() == [0, 2, 0, 0, 0]
    assert t.get((0, 1)).probs.tolist() == [1, 0, 0, 0, 0]


@settings(max_examples=50, deadline=None)
@given(sequences)
def test_unpruned_tree_matches_sliding_window_oracle(seq):
    cfg = PruneConfig(max_depth=4)
    tree = build_context_tree(seq, cfg)
    expected = oracles.sliding_window_counts(seq, 4)
    assert set(tree.nodes) == set(expected)
    for ctx, row in expected.items():
        node = tree.nodes[ctx]
        assert node.next_counts.tolist() == row
        assert node.count == sum(row)
        assert node.probs.tolist() == [v / sum(row) for v in row]


@settings(max_examples=50, deadline=None)
@given(sequences)
def test_counts_are_conserved_by_children(seq):
    tree = build_context_tree(seq, PruneConfig(max_depth=3))
    for ctx, node in tree.nodes.items():
        kids = tree.children(ctx)
        if kids:
            total = np.sum([k.next_counts for k in kids], axis=0)
            # the first len(ctx) + 1 windows have no older state to extend with
            assert np.all(total <= node.next_counts)
            assert node.count - total.sum() <= 1


def test_sequence_too_short():
    with pytest.raises(SequenceTooShortError):
        build_context_tree([0, 1, 2, 3], PruneConfig(max_depth=4))


# divergence and pruning -------------------------------------------------------

def test_kl_matches_direct_sum():
    p = [0.5, 0.25, 0.25, 0, 0]
    q = [0.2, 0.2, 0.2, 0.2, 0.2]
    assert kl_divergence(p, q) == pytest.approx(oracles.kl_direct(p, q), rel=1e-14)
    assert kl_divergence(q, q) == 0.0
    with pytest.raises(SupportViolationError):
        kl_divergence([0.5, 0.5, 0, 0, 0], [1, 0, 0, 0, 0])


@settings(max_examples=50, deadline=None)
@given(sequences)
def test_likelihood_ratio_matches_oracle(seq):
    tree = build_context_tree(seq, PruneConfig(max_depth=3))
    counts = oracles.sliding_window_counts(seq, 3)
    for ctx in tree.nodes:
        if ctx:
            lam = oracles.lambda_stat(counts[ctx], counts[ctx[1:]])
            assert likelihood_ratio(tree, ctx) == pytest.approx(lam, rel=1e-9, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(sequences, st.sampled_from([0.5, 2.0, 3.372, 6.0]), st.integers(1, 3))
def test_pruning_keeps_exactly_significant_branches(seq, cutoff, min_count):
    cfg = PruneConfig(cutoff=cutoff, max_depth=4, min_count=min_count)
    assert set(fit_vlmc(seq, cfg).nodes) == expected_kept(seq, cfg)


@settings(max_examples=30, deadline=None)
@given(sequences)
def test_pruned_tree_is_suffix_closed(seq):
    tree = fit_vlmc(seq, PruneConfig(cutoff=1.0))
    for ctx in tree.nodes:
        assert ctx[1:] in tree or not ctx
    for node in tree.nodes.values():
        assert node.probs.sum() == pytest.approx(1.0)


def test_zero_cutoff_keeps_every_divergent_branch():
    x = np.random.default_rng(0).integers(0, 5, 400)
    full = build_context_tree(x)
    kept = prune_tree(full, PruneConfig(cutoff=0.0))
    assert len(kept) > 100
    assert set(kept.nodes) <= set(full.nodes)


def test_markov_chain_recovers_order_one():
    # strongly persistent first-order chain: depth-1 contexts are all retained
    rng = np.random.default_rng(1)
    x = [0]
    for _ in range(3000):
        x.append(x[-1] if rng.random() < 0.7 else int(rng.integers(0, 5)))
    tree = fit_vlmc(x)
    assert all((s,) in tree for s in range(5))
    assert tree.predict_next([2])[2] == pytest.approx(0.76, abs=0.05)


# prediction -------------------------------------------------------------------

def test_toy_tree_lookups():
    toy = ContextTree.from_distributions(TOY_TREE)
    assert toy.predict_next(["R5", "R1"]).tolist() == list(TOY_TREE["R5R1"])
    assert toy.predict_next(["R2", "R1"]).tolist() == list(TOY_TREE["R1"])
    assert toy.predict_next(["R3"]).tolist() == list(TOY_TREE["R3"])
    assert toy.predict_next(["R4"]).tolist() == list(TOY_TREE[""])
    assert toy.predict_next([]).tolist() == list(TOY_TREE[""])


def test_nya_2008_tree_lookups():
    tree = ContextTree.from_distributions(NYA_2008_TREE)
    assert predict_next(tree, ["R5", "R1"]).tolist() == list(NYA_2008_TREE["R5R1"])
    assert predict_next(tree, ["R2", "R1", "R5"]).tolist() == list(NYA_2008_TREE["R2R1R5"])
    assert predict_next(tree, ["R4", "R1", "R5"]).tolist() == list(NYA_2008_TREE["R1R5"])
    assert predict_next(tree, ["R2"]).tolist() == list(NYA_2008_TREE[""])
    assert tree.depth == 3


def test_json_round_trip():
    x = np.random.default_rng(2).integers(0, 5, 500)
    tree = fit_vlmc(x, PruneConfig(cutoff=2.0))
    tree.meta["ticker"] = "X"
    back = ContextTree.from_json(tree.to_json())
    assert set(back.nodes) == set(tree.nodes)
    for ctx, node in tree.nodes.items():
        assert np.array_equal(back.nodes[ctx].probs, node.probs)
        assert np.array_equal(back.nodes[ctx].next_counts, node.next_counts)
        assert back.nodes[ctx].count == node.count
    assert back.meta == {"ticker": "X"}
    doc = json.loads(tree.to_json())
    assert doc["root"]["context"] == []
    assert all(len(ch["context"]) == 1 for ch in doc["root"]["children"])


def test_simulate_is_reproducible():
    toy = ContextTree.from_distributions(TOY_TREE)
    a = simulate(toy, 300, rng=5)
    assert np.array_equal(a, simulate(toy, 300, rng=5))
    assert a.min() >= 0 and a.max() <= 4


def test_estimator():
    x = np.random.default_rng(3).integers(0, 5, 800)
    est = VLMC(cutoff=2.0, max_depth=3).fit(x)
    assert set(est.tree_.nodes) == set(fit_vlmc(x, PruneConfig(2.0, 3)).nodes)
    proba = est.predict_proba([[0, 1], [4]])
    assert proba.shape == (2, 5)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert est.predict([[0, 1]]).shape == (1,)


def test_prune_config_validation():
    for kwargs in ({"cutoff": -1}, {"max_depth": 0}, {"min_count": 0}):
        with pytest.raises(ValueError):
            PruneConfig(**kwargs)
