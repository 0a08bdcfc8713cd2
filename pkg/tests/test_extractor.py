"""Taint propagation, sink discovery, and constraint lifting."""

import pytest

from opfuzz.constraints import Cmp, Forall, render, tree_equal
from opfuzz.extractor import (
    ExtractionError,
    extract_constraints,
    extract_raw,
    find_sinks,
    propagate_taint,
    seed_sources,
)
from opfuzz.kernel.parser import parse_kernel

from _oracles import reach_taint


def test_taint_matches_reachability_oracle_on_every_kernel(corpus):
    for kid, kern in sorted(corpus.kernels.items()):
        fixpoint = {v: s for v, s in propagate_taint(kern).items() if s}
        closure = reach_taint(kern)
        assert fixpoint == closure, kid


def test_store_feeds_later_loads():
    src = """
kernel K {
  input x : tensor<i64>;
  input buf : tensor<i64>;
  output y : tensor<i64>;
  buf[0] = x[0];
  v = buf[0];
  require v > 0, "positive";
  emit y = buf;
}
"""
    kern = parse_kernel(src)
    taint = propagate_taint(kern)
    sinks = find_sinks(kern)
    assert len(sinks) == 1
    assert sinks[0].params == frozenset({"x", "buf"})
    assert taint == reach_taint(kern) | {
        v: frozenset() for v in taint if not taint[v]
    }


def test_sink_counts_match_manifest(corpus, manifest):
    for kid, want in manifest["kernel_sinks"].items():
        kern = corpus.kernels[kid]
        assert len(find_sinks(kern)) == want, kid


def test_sink_polarity_pass_on_non_failing_branch():
    src = """
kernel K {
  input x : tensor<i64>;
  output y : tensor<i64>;
  require rank(x) == 1, "vector";
  emit y = x;
}
"""
    kern = parse_kernel(src)
    (sink,) = find_sinks(kern)
    term = kern.blocks[sink.block].terminator
    fail_bid = term[3] if sink.pass_on_true else term[2]
    assert kern.blocks[fail_bid].terminator[0] == "require_fail"


def test_untainted_require_is_skipped_and_counted():
    src = """
kernel K {
  input x : tensor<i64>;
  output y : tensor<i64>;
  require 1 == 1, "always";
  require rank(x) == 1, "vector";
  emit y = x;
}
"""
    tree = extract_constraints(parse_kernel(src))
    assert tree.skipped_untainted == 1
    assert len(tree.constraints) == 1


def test_mixed_loop_body_is_skipped_whole():
    src = """
kernel K {
  input x : tensor<i64>;
  output y : tensor<i64>;
  for i in 0..size(x) {
    require x[i] >= 0, "nonnegative";
    if x[i] > 10 {
      emit y = x;
    }
  }
  emit y = x;
}
"""
    tree = extract_constraints(parse_kernel(src))
    assert tree.skipped_mixed_loops == 1
    assert not tree.constraints


def test_all_require_loop_lifts_to_forall():
    src = """
kernel K {
  input x : tensor<i64>;
  output y : tensor<i64>;
  for i in 0..size(x) {
    require x[i] >= 0, "nonnegative";
  }
  emit y = x;
}
"""
    tree = extract_constraints(parse_kernel(src))
    assert len(tree.constraints) == 1
    expr = tree.constraints[0].expr
    assert isinstance(expr, Forall)
    assert render(expr) == "forall i in [0, size(x)): val(x, i) >= 0"


def test_conjunction_splits_into_two_constraints():
    src = """
kernel K {
  attr n : int;
  output y : tensor<i64>;
  require n > 0 and n < 10, "range";
  emit y = n;
}
"""
    tree = extract_constraints(parse_kernel(src))
    rendered = sorted(render(c.expr) for c in tree.constraints)
    assert rendered == ["n < 10", "n > 0"]


def test_disjunction_is_kept_but_unliftable():
    src = """
kernel K {
  attr n : int;
  output y : tensor<i64>;
  require n < 0 or n > 10, "outside";
  emit y = n;
}
"""
    tree = extract_constraints(parse_kernel(src))
    assert len(tree.constraints) == 1
    assert tree.constraints[0].is_unliftable


def test_branch_with_else_negates_guard():
    src = """
kernel K {
  attr n : int;
  input x : tensor<i64>;
  output y : tensor<i64>;
  if n > 0 {
    require rank(x) == 1, "vector when positive";
  } else {
    require rank(x) == 2, "matrix otherwise";
  }
  emit y = x;
}
"""
    tree = extract_constraints(parse_kernel(src))
    guards = sorted(render(b.guard.expr) for b in tree.branches)
    assert guards == ["n <= 0", "n > 0"]


def test_branch_without_sinks_is_transparent():
    src = """
kernel K {
  attr n : int;
  input x : tensor<i64>;
  output y : tensor<i64>;
  if n > 0 {
    v = x[0];
  }
  emit y = x;
}
"""
    tree = extract_constraints(parse_kernel(src))
    assert not tree.branches and not tree.constraints


def test_duplicate_requires_dedup_within_node():
    src = """
kernel K {
  attr n : int;
  output y : tensor<i64>;
  require n > 0, "one";
  require 0 < n, "same thing spelled backwards";
  emit y = n;
}
"""
    tree = extract_constraints(parse_kernel(src))
    assert len(tree.constraints) == 1


def test_undeclared_attr_fetch_raises():
    kern = parse_kernel(
        """
kernel K {
  attr n : int;
  output y : tensor<i64>;
  require n > 0, "positive";
  emit y = n;
}
"""
    )
    for block in kern.blocks:
        for inst in block.instrs:
            if inst.opcode == "get_attr":
                inst.args = ("ghost",)
    with pytest.raises(ExtractionError, match="ghost"):
        seed_sources(kern)


def test_extraction_matches_every_golden_tree(corpus):
    for group in corpus.registry.groups:
        if group.kernel_id is None:
            continue
        golden = corpus.golden_tree(group.name)
        extracted = extract_constraints(corpus.kernels[group.kernel_id])
        assert tree_equal(extracted, golden), group.name


def test_raw_tree_mirrors_region_structure(corpus):
    kern = corpus.kernel_for("BTCBFS")
    raw = extract_raw(kern)
    assert raw.mixed_loops == 0 and raw.untainted_requires == 0
    assert len(raw.root.branches) == 2
    tree = corpus.tree_for("BTCBFS")
    assert len(tree.branches) == 2
    assert any(isinstance(c.expr, Forall) for c in tree.constraints)


def test_guard_expressions_are_cmp_or_unliftable(corpus):
    for name in (g.name for g in corpus.registry.groups if g.kernel_id):
        tree = corpus.golden_tree(name)
        for guard in tree.all_guards():
            assert isinstance(guard.expr, Cmp) or guard.is_unliftable, name
