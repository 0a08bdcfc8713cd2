"""Constraint expressions: evaluation, normalization, text format, ordering."""

import dataclasses
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opfuzz.constraints import (
    Arith,
    AttrRef,
    Cmp,
    Constraint,
    ConstraintTree,
    Dim,
    Forall,
    Lit,
    NEGATE_CMP,
    Ndim,
    Size,
    Val,
    Var,
    classify_constraints,
    evaluate,
    evaluate_tree,
    normal_form,
    normalize,
    params_of,
    parse_constraint,
    parse_tree,
    render,
    serialize_tree,
    toposort_params,
    tree_equal,
)
from opfuzz.kernel.ir import DType, ParamDecl, TensorVal


class FakeSpec:
    def __init__(self, params):
        self.params = params


def attr(name):
    return ParamDecl(name, "attr", DType.INT, "scalar")


def tens(name):
    return ParamDecl(name, "input", DType.DT_INT64, "tensor")


# -- evaluation: hand-computed expected values --

VEC = TensorVal(DType.DT_INT64, (3,), data=[5, -2, 7])


@pytest.mark.parametrize(
    "expr,binding,want",
    [
        (Cmp(">", Ndim("x"), Lit(0)), {"x": VEC}, True),
        (Cmp("==", Size("x"), Lit(3)), {"x": VEC}, True),
        (Cmp("==", Dim("x", 0), Lit(3)), {"x": VEC}, True),
        (Cmp("<", Val("x", (Lit(1),)), Lit(0)), {"x": VEC}, True),
        (Cmp(">=", AttrRef("n"), Lit(2)), {"n": 2}, True),
        (Cmp(">", Arith("+", Lit(2), Lit(2)), Lit(3)), {}, True),
        (Cmp("==", Arith("%", Lit(7), Lit(2)), Lit(1)), {}, True),
        (Cmp("==", Arith("/", Lit(-7), Lit(2)), Lit(-3)), {}, True),
        (Cmp("!=", Lit("a"), Lit("b")), {}, True),
        (Cmp(">", Lit(1), Lit(2)), {}, False),
    ],
)
def test_evaluate_ground_truth(expr, binding, want):
    assert evaluate(expr, binding) is want


@pytest.mark.parametrize(
    "expr,binding",
    [
        # every partial operation degrades to an unsatisfied constraint
        (Cmp("==", Dim("x", 5), Lit(1)), {"x": VEC}),
        (Cmp(">", Val("x", (Lit(9),)), Lit(0)), {"x": VEC}),
        (Cmp("==", Arith("/", AttrRef("n"), Lit(0)), Lit(0)), {"n": 4}),
        (Cmp("==", Arith("%", AttrRef("n"), Lit(0)), Lit(0)), {"n": 4}),
        (Cmp(">", Arith("*", Lit(2**62), Lit(4)), Lit(0)), {}),
        (Cmp(">", Lit("a"), Lit(1)), {}),
        (Cmp(">", Val("x", (Lit(0),)), Lit(0)), {"x": TensorVal(DType.DT_INT64, (-1,), fill=1)}),
    ],
)
def test_evaluate_is_total_and_fails_closed(expr, binding):
    assert evaluate(expr, binding) is False


def test_forall_empty_range_holds():
    body = Cmp(">", Val("x", (Var("i"),)), Lit(100))
    expr = Forall("i", Lit(0), Lit(0), body)
    assert evaluate(expr, {"x": VEC}) is True


def test_forall_checks_each_index():
    body = Cmp(">", Val("x", (Var("i"),)), Lit(0))
    expr = Forall("i", Lit(0), Size("x"), body)
    assert evaluate(expr, {"x": VEC}) is False  # element 1 is negative
    good = TensorVal(DType.DT_INT64, (3,), data=[5, 2, 7])
    assert evaluate(expr, {"x": good}) is True


def test_forall_large_range_matches_explicit_loop_semantics():
    # fill-backed tensor, range too large to walk: hand-derived outcomes
    n = 50_000
    big = TensorVal(DType.DT_INT64, (n,), fill=3)
    body = Cmp(">", Val("x", (Var("i"),)), Lit(0))
    expr = Forall("i", Lit(0), Size("x"), body)
    assert evaluate(expr, {"x": big}) is True
    dented = TensorVal(DType.DT_INT64, (n,), fill=3)
    dented.flat_set(n - 1, -1)
    assert evaluate(expr, {"x": dented}) is False


def test_forall_bounds_short_circuit():
    bad_hi = Forall(
        "i",
        Lit(0),
        Arith("/", Lit(1), Lit(0)),
        Cmp(">", Val("x", (Var("i"),)), Lit(0)),
    )
    assert evaluate(bad_hi, {"x": VEC}) is False


# -- tree evaluation --


def test_guard_gates_branch_children():
    from opfuzz.constraints import LogicalNode

    guard = Constraint(Cmp(">", AttrRef("n"), Lit(0)))
    child = Constraint(Cmp("==", Ndim("x"), Lit(1)))
    tree = ConstraintTree(
        "K", [], [LogicalNode(guard, [child], [])]
    )
    scalar = TensorVal(DType.DT_INT64, (), data=[1])
    vector = TensorVal(DType.DT_INT64, (2,), fill=0)
    assert evaluate_tree(tree, {"n": 1, "x": vector}) is True
    assert evaluate_tree(tree, {"n": 1, "x": scalar}) is False
    # guard false: child does not apply
    assert evaluate_tree(tree, {"n": 0, "x": scalar}) is True


# -- normalization --


@pytest.mark.parametrize(
    "a,b",
    [
        ("3 < n", "n > 3"),
        ("3 <= n", "n >= 3"),
        ("n == size(x)", "size(x) == n"),
        ("n != size(x)", "size(x) != n"),
        ("forall j in [0, size(x)): val(x, j) >= 0", "forall i in [0, size(x)): val(x, i) >= 0"),
    ],
)
def test_normal_forms_identify_spelling_variants(a, b):
    assert normal_form(parse_constraint(a)) == normal_form(parse_constraint(b))


def test_normalization_folds_constants():
    e = Cmp(">", Arith("+", Lit(2), Lit(3)), AttrRef("n"))
    assert render(normalize(e)) == "5 > n"
    assert normal_form(e) == normal_form(parse_constraint("n < 5"))


def test_distinct_constraints_stay_distinct():
    assert normal_form(parse_constraint("n > 3")) != normal_form(parse_constraint("n >= 3"))
    assert normal_form(parse_constraint("size(x) == 1")) != normal_form(
        parse_constraint("size(y) == 1")
    )


def test_negation_table_is_involutive():
    for op, neg in NEGATE_CMP.items():
        assert NEGATE_CMP[neg] == op
        assert neg != op


# -- text format round trips --


def test_render_parse_round_trip_all_corpus_trees(corpus):
    for name, tree in corpus.trees.items():
        text = serialize_tree(tree)
        back = parse_tree(text, tree.kernel_id)
        assert tree_equal(tree, back), name
        # a second trip is byte-stable
        assert serialize_tree(back) == text, name


def test_golden_files_round_trip(corpus):
    for group in corpus.registry.groups:
        golden = corpus.golden_tree(group.name)
        if golden is None:
            continue
        again = parse_tree(serialize_tree(golden), golden.kernel_id)
        assert tree_equal(golden, again), group.name


def test_tree_equal_detects_differences(corpus):
    tree = corpus.tree_for("MatrixDet")
    mutated = ConstraintTree(
        tree.kernel_id,
        tree.constraints[:-1],
        tree.branches,
    )
    assert not tree_equal(tree, mutated)


def test_parse_rejects_garbage():
    with pytest.raises(Exception):
        parse_constraint("ndim(x) ==")


# -- params and ordering --


def test_params_of_walks_all_atom_kinds():
    e = Forall(
        "i",
        Lit(0),
        Size("a"),
        Cmp("<", Val("b", (Var("i"),)), Arith("+", AttrRef("c"), Dim("d", 1))),
    )
    assert params_of(e) == {"a", "b", "c", "d"}


LARM_ORDER = [
    "num_rows",
    "num_cols",
    "max_rows_in_memory",
    "ckpt_path",
    "old_tensor_name",
    "row_remapping",
    "col_remapping",
    "initializing_values",
]


def test_larm_order_is_pinned(corpus):
    spec = corpus.spec_for("LARM")
    assert toposort_params(corpus.tree_for("LARM"), spec) == LARM_ORDER


def test_larm_order_survives_declaration_shuffle(corpus):
    spec = corpus.spec_for("LARM")
    flipped = dataclasses.replace(spec, params=tuple(reversed(spec.params)))
    order = toposort_params(corpus.tree_for("LARM"), flipped)
    pos = {n: i for i, n in enumerate(order)}
    # sources still precede their dependents regardless of declaration order
    assert pos["num_rows"] < pos["row_remapping"]
    assert pos["num_cols"] < pos["col_remapping"]
    assert pos["num_rows"] < pos["initializing_values"]


def test_scalar_divisor_precedes_divided_tensor(corpus):
    order = toposort_params(corpus.tree_for("BTCBFS"), corpus.spec_for("BTCBFS"))
    assert order.index("logits_dimension") < order.index("stats_summary")


def test_every_op_order_is_a_permutation(corpus):
    for spec in corpus.registry.testable:
        order = toposort_params(corpus.tree_for(spec.name), spec)
        assert sorted(order) == sorted(p.name for p in spec.params), spec.name


def test_cycle_falls_back_to_declaration_order(caplog):
    # a * 2 == size(t): the bare tensor side makes the attr depend on the
    # tensor while attr-tensor mixing orders the tensor after the attr
    expr = Cmp("==", Arith("*", AttrRef("a"), Lit(2)), Size("t"))
    tree = ConstraintTree("K", [Constraint(expr)], [])
    spec = FakeSpec([attr("a"), tens("t")])
    with caplog.at_level(logging.WARNING):
        order = toposort_params(tree, spec)
    assert order == ["a", "t"]
    assert any("cycle" in r.message for r in caplog.records)


def test_attrs_come_first_on_ties():
    tree = ConstraintTree("K", [], [])
    spec = FakeSpec([tens("t"), attr("a")])
    assert toposort_params(tree, spec) == ["a", "t"]


# -- taxonomy --


def test_classification_matches_manifest_exactly(corpus, manifest):
    trees = {s.kernel_id: corpus.tree_for(s.name) for s in corpus.registry.testable}
    kernels = {s.kernel_id: corpus.kernel_for(s.name) for s in corpus.registry.testable}
    stats = classify_constraints(trees, kernels, corpus.modes, corpus.dependency_count)
    golden = manifest["taxonomy"]
    out = stats.as_json()
    assert out["by_category"] == {
        "validation": golden["validation"]["total"],
        "logical": golden["logical"],
        "environmental": golden["environmental"],
        "dependency": golden["dependency"],
    }
    assert out["single_param"] == golden["validation"]["singles"]
    assert out["param_pairs"] == golden["validation"]["pairs"]
    assert sum(out["single_param"].values()) + sum(out["param_pairs"].values()) == golden[
        "validation"
    ]["total"]


def test_dependency_count_parts(corpus, manifest):
    # one fixture file, two sequences, five wired resource parameters
    assert len(corpus.fixtures) == 1
    assert len(corpus.sequences) == 2
    wired = sum(
        1
        for seq in corpus.sequences
        for op in seq.ops
        for p in corpus.spec_for(op).params
        if p.container == "resource"
    )
    assert wired == 5
    assert corpus.dependency_count == 8
    assert manifest["taxonomy"]["dependency"] == 8


# -- property: normalization preserves meaning --

_PARAMS = ("n", "m")


def _exprs():
    atoms = st.one_of(
        st.integers(-5, 5).map(Lit),
        st.sampled_from(_PARAMS).map(AttrRef),
    )

    def extend(children):
        return st.builds(
            Arith,
            st.sampled_from(["+", "-", "*", "/", "%"]),
            children,
            children,
        )

    values = st.recursive(atoms, extend, max_leaves=6)
    return st.builds(Cmp, st.sampled_from(list(NEGATE_CMP)), values, values)


@given(expr=_exprs(), n=st.integers(-4, 4), m=st.integers(-4, 4))
@settings(max_examples=300, deadline=None)
def test_normalize_preserves_evaluation(expr, n, m):
    binding = {"n": n, "m": m}
    assert evaluate(normalize(expr), binding) == evaluate(expr, binding)


@given(expr=_exprs())
@settings(max_examples=300, deadline=None)
def test_normalize_is_idempotent(expr):
    once = normalize(expr)
    assert normal_form(once) == normal_form(normalize(once))
