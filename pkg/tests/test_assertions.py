from __future__ import annotations

from itertools import combinations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cslv.assertions import (
    NO_PREDICATES,
    PredicateDef,
    PredicateTable,
    UnfoldingBudgetExceeded,
    UnknownResource,
    check_precise,
    entails,
    eval_guard,
    eval_term,
    evaluator,
    inv,
    inv_subset,
    sat,
    sat_store_insensitive_check,
)
from cslv.ast import (
    EMP,
    And,
    BinOp,
    Emp,
    Eq,
    Forall,
    Lt,
    Not,
    Null,
    Num,
    PointsTo,
    PredCall,
    Pure,
    ResourceContext,
    ResourceEntry,
    Star,
    Var,
    a_exists,
    a_or,
    free_vars,
)
from cslv.parser import parse_assertion, parse_program
from cslv.state import Heap, heaps_over, make_bounds

STACK_SRC = "pred stack(z) := (z = null /\\ emp) \\/ exists a, b. z |-> a, b * stack(b)\n"
STACK = parse_program(STACK_SRC + "var z\n").preds
S_TEXT = "((p = 0 /\\ q = 0) \\/ (p = 1 /\\ q = 0) \\/ (p = 0 /\\ q = 1)) /\\ emp"
S = parse_assertion(S_TEXT)
B = make_bounds()
TINY = make_bounds(int_range=(0, 1), n_locations=2)


# ---------------------------------------------------------------------------
# Reference semantics: direct transcription of the satisfaction relation,
# every star split tried, every quantifier value tried, no memo or pruning.
# ---------------------------------------------------------------------------


def _subdomains(h):
    locs = sorted(h)
    for k in range(len(locs) + 1):
        for c in combinations(locs, k):
            yield frozenset(c)


def ref_sat(s, h, p, bounds, preds, depth=0, budget=None):
    if budget is None:
        budget = len(h) + 1
    if isinstance(p, Pure):
        return eval_guard(p.cond, s)
    if isinstance(p, Emp):
        return not h
    if isinstance(p, PointsTo):
        base = eval_term(p.addr, s)
        if type(base) is not int:
            return False
        cells = {}
        for i, e in enumerate(p.values):
            v = eval_term(e, s)
            if v is not None and type(v) is not int:
                return False
            cells[base + i] = v
        return len(cells) == len(p.values) and dict(h) == cells
    if isinstance(p, Star):
        for d in _subdomains(h):
            h1 = {l: h[l] for l in d}
            h2 = {l: v for l, v in h.items() if l not in d}
            if ref_sat(s, h1, p.left, bounds, preds, depth, budget) and ref_sat(
                s, h2, p.right, bounds, preds, depth, budget
            ):
                return True
        return False
    if isinstance(p, Not):
        return not ref_sat(s, h, p.arg, bounds, preds, depth, budget)
    if isinstance(p, And):
        return ref_sat(s, h, p.left, bounds, preds, depth, budget) and ref_sat(
            s, h, p.right, bounds, preds, depth, budget
        )
    if isinstance(p, Forall):
        return all(
            ref_sat({**s, p.var: v}, h, p.body, bounds, preds, depth, budget)
            for v in bounds.quantifier_values
        )
    assert isinstance(p, PredCall)
    if depth + 1 > budget:
        raise UnfoldingBudgetExceeded(p.name)
    d = preds[p.name]
    env = dict(zip(d.params, (eval_term(a, s) for a in p.args)))
    return ref_sat(env, h, d.body, bounds, preds, depth + 1, budget)


def ref_sub(s, h, p, bounds, preds):
    return {d for d in _subdomains(h) if ref_sat(s, {l: h[l] for l in d}, p, bounds, preds)}


def ref_models(s, p, bounds, preds):
    return {
        frozenset(g.items())
        for g in heaps_over(bounds.locations, bounds.quantifier_values, bounds.max_heap_cells)
        if ref_sat(s, g, p, bounds, preds)
    }


# ---------------------------------------------------------------------------
# Random assertions over two program variables and two locations
# ---------------------------------------------------------------------------

PROG_VARS = ("x", "y")
BOUND_VARS = ("a", "b")
VALUES = TINY.quantifier_values
CELL = PredicateTable([PredicateDef("cell", ("v",), parse_assertion("v |-> 0"))])
PREDS = PredicateTable([STACK["stack"], CELL["cell"]])


def exprs(names):
    leaf = st.one_of(
        st.sampled_from([Var(n) for n in names]),
        st.sampled_from([Num(0), Num(1), Num(10), Num(11)]),
        st.just(Null()),
    )
    return st.one_of(leaf, st.builds(BinOp, st.sampled_from("+-"), leaf, st.just(Num(1))))


def assertions(names=PROG_VARS, depth=3):
    e = exprs(names)
    atoms = st.one_of(
        st.builds(lambda a, b: Pure(Eq(a, b)), e, e),
        st.builds(lambda a, b: Pure(Lt(a, b)), e, e),
        st.just(EMP),
        st.builds(lambda a, v: PointsTo(a, (v,)), e, e),
        st.builds(lambda a, v, w: PointsTo(a, (v, w)), e, e, e),
        st.builds(lambda a: PredCall("stack", (a,)), e),
        st.builds(lambda a: PredCall("cell", (a,)), e),
    )
    if depth == 0:
        return atoms
    sub = assertions(names, depth - 1)
    bound = [n for n in BOUND_VARS if n not in names][:1]
    options = [
        atoms,
        st.builds(Star, sub, sub),
        st.builds(And, sub, sub),
        st.builds(Not, sub),
        st.builds(a_or, sub, sub),
    ]
    if bound:
        v = bound[0]
        inner = assertions(names + (v,), depth - 1)
        options.append(st.builds(lambda b: a_exists(v, b), inner))
        options.append(st.builds(lambda b: Forall(v, b), inner))
    return st.one_of(*options)


stores = st.fixed_dictionaries({x: st.sampled_from(VALUES) for x in PROG_VARS})
heaps = st.dictionaries(st.sampled_from(TINY.locations), st.sampled_from(VALUES), max_size=2)

FAST = settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def _both(fn_ref, fn_impl):
    try:
        expected = fn_ref()
    except UnfoldingBudgetExceeded:
        return None, None
    return expected, fn_impl()


@FAST
@given(assertions(), stores, heaps)
def test_compiled_sat_matches_reference(p, s, h):
    expected, got = _both(
        lambda: ref_sat(s, h, p, TINY, PREDS), lambda: evaluator(TINY, PREDS).sat(s, h, p)
    )
    assert got == expected


@FAST
@given(assertions(), stores, heaps)
def test_satisfying_subheaps_match_reference(p, s, h):
    expected, got = _both(
        lambda: ref_sub(s, h, p, TINY, PREDS),
        lambda: {g.domain() for g in evaluator(TINY, PREDS).satisfying_subheaps(s, h, p)},
    )
    assert got == expected


@settings(max_examples=120, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(assertions(depth=2), stores)
def test_models_match_reference(p, s):
    expected, got = _both(
        lambda: ref_models(s, p, TINY, PREDS),
        lambda: {frozenset(g.items()) for g in evaluator(TINY, PREDS).models(s, p)},
    )
    assert got == expected


# ---------------------------------------------------------------------------
# Algebraic laws
# ---------------------------------------------------------------------------


@FAST
@given(assertions(depth=2), assertions(depth=2), stores, heaps)
def test_star_commutes(p, q, s, h):
    ev = evaluator(TINY, PREDS)
    assert ev.sat(s, h, Star(p, q)) == ev.sat(s, h, Star(q, p))


@settings(max_examples=150, deadline=None)
@given(assertions(depth=1), assertions(depth=1), assertions(depth=1), stores, heaps)
def test_star_associates(p, q, r, s, h):
    ev = evaluator(TINY, PREDS)
    assert ev.sat(s, h, Star(Star(p, q), r)) == ev.sat(s, h, Star(p, Star(q, r)))


@FAST
@given(assertions(), stores, heaps)
def test_emp_is_unit(p, s, h):
    ev = evaluator(TINY, PREDS)
    assert ev.sat(s, h, Star(p, EMP)) == ev.sat(s, h, p)


@FAST
@given(assertions(), stores, stores, heaps)
def test_satisfaction_depends_only_on_free_variables(p, s, noise, h):
    s2 = {x: (s[x] if x in free_vars(p) else noise[x]) for x in PROG_VARS}
    s2["w"] = 1
    assert sat_store_insensitive_check(p, s, s2, h, TINY, PREDS)


def test_store_insensitivity_rejects_disagreeing_stores():
    with pytest.raises(ValueError):
        sat_store_insensitive_check(parse_assertion("p = 0"), {"p": 0}, {"p": 1}, {}, B)


# ---------------------------------------------------------------------------
# Goldens
# ---------------------------------------------------------------------------


def test_semaphore_invariant():
    assert sat({"p": 1, "q": 0}, {}, S, B)
    assert not sat({"p": 1, "q": 1}, {}, S, B)
    assert not sat({"p": 0, "q": 0}, {10: 0}, S, B)


def test_stack_base_case():
    assert sat({"z": None}, {}, PredCall("stack", (Var("z"),)), B, STACK)


def test_stack_one_and_two_nodes():
    one = PredCall("stack", (Var("z"),))
    assert sat({"z": 10}, {10: 0, 11: None}, one, B, STACK)
    assert sat({"z": 10}, {10: 0, 11: 12, 12: 1, 13: None}, one, B, STACK)
    assert not sat({"z": 10}, {10: 0, 11: 12}, one, B, STACK)
    assert not sat({"z": 10}, {10: 0, 11: 10}, one, B, STACK)


def test_points_to_chain_desugars():
    p = parse_assertion("x |-> 1, 2")
    assert sat({"x": 10}, {10: 1, 11: 2}, p, B)
    assert not sat({"x": 10}, {10: 1}, p, B)
    assert not sat({"x": None}, {}, p, B)


def test_pure_star_is_not_conjunction():
    # true * emp holds on any heap: the pure side takes the whole heap
    assert sat({}, {10: 0}, parse_assertion("true * emp"), B)
    assert not sat({}, {10: 0}, parse_assertion("true /\\ emp"), B)


def test_check_precise():
    assert check_precise(EMP, B)
    assert check_precise(S, B)
    report = check_precise(parse_assertion("true"), B)
    assert not report
    _, h, h1, h2 = report.witness
    assert h1 != h2 and len(h) >= 1


def test_check_precise_reference():
    # brute force: at most one satisfying subheap of every bounded heap
    for text, expected in [("x |-> 0", True), ("exists a. x |-> a", True),
                           ("(exists a. x |-> a) \\/ emp", False), ("x = 0", False)]:
        p = parse_assertion(text)
        brute = all(
            len(ref_sub(s, h, p, TINY, NO_PREDICATES)) <= 1
            for s in ({"x": v} for v in VALUES)
            for h in heaps_over(TINY.locations, VALUES, 2)
        )
        assert brute == expected
        assert bool(check_precise(p, TINY)) == expected


def test_stack_is_precise():
    assert check_precise(PredCall("stack", (Var("z"),)), make_bounds(n_locations=4), STACK)


def test_entails():
    p = parse_assertion("x = 1 /\\ emp")
    assert entails(p, p, B)
    assert entails(p, parse_assertion("(x = 1 \\/ x = 2) /\\ emp"), B)
    report = entails(EMP, parse_assertion("10 |-> 1"), B)
    assert not report
    assert report.counterexample[1] == Heap()


def test_inv_subset():
    ctx = ResourceContext(
        (
            ResourceEntry("se", frozenset({"p", "q"}), S),
            ResourceEntry("r", frozenset({"x"}), parse_assertion("x |-> 0")),
        )
    )
    assert inv_subset(ctx, set()) == EMP
    assert inv_subset(ctx, {"se"}) == S
    assert inv_subset(ctx, {"se", "r"}) == inv(ctx)
    assert inv(ctx) == Star(S, parse_assertion("x |-> 0"))
    with pytest.raises(UnknownResource):
        inv_subset(ctx, {"nope"})


def test_unfolding_budget_exceeded_on_ill_founded_predicate():
    loop = PredicateTable([PredicateDef("loop", ("v",), PredCall("loop", (Var("v"),)))])
    with pytest.raises(UnfoldingBudgetExceeded):
        sat({"x": 0}, {}, PredCall("loop", (Var("x"),)), B, loop)


def test_quantifiers_range_over_bounded_values():
    assert sat({}, {}, parse_assertion("forall a. a < 3 \\/ a = null \\/ 9 < a"), B)
    assert sat({}, {}, parse_assertion("exists a. a = 17"), B)
    assert not sat({}, {}, parse_assertion("exists a. a = 18"), B)
