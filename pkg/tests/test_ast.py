from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cslv.ast import (
    SKIP,
    InvalidContext,
    InvalidRename,
    NotAuxiliary,
    ResourceContext,
    ResourceEntry,
    Skip,
    Var,
    alpha_equal,
    chng_vars,
    count_aux_assignments,
    erase_aux,
    free_vars,
    is_aux_set,
    locked,
    mod_vars,
    rename_resource,
    res_names,
    subcommands,
)
from cslv.parser import parse_assertion, parse_command, parse_expr
from cslv.sos import step
from cslv.state import Heap, MachineState, ResourceConfiguration, Store, make_bounds
from strategies import RES, VARS, commands

S = parse_assertion("((p = 0 /\\ q = 0) \\/ (p = 1 /\\ q = 0) \\/ (p = 0 /\\ q = 1)) /\\ emp")
POP = "with st when ~(z = null) do (y := z; x1 := y; z := [y + 1]; dispose(y + 1))"
PUSH = "with st when true do (y := cons(x2, z); z := y)"


# ---------------------------------------------------------------------------
# Free variables
# ---------------------------------------------------------------------------


def test_free_vars():
    assert free_vars(parse_expr("x + 2")) == {"x"}
    assert free_vars(parse_assertion("forall x. x = y")) == {"y"}
    assert free_vars(S) == {"p", "q"}
    assert free_vars(parse_assertion("exists a, b. z |-> a, b")) == {"z"}
    assert free_vars(parse_command("with r when x = 0 do y := [z]")) == {"x", "y", "z"}


# ---------------------------------------------------------------------------
# mod, Res, Locked, chng
# ---------------------------------------------------------------------------


def test_mod_vars():
    assert mod_vars(SKIP) == frozenset()
    assert mod_vars(parse_command(f"{POP}; dispose(x1)")) == {"x1", "y", "z"}
    assert mod_vars(parse_command(PUSH)) == {"y", "z"}
    assert mod_vars(parse_command("[x] := 1; dispose(y)")) == frozenset()


def test_res_names():
    assert res_names(SKIP) == frozenset()
    assert res_names(parse_command("with se when q = 0 do p := 1")) == {"se"}
    assert res_names(parse_command("res r. within r do skip")) == {"r"}


def test_locked():
    assert locked(parse_command("within r do skip")) == {"r"}
    assert locked(parse_command("res r. within r do skip")) == frozenset()
    assert locked(parse_command("within r do skip || within t do skip")) == {"r", "t"}
    assert locked(parse_command("x := 1; within r do skip")) == frozenset()
    assert locked(parse_command("with r when true do skip")) == frozenset()


def test_chng_vars():
    assert chng_vars(parse_command("x := 1")) == {"x"}
    assert chng_vars(parse_command("x := 1; y := 2")) == {"x"}
    assert chng_vars(SKIP) == frozenset()
    assert chng_vars(parse_command("x := 1 || y := [z]")) == {"x", "y"}
    assert chng_vars(parse_command("while true do x := 1")) == frozenset()
    assert chng_vars(parse_command("with r when true do x := 1")) == frozenset()
    assert chng_vars(parse_command("within r do x := 1")) == {"x"}


BOUNDS = make_bounds(int_range=(-1, 1), n_locations=3)
stores = st.fixed_dictionaries({v: st.sampled_from(BOUNDS.quantifier_values) for v in VARS})
heaps = st.dictionaries(st.sampled_from(BOUNDS.locations), st.sampled_from(BOUNDS.quantifier_values),
                        max_size=3)
configs = st.lists(st.sampled_from(("O", "L", "D", "-")), min_size=2, max_size=2).map(
    lambda parts: ResourceConfiguration(
        *(frozenset(r for r, p in zip(RES, parts) if p == k) for k in "OLD")
    )
)


@settings(max_examples=300, deadline=None)
@given(commands(), stores, heaps, configs)
def test_chng_covers_every_store_write_of_one_step(c, s, h, rho):
    sigma = MachineState(Store(s), Heap(h), rho)
    for t in step(c, sigma, BOUNDS).successors:
        changed = {x for x in VARS if t.state.store[x] != s[x]}
        assert changed <= chng_vars(c)


@settings(max_examples=300, deadline=None)
@given(commands())
def test_chng_within_mod(c):
    assert chng_vars(c) <= mod_vars(c)


@settings(max_examples=200, deadline=None)
@given(commands())
def test_syntactic_functions_are_deterministic(c):
    for fn in (free_vars, mod_vars, res_names, locked, chng_vars):
        assert fn(c) == fn(c)


# ---------------------------------------------------------------------------
# Renaming
# ---------------------------------------------------------------------------


def test_rename_resource():
    c = parse_command("with r when x = 0 do within r do skip")
    assert rename_resource(c, "r", "u") == parse_command("with u when x = 0 do within u do skip")
    assert rename_resource(SKIP, "r", "u") == SKIP
    with pytest.raises(InvalidRename):
        rename_resource(parse_command("with r when true do with u when true do skip"), "r", "u")


@settings(max_examples=300, deadline=None)
@given(commands())
def test_rename_round_trip(c):
    if "u" in res_names(c):
        return
    assert rename_resource(rename_resource(c, "r", "u"), "u", "r") == c


# ---------------------------------------------------------------------------
# Auxiliary variables
# ---------------------------------------------------------------------------


def test_is_aux_set():
    assert is_aux_set(parse_command("a := a + 1; x := 1"), {"a"})
    assert not is_aux_set(parse_command("x := a"), {"a"})
    assert not is_aux_set(parse_command("if a = 0 then skip else skip"), {"a"})
    assert not is_aux_set(parse_command("a := [x]"), {"a"})
    assert is_aux_set(parse_command("x := [y]"), set())


def test_erase_aux():
    assert erase_aux(parse_command("a := 1; x := 2"), {"a"}) == parse_command("skip; x := 2")
    c = parse_command("x := 1 || y := 2")
    assert erase_aux(c, set()) == c
    with pytest.raises(NotAuxiliary):
        erase_aux(parse_command("x := a"), {"a"})


@settings(max_examples=300, deadline=None)
@given(commands(), st.sets(st.sampled_from(VARS), min_size=1))
def test_erase_replaces_each_aux_assignment_by_skip(c, xs):
    if not is_aux_set(c, xs):
        return
    erased = erase_aux(c, xs)
    skips = lambda d: sum(isinstance(s, Skip) for s in subcommands(d))
    assert skips(erased) - skips(c) == count_aux_assignments(c, xs)
    assert count_aux_assignments(erased, xs) == 0
    assert locked(erased) == locked(c)


# ---------------------------------------------------------------------------
# Resource contexts and alpha-equivalence
# ---------------------------------------------------------------------------


def test_context_rejects_duplicates_and_unprotected_variables():
    with pytest.raises(InvalidContext):
        ResourceContext((ResourceEntry("r", frozenset(), parse_assertion("emp")),) * 2)
    with pytest.raises(InvalidContext):
        ResourceContext((ResourceEntry("r", frozenset({"p"}), S),))


def test_context_pv():
    ctx = ResourceContext(
        (ResourceEntry("se", frozenset({"p", "q"}), S), ResourceEntry("r", frozenset({"x"}), parse_assertion("emp")))
    )
    assert ctx.pv() == {"p", "q", "x"}
    assert ctx.pv(["r"]) == {"x"}
    assert ctx.pv(["nope"]) == frozenset()


def test_alpha_equal():
    assert alpha_equal(parse_assertion("exists a. x |-> a"), parse_assertion("exists b. x |-> b"))
    assert not alpha_equal(parse_assertion("exists a. x |-> a"), parse_assertion("exists a. y |-> a"))
    assert Var("x") == Var("x")
