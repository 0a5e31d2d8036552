from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cslv.ast import EMPTY_CONTEXT, ResourceContext, ResourceEntry
from cslv.parser import parse_assertion, parse_command, parse_file, parse_program
from cslv.proof import CSL, DCSL, Judgment, check_derivation, check_sl_triple, check_wellformed
from cslv.state import make_bounds

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
B = make_bounds()
S = parse_assertion("((p = 0 /\\ q = 0) \\/ (p = 1 /\\ q = 0) \\/ (p = 0 /\\ q = 1)) /\\ emp")

HEADER = """
var x, y, z, a
resource r(x) : emp
resource u(y) : y |-> 0
"""


def check(text: str, mode: str = CSL, name: str = "d"):
    prog = parse_program(HEADER + f"derivation {name} :=\n" + text)
    return check_derivation(prog.derivations[name], mode, B, prog.preds, prog.domains)


def failed_conditions(report) -> set[str]:
    return {f.condition for _, f in report.failures()}


# ---------------------------------------------------------------------------
# Corpus derivations
# ---------------------------------------------------------------------------


def _corpus(name):
    prog = parse_file(str(CORPUS / name))
    return prog, {
        n: (lambda d=d, mode=CSL, bounds=B: check_derivation(d, mode, bounds, prog.preds, prog.domains))
        for n, d in prog.derivations.items()
    }


def test_semaphore_derivations_accepted():
    _, checks = _corpus("semaphore.deriv")
    assert set(checks) == {"P_p", "V_p", "P_q", "V_q", "semaphore_par"}
    for name, run in checks.items():
        assert run().accepted, name


def test_stack_par_rejected_by_dcsl_with_overlap_y_z():
    _, checks = _corpus("stack_par.deriv")
    report = checks["stack_par"](mode=DCSL)
    assert not report.accepted
    ((node, failure),) = report.failures()
    assert node.rule == "PAR" and failure.condition == "par-interference"
    assert failure.detail.endswith("overlap {y, z}")


def test_stack_par_accepted_by_csl():
    _, checks = _corpus("stack_par.deriv")
    for name, run in checks.items():
        assert run().accepted, name


def test_stack_par_accepted_with_larger_heap_cap():
    _, checks = _corpus("stack_par.deriv")
    assert checks["stack_par"](bounds=make_bounds(max_heap_cells=4)).accepted


def test_race_rejected():
    _, checks = _corpus("race.deriv")
    report = checks["race"]()
    assert failed_conditions(report) == {"par-interference"}
    assert report.failures()[0][1].detail.endswith("overlap {x}")


def test_report_is_deterministic():
    _, checks = _corpus("stack_par.deriv")
    assert checks["stack_par"](mode=DCSL).json_lines("s") == checks["stack_par"](mode=DCSL).json_lines("s")


# ---------------------------------------------------------------------------
# Basic-command triples and well-formedness
# ---------------------------------------------------------------------------


def test_sl_triples():
    a = parse_assertion
    assert check_sl_triple(a("emp"), parse_command("x := cons(1)"), a("x |-> 1"), B)
    rep = check_sl_triple(a("emp"), parse_command("dispose(x)"), a("emp"), B)
    assert not rep and "aborts" in rep.detail and rep.counterexample
    assert check_sl_triple(
        a("q = 0 /\\ emp"), parse_command("p := 1"), a("p = 1 /\\ q = 0 /\\ emp"), B
    )
    assert not check_sl_triple(a("emp"), parse_command("x := 1"), a("x = 2 /\\ emp"), B)


def test_wellformed():
    ctx = ResourceContext((ResourceEntry("se", frozenset({"p", "q"}), S),))
    ok = Judgment(ctx, frozenset(), parse_assertion("emp"),
                  parse_command("with se when q = 0 do p := 1"), parse_assertion("emp"))
    assert check_wellformed(ok) == []
    bad_cmd = Judgment(EMPTY_CONTEXT, frozenset(), parse_assertion("emp"),
                       parse_command("x := 1"), parse_assertion("emp"))
    assert len(check_wellformed(bad_cmd)) == 1
    bad_pre = Judgment(EMPTY_CONTEXT, frozenset(), parse_assertion("x = 0"),
                       parse_command("skip"), parse_assertion("emp"))
    assert len(check_wellformed(bad_pre)) == 1


# ---------------------------------------------------------------------------
# One accepted and one rejected instance per rule
# ---------------------------------------------------------------------------

RULE_CASES = {
    "SKP": (
        "(SKP [] {x} {x = 0} skip {x = 0})",
        "(SKP [] {x} {x = 0} skip {x = 1})",
        "pre-equals-post",
    ),
    "SEQ": (
        "(SEQ [] {x} {emp} x := 1; x := 2 {x = 2 /\\ emp}"
        " (BC [] {x} {emp} x := 1 {emp}) (BC [] {x} {emp} x := 2 {x = 2 /\\ emp}))",
        "(SEQ [] {x} {emp} x := 1; x := 2 {x = 2 /\\ emp}"
        " (BC [] {x} {emp} x := 1 {x = 1 /\\ emp}) (BC [] {x} {emp} x := 2 {x = 2 /\\ emp}))",
        "mid-assertion",
    ),
    "BC": (
        "(BC [] {x} {emp} x := cons(1) {x |-> 1})",
        "(BC [] {x} {emp} dispose(x) {emp})",
        "sl-triple",
    ),
    "FRA": (
        "(FRA [] {x, y} {emp * y = 0} x := 1 {(x = 1 /\\ emp) * y = 0}"
        " (BC [] {x} {emp} x := 1 {x = 1 /\\ emp}))",
        "(FRA [] {x} {emp * x = 0} x := 1 {(x = 1 /\\ emp) * x = 0}"
        " (BC [] {x} {emp} x := 1 {x = 1 /\\ emp}))",
        "mod-frame",
    ),
    "LP": (
        "(LP [] {x} {emp} while x = 0 do x := 1 {emp /\\ ~(x = 0)}"
        " (BC [] {x} {emp /\\ x = 0} x := 1 {emp}))",
        "(LP [] {x} {emp} while x = 0 do x := 1 {emp}"
        " (BC [] {x} {emp /\\ x = 0} x := 1 {emp}))",
        "loop-exit",
    ),
    "CONJ": (
        "(CONJ [] {x} {emp /\\ emp} x := 1 {x = 1 /\\ emp /\\ emp}"
        " (BC [] {x} {emp} x := 1 {x = 1 /\\ emp}) (BC [] {x} {emp} x := 1 {emp}))",
        "(CONJ [] {x} {emp /\\ emp} x := 1 {emp /\\ emp}"
        " (BC [] {x} {emp} x := 1 {x = 1 /\\ emp}) (BC [] {x} {emp} x := 1 {emp}))",
        "post",
    ),
    "IF": (
        "(IF [] {x} {emp} if x = 0 then x := 1 else x := 0 {emp}"
        " (BC [] {x} {emp /\\ x = 0} x := 1 {emp}) (BC [] {x} {emp /\\ ~(x = 0)} x := 0 {emp}))",
        "(IF [] {x} {emp} if x = 0 then x := 1 else x := 0 {emp}"
        " (BC [] {x} {emp} x := 1 {emp}) (BC [] {x} {emp /\\ ~(x = 0)} x := 0 {emp}))",
        "then-pre",
    ),
    "CONS": (
        "(CONS [] {x} {x = 0 /\\ emp} x := 1 {emp} (BC [] {x} {emp} x := 1 {emp}))",
        "(CONS [] {x} {emp} x := 1 {emp} (BC [] {x} {x = 0 /\\ emp} x := 1 {emp}))",
        "strengthen-pre",
    ),
    "AUX": (
        "(AUX {a} [] {x} {emp} x := 1; skip {emp}"
        " (SEQ [] {x, a} {emp} x := 1; a := 1 {emp}"
        "  (BC [] {x} {emp} x := 1 {emp}) (BC [] {a} {emp} a := 1 {emp})))",
        "(AUX {a} [] {x, a} {a = 0 /\\ emp} x := 1; skip {a = 0 /\\ emp}"
        " (SEQ [] {x, a} {a = 0 /\\ emp} x := 1; a := a + 0 {a = 0 /\\ emp}"
        "  (BC [] {x, a} {a = 0 /\\ emp} x := 1 {a = 0 /\\ emp})"
        "  (BC [] {a} {a = 0 /\\ emp} a := a + 0 {a = 0 /\\ emp})))",
        "aux-free",
    ),
    "REN": (
        "(REN r -> t [] {} {emp * emp} res r. skip {emp * emp}"
        " (RES [] {} {emp * emp} res t. skip {emp * emp}"
        " (SKP [t(): emp] {} {emp} skip {emp})))",
        "(REN r -> t [] {} {emp} res r. res t. skip {emp} (RES [] {} {emp} res t. res t. skip {emp}"
        " (RES [t(): emp] {} {emp} res t. skip {emp} (SKP [t(): emp] {} {emp} skip {emp}))))",
        "fresh-name",
    ),
    "PAR": (
        "(PAR [] {x, y} {emp * emp} x := 1 || y := 1 {emp * emp}"
        " (BC [] {x} {emp} x := 1 {emp}) (BC [] {y} {emp} y := 1 {emp}))",
        "(PAR [] {x} {emp * emp} x := 1 || x := 2 {emp * emp}"
        " (BC [] {x} {emp} x := 1 {emp}) (BC [] {x} {emp} x := 2 {emp}))",
        "par-interference",
    ),
    "CR": (
        "(CR [r] {} {emp} with r when true do x := 1 {emp}"
        " (BC [] {x} {(emp /\\ true) * emp} x := 1 {emp * emp}))",
        "(CR [w(x): x = 0] {} {emp} with w when true do x := 0 {emp}"
        " (BC [] {x} {(emp /\\ true) * x = 0} x := 0 {emp * x = 0}))",
        "precise",
    ),
    "RES": (
        "(RES [] {y} {emp * y |-> 0} res u. skip {emp * y |-> 0}"
        " (SKP [u] {} {emp} skip {emp}))",
        "(RES [] {} {emp * y |-> 0} res u. skip {emp * y |-> 0}"
        " (SKP [u] {} {emp} skip {emp}))",
        "rely-protected",
    ),
}


@pytest.mark.parametrize("rule", sorted(RULE_CASES))
def test_rule_accepts_valid_instance(rule):
    good, _, _ = RULE_CASES[rule]
    report = check(good)
    assert report.accepted, report.human()


@pytest.mark.parametrize("rule", sorted(RULE_CASES))
def test_rule_rejects_broken_instance(rule):
    _, bad, condition = RULE_CASES[rule]
    report = check(bad)
    assert condition in failed_conditions(report), report.human()


# ---------------------------------------------------------------------------
# DCSL acceptance implies CSL acceptance once rely sets are the free variables
# ---------------------------------------------------------------------------

atoms = st.sampled_from(["x", "y", "z", "0", "1"])


@settings(max_examples=150, deadline=None)
@given(st.sampled_from("xyz"), atoms, st.sampled_from("xyz"), atoms)
def test_dcsl_acceptance_implies_csl(x1, e1, x2, e2):
    def fv(*names):
        return "{" + ", ".join(sorted({n for n in names if n.isalpha()})) + "}"

    a1, a2 = fv(x1, e1), fv(x2, e2)
    both = fv(x1, e1, x2, e2)
    text = (
        f"(PAR [] {both} {{emp * emp}} {x1} := {e1} || {x2} := {e2} {{emp * emp}}"
        f" (BC [] {a1} {{emp}} {x1} := {e1} {{emp}}) (BC [] {a2} {{emp}} {x2} := {e2} {{emp}}))"
    )
    if check(text, DCSL).accepted:
        assert check(text, CSL).accepted
