"""Derivation trees and their checker.

Every node is checked locally: structural shape against its premises, rely-set
bookkeeping, side conditions, and the semantic obligations (basic-command
triples, consequence entailments, precision of introduced invariants) decided
over bounded domains.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Optional

from .assertions import (
    NO_PREDICATES,
    PredicateTable,
    check_precise,
    entails,
    enumerate_stores,
    evaluator,
)
from .ast import (
    And,
    Assertion,
    Assign,
    Command,
    Cons,
    Dispose,
    Load,
    Store as StoreCmd,
    If,
    Not,
    Par,
    Res,
    ResourceContext,
    Seq,
    Skip,
    Star,
    While,
    With,
    alpha_equal,
    erase_aux,
    free_vars,
    is_aux_set,
    is_basic,
    lift_bool,
    mod_vars,
    rename_resource,
    res_names,
    show_assertion,
    show_cmd,
    show_vars,
)
from .state import DomainBounds, Heap, Store, Value

ARITY = {
    "SKP": 0,
    "BC": 0,
    "SEQ": 2,
    "FRA": 1,
    "LP": 1,
    "CONJ": 2,
    "IF": 2,
    "CONS": 1,
    "AUX": 1,
    "REN": 1,
    "PAR": 2,
    "CR": 1,
    "RES": 1,
}

CSL = "csl"
DCSL = "dcsl"


@dataclass(frozen=True)
class Judgment:
    context: ResourceContext
    rely: frozenset[str]
    pre: Assertion
    command: Command
    post: Assertion

    def free_vars(self) -> frozenset[str]:
        return free_vars(self.pre) | free_vars(self.command) | free_vars(self.post)


@dataclass(frozen=True)
class Derivation:
    rule: str
    conclusion: Judgment
    premises: tuple[Derivation, ...] = ()
    data: object = None  # AUX: frozenset of names; REN: (old, new)
    origin: str = ""  # source position, for reports

    def __post_init__(self) -> None:
        if self.rule not in ARITY:
            raise ValueError(f"unknown rule {self.rule}")
        if len(self.premises) != ARITY[self.rule]:
            raise ValueError(f"rule {self.rule} takes {ARITY[self.rule]} premises")

    def nodes(self, path: str = "root") -> Iterable[tuple[str, Derivation]]:
        yield path, self
        for i, p in enumerate(self.premises):
            yield from p.nodes(f"{path}.{i}")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Failure:
    condition: str
    detail: str
    counterexample: Optional[str] = None

    def to_json(self) -> dict:
        out = {"condition": self.condition, "detail": self.detail}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out


@dataclass
class NodeResult:
    path: str
    rule: str
    origin: str
    failures: list[Failure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "node": self.path,
            "rule": self.rule,
            "ok": self.ok,
            "failures": [f.to_json() for f in self.failures],
        }


@dataclass
class CheckReport:
    mode: str
    bounds: DomainBounds
    nodes: list[NodeResult]

    @property
    def accepted(self) -> bool:
        return all(n.ok for n in self.nodes)

    @property
    def verdict(self) -> str:
        return "accept" if self.accepted else "reject"

    def failures(self) -> list[tuple[NodeResult, Failure]]:
        return [(n, f) for n in self.nodes for f in n.failures]

    def json_lines(self, name: str | None = None) -> list[str]:
        lines = [json.dumps(n.to_json(), sort_keys=True) for n in self.nodes]
        summary = {
            "verdict": self.verdict,
            "mode": self.mode,
            "nodes": len(self.nodes),
            "failed": sum(1 for n in self.nodes if not n.ok),
            "bounds": self.bounds.to_json(),
        }
        if name is not None:
            summary["derivation"] = name
        lines.append(json.dumps(summary, sort_keys=True))
        return lines

    def human(self, name: str | None = None) -> str:
        head = f"{name}: " if name else ""
        lines = [f"{head}{self.verdict} ({self.mode}, {len(self.nodes)} nodes)"]
        for n, f in self.failures():
            where = f" at {n.origin}" if n.origin else ""
            lines.append(f"  {n.path} {n.rule}{where}: {f.condition}: {f.detail}")
            if f.counterexample:
                lines.append(f"    counterexample: {f.counterexample}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Well-formedness and basic-command triples
# ---------------------------------------------------------------------------


def check_wellformed(j: Judgment) -> list[str]:
    out = []
    extra = (free_vars(j.pre) | free_vars(j.post)) - j.rely
    if extra:
        out.append(f"FV(P,Q) not within the rely set: {show_vars(extra)}")
    extra = free_vars(j.command) - j.rely - j.context.pv()
    if extra:
        out.append(f"FV(C) not within rely set and protected variables: {show_vars(extra)}")
    return out


@dataclass(frozen=True)
class TripleReport:
    ok: bool
    detail: str = ""
    counterexample: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def _domain_key(domains: Mapping[str, Iterable[Value]] | None) -> tuple:
    if not domains:
        return ()
    return tuple(sorted((k, tuple(v)) for k, v in domains.items()))


def check_sl_triple(
    pre: Assertion,
    c: Command,
    post: Assertion,
    bounds: DomainBounds,
    preds: PredicateTable = NO_PREDICATES,
    domains: Mapping[str, Iterable[Value]] | None = None,
) -> TripleReport:
    """Bounded semantic validity of {pre} c {post} for a basic command."""
    return _sl_triple(pre, c, post, bounds, preds, _domain_key(domains))


@lru_cache(maxsize=4096)
def _sl_triple(pre, c, post, bounds, preds, domains) -> TripleReport:
    from .sos import exec_basic

    if not is_basic(c):
        return TripleReport(False, f"{show_cmd(c)} is not a basic command")
    ev = evaluator(bounds, preds)
    # other variables cannot influence the outcome: the command does not read
    # them and the postcondition sees only their overwritten values
    names = free_vars(pre) | _reads(c) | (free_vars(post) - mod_vars(c))
    fixed = {x: None for x in free_vars(c) | free_vars(post) if x not in names}
    for env in enumerate_stores(names, bounds, dict(domains)):
        s = Store({**fixed, **env})
        for h in ev.models(env, pre):
            r = exec_basic(c, s, h, bounds, explore=True)
            if r.abort is not None:
                return TripleReport(False, f"execution aborts ({r.abort})", f"{s.dump()} {h.dump()}")
            for s2, h2 in r.outcomes:
                if not ev.sat(s2, h2, post):
                    return TripleReport(
                        False,
                        "postcondition fails after execution",
                        f"{s.dump()} {h.dump()} -> {s2.dump()} {h2.dump()}",
                    )
    return TripleReport(True)


def _reads(c: Command) -> frozenset[str]:
    if isinstance(c, Assign):
        return free_vars(c.expr)
    if isinstance(c, (Load, Dispose)):
        return free_vars(c.addr)
    if isinstance(c, StoreCmd):
        return free_vars(c.addr) | free_vars(c.value)
    assert isinstance(c, Cons)
    out: frozenset[str] = frozenset()
    for e in c.args:
        out |= free_vars(e)
    return out


@lru_cache(maxsize=4096)
def _entails(p, q, bounds, preds, domains):
    return entails(p, q, bounds, preds, dict(domains))


# ---------------------------------------------------------------------------
# Rule checking
# ---------------------------------------------------------------------------


def contexts_equal(a: ResourceContext, b: ResourceContext) -> bool:
    if len(a) != len(b):
        return False
    return all(
        x.name == y.name and x.protected == y.protected and alpha_equal(x.invariant, y.invariant)
        for x, y in zip(a, b)
    )


class _NodeChecker:
    def __init__(
        self,
        mode: str,
        bounds: DomainBounds,
        preds: PredicateTable,
        domains: Mapping[str, Iterable[Value]] | None,
    ) -> None:
        self.mode = mode
        self.bounds = bounds
        self.preds = preds
        self.domains = _domain_key(domains)
        self.fails: list[Failure] = []

    @property
    def csl(self) -> bool:
        return self.mode == CSL

    def fail(self, condition: str, detail: str, cex: str | None = None) -> None:
        self.fails.append(Failure(condition, detail, cex))

    def same(self, condition: str, got: Assertion, want: Assertion) -> None:
        if not alpha_equal(got, want):
            self.fail(condition, f"expected {show_assertion(want)}, found {show_assertion(got)}")

    def same_cmd(self, condition: str, got: Command, want: Command) -> None:
        if got != want:
            self.fail(condition, f"expected {show_cmd(want)}, found {show_cmd(got)}")

    def same_ctx(self, condition: str, got: ResourceContext, want: ResourceContext) -> None:
        if not contexts_equal(got, want):
            from .ast import show_context

            self.fail(condition, f"expected {show_context(want)}, found {show_context(got)}")

    def rely(self, condition: str, got: frozenset[str], want: frozenset[str]) -> None:
        if self.csl and got != want:
            self.fail(condition, f"expected {show_vars(want)}, found {show_vars(got)}")

    def precise(self, name: str, r: Assertion) -> None:
        rep = check_precise(r, self.bounds, self.preds)
        if not rep.precise:
            s, h, h1, h2 = rep.witness  # type: ignore[misc]
            self.fail(
                "precise",
                f"invariant of {name} is not precise",
                f"{Store(s).dump()} {h.dump()} has subheaps {h1.dump()} and {h2.dump()}",
            )

    def entail(self, condition: str, p: Assertion, q: Assertion) -> None:
        rep = _entails(p, q, self.bounds, self.preds, self.domains)
        if not rep.holds:
            self.fail(
                condition,
                f"{show_assertion(p)} does not entail {show_assertion(q)}",
                rep.describe(),
            )

    def check(self, d: Derivation) -> list[Failure]:
        j = d.conclusion
        if self.csl:
            for msg in check_wellformed(j):
                self.fail("wellformed", msg)
        getattr(self, "rule_" + d.rule)(j, [p.conclusion for p in d.premises], d.data)
        return self.fails

    # -- rules ----------------------------------------------------------------

    def shape(self, j: Judgment, kind: type, what: str) -> bool:
        if not isinstance(j.command, kind):
            self.fail("shape", f"command must be {what}, found {show_cmd(j.command)}")
            return False
        return True

    def rule_SKP(self, j: Judgment, ps, data) -> None:
        if self.shape(j, Skip, "skip"):
            self.same("pre-equals-post", j.post, j.pre)

    def rule_SEQ(self, j: Judgment, ps, data) -> None:
        if not self.shape(j, Seq, "a sequence"):
            return
        p1, p2 = ps
        for p in ps:
            self.same_ctx("context", p.context, j.context)
        self.same_cmd("first-command", p1.command, j.command.first)
        self.same_cmd("second-command", p2.command, j.command.second)
        self.same("pre", p1.pre, j.pre)
        self.same("mid-assertion", p2.pre, p1.post)
        self.same("post", p2.post, j.post)
        self.rely("rely-union", j.rely, p1.rely | p2.rely)

    def rule_BC(self, j: Judgment, ps, data) -> None:
        c = j.command
        if not is_basic(c):
            self.fail("shape", f"command must be basic, found {show_cmd(c)}")
            return
        clash = mod_vars(c) & j.context.pv()
        if clash:
            self.fail("mod-protected", f"modifies protected variables {show_vars(clash)}")
        rep = _sl_triple(j.pre, c, j.post, self.bounds, self.preds, self.domains)
        if not rep.ok:
            self.fail("sl-triple", rep.detail, rep.counterexample)

    def rule_FRA(self, j: Judgment, ps, data) -> None:
        (p,) = ps
        self.same_ctx("context", p.context, j.context)
        self.same_cmd("command", p.command, j.command)
        if not isinstance(j.pre, Star) or not isinstance(j.post, Star):
            self.fail("shape", "conclusion pre and post must be P * R and Q * R")
            return
        r = j.pre.right
        self.same("frame", j.post.right, r)
        self.same("pre", j.pre.left, p.pre)
        self.same("post", j.post.left, p.post)
        clash = mod_vars(j.command) & free_vars(r)
        if clash:
            self.fail("mod-frame", f"command modifies frame variables {show_vars(clash)}")
        self.rely("rely-frame", j.rely, p.rely | free_vars(r))

    def rule_LP(self, j: Judgment, ps, data) -> None:
        if not self.shape(j, While, "a while loop"):
            return
        (p,) = ps
        b = lift_bool(j.command.cond)
        self.same_ctx("context", p.context, j.context)
        self.same_cmd("body", p.command, j.command.body)
        self.same("loop-entry", p.pre, And(j.pre, b))
        self.same("invariant", p.post, j.pre)
        self.same("loop-exit", j.post, And(j.pre, Not(b)))
        self.rely("rely", j.rely, p.rely)

    def rule_CONJ(self, j: Judgment, ps, data) -> None:
        p1, p2 = ps
        for p in ps:
            self.same_ctx("context", p.context, j.context)
            self.same_cmd("command", p.command, j.command)
        self.same("pre", j.pre, And(p1.pre, p2.pre))
        self.same("post", j.post, And(p1.post, p2.post))
        self.rely("rely-union", j.rely, p1.rely | p2.rely)

    def rule_IF(self, j: Judgment, ps, data) -> None:
        if not self.shape(j, If, "a conditional"):
            return
        p1, p2 = ps
        b = lift_bool(j.command.cond)
        for p in ps:
            self.same_ctx("context", p.context, j.context)
            self.same("post", p.post, j.post)
        self.same_cmd("then-branch", p1.command, j.command.then)
        self.same_cmd("else-branch", p2.command, j.command.orelse)
        self.same("then-pre", p1.pre, And(j.pre, b))
        self.same("else-pre", p2.pre, And(j.pre, Not(b)))
        self.rely("rely-union", j.rely, p1.rely | p2.rely)

    def rule_CONS(self, j: Judgment, ps, data) -> None:
        (p,) = ps
        self.same_ctx("context", p.context, j.context)
        self.same_cmd("command", p.command, j.command)
        if self.csl and not p.rely <= j.rely:
            self.fail("rely-grows", f"premise rely {show_vars(p.rely)} not within {show_vars(j.rely)}")
        self.entail("strengthen-pre", j.pre, p.pre)
        self.entail("weaken-post", p.post, j.post)

    def rule_AUX(self, j: Judgment, ps, data) -> None:
        (p,) = ps
        xs = frozenset(data or ())
        self.same_ctx("context", p.context, j.context)
        self.same("pre", p.pre, j.pre)
        self.same("post", p.post, j.post)
        self.rely("rely-aux", p.rely, j.rely | xs)
        clash = xs & (free_vars(j.pre) | free_vars(j.post))
        if clash:
            self.fail("aux-free", f"auxiliary variables occur in pre or post: {show_vars(clash)}")
        clash = xs & j.context.pv()
        if clash:
            self.fail("aux-protected", f"auxiliary variables are protected: {show_vars(clash)}")
        if not is_aux_set(p.command, xs):
            self.fail("auxiliary", f"{show_vars(xs)} is not auxiliary for {show_cmd(p.command)}")
            return
        self.same_cmd("erased-command", j.command, erase_aux(p.command, xs))

    def rule_REN(self, j: Judgment, ps, data) -> None:
        (p,) = ps
        old, new = data  # type: ignore[misc]
        if new in j.context:
            self.fail("fresh-name", f"{new} already declared in the context")
        self.same_ctx("context", p.context, j.context.rename(old, new))
        if new in res_names(j.command):
            self.fail("fresh-name", f"{new} already occurs in the command")
        else:
            self.same_cmd("command", p.command, rename_resource(j.command, old, new))
        self.same("pre", p.pre, j.pre)
        self.same("post", p.post, j.post)
        self.rely("rely", p.rely, j.rely)

    def rule_PAR(self, j: Judgment, ps, data) -> None:
        if not self.shape(j, Par, "a parallel composition"):
            return
        p1, p2 = ps
        c1, c2 = j.command.left, j.command.right
        for p in ps:
            self.same_ctx("context", p.context, j.context)
        self.same_cmd("left-command", p1.command, c1)
        self.same_cmd("right-command", p2.command, c2)
        self.same("pre", j.pre, Star(p1.pre, p2.pre))
        self.same("post", j.post, Star(p1.post, p2.post))
        self.rely("rely-union", j.rely, p1.rely | p2.rely)
        if self.csl:
            overlap = (mod_vars(c1) & p2.rely) | (mod_vars(c2) & p1.rely)
            what = "modified variables meet the sibling rely set"
        else:
            overlap = (mod_vars(c1) & p2.free_vars()) | (mod_vars(c2) & p1.free_vars())
            what = "modified variables occur free in the sibling triple"
        if overlap:
            self.fail("par-interference", f"{what}: overlap {show_vars(overlap)}")

    def rule_CR(self, j: Judgment, ps, data) -> None:
        if not self.shape(j, With, "a critical region"):
            return
        (p,) = ps
        c = j.command
        if c.name not in j.context:
            self.fail("resource", f"{c.name} is not declared in the context")
            return
        entry = j.context.get(c.name)
        self.same_ctx("context", p.context, j.context.without(c.name))
        self.same_cmd("body", p.command, c.body)
        self.same("region-pre", p.pre, Star(And(j.pre, lift_bool(c.cond)), entry.invariant))
        self.same("region-post", p.post, Star(j.post, entry.invariant))
        self.rely("rely-protected", p.rely, j.rely | entry.protected)
        self.precise(c.name, entry.invariant)

    def rule_RES(self, j: Judgment, ps, data) -> None:
        if not self.shape(j, Res, "a local resource"):
            return
        (p,) = ps
        c = j.command
        if c.name not in p.context:
            self.fail("resource", f"{c.name} is not declared in the premise context")
            return
        if c.name in j.context:
            self.fail("resource", f"{c.name} is already declared in the conclusion context")
        entry = p.context.get(c.name)
        self.same_ctx("context", p.context.without(c.name), j.context)
        self.same_cmd("body", p.command, c.body)
        self.same("pre", j.pre, Star(p.pre, entry.invariant))
        self.same("post", j.post, Star(p.post, entry.invariant))
        self.rely("rely-protected", j.rely, p.rely | entry.protected)
        self.precise(c.name, entry.invariant)


def check_derivation(
    d: Derivation,
    mode: str = CSL,
    bounds: DomainBounds | None = None,
    preds: PredicateTable = NO_PREDICATES,
    domains: Mapping[str, Iterable[Value]] | None = None,
) -> CheckReport:
    """Check every node; domains optionally narrow the values of named variables."""
    if mode not in (CSL, DCSL):
        raise ValueError(f"unknown mode {mode}")
    bounds = bounds or DomainBounds()
    results = []
    for path, node in d.nodes():
        fails = _NodeChecker(mode, bounds, preds, domains).check(node)
        results.append(NodeResult(path, node.rule, node.origin, fails))
    return CheckReport(mode, bounds, results)


def conclusion_triple(d: Derivation) -> tuple[ResourceContext, Assertion, Command, Assertion]:
    j = d.conclusion
    return j.context, j.pre, j.command, j.post
