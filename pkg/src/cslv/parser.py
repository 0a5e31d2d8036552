"""Concrete syntax: tokenizer, recursive-descent parser and canonical printer
for programs, assertions, resource declarations, specifications and derivations.

File items (keywords are reserved and cannot be used as names):

    var x, y in {0, 1}
    pred stack(z) := (z = null /\\ emp) \\/ exists a, b. z |-> a, b * stack(b)
    resource st(z, y) : stack(z)
    define assert N := A        define cmd N := C        define deriv N := NODE
    spec name { context [st] rely {x} init A pre A cmd C post A always A }
    derivation name := NODE

A derivation node is ``(TAG [data] JUDGMENT child*)`` with
``JUDGMENT := [ctx; ...] {vars} {P} C {Q}``; ``ctx`` is a declared resource
name or an inline ``r(x, y) : R``.  ``$N`` splices a definition.

A file that starts with none of the item keywords is a plain program: a single
command whose variables are declared implicitly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, TypeVar

from .assertions import PredicateDef, PredicateTable
from .ast import (
    EMP,
    FALSE,
    NULL,
    SKIP,
    TRUE,
    And,
    Assertion,
    Assign,
    BAnd,
    BFalse,
    BinOp,
    BNot,
    BoolExpr,
    BTrue,
    Command,
    Cons,
    Dispose,
    Eq,
    Expr,
    Forall,
    If,
    InvalidContext,
    Load,
    Lt,
    Not,
    Num,
    Par,
    PointsTo,
    PredCall,
    Pure,
    Res,
    ResourceContext,
    ResourceEntry,
    Seq,
    Star,
    Store,
    Var,
    While,
    With,
    Within,
    a_exists,
    a_or,
    b_or,
    free_vars,
    show_assertion,
    show_cmd,
    show_context,
    show_vars,
)
from .proof import ARITY, Derivation, Judgment

T = TypeVar("T")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpan:
    """Start position plus the position just past the last character."""

    file: str
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __post_init__(self) -> None:
        if self.end_line == 0:
            object.__setattr__(self, "end_line", self.line)
            object.__setattr__(self, "end_col", self.col)
        if (self.end_line, self.end_col) < (self.line, self.col):
            raise ValueError("span ends before it starts")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan | None = None) -> None:
        super().__init__(f"{span}: {message}" if span else message)
        self.message = message
        self.span = span


class DuplicateName(ParseError):
    pass


class UnboundName(ParseError):
    pass


class ArityError(ParseError):
    pass


class UnknownRule(ParseError):
    pass


# ---------------------------------------------------------------------------
# Tokens
# ---------------------------------------------------------------------------

KEYWORDS = frozenset(
    """skip if then else while do res with when within cons dispose null true false
    emp forall exists pred resource var in define assert cmd deriv spec context rely
    init pre post always derivation""".split()
)

ITEM_KEYWORDS = frozenset({"var", "pred", "resource", "define", "spec", "derivation"})

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>\|->|:=|\|\||/\\|\\/|->|[()\[\]{},;.:*+\-=<~$])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | kw | op | eof
    text: str
    span: SourceSpan


_OPERAND_END = {"num", "ident"}


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        span = SourceSpan(file, line, col)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            # tokens never contain a newline
            span = SourceSpan(file, line, col, line, col + len(tok))
        if kind == "ws":
            nl = tok.count("\n")
            if nl:
                line += nl
                line_start = pos + tok.rindex("\n") + 1
        elif kind == "num":
            # a '-' glued to a number is a negative literal unless it follows an operand
            if (
                out
                and out[-1].text == "-"
                and out[-1].span.col + 1 == span.col
                and out[-1].span.line == line
                and not (len(out) > 1 and _ends_operand(out[-2]))
            ):
                prev = out.pop()
                merged = SourceSpan(file, line, prev.span.col, line, span.end_col)
                out.append(Token("num", "-" + tok, merged))
            else:
                out.append(Token("num", tok, span))
        elif kind == "ident":
            out.append(Token("kw" if tok in KEYWORDS else "ident", tok, span))
        else:
            out.append(Token("op", tok, span))
        pos = m.end()
    out.append(Token("eof", "", SourceSpan(file, line, pos - line_start + 1)))
    return out


def _ends_operand(t: Token) -> bool:
    return t.kind in _OPERAND_END or t.text in (")", "]", "null")


# ---------------------------------------------------------------------------
# Parsed file
# ---------------------------------------------------------------------------


@dataclass
class Spec:
    name: str
    context: ResourceContext
    rely: frozenset[str]
    pre: Assertion
    cmd: Command
    post: Assertion
    init: Optional[Assertion] = None
    always: Optional[Assertion] = None
    span: Optional[SourceSpan] = None


@dataclass
class Program:
    source: str = "<input>"
    variables: list[str] = field(default_factory=list)
    domains: dict[str, tuple] = field(default_factory=dict)
    preds: PredicateTable = field(default_factory=PredicateTable)
    resources: ResourceContext = field(default_factory=ResourceContext)
    specs: dict[str, Spec] = field(default_factory=dict)
    derivations: dict[str, Derivation] = field(default_factory=dict)
    main: Optional[Command] = None  # plain program files

    @property
    def empty(self) -> bool:
        """No items and no plain program: the input held only whitespace and comments."""
        return self.main is None and not (
            self.variables or self.preds or len(self.resources) or self.specs or self.derivations
        )


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class Parser:
    def __init__(self, text: str, file: str = "<input>") -> None:
        self.filename = file
        self.toks = tokenize(text, file)
        self.pos = 0
        self.variables: dict[str, None] = {}
        self.domains: dict[str, tuple] = {}
        self.preds: dict[str, PredicateDef] = {}
        self.resources: dict[str, ResourceEntry] = {}
        self.def_assert: dict[str, Assertion] = {}
        self.def_cmd: dict[str, Command] = {}
        self.def_deriv: dict[str, Derivation] = {}
        self.specs: dict[str, Spec] = {}
        self.derivations: dict[str, Derivation] = {}
        self.check_vars = True
        self.bound: list[str] = []  # quantifier-bound and predicate-parameter names

    # -- token helpers --------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text in texts

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        return ParseError(f"{msg}, found {found}", t.span)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        t = self.tok
        self.pos += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}")
        t = self.tok
        self.pos += 1
        return t

    def attempt(self, fn: Callable[[], T]) -> Optional[T]:
        save = self.pos
        try:
            return fn()
        except ParseError:
            self.pos = save
            return None

    # -- variables ----------------------------------------------------------

    def use_var(self, t: Token) -> Var:
        name = t.text
        if self.check_vars and name not in self.bound and name not in self.variables:
            raise UnboundName(f"undeclared variable {name}", t.span)
        return Var(name)

    def declare_var(self, t: Token) -> None:
        if t.text in self.variables:
            raise DuplicateName(f"variable {t.text} declared twice", t.span)
        self.variables[t.text] = None

    # -- expressions --------------------------------------------------------

    def expr(self, allow_mult: bool = True) -> Expr:
        e = self.term(allow_mult)
        while self.at("+", "-"):
            op = self.tok.text
            self.pos += 1
            e = BinOp(op, e, self.term(allow_mult))
        return e

    def term(self, allow_mult: bool) -> Expr:
        e = self.primary()
        while allow_mult and self.at("*"):
            self.pos += 1
            e = BinOp("*", e, self.primary())
        return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.pos += 1
            return Num(int(t.text))
        if self.accept("null"):
            return NULL
        if t.kind == "ident":
            if self.peek().text == "(" and self.peek().kind == "op":
                raise self.error("expected expression")
            self.pos += 1
            return self.use_var(t)
        if self.accept("("):
            e = self.expr(True)
            self.expect(")")
            return e
        raise self.error("expected expression")

    # -- guards ---------------------------------------------------------------

    def guard(self) -> BoolExpr:
        b = self.guard_and()
        while self.accept("\\/"):
            b = b_or(b, self.guard_and())
        return b

    def guard_and(self) -> BoolExpr:
        b = self.guard_not()
        while self.accept("/\\"):
            b = BAnd(b, self.guard_not())
        return b

    def guard_not(self) -> BoolExpr:
        if self.accept("~"):
            return BNot(self.guard_not())
        if self.accept("true"):
            return BTrue()
        if self.accept("false"):
            return BFalse()
        if self.at("("):
            rel = self.attempt(self.relation)
            if rel is not None:
                return rel
            self.expect("(")
            b = self.guard()
            self.expect(")")
            return b
        return self.relation()

    def relation(self) -> BoolExpr:
        left = self.expr(True)
        if self.accept("="):
            return Eq(left, self.expr(True))
        if self.accept("<"):
            return Lt(left, self.expr(True))
        raise self.error("expected '=' or '<'")

    # -- assertions -----------------------------------------------------------

    def assertion(self) -> Assertion:
        if self.at("forall", "exists"):
            return self.quantifier()
        p = self.a_and()
        while self.accept("\\/"):
            p = a_or(p, self.a_and_or_quant())
        return p

    def a_and_or_quant(self) -> Assertion:
        return self.quantifier() if self.at("forall", "exists") else self.a_and()

    def quantifier(self) -> Assertion:
        kind = self.tok.text
        self.pos += 1
        names = [self.ident("bound variable").text]
        while self.accept(","):
            names.append(self.ident("bound variable").text)
        if kind == "forall" and len(names) > 1:
            raise self.error("forall binds one variable")
        self.expect(".")
        self.bound.extend(names)
        try:
            body = self.assertion()
        finally:
            del self.bound[len(self.bound) - len(names) :]
        for x in reversed(names):
            body = Forall(x, body) if kind == "forall" else a_exists(x, body)
        return body

    def a_and(self) -> Assertion:
        p = self.a_star()
        while self.accept("/\\"):
            q = self.quantifier() if self.at("forall", "exists") else self.a_star()
            p = And(p, q)
        return p

    def a_star(self) -> Assertion:
        p = self.a_unary()
        while self.accept("*"):
            q = self.quantifier() if self.at("forall", "exists") else self.a_unary()
            p = Star(p, q)
        return p

    def a_unary(self) -> Assertion:
        t = self.tok
        if self.accept("~"):
            return Not(self.a_unary())
        if self.at("forall", "exists"):
            return self.quantifier()
        if self.accept("emp"):
            return EMP
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.accept("$"):
            n = self.ident("definition name")
            if n.text not in self.def_assert:
                raise UnboundName(f"undefined assertion {n.text}", n.span)
            return self.def_assert[n.text]
        if t.kind == "ident" and self.peek().text == "(" and self.peek().kind == "op":
            return self.pred_call()
        if self.at("("):
            atom = self.attempt(self.a_atom)
            if atom is not None:
                return atom
            self.expect("(")
            p = self.assertion()
            self.expect(")")
            return p
        return self.a_atom()

    def pred_call(self) -> Assertion:
        n = self.ident("predicate name")
        if n.text not in self.preds:
            raise UnboundName(f"undeclared predicate {n.text}", n.span)
        self.expect("(")
        args: list[Expr] = []
        if not self.at(")"):
            args.append(self.expr(False))
            while self.accept(","):
                args.append(self.expr(False))
        self.expect(")")
        if len(args) != len(self.preds[n.text].params):
            raise ArityError(
                f"{n.text} takes {len(self.preds[n.text].params)} arguments, got {len(args)}", n.span
            )
        return PredCall(n.text, tuple(args))

    def a_atom(self) -> Assertion:
        left = self.expr(False)
        if self.accept("="):
            return Pure(Eq(left, self.expr(False)))
        if self.accept("<"):
            return Pure(Lt(left, self.expr(False)))
        if self.accept("|->"):
            vals = [self.expr(False)]
            while self.accept(","):
                vals.append(self.expr(False))
            return PointsTo(left, tuple(vals))
        raise self.error("expected '=', '<' or '|->'")

    # -- commands ------------------------------------------------------------

    def command(self) -> Command:
        c = self.seq()
        while self.accept("||"):
            c = Par(c, self.seq())
        return c

    def seq(self) -> Command:
        c = self.unit()
        if self.accept(";"):
            return Seq(c, self.seq())
        return c

    def unit(self) -> Command:
        t = self.tok
        if self.accept("skip"):
            return SKIP
        if self.accept("("):
            c = self.command()
            self.expect(")")
            return c
        if self.accept("$"):
            n = self.ident("definition name")
            if n.text not in self.def_cmd:
                raise UnboundName(f"undefined command {n.text}", n.span)
            return self.def_cmd[n.text]
        if self.accept("if"):
            b = self.guard()
            self.expect("then")
            c1 = self.unit()
            self.expect("else")
            return If(b, c1, self.unit())
        if self.accept("while"):
            b = self.guard()
            self.expect("do")
            return While(b, self.unit())
        if self.accept("res"):
            r = self.ident("resource name").text
            self.expect(".")
            return Res(r, self.unit())
        if self.accept("with"):
            r = self.ident("resource name").text
            b: BoolExpr = BTrue()
            if self.accept("when"):
                b = self.guard()
            self.expect("do")
            return With(r, b, self.unit())
        if self.accept("within"):
            r = self.ident("resource name").text
            self.expect("do")
            return Within(r, self.unit())
        if self.accept("dispose"):
            self.expect("(")
            e = self.expr(True)
            self.expect(")")
            return Dispose(e)
        if self.accept("["):
            a = self.expr(True)
            self.expect("]")
            self.expect(":=")
            return Store(a, self.expr(True))
        if t.kind == "ident":
            x = self.use_var(self.ident()).name
            self.expect(":=")
            if self.accept("["):
                a = self.expr(True)
                self.expect("]")
                return Load(x, a)
            if self.accept("cons"):
                self.expect("(")
                args = [self.expr(True)]
                while self.accept(","):
                    args.append(self.expr(True))
                self.expect(")")
                return Cons(x, tuple(args))
            return Assign(x, self.expr(True))
        raise self.error("expected command")

    # -- resource contexts and judgments ---------------------------------------

    def name_set(self) -> list[Token]:
        self.expect("{")
        out: list[Token] = []
        if not self.at("}"):
            out.append(self.ident())
            while self.accept(","):
                out.append(self.ident())
        self.expect("}")
        return out

    def var_set(self) -> frozenset[str]:
        return frozenset(self.use_var(t).name for t in self.name_set())

    def resource_decl(self) -> ResourceEntry:
        n = self.ident("resource name")
        self.expect("(")
        if self.at("{"):
            prot = self.var_set()
            self.expect(")")
        else:
            names: list[Token] = []
            if not self.at(")"):
                names.append(self.ident())
                while self.accept(","):
                    names.append(self.ident())
            self.expect(")")
            prot = frozenset(self.use_var(t).name for t in names)
        self.expect(":")
        inv = self.assertion()
        return ResourceEntry(n.text, prot, inv)

    def context(self) -> ResourceContext:
        start = self.expect("[")
        entries: list[ResourceEntry] = []
        if not self.at("]"):
            entries.append(self.context_item())
            while self.accept(";") or self.accept(","):
                entries.append(self.context_item())
        self.expect("]")
        try:
            return ResourceContext(tuple(entries))
        except InvalidContext as err:
            raise ParseError(str(err), start.span) from None

    def context_item(self) -> ResourceEntry:
        if self.tok.kind == "ident" and self.peek().text == "(":
            return self.resource_decl()
        n = self.ident("resource name")
        if n.text not in self.resources:
            raise UnboundName(f"undeclared resource {n.text}", n.span)
        return self.resources[n.text]

    def judgment(self) -> Judgment:
        ctx = self.context()
        rely = self.var_set()
        self.expect("{")
        pre = self.assertion()
        self.expect("}")
        cmd = self.command()
        self.expect("{")
        post = self.assertion()
        self.expect("}")
        return Judgment(ctx, rely, pre, cmd, post)

    def derivation(self) -> Derivation:
        if self.accept("$"):
            n = self.ident("definition name")
            if n.text not in self.def_deriv:
                raise UnboundName(f"undefined derivation {n.text}", n.span)
            return self.def_deriv[n.text]
        self.expect("(")
        tag = self.tok
        if tag.kind not in ("ident", "kw"):
            raise self.error("expected rule name")
        self.pos += 1
        rule = tag.text
        if rule not in ARITY:
            raise UnknownRule(f"unknown rule {rule}", tag.span)
        data: object = None
        if rule == "AUX":
            data = frozenset(t.text for t in self.name_set())
        elif rule == "REN":
            old = self.ident("resource name").text
            self.expect("->")
            data = (old, self.ident("resource name").text)
        j = self.judgment()
        premises: list[Derivation] = []
        while self.at("(", "$"):
            premises.append(self.derivation())
        self.expect(")")
        if len(premises) != ARITY[rule]:
            raise ArityError(
                f"rule {rule} takes {ARITY[rule]} premises, got {len(premises)}", tag.span
            )
        return Derivation(rule, j, tuple(premises), data, str(tag.span))

    # -- file items ----------------------------------------------------------

    def file(self) -> Program:
        if self.tok.kind == "eof":
            return Program(source=self.filename)
        if not (self.tok.kind == "kw" and self.tok.text in ITEM_KEYWORDS):
            return self.plain_program()
        while self.tok.kind != "eof":
            self.item()
        return Program(
            source=self.filename,
            variables=list(self.variables),
            domains=dict(self.domains),
            preds=PredicateTable(self.preds.values()),
            resources=ResourceContext(tuple(self.resources.values())),
            specs=dict(self.specs),
            derivations=dict(self.derivations),
        )

    def plain_program(self) -> Program:
        self.check_vars = False
        c = self.command()
        if self.tok.kind != "eof":
            raise self.error("expected end of input")
        return Program(source=self.filename, variables=sorted(free_vars(c)), main=c)

    def _fresh(self, table: dict, t: Token, what: str) -> None:
        if t.text in table:
            raise DuplicateName(f"{what} {t.text} defined twice", t.span)

    def item(self) -> None:
        t = self.tok
        if self.accept("var"):
            names = [self.ident("variable")]
            while self.accept(","):
                names.append(self.ident("variable"))
            for n in names:
                self.declare_var(n)
            if self.accept("in"):
                self.expect("{")
                vals: list = []
                while not self.at("}"):
                    if self.accept("null"):
                        vals.append(None)
                    elif self.tok.kind == "num":
                        vals.append(int(self.tok.text))
                        self.pos += 1
                    else:
                        raise self.error("expected value")
                    if not self.accept(","):
                        break
                self.expect("}")
                if not vals:
                    raise ParseError("empty value domain", t.span)
                for n in names:
                    self.domains[n.text] = tuple(vals)
            return
        if self.accept("pred"):
            n = self.ident("predicate name")
            self._fresh(self.preds, n, "predicate")
            self.expect("(")
            params: list[str] = []
            if not self.at(")"):
                params.append(self.ident("parameter").text)
                while self.accept(","):
                    params.append(self.ident("parameter").text)
            self.expect(")")
            if len(set(params)) != len(params):
                raise DuplicateName(f"repeated parameter in {n.text}", n.span)
            self.expect(":=")
            # registered before the body so recursive calls resolve
            self.preds[n.text] = PredicateDef(n.text, tuple(params), EMP)
            saved, self.bound = self.bound, list(params)
            saved_check, self.check_vars = self.check_vars, True
            variables, self.variables = self.variables, {}
            try:
                body = self.assertion()
            finally:
                self.bound, self.check_vars, self.variables = saved, saved_check, variables
            self.preds[n.text] = PredicateDef(n.text, tuple(params), body)
            return
        if self.accept("resource"):
            save = self.tok
            e = self.resource_decl()
            if e.name in self.resources:
                raise DuplicateName(f"resource {e.name} declared twice", save.span)
            extra = free_vars(e.invariant) - e.protected
            if extra:
                raise ParseError(
                    f"invariant of {e.name} mentions unprotected variables {sorted(extra)}", save.span
                )
            self.resources[e.name] = e
            return
        if self.accept("define"):
            kind = self.tok
            if not self.at("assert", "cmd", "deriv"):
                raise self.error("expected 'assert', 'cmd' or 'deriv'")
            self.pos += 1
            n = self.ident("definition name")
            self.expect(":=")
            if kind.text == "assert":
                self._fresh(self.def_assert, n, "assertion")
                self.def_assert[n.text] = self.assertion()
            elif kind.text == "cmd":
                self._fresh(self.def_cmd, n, "command")
                self.def_cmd[n.text] = self.command()
            else:
                self._fresh(self.def_deriv, n, "derivation")
                self.def_deriv[n.text] = self.derivation()
            return
        if self.accept("spec"):
            self.specs_item()
            return
        if self.accept("derivation"):
            n = self.ident("derivation name")
            self._fresh(self.derivations, n, "derivation")
            self.expect(":=")
            self.derivations[n.text] = self.derivation()
            return
        raise self.error("expected a file item")

    def specs_item(self) -> None:
        n = self.ident("spec name")
        self._fresh(self.specs, n, "spec")
        self.expect("{")
        fields: dict[str, object] = {}
        while not self.at("}"):
            k = self.tok
            if not self.at("context", "rely", "init", "pre", "cmd", "post", "always"):
                raise self.error("expected spec field")
            self.pos += 1
            if k.text in fields:
                raise DuplicateName(f"field {k.text} given twice", k.span)
            if k.text == "context":
                fields[k.text] = self.context()
            elif k.text == "rely":
                fields[k.text] = self.var_set()
            elif k.text == "cmd":
                fields[k.text] = self.command()
            else:
                fields[k.text] = self.assertion()
        close = self.expect("}")
        for req in ("pre", "cmd", "post"):
            if req not in fields:
                raise ParseError(f"spec {n.text} lacks '{req}'", close.span)
        self.specs[n.text] = Spec(
            n.text,
            fields.get("context", ResourceContext()),  # type: ignore[arg-type]
            fields.get("rely", frozenset()),  # type: ignore[arg-type]
            fields["pre"],  # type: ignore[arg-type]
            fields["cmd"],  # type: ignore[arg-type]
            fields["post"],  # type: ignore[arg-type]
            fields.get("init"),  # type: ignore[arg-type]
            fields.get("always"),  # type: ignore[arg-type]
            n.span,
        )


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def _whole(p: Parser, fn: Callable[[], T]) -> T:
    out = fn()
    if p.tok.kind != "eof":
        raise p.error("expected end of input")
    return out


def _loose(text: str, preds: PredicateTable | None) -> Parser:
    p = Parser(text)
    p.check_vars = False
    if preds is not None:
        p.preds = dict(preds.items())
    return p


def parse_program(text: str, file: str = "<input>") -> Program:
    return Parser(text, file).file()


def parse_file(path: str) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read(), path)


def parse_expr(text: str) -> Expr:
    p = _loose(text, None)
    return _whole(p, p.expr)


def parse_guard(text: str) -> BoolExpr:
    p = _loose(text, None)
    return _whole(p, p.guard)


def parse_assertion(text: str, preds: PredicateTable | None = None) -> Assertion:
    p = _loose(text, preds)
    return _whole(p, p.assertion)


def parse_command(text: str) -> Command:
    p = _loose(text, None)
    return _whole(p, p.command)


# ---------------------------------------------------------------------------
# Canonical printing
# ---------------------------------------------------------------------------


def _show_value(v) -> str:
    return "null" if v is None else str(v)


def show_judgment(j: Judgment) -> str:
    return (
        f"{show_context(j.context)} {show_vars(j.rely)} "
        f"{{{show_assertion(j.pre)}}} {show_cmd(j.command)} {{{show_assertion(j.post)}}}"
    )


def show_derivation(d: Derivation, indent: int = 0) -> str:
    pad = "  " * indent
    head = d.rule
    if d.rule == "AUX":
        head += " " + show_vars(d.data)  # type: ignore[arg-type]
    elif d.rule == "REN":
        old, new = d.data  # type: ignore[misc]
        head += f" {old} -> {new}"
    lines = [f"{pad}({head} {show_judgment(d.conclusion)}"]
    for c in d.premises:
        lines.append(show_derivation(c, indent + 1))
    lines[-1] += ")"
    return "\n".join(lines)


def show_program(prog: Program) -> str:
    """Canonical text of a parsed file; definitions are inlined."""
    if prog.main is not None:
        return show_cmd(prog.main)
    out: list[str] = []
    by_domain: dict[object, list[str]] = {}
    for x in prog.variables:
        by_domain.setdefault(prog.domains.get(x), []).append(x)
    for dom, names in by_domain.items():
        line = "var " + ", ".join(names)
        if dom is not None:
            line += " in {" + ", ".join(_show_value(v) for v in dom) + "}"
        out.append(line)
    for d in prog.preds.values():
        out.append(f"pred {d.name}({', '.join(d.params)}) := {show_assertion(d.body)}")
    for e in prog.resources:
        out.append(
            f"resource {e.name}({', '.join(sorted(e.protected))}) : {show_assertion(e.invariant)}"
        )
    for s in prog.specs.values():
        out.append(f"spec {s.name} {{")
        out.append(f"  context {show_context(s.context)}")
        out.append(f"  rely {show_vars(s.rely)}")
        if s.init is not None:
            out.append(f"  init {show_assertion(s.init)}")
        out.append(f"  pre {show_assertion(s.pre)}")
        out.append(f"  cmd {show_cmd(s.cmd)}")
        out.append(f"  post {show_assertion(s.post)}")
        if s.always is not None:
            out.append(f"  always {show_assertion(s.always)}")
        out.append("}")
    for name, d in prog.derivations.items():
        out.append(f"derivation {name} :=\n{show_derivation(d, 1)}")
    return "\n".join(out)
