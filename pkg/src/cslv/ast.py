"""Abstract syntax for expressions, guards, assertions, commands and resource
contexts, together with the syntactic functions defined over them.

All nodes are frozen dataclasses: hashable, comparable, safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class BinOp:
    op: str  # one of "+", "-", "*"
    left: Expr
    right: Expr


Expr = Union[Var, Num, Null, BinOp]

NULL = Null()


# ---------------------------------------------------------------------------
# Boolean expressions (guards)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BTrue:
    pass


@dataclass(frozen=True)
class BFalse:
    pass


@dataclass(frozen=True)
class Eq:
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Lt:
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BAnd:
    left: BoolExpr
    right: BoolExpr


@dataclass(frozen=True)
class BNot:
    arg: BoolExpr


BoolExpr = Union[BTrue, BFalse, Eq, Lt, BAnd, BNot]


def b_or(left: BoolExpr, right: BoolExpr) -> BoolExpr:
    return BNot(BAnd(BNot(left), BNot(right)))


# ---------------------------------------------------------------------------
# Assertions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pure:
    """Lift of an atomic guard (true, false, =, <) into the assertion language."""

    cond: BoolExpr


@dataclass(frozen=True)
class Not:
    arg: Assertion


@dataclass(frozen=True)
class And:
    left: Assertion
    right: Assertion


@dataclass(frozen=True)
class Forall:
    var: str
    body: Assertion


@dataclass(frozen=True)
class Emp:
    pass


@dataclass(frozen=True)
class PointsTo:
    addr: Expr
    values: tuple[Expr, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("points-to needs at least one value")


@dataclass(frozen=True)
class Star:
    left: Assertion
    right: Assertion


@dataclass(frozen=True)
class PredCall:
    name: str
    args: tuple[Expr, ...]


Assertion = Union[Pure, Not, And, Forall, Emp, PointsTo, Star, PredCall]

EMP = Emp()
TRUE = Pure(BTrue())
FALSE = Pure(BFalse())


def a_or(left: Assertion, right: Assertion) -> Assertion:
    return Not(And(Not(left), Not(right)))


def a_exists(var: str, body: Assertion) -> Assertion:
    return Not(Forall(var, Not(body)))


def match_or(p: Assertion) -> tuple[Assertion, Assertion] | None:
    if isinstance(p, Not) and isinstance(p.arg, And):
        left, right = p.arg.left, p.arg.right
        if isinstance(left, Not) and isinstance(right, Not):
            return left.arg, right.arg
    return None


def match_exists(p: Assertion) -> tuple[str, Assertion] | None:
    if isinstance(p, Not) and isinstance(p.arg, Forall) and isinstance(p.arg.body, Not):
        return p.arg.var, p.arg.body.arg
    return None


def lift_bool(b: BoolExpr) -> Assertion:
    """Assertion-level form of a guard; connectives become assertion connectives."""
    if isinstance(b, BAnd):
        return And(lift_bool(b.left), lift_bool(b.right))
    if isinstance(b, BNot):
        return Not(lift_bool(b.arg))
    return Pure(b)


def is_pure(p: Assertion) -> bool:
    """True when satisfaction does not depend on the heap."""
    if isinstance(p, Pure):
        return True
    if isinstance(p, Not):
        return is_pure(p.arg)
    if isinstance(p, And):
        return is_pure(p.left) and is_pure(p.right)
    if isinstance(p, Forall):
        return is_pure(p.body)
    return False


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Load:
    var: str
    addr: Expr


@dataclass(frozen=True)
class Store:
    addr: Expr
    value: Expr


@dataclass(frozen=True)
class Cons:
    var: str
    args: tuple[Expr, ...]

    def __post_init__(self) -> None:
        if not self.args:
            raise ValueError("cons needs at least one argument")


@dataclass(frozen=True)
class Dispose:
    addr: Expr


@dataclass(frozen=True)
class Seq:
    first: Command
    second: Command


@dataclass(frozen=True)
class If:
    cond: BoolExpr
    then: Command
    orelse: Command


@dataclass(frozen=True)
class While:
    cond: BoolExpr
    body: Command


@dataclass(frozen=True)
class Res:
    name: str
    body: Command


@dataclass(frozen=True)
class With:
    name: str
    cond: BoolExpr
    body: Command


@dataclass(frozen=True)
class Within:
    name: str
    body: Command


@dataclass(frozen=True)
class Par:
    left: Command
    right: Command


BasicCmd = Union[Assign, Load, Store, Cons, Dispose]
Command = Union[Skip, Assign, Load, Store, Cons, Dispose, Seq, If, While, Res, With, Within, Par]

BASIC_TYPES = (Assign, Load, Store, Cons, Dispose)
SKIP = Skip()


def is_basic(c: Command) -> bool:
    return isinstance(c, BASIC_TYPES)


def seq_all(cmds: Iterable[Command]) -> Command:
    items = list(cmds)
    if not items:
        return SKIP
    out = items[-1]
    for c in reversed(items[:-1]):
        out = Seq(c, out)
    return out


# ---------------------------------------------------------------------------
# Resource contexts
# ---------------------------------------------------------------------------


class InvalidContext(ValueError):
    pass


@dataclass(frozen=True)
class ResourceEntry:
    name: str
    protected: frozenset[str]
    invariant: Assertion


@dataclass(frozen=True)
class ResourceContext:
    """Ordered declarations r(X):R. Precision of R is checked semantically elsewhere."""

    entries: tuple[ResourceEntry, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.name in seen:
                raise InvalidContext(f"duplicate resource {e.name}")
            seen.add(e.name)
            extra = free_vars(e.invariant) - e.protected
            if extra:
                raise InvalidContext(
                    f"invariant of {e.name} mentions unprotected variables {sorted(extra)}"
                )

    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def __contains__(self, name: object) -> bool:
        return any(e.name == name for e in self.entries)

    def __iter__(self) -> Iterator[ResourceEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, name: str) -> ResourceEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def pv(self, names: Iterable[str] | None = None) -> frozenset[str]:
        """Protected variables of the given resources (all when None); unknown names contribute nothing."""
        wanted = None if names is None else set(names)
        out: set[str] = set()
        for e in self.entries:
            if wanted is None or e.name in wanted:
                out |= e.protected
        return frozenset(out)

    def without(self, name: str) -> ResourceContext:
        return ResourceContext(tuple(e for e in self.entries if e.name != name))

    def extend(self, entry: ResourceEntry) -> ResourceContext:
        return ResourceContext(self.entries + (entry,))

    def rename(self, old: str, new: str) -> ResourceContext:
        return ResourceContext(
            tuple(
                ResourceEntry(new, e.protected, e.invariant) if e.name == old else e
                for e in self.entries
            )
        )


EMPTY_CONTEXT = ResourceContext()


# ---------------------------------------------------------------------------
# Free variables
# ---------------------------------------------------------------------------


def _fv_expr(e: Expr, out: set[str]) -> None:
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, BinOp):
        _fv_expr(e.left, out)
        _fv_expr(e.right, out)


def _fv_bool(b: BoolExpr, out: set[str]) -> None:
    if isinstance(b, (Eq, Lt)):
        _fv_expr(b.left, out)
        _fv_expr(b.right, out)
    elif isinstance(b, BAnd):
        _fv_bool(b.left, out)
        _fv_bool(b.right, out)
    elif isinstance(b, BNot):
        _fv_bool(b.arg, out)


def _fv_assertion(p: Assertion, out: set[str]) -> None:
    if isinstance(p, Pure):
        _fv_bool(p.cond, out)
    elif isinstance(p, Not):
        _fv_assertion(p.arg, out)
    elif isinstance(p, (And, Star)):
        _fv_assertion(p.left, out)
        _fv_assertion(p.right, out)
    elif isinstance(p, Forall):
        inner: set[str] = set()
        _fv_assertion(p.body, inner)
        inner.discard(p.var)
        out |= inner
    elif isinstance(p, PointsTo):
        _fv_expr(p.addr, out)
        for v in p.values:
            _fv_expr(v, out)
    elif isinstance(p, PredCall):
        for a in p.args:
            _fv_expr(a, out)


def _fv_cmd(c: Command, out: set[str]) -> None:
    if isinstance(c, Assign):
        out.add(c.var)
        _fv_expr(c.expr, out)
    elif isinstance(c, Load):
        out.add(c.var)
        _fv_expr(c.addr, out)
    elif isinstance(c, Store):
        _fv_expr(c.addr, out)
        _fv_expr(c.value, out)
    elif isinstance(c, Cons):
        out.add(c.var)
        for a in c.args:
            _fv_expr(a, out)
    elif isinstance(c, Dispose):
        _fv_expr(c.addr, out)
    elif isinstance(c, (Seq, Par)):
        a, b = (c.first, c.second) if isinstance(c, Seq) else (c.left, c.right)
        _fv_cmd(a, out)
        _fv_cmd(b, out)
    elif isinstance(c, If):
        _fv_bool(c.cond, out)
        _fv_cmd(c.then, out)
        _fv_cmd(c.orelse, out)
    elif isinstance(c, While):
        _fv_bool(c.cond, out)
        _fv_cmd(c.body, out)
    elif isinstance(c, With):
        _fv_bool(c.cond, out)
        _fv_cmd(c.body, out)
    elif isinstance(c, (Res, Within)):
        _fv_cmd(c.body, out)


_EXPR_TYPES = (Var, Num, Null, BinOp)
_BOOL_TYPES = (BTrue, BFalse, Eq, Lt, BAnd, BNot)
_ASSERTION_TYPES = (Pure, Not, And, Forall, Emp, PointsTo, Star, PredCall)


def free_vars(t: Expr | BoolExpr | Assertion | Command) -> frozenset[str]:
    out: set[str] = set()
    if isinstance(t, _EXPR_TYPES):
        _fv_expr(t, out)
    elif isinstance(t, _BOOL_TYPES):
        _fv_bool(t, out)
    elif isinstance(t, _ASSERTION_TYPES):
        _fv_assertion(t, out)
    else:
        _fv_cmd(t, out)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Syntactic functions on commands
# ---------------------------------------------------------------------------


def subcommands(c: Command) -> Iterator[Command]:
    """Pre-order traversal of c and all nested commands."""
    yield c
    if isinstance(c, Seq):
        yield from subcommands(c.first)
        yield from subcommands(c.second)
    elif isinstance(c, Par):
        yield from subcommands(c.left)
        yield from subcommands(c.right)
    elif isinstance(c, If):
        yield from subcommands(c.then)
        yield from subcommands(c.orelse)
    elif isinstance(c, (While, Res, With, Within)):
        yield from subcommands(c.body)


def target(c: Command) -> str | None:
    """Variable written by a basic command, if any."""
    if isinstance(c, (Assign, Load, Cons)):
        return c.var
    return None


def mod_vars(c: Command) -> frozenset[str]:
    return frozenset(t for sub in subcommands(c) if (t := target(sub)) is not None)


def res_names(c: Command) -> frozenset[str]:
    return frozenset(sub.name for sub in subcommands(c) if isinstance(sub, (Res, With, Within)))


def locked(c: Command) -> frozenset[str]:
    if isinstance(c, Seq):
        return locked(c.first)
    if isinstance(c, Par):
        return locked(c.left) | locked(c.right)
    if isinstance(c, Res):
        return locked(c.body) - {c.name}
    if isinstance(c, Within):
        return locked(c.body) | {c.name}
    return frozenset()


def chng_vars(c: Command) -> frozenset[str]:
    """Variables the next single program transition of c may write."""
    t = target(c)
    if t is not None:
        return frozenset({t})
    if isinstance(c, Seq):
        return chng_vars(c.first)
    if isinstance(c, Par):
        return chng_vars(c.left) | chng_vars(c.right)
    if isinstance(c, (Within, Res)):
        return chng_vars(c.body)
    # skip, store, dispose, if, while, with: no store write in the next step
    return frozenset()


def is_extended(c: Command) -> bool:
    return any(isinstance(sub, Within) for sub in subcommands(c))


class InvalidRename(ValueError):
    pass


def _rename(c: Command, old: str, new: str) -> Command:
    if isinstance(c, Seq):
        return Seq(_rename(c.first, old, new), _rename(c.second, old, new))
    if isinstance(c, Par):
        return Par(_rename(c.left, old, new), _rename(c.right, old, new))
    if isinstance(c, If):
        return If(c.cond, _rename(c.then, old, new), _rename(c.orelse, old, new))
    if isinstance(c, While):
        return While(c.cond, _rename(c.body, old, new))
    if isinstance(c, Res):
        return Res(new if c.name == old else c.name, _rename(c.body, old, new))
    if isinstance(c, With):
        return With(new if c.name == old else c.name, c.cond, _rename(c.body, old, new))
    if isinstance(c, Within):
        return Within(new if c.name == old else c.name, _rename(c.body, old, new))
    return c


def rename_resource(c: Command, old: str, new: str) -> Command:
    if old != new and new in res_names(c):
        raise InvalidRename(f"{new} already occurs in the command")
    return _rename(c, old, new)


def is_aux_set(c: Command, xs: Iterable[str]) -> bool:
    """Every occurrence of a variable of xs sits inside a plain assignment to a variable of xs.

    Loads and allocations are not assignments here, so a target of either disqualifies.
    """
    xs = frozenset(xs)
    if not xs:
        return True
    for sub in subcommands(c):
        if isinstance(sub, Assign):
            if sub.var in xs:
                continue
            if free_vars(sub.expr) & xs:
                return False
        elif is_basic(sub):
            if free_vars(sub) & xs:
                return False
        elif isinstance(sub, (If, While, With)):
            if free_vars(sub.cond) & xs:
                return False
    return True


class NotAuxiliary(ValueError):
    pass


def _erase(c: Command, xs: frozenset[str]) -> Command:
    if isinstance(c, Assign) and c.var in xs:
        return SKIP
    if isinstance(c, Seq):
        return Seq(_erase(c.first, xs), _erase(c.second, xs))
    if isinstance(c, Par):
        return Par(_erase(c.left, xs), _erase(c.right, xs))
    if isinstance(c, If):
        return If(c.cond, _erase(c.then, xs), _erase(c.orelse, xs))
    if isinstance(c, While):
        return While(c.cond, _erase(c.body, xs))
    if isinstance(c, Res):
        return Res(c.name, _erase(c.body, xs))
    if isinstance(c, With):
        return With(c.name, c.cond, _erase(c.body, xs))
    if isinstance(c, Within):
        return Within(c.name, _erase(c.body, xs))
    return c


def erase_aux(c: Command, xs: Iterable[str]) -> Command:
    xs = frozenset(xs)
    if not is_aux_set(c, xs):
        raise NotAuxiliary(f"{sorted(xs)} is not auxiliary for the command")
    return _erase(c, xs)


def count_aux_assignments(c: Command, xs: Iterable[str]) -> int:
    xs = frozenset(xs)
    return sum(1 for sub in subcommands(c) if isinstance(sub, Assign) and sub.var in xs)


# ---------------------------------------------------------------------------
# Alpha-equivalence of assertions
# ---------------------------------------------------------------------------


def _canon_expr(e: Expr, env: Mapping[str, str]) -> Expr:
    if isinstance(e, Var):
        return Var(env.get(e.name, e.name))
    if isinstance(e, BinOp):
        return BinOp(e.op, _canon_expr(e.left, env), _canon_expr(e.right, env))
    return e


def _canon_bool(b: BoolExpr, env: Mapping[str, str]) -> BoolExpr:
    if isinstance(b, Eq):
        return Eq(_canon_expr(b.left, env), _canon_expr(b.right, env))
    if isinstance(b, Lt):
        return Lt(_canon_expr(b.left, env), _canon_expr(b.right, env))
    if isinstance(b, BAnd):
        return BAnd(_canon_bool(b.left, env), _canon_bool(b.right, env))
    if isinstance(b, BNot):
        return BNot(_canon_bool(b.arg, env))
    return b


def _canon(p: Assertion, env: dict[str, str], depth: int) -> Assertion:
    if isinstance(p, Pure):
        inner = lift_bool(p.cond)
        if isinstance(inner, Pure):
            return Pure(_canon_bool(p.cond, env))
        return _canon(inner, env, depth)
    if isinstance(p, Not):
        return Not(_canon(p.arg, env, depth))
    if isinstance(p, And):
        return And(_canon(p.left, env, depth), _canon(p.right, env, depth))
    if isinstance(p, Star):
        return Star(_canon(p.left, env, depth), _canon(p.right, env, depth))
    if isinstance(p, Forall):
        fresh = f"#{depth}"
        return Forall(fresh, _canon(p.body, {**env, p.var: fresh}, depth + 1))
    if isinstance(p, PointsTo):
        return PointsTo(_canon_expr(p.addr, env), tuple(_canon_expr(v, env) for v in p.values))
    if isinstance(p, PredCall):
        return PredCall(p.name, tuple(_canon_expr(a, env) for a in p.args))
    return p


def canonical(p: Assertion) -> Assertion:
    """Representative of p's alpha-class; lifted guard connectives are flattened."""
    return _canon(p, {}, 0)


def alpha_equal(p: Assertion, q: Assertion) -> bool:
    return p == q or canonical(p) == canonical(q)


# ---------------------------------------------------------------------------
# Pretty printing (canonical concrete syntax, re-parsable)
# ---------------------------------------------------------------------------


def _show_num(n: int) -> str:
    return str(n)


def show_expr(e: Expr, *, in_assertion: bool = False, prec: int = 0) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Num):
        return _show_num(e.value)
    if isinstance(e, Null):
        return "null"
    op_prec = 2 if e.op == "*" else 1
    left = show_expr(e.left, in_assertion=in_assertion, prec=op_prec)
    right = show_expr(e.right, in_assertion=in_assertion, prec=op_prec + 1)
    text = f"{left} {e.op} {right}"
    # '*' is separating conjunction in assertions, so products are always bracketed there
    if prec > op_prec or (in_assertion and e.op == "*"):
        return f"({text})"
    return text


def show_bool(b: BoolExpr, prec: int = 0) -> str:
    # precedence: or 0 < and 1 < not/atom 2
    if isinstance(b, BTrue):
        return "true"
    if isinstance(b, BFalse):
        return "false"
    if isinstance(b, Eq):
        return f"{show_expr(b.left)} = {show_expr(b.right)}"
    if isinstance(b, Lt):
        return f"{show_expr(b.left)} < {show_expr(b.right)}"
    if isinstance(b, BNot) and isinstance(b.arg, BAnd):
        left, right = b.arg.left, b.arg.right
        if isinstance(left, BNot) and isinstance(right, BNot):
            text = f"{show_bool(left.arg, 0)} \\/ {show_bool(right.arg, 1)}"
            return f"({text})" if prec > 0 else text
    if isinstance(b, BAnd):
        text = f"{show_bool(b.left, 1)} /\\ {show_bool(b.right, 2)}"
        return f"({text})" if prec > 1 else text
    assert isinstance(b, BNot)
    if isinstance(b.arg, (Eq, Lt)):
        return f"~({show_bool(b.arg)})"
    return f"~{show_bool(b.arg, 2)}"


# assertion precedence levels: quantifier 0 < or 1 < and 2 < star 3 < unary/atom 4
def show_assertion(p: Assertion, prec: int = 0) -> str:
    ex = match_exists(p)
    if ex is not None:
        var, body = ex
        names = [var]
        while (nxt := match_exists(body)) is not None:
            names.append(nxt[0])
            body = nxt[1]
        text = f"exists {', '.join(names)}. {show_assertion(body, 0)}"
        return f"({text})" if prec > 0 else text
    disj = match_or(p)
    if disj is not None:
        text = f"{show_assertion(disj[0], 1)} \\/ {show_assertion(disj[1], 2)}"
        return f"({text})" if prec > 1 else text
    if isinstance(p, Forall):
        text = f"forall {p.var}. {show_assertion(p.body, 0)}"
        return f"({text})" if prec > 0 else text
    if isinstance(p, And):
        text = f"{show_assertion(p.left, 2)} /\\ {show_assertion(p.right, 3)}"
        return f"({text})" if prec > 2 else text
    if isinstance(p, Star):
        text = f"{show_assertion(p.left, 3)} * {show_assertion(p.right, 4)}"
        return f"({text})" if prec > 3 else text
    if isinstance(p, Not):
        return f"~{show_assertion(p.arg, 5)}"
    if isinstance(p, Emp):
        return "emp"
    if isinstance(p, PointsTo):
        vals = ", ".join(show_expr(v, in_assertion=True, prec=1) for v in p.values)
        text = f"{show_expr(p.addr, in_assertion=True, prec=1)} |-> {vals}"
        return f"({text})" if prec > 4 else text
    if isinstance(p, PredCall):
        return f"{p.name}({', '.join(show_expr(a, in_assertion=True) for a in p.args)})"
    assert isinstance(p, Pure)
    b = p.cond
    if isinstance(b, (Eq, Lt)):
        op = "=" if isinstance(b, Eq) else "<"
        text = (
            f"{show_expr(b.left, in_assertion=True)} {op} {show_expr(b.right, in_assertion=True)}"
        )
        return f"({text})" if prec > 4 else text
    if isinstance(b, (BTrue, BFalse)):
        return show_bool(b)
    return show_assertion(lift_bool(b), prec)


def show_cmd(c: Command, prec: int = 0) -> str:
    # precedence: par 0 < seq 1 < unit 2
    if isinstance(c, Skip):
        return "skip"
    if isinstance(c, Assign):
        return f"{c.var} := {show_expr(c.expr)}"
    if isinstance(c, Load):
        return f"{c.var} := [{show_expr(c.addr)}]"
    if isinstance(c, Store):
        return f"[{show_expr(c.addr)}] := {show_expr(c.value)}"
    if isinstance(c, Cons):
        return f"{c.var} := cons({', '.join(show_expr(a) for a in c.args)})"
    if isinstance(c, Dispose):
        return f"dispose({show_expr(c.addr)})"
    if isinstance(c, Seq):
        text = f"{show_cmd(c.first, 2)}; {show_cmd(c.second, 1)}"
        return f"({text})" if prec > 1 else text
    if isinstance(c, Par):
        text = f"{show_cmd(c.left, 0)} || {show_cmd(c.right, 1)}"
        return f"({text})" if prec > 0 else text
    if isinstance(c, If):
        return f"if {show_bool(c.cond)} then {show_cmd(c.then, 2)} else {show_cmd(c.orelse, 2)}"
    if isinstance(c, While):
        return f"while {show_bool(c.cond)} do {show_cmd(c.body, 2)}"
    if isinstance(c, Res):
        return f"res {c.name}. {show_cmd(c.body, 2)}"
    if isinstance(c, With):
        return f"with {c.name} when {show_bool(c.cond)} do {show_cmd(c.body, 2)}"
    assert isinstance(c, Within)
    return f"within {c.name} do {show_cmd(c.body, 2)}"


def show_context(ctx: ResourceContext) -> str:
    items = [
        f"{e.name}({', '.join(sorted(e.protected))}) : {show_assertion(e.invariant)}"
        for e in ctx.entries
    ]
    return "[" + "; ".join(items) + "]"


def show_vars(xs: Iterable[str]) -> str:
    return "{" + ", ".join(sorted(xs)) + "}"
