"""Bounded semantics of assertions: satisfaction, precision, entailment, invariants."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
from typing import Iterable, Iterator, Mapping, Optional

from .ast import (
    EMP,
    And,
    Assertion,
    BAnd,
    BFalse,
    BinOp,
    BNot,
    BoolExpr,
    BTrue,
    Emp,
    Eq,
    Expr,
    Forall,
    Lt,
    Not,
    Null,
    Num,
    PointsTo,
    PredCall,
    Pure,
    ResourceContext,
    Star,
    Var,
    free_vars,
    is_pure,
    match_exists,
    match_or,
)
from .state import DomainBounds, Heap, Store, Value, compatible, heaps_over, show_value


class UnfoldingBudgetExceeded(RuntimeError):
    pass


class UnboundVariable(KeyError):
    pass


class UnknownPredicate(KeyError):
    pass


class UnknownResource(KeyError):
    pass


# ---------------------------------------------------------------------------
# Predicate definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: tuple[str, ...]
    body: Assertion


class PredicateTable(Mapping):
    """Immutable, hashable table of named predicate definitions."""

    __slots__ = ("_defs", "_key")

    def __init__(self, defs: Iterable[PredicateDef] = ()) -> None:
        self._defs = {d.name: d for d in defs}
        self._key = tuple(sorted((d.name, d.params, d.body) for d in self._defs.values()))

    def __getitem__(self, name: str) -> PredicateDef:
        return self._defs[name]

    def __iter__(self):
        return iter(self._defs)

    def __len__(self) -> int:
        return len(self._defs)

    def __hash__(self) -> int:
        return hash(self._key)

    def __eq__(self, other) -> bool:
        return isinstance(other, PredicateTable) and self._key == other._key


NO_PREDICATES = PredicateTable()


# ---------------------------------------------------------------------------
# Pure evaluation (unbounded integers; null in arithmetic is undefined)
# ---------------------------------------------------------------------------

_UNDEF = object()


def eval_term(e: Expr, env: Mapping[str, Value]):
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Null):
        return None
    left = eval_term(e.left, env)
    right = eval_term(e.right, env)
    if left is None or right is None or left is _UNDEF or right is _UNDEF:
        return _UNDEF
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    return left * right


def eval_guard(b: BoolExpr, env: Mapping[str, Value]) -> bool:
    """Classical evaluation; comparisons involving undefined arithmetic are false."""
    if isinstance(b, BTrue):
        return True
    if isinstance(b, BFalse):
        return False
    if isinstance(b, Eq):
        left, right = eval_term(b.left, env), eval_term(b.right, env)
        return left is not _UNDEF and right is not _UNDEF and left == right
    if isinstance(b, Lt):
        left, right = eval_term(b.left, env), eval_term(b.right, env)
        return isinstance(left, int) and isinstance(right, int) and left < right
    if isinstance(b, BAnd):
        return eval_guard(b.left, env) and eval_guard(b.right, env)
    assert isinstance(b, BNot)
    return not eval_guard(b.arg, env)


# ---------------------------------------------------------------------------
# Compiled evaluation
# ---------------------------------------------------------------------------


def _key(h: Mapping[int, Value]) -> frozenset:
    return frozenset(h.items())


def _compile_expr(e: Expr):
    """Closure computing eval_term(e, env)."""
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariable(name) from None

        return var
    if isinstance(e, Num):
        value = e.value
        return lambda env: value
    if isinstance(e, Null):
        return lambda env: None
    left, right = _compile_expr(e.left), _compile_expr(e.right)
    op = e.op

    def binop(env):
        a, b = left(env), right(env)
        if a is None or b is None or a is _UNDEF or b is _UNDEF:
            return _UNDEF
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        return a * b

    return binop


def _compile_guard(b: BoolExpr):
    """Closure computing eval_guard(b, env)."""
    if isinstance(b, BTrue):
        return lambda env: True
    if isinstance(b, BFalse):
        return lambda env: False
    if isinstance(b, (Eq, Lt)):
        left, right = _compile_expr(b.left), _compile_expr(b.right)
        if isinstance(b, Eq):

            def eq(env):
                x, y = left(env), right(env)
                return x is not _UNDEF and y is not _UNDEF and x == y

            return eq

        def lt(env):
            x, y = left(env), right(env)
            return type(x) is int and type(y) is int and x < y

        return lt
    if isinstance(b, BAnd):
        gl, gr = _compile_guard(b.left), _compile_guard(b.right)
        return lambda env: gl(env) and gr(env)
    assert isinstance(b, BNot)
    g = _compile_guard(b.arg)
    return lambda env: not g(env)


def _all_subdomains(h: Mapping[int, Value]) -> list[frozenset]:
    locs = sorted(h)
    return [frozenset(c) for k in range(len(locs) + 1) for c in combinations(locs, k)]


class _Node:
    """Compiled assertion. Every method agrees with the satisfaction relation."""

    pure = False

    def sat(self, env, h, depth: int, budget: int) -> bool:
        raise NotImplementedError

    def sub(self, env, h, depth: int, budget: int) -> list[frozenset]:
        if self.pure:
            return _all_subdomains(h) if self.sat(env, {}, depth, budget) else []
        return [
            d
            for d in _all_subdomains(h)
            if self.sat(env, {l: h[l] for l in d}, depth, budget)
        ]

    def models(self, env, avail: frozenset, cap: int, depth: int, budget: int) -> list[dict]:
        if self.pure and not self.sat(env, {}, depth, budget):
            return []
        # no generative structure: enumerate all bounded heaps
        return [
            dict(h)
            for h in heaps_over(avail, self.ev.bounds.quantifier_values, cap)
            if self.sat(env, h, 0, len(h) + 1)
        ]


class _PureN(_Node):
    pure = True

    def __init__(self, ev: Evaluator, cond: BoolExpr) -> None:
        self.ev = ev
        self.test = _compile_guard(cond)

    def sat(self, env, h, depth, budget):
        return self.test(env)


class _EmpN(_Node):
    def __init__(self, ev: Evaluator) -> None:
        self.ev = ev

    def sat(self, env, h, depth, budget):
        return not h

    def sub(self, env, h, depth, budget):
        return [frozenset()]

    def models(self, env, avail, cap, depth, budget):
        return [{}]


class _PtsN(_Node):
    def __init__(self, ev: Evaluator, p: PointsTo) -> None:
        self.ev = ev
        self.addr = _compile_expr(p.addr)
        self.values = [_compile_expr(e) for e in p.values]

    def cells(self, env) -> Optional[list[tuple[int, Value]]]:
        base = self.addr(env)
        if type(base) is not int:
            return None
        out = []
        for i, f in enumerate(self.values):
            v = f(env)
            if v is _UNDEF:
                return None
            out.append((base + i, v))
        return out

    def sat(self, env, h, depth, budget):
        cells = self.cells(env)
        if cells is None or len(h) != len(cells):
            return False
        return all(l in h and h[l] == v for l, v in cells)

    def sub(self, env, h, depth, budget):
        cells = self.cells(env)
        if cells is None or len({l for l, _ in cells}) != len(cells):
            return []
        if all(l in h and h[l] == v for l, v in cells):
            return [frozenset(l for l, _ in cells)]
        return []

    def models(self, env, avail, cap, depth, budget):
        cells = self.cells(env)
        if cells is None or len(cells) > cap:
            return []
        locs = [l for l, _ in cells]
        if len(set(locs)) != len(locs) or any(l not in avail for l in locs):
            return []
        # bounded heaps hold quantifier values only
        if any(v not in self.ev.qvset for _, v in cells):
            return []
        return [dict(cells)]


class _StarN(_Node):
    def __init__(self, ev: Evaluator, left: _Node, right: _Node) -> None:
        self.ev = ev
        self.left, self.right = left, right
        self.pure = left.pure and right.pure
        # with a pure side P, P * Q holds iff P holds and some subheap satisfies Q
        if left.pure:
            self.split = (left, right)
        elif right.pure:
            self.split = (right, left)
        else:
            self.split = None

    def sat(self, env, h, depth, budget):
        sp = self.split
        if sp is not None:
            return sp[0].sat(env, {}, depth, budget) and bool(sp[1].sub(env, h, depth, budget))
        right = self.right
        for d1 in self.left.sub(env, h, depth, budget):
            rest = {l: v for l, v in h.items() if l not in d1}
            if right.sat(env, rest, depth, budget):
                return True
        return False

    def sub(self, env, h, depth, budget):
        sp = self.split
        if sp is not None and not sp[0].sat(env, {}, depth, budget):
            return []
        out: list[frozenset] = []
        seen: set[frozenset] = set()
        for d1 in self.left.sub(env, h, depth, budget):
            rest = {l: v for l, v in h.items() if l not in d1}
            for d2 in self.right.sub(env, rest, depth, budget):
                d = d1 | d2
                if d not in seen:
                    seen.add(d)
                    out.append(d)
        return out

    def models(self, env, avail, cap, depth, budget):
        if self.pure:
            return _Node.models(self, env, avail, cap, depth, budget)
        sp = self.split
        if sp is not None and not sp[0].sat(env, {}, depth, budget):
            return []
        out: list[dict] = []
        seen: set[frozenset] = set()
        for m1 in self.left.models(env, avail, cap, depth, budget):
            rest = avail.difference(m1)
            for m2 in self.right.models(env, rest, cap - len(m1), depth, budget):
                m = {**m1, **m2}
                k = _key(m)
                if k not in seen:
                    seen.add(k)
                    out.append(m)
        return out


class _NotN(_Node):
    def __init__(self, ev: Evaluator, arg: _Node) -> None:
        self.ev = ev
        self.arg = arg
        self.pure = arg.pure

    def sat(self, env, h, depth, budget):
        return not self.arg.sat(env, h, depth, budget)


class _AndN(_Node):
    def __init__(self, ev: Evaluator, left: _Node, right: _Node) -> None:
        self.ev = ev
        self.left, self.right = left, right
        self.pure = left.pure and right.pure

    def sat(self, env, h, depth, budget):
        return self.left.sat(env, h, depth, budget) and self.right.sat(env, h, depth, budget)

    def sub(self, env, h, depth, budget):
        left, right = self.left, self.right
        if self.pure:
            return _Node.sub(self, env, h, depth, budget)
        if left.pure:
            return right.sub(env, h, depth, budget) if left.sat(env, {}, depth, budget) else []
        if right.pure:
            return left.sub(env, h, depth, budget) if right.sat(env, {}, depth, budget) else []
        return [
            d
            for d in left.sub(env, h, depth, budget)
            if right.sat(env, {l: h[l] for l in d}, depth, budget)
        ]

    def models(self, env, avail, cap, depth, budget):
        left, right = self.left, self.right
        if left.pure and not right.pure:
            if not left.sat(env, {}, depth, budget):
                return []
            return right.models(env, avail, cap, depth, budget)
        if right.pure and not left.pure:
            if not right.sat(env, {}, depth, budget):
                return []
            return left.models(env, avail, cap, depth, budget)
        if not left.pure:
            return [
                m
                for m in left.models(env, avail, cap, depth, budget)
                if right.sat(env, m, depth, len(m) + 1)
            ]
        return _Node.models(self, env, avail, cap, depth, budget)


class _OrN(_Node):
    def __init__(self, ev: Evaluator, left: _Node, right: _Node) -> None:
        self.ev = ev
        self.left, self.right = left, right
        self.pure = left.pure and right.pure

    def sat(self, env, h, depth, budget):
        return self.left.sat(env, h, depth, budget) or self.right.sat(env, h, depth, budget)

    def sub(self, env, h, depth, budget):
        if self.pure:
            return _Node.sub(self, env, h, depth, budget)
        return _merge(self.left.sub(env, h, depth, budget), self.right.sub(env, h, depth, budget))

    def models(self, env, avail, cap, depth, budget):
        return _merge_models(
            self.left.models(env, avail, cap, depth, budget),
            self.right.models(env, avail, cap, depth, budget),
        )


class _ForallN(_Node):
    def __init__(self, ev: Evaluator, var: str, body: _Node) -> None:
        self.ev = ev
        self.var, self.body = var, body
        self.pure = body.pure

    def sat(self, env, h, depth, budget):
        inner = dict(env)
        var, body = self.var, self.body
        for v in self.ev.bounds.quantifier_values:
            inner[var] = v
            if not body.sat(inner, h, depth, budget):
                return False
        return True


class _ExistsN(_Node):
    def __init__(self, ev: Evaluator, var: str, body: _Node, source: Assertion) -> None:
        self.ev = ev
        self.var, self.body = var, body
        self.pure = body.pure
        self.pins = [
            (kind, None if addr is None else _compile_expr(addr),
             frozenset() if addr is None else free_vars(addr), offset)
            for kind, addr, offset in _pins(var, source)
        ]

    def witnesses(self, env, h):
        """Values of the bound variable worth trying at heap h.

        A points-to that every model of the body contains pins the variable:
        as its address, it must be allocated; as its i-th value at a known
        address l, it must equal h(l+i); at an unknown address, it must occur in h.
        """
        qv = self.ev.bounds.quantifier_values
        loose = False
        for kind, addr, fv, offset in self.pins:
            if kind == "addr":
                return [v for v in qv if v in h]
            if addr is not None and fv <= env.keys():
                base = addr(env)
                if type(base) is not int or base + offset not in h:
                    return []
                v = h[base + offset]
                return [v] if v in self.ev.qvset else []
            loose = True
        if loose:
            present = set(h.values())
            return [v for v in qv if v in present]
        return qv

    def sat(self, env, h, depth, budget):
        inner = dict(env)
        var, body = self.var, self.body
        for v in self.witnesses(env, h):
            inner[var] = v
            if body.sat(inner, h, depth, budget):
                return True
        return False

    def sub(self, env, h, depth, budget):
        if self.pure:
            return _Node.sub(self, env, h, depth, budget)
        inner = dict(env)
        acc: list[frozenset] = []
        for v in self.witnesses(env, h):
            inner[self.var] = v
            acc = _merge(acc, self.body.sub(inner, h, depth, budget))
        return acc

    def models(self, env, avail, cap, depth, budget):
        if self.pure:
            return _Node.models(self, env, avail, cap, depth, budget)
        inner = dict(env)
        acc: list[dict] = []
        for v in self.ev.bounds.quantifier_values:
            inner[self.var] = v
            acc = _merge_models(acc, self.body.models(inner, avail, cap, depth, budget))
        return acc


class _PredN(_Node):
    def __init__(self, ev: Evaluator, call: PredCall) -> None:
        self.ev = ev
        self.name = call.name
        try:
            d = ev.preds[call.name]
        except KeyError:
            raise UnknownPredicate(call.name) from None
        if len(d.params) != len(call.args):
            raise ValueError(f"{call.name} expects {len(d.params)} arguments")
        self.params = d.params
        self.source = d.body
        self.args = [_compile_expr(a) for a in call.args]

    def _enter(self, env, depth, budget):
        if depth + 1 > budget:
            raise UnfoldingBudgetExceeded(self.name)
        return tuple(a(env) for a in self.args)

    def sat(self, env, h, depth, budget):
        args = self._enter(env, depth, budget)
        memo = self.ev._sat_memo
        key = (self.name, args, _key(h), budget - depth)
        if key not in memo:
            body = self.ev.compile(self.source)
            memo[key] = body.sat(dict(zip(self.params, args)), h, depth + 1, budget)
        return memo[key]

    def sub(self, env, h, depth, budget):
        args = self._enter(env, depth, budget)
        memo = self.ev._sub_memo
        key = (self.name, args, _key(h), budget - depth)
        if key not in memo:
            body = self.ev.compile(self.source)
            memo[key] = body.sub(dict(zip(self.params, args)), h, depth + 1, budget)
        return memo[key]

    def models(self, env, avail, cap, depth, budget):
        args = self._enter(env, depth, budget)
        memo = self.ev._models_memo
        key = (self.name, args, avail, cap, budget - depth)
        if key not in memo:
            body = self.ev.compile(self.source)
            memo[key] = body.models(dict(zip(self.params, args)), avail, cap, depth + 1, budget)
        return memo[key]


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


class Evaluator:
    """Satisfaction, satisfying-subheap search and model enumeration under fixed bounds."""

    def __init__(self, bounds: DomainBounds, preds: PredicateTable = NO_PREDICATES) -> None:
        self.bounds = bounds
        self.preds = preds
        self.qvset = frozenset(bounds.quantifier_values)
        # predicate-call memo tables; keys include the remaining unfolding budget
        self._sat_memo: dict = {}
        self._sub_memo: dict = {}
        self._models_memo: dict = {}
        self._compiled: dict[Assertion, _Node] = {}

    def compile(self, p: Assertion) -> _Node:
        node = self._compiled.get(p)
        if node is None:
            node = self._compiled[p] = self._build(p)
        return node

    def _build(self, p: Assertion) -> _Node:
        if isinstance(p, Pure):
            return _PureN(self, p.cond)
        if isinstance(p, Emp):
            return _EmpN(self)
        if isinstance(p, PointsTo):
            return _PtsN(self, p)
        if isinstance(p, Star):
            return _StarN(self, self.compile(p.left), self.compile(p.right))
        ex = match_exists(p)
        if ex is not None:
            return _ExistsN(self, ex[0], self.compile(ex[1]), ex[1])
        disj = match_or(p)
        if disj is not None:
            return _OrN(self, self.compile(disj[0]), self.compile(disj[1]))
        if isinstance(p, Not):
            return _NotN(self, self.compile(p.arg))
        if isinstance(p, And):
            return _AndN(self, self.compile(p.left), self.compile(p.right))
        if isinstance(p, Forall):
            return _ForallN(self, p.var, self.compile(p.body))
        assert isinstance(p, PredCall)
        return _PredN(self, p)

    def sat(self, env: Mapping[str, Value], h: Mapping[int, Value], p: Assertion) -> bool:
        return self.compile(p).sat(env, h, 0, len(h) + 1)

    def satisfying_subheaps(
        self, env: Mapping[str, Value], h: Mapping[int, Value], p: Assertion
    ) -> list[Heap]:
        """Every subheap g of h with env, g |= p, in deterministic order."""
        doms = self.compile(p).sub(env, h, 0, len(h) + 1)
        return [Heap({l: h[l] for l in d}) for d in sorted(doms, key=lambda d: (len(d), sorted(d)))]

    def models(
        self,
        env: Mapping[str, Value],
        p: Assertion,
        avail: Iterable[int] | None = None,
        cap: int | None = None,
    ) -> list[Heap]:
        """Every heap over avail with at most cap cells satisfying p, deterministic order."""
        locs = frozenset(self.bounds.locations if avail is None else avail)
        cap = self.bounds.max_heap_cells if cap is None else cap
        found = self.compile(p).models(env, locs, cap, 0, cap + 1)
        return [Heap(m) for m in sorted(found, key=_heap_order)]

@lru_cache(maxsize=64)
def evaluator(bounds: DomainBounds, preds: PredicateTable = NO_PREDICATES) -> Evaluator:
    """Shared evaluator (and memo tables) for the given bounds and predicates."""
    return Evaluator(bounds, preds)


def _heap_order(m: Mapping[int, Value]) -> tuple:
    return (len(m), [(l, (0, 0) if v is None else (1, v)) for l, v in sorted(m.items())])


def _pins(var: str, p: Assertion) -> tuple:
    """Mandatory points-to occurrences of var in p, as (kind, address, offset).

    The address is None when it mentions a variable bound inside p.
    """
    out = []
    stack: list[tuple[Assertion, frozenset]] = [(p, frozenset())]
    while stack:
        q, bound = stack.pop()
        ex = match_exists(q)
        if ex is not None:
            if ex[0] != var:
                stack.append((ex[1], bound | {ex[0]}))
        elif isinstance(q, (Star, And)):
            stack.append((q.right, bound))
            stack.append((q.left, bound))
        elif isinstance(q, PointsTo):
            if q.addr == Var(var):
                out.append(("addr", None, 0))
            for i, e in enumerate(q.values):
                if e == Var(var):
                    fv = free_vars(q.addr)
                    usable = not (fv & bound) and var not in fv
                    out.append(("value", q.addr if usable else None, i))
    # prefer pins that determine a single value
    out.sort(key=lambda t: (t[0] != "value" or t[1] is None, t[0] == "addr"))
    return tuple(out)


def _merge(a: list[frozenset], b: list[frozenset]) -> list[frozenset]:
    if not a:
        return list(b)
    seen = set(a)
    out = list(a)
    for d in b:
        if d not in seen:
            seen.add(d)
            out.append(d)
    return out


def _merge_models(a: list[dict], b: list[dict]) -> list[dict]:
    if not a:
        return list(b)
    seen = {_key(m) for m in a}
    out = list(a)
    for m in b:
        k = _key(m)
        if k not in seen:
            seen.add(k)
            out.append(m)
    return out


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def sat(
    s: Mapping[str, Value],
    h: Mapping[int, Value],
    p: Assertion,
    bounds: DomainBounds,
    preds: PredicateTable = NO_PREDICATES,
) -> bool:
    return evaluator(bounds, preds).sat(s, h, p)


def enumerate_stores(
    names: Iterable[str],
    bounds: DomainBounds,
    domains: Mapping[str, Iterable[Value]] | None = None,
) -> Iterator[dict[str, Value]]:
    """Cartesian product of per-variable domains (default: quantifier values), sorted by name."""
    names = sorted(set(names))
    doms = [
        tuple(domains[x]) if domains and x in domains else bounds.quantifier_values for x in names
    ]
    for combo in product(*doms):
        yield dict(zip(names, combo))


@dataclass(frozen=True)
class PrecisionReport:
    precise: bool
    witness: Optional[tuple[dict, Heap, Heap, Heap]] = None  # store, heap, two subheaps

    def __bool__(self) -> bool:
        return self.precise


_precision_cache: dict = {}


def check_precise(
    r: Assertion, bounds: DomainBounds, preds: PredicateTable = NO_PREDICATES
) -> PrecisionReport:
    """At most one satisfying subheap for every bounded store and heap.

    Two distinct satisfying heaps that agree on their overlap witness imprecision
    (their union has both as subheaps), so comparing models suffices.
    """
    from .ast import canonical

    key = (canonical(r), bounds, preds)
    if key in _precision_cache:
        return _precision_cache[key]
    ev = evaluator(bounds, preds)
    report = PrecisionReport(True)
    for env in enumerate_stores(free_vars(r), bounds):
        if is_pure(r):
            if ev.sat(env, {}, r):
                loc = bounds.locations[0]
                cell = Heap({loc: bounds.quantifier_values[0]})
                report = PrecisionReport(False, (env, cell, Heap(), cell))
                break
            continue
        found = _compatible_pair(ev.models(env, r))
        if found is not None:
            m1, m2 = found
            union = Heap({**m1, **m2})
            report = PrecisionReport(False, (env, union, m1, m2))
            break
    _precision_cache[key] = report
    return report


def _compatible_pair(models: list[Heap]) -> Optional[tuple[Heap, Heap]]:
    if len(models) < 2:
        return None
    common = frozenset.intersection(*(m.domain() for m in models))
    order = sorted(common)
    buckets: dict[tuple, list[Heap]] = {}
    for m in models:
        buckets.setdefault(tuple(m[l] for l in order), []).append(m)
    for group in buckets.values():
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                if compatible(a, b):
                    return a, b
    return None


@dataclass(frozen=True)
class EntailmentReport:
    holds: bool
    counterexample: Optional[tuple[dict, Heap]] = None

    def __bool__(self) -> bool:
        return self.holds

    def describe(self) -> str:
        if self.counterexample is None:
            return "holds"
        s, h = self.counterexample
        return f"{Store(s).dump()} {h.dump()}"


def entails(
    p: Assertion,
    q: Assertion,
    bounds: DomainBounds,
    preds: PredicateTable = NO_PREDICATES,
    domains: Mapping[str, Iterable[Value]] | None = None,
) -> EntailmentReport:
    ev = evaluator(bounds, preds)
    for env in enumerate_stores(free_vars(p) | free_vars(q), bounds, domains):
        for h in ev.models(env, p):
            if not ev.sat(env, h, q):
                return EntailmentReport(False, (env, h))
    return EntailmentReport(True)


def star_all(parts: Iterable[Assertion]) -> Assertion:
    out: Assertion | None = None
    for p in parts:
        out = p if out is None else Star(out, p)
    return EMP if out is None else out


def inv_subset(ctx: ResourceContext, names: Iterable[str]) -> Assertion:
    wanted = set(names)
    unknown = wanted - set(ctx.names())
    if unknown:
        raise UnknownResource(", ".join(sorted(unknown)))
    return star_all(e.invariant for e in ctx.entries if e.name in wanted)


def inv(ctx: ResourceContext) -> Assertion:
    return inv_subset(ctx, ctx.names())


def sat_store_insensitive_check(
    p: Assertion,
    s: Mapping[str, Value],
    s2: Mapping[str, Value],
    h: Mapping[int, Value],
    bounds: DomainBounds,
    preds: PredicateTable = NO_PREDICATES,
) -> bool:
    fv = free_vars(p)
    if any(s.get(x) != s2.get(x) for x in fv):
        raise ValueError("stores disagree on a free variable")
    ev = evaluator(bounds, preds)
    return ev.sat(s, h, p) == ev.sat(s2, h, p)


def describe_state(s: Mapping[str, Value], h: Mapping[int, Value]) -> str:
    return f"{Store(s).dump()} {Heap(h).dump()}"


__all__ = [
    "Evaluator",
    "evaluator",
    "PredicateDef",
    "PredicateTable",
    "NO_PREDICATES",
    "UnfoldingBudgetExceeded",
    "UnboundVariable",
    "UnknownPredicate",
    "UnknownResource",
    "PrecisionReport",
    "EntailmentReport",
    "sat",
    "check_precise",
    "entails",
    "inv",
    "inv_subset",
    "star_all",
    "enumerate_stores",
    "eval_term",
    "eval_guard",
    "sat_store_insensitive_check",
    "describe_state",
    "show_value",
]
