"""Small-step program transitions, abort transitions and environment transitions."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional

from .assertions import evaluator, PredicateTable, NO_PREDICATES, eval_guard, inv_subset
from .ast import (
    Assign,
    BinOp,
    Command,
    Cons,
    Dispose,
    Expr,
    If,
    Load,
    Num,
    Null,
    Par,
    Res,
    ResourceContext,
    Seq,
    Skip,
    Store as StoreCmd,
    Var,
    While,
    With,
    Within,
    SKIP,
    EMPTY_CONTEXT,
    free_vars,
    locked,
    show_cmd,
)
from .state import (
    DomainBounds,
    Heap,
    MachineState,
    ResourceConfiguration,
    Store,
    Value,
    heap_union,
)

PROGRAM_TAGS = ("S1", "S2", "LP", "IF1", "IF2", "P1", "P2", "P3", "R0", "R1", "R2", "W0", "W1", "W2", "BCT")
ABORT_TAGS = ("RA", "WA", "RA1", "RA2", "BCA", "SA", "WA1", "WA2", "PA1", "PA2")


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


class EvalError(Exception):
    """Expression evaluation failure; a basic command raising it aborts."""

    def __init__(self, kind: str, detail: str = "") -> None:
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind  # "null-operand" | "overflow" | "unbound"


def _eval(s, e: Expr):
    if isinstance(e, Var):
        try:
            return s[e.name]
        except KeyError:
            raise EvalError("unbound", e.name) from None
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Null):
        return None
    assert isinstance(e, BinOp)
    left, right = _eval(s, e.left), _eval(s, e.right)
    if left is None or right is None:
        raise EvalError("null-operand", show_cmd_expr(e))
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    return left * right


def show_cmd_expr(e: Expr) -> str:
    from .ast import show_expr

    return show_expr(e)


def eval_expr(s, e: Expr, bounds: DomainBounds | None = None) -> Value:
    """Value of e in s; the result must lie in the bounded value set when bounds are given."""
    v = _eval(s, e)
    if bounds is not None and v is not None and not bounds.in_range(v):
        raise EvalError("overflow", f"{show_cmd_expr(e)} = {v}")
    return v


# ---------------------------------------------------------------------------
# Basic commands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasicResult:
    outcomes: tuple[tuple[Store, Heap], ...] = ()
    abort: Optional[str] = None  # reason, when the command faults
    exhausted: bool = False  # cons found no free run


def free_runs(h, n: int, bounds: DomainBounds) -> list[int]:
    """Start locations of every run of n consecutive free cells in the location universe."""
    out = []
    for l in bounds.locations:
        if all(bounds.is_location(l + i) and (l + i) not in h for i in range(n)):
            out.append(l)
    return out


def exec_basic(c: Command, s: Store, h: Heap, bounds: DomainBounds, explore: bool = True) -> BasicResult:
    try:
        if isinstance(c, Assign):
            return BasicResult(((s.set(c.var, eval_expr(s, c.expr, bounds)), h),))
        if isinstance(c, Load):
            a = eval_expr(s, c.addr, bounds)
            if a not in h:
                return BasicResult(abort=f"load from unallocated {_show(a)}")
            return BasicResult(((s.set(c.var, h[a]), h),))
        if isinstance(c, StoreCmd):
            a = eval_expr(s, c.addr, bounds)
            v = eval_expr(s, c.value, bounds)
            if a not in h:
                return BasicResult(abort=f"store to unallocated {_show(a)}")
            return BasicResult(((s, h.set(a, v)),))
        if isinstance(c, Dispose):
            a = eval_expr(s, c.addr, bounds)
            if a not in h:
                return BasicResult(abort=f"dispose of unallocated {_show(a)}")
            return BasicResult(((s, h.remove(a)),))
        assert isinstance(c, Cons)
        vals = [eval_expr(s, e, bounds) for e in c.args]
        runs = free_runs(h, len(vals), bounds)
        if not runs:
            return BasicResult(exhausted=True)
        if not explore:
            runs = runs[:1]
        outs = []
        for base in runs:
            d = h.as_dict()
            for i, v in enumerate(vals):
                d[base + i] = v
            outs.append((s.set(c.var, base), Heap(d)))
        return BasicResult(tuple(outs))
    except EvalError as err:
        return BasicResult(abort=str(err))


def _show(v: Value) -> str:
    return "null" if v is None else str(v)


# ---------------------------------------------------------------------------
# Program and abort transitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    tag: str
    command: Command
    state: MachineState


@dataclass(frozen=True)
class StepResult:
    successors: tuple[Transition, ...] = ()
    aborts: frozenset[str] = frozenset()
    exhausted: bool = False
    abort_detail: str = ""

    @property
    def aborting(self) -> bool:
        return bool(self.aborts)

    def targets(self) -> set[tuple[Command, MachineState]]:
        return {(t.command, t.state) for t in self.successors}

    def tagged(self) -> set[tuple[str, Command, MachineState]]:
        return {(t.tag, t.command, t.state) for t in self.successors}


_NO_STEP = StepResult()


def _cfg(o, l, d) -> ResourceConfiguration:
    return ResourceConfiguration(frozenset(o), frozenset(l), frozenset(d))


def step(c: Command, sigma: MachineState, bounds: DomainBounds, explore: bool = True) -> StepResult:
    """Every program transition and every applicable abort rule of (c, sigma)."""
    s, h, rho = sigma.store, sigma.heap, sigma.config

    if isinstance(c, Skip):
        return _NO_STEP

    if isinstance(c, (Assign, Load, StoreCmd, Dispose, Cons)):
        r = exec_basic(c, s, h, bounds, explore)
        if r.abort is not None:
            return StepResult(aborts=frozenset({"BCA"}), abort_detail=r.abort)
        succ = tuple(Transition("BCT", SKIP, MachineState(s2, h2, rho)) for s2, h2 in r.outcomes)
        return StepResult(succ, exhausted=r.exhausted)

    if isinstance(c, Seq):
        if isinstance(c.first, Skip):
            return StepResult((Transition("S1", c.second, sigma),))
        inner = step(c.first, sigma, bounds, explore)
        succ = tuple(Transition("S2", Seq(t.command, c.second), t.state) for t in inner.successors)
        return StepResult(
            succ, frozenset({"SA"}) if inner.aborts else frozenset(), inner.exhausted, inner.abort_detail
        )

    if isinstance(c, While):
        return StepResult((Transition("LP", If(c.cond, Seq(c.body, c), SKIP), sigma),))

    if isinstance(c, If):
        if eval_guard(c.cond, s):
            return StepResult((Transition("IF1", c.then, sigma),))
        return StepResult((Transition("IF2", c.orelse, sigma),))

    if isinstance(c, Par):
        if isinstance(c.left, Skip) and isinstance(c.right, Skip):
            return StepResult((Transition("P3", SKIP, sigma),))
        left = step(c.left, sigma, bounds, explore)
        right = step(c.right, sigma, bounds, explore)
        succ = tuple(Transition("P1", Par(t.command, c.right), t.state) for t in left.successors)
        succ += tuple(Transition("P2", Par(c.left, t.command), t.state) for t in right.successors)
        aborts = set()
        if left.aborts:
            aborts.add("PA1")
        if right.aborts:
            aborts.add("PA2")
        detail = left.abort_detail or right.abort_detail
        return StepResult(succ, frozenset(aborts), left.exhausted or right.exhausted, detail)

    if isinstance(c, Res):
        r = c.name
        if r in rho:
            return StepResult(aborts=frozenset({"RA"}), abort_detail=f"resource {r} already exists")
        if isinstance(c.body, Skip):
            return StepResult((Transition("R0", SKIP, sigma),))
        if r in locked(c.body):
            inner_rho = _cfg(rho.owned | {r}, rho.locked, rho.available)
            tag, atag = "R1", "RA1"
        else:
            inner_rho = _cfg(rho.owned, rho.locked, rho.available | {r})
            tag, atag = "R2", "RA2"
        inner = step(c.body, MachineState(s, h, inner_rho), bounds, explore)
        succ = tuple(
            Transition(tag, Res(r, t.command), t.state.with_config(t.state.config.remove(r)))
            for t in inner.successors
        )
        return StepResult(
            succ, frozenset({atag}) if inner.aborts else frozenset(), inner.exhausted, inner.abort_detail
        )

    if isinstance(c, With):
        r = c.name
        if r not in rho:
            return StepResult(aborts=frozenset({"WA"}), abort_detail=f"undeclared resource {r}")
        if r in rho.available and eval_guard(c.cond, s):
            new_rho = _cfg(rho.owned | {r}, rho.locked, rho.available - {r})
            return StepResult((Transition("W0", Within(r, c.body), sigma.with_config(new_rho)),))
        return _NO_STEP  # blocked

    assert isinstance(c, Within)
    r = c.name
    aborts: set[str] = set()
    detail = ""
    succ: tuple[Transition, ...] = ()
    exhausted = False
    if r not in rho.owned:
        aborts.add("WA2")
        detail = f"resource {r} not owned"
    released = MachineState(s, h, rho.remove(r))
    inner = step(c.body, released, bounds, explore)
    if inner.aborts:
        aborts.add("WA1")
        detail = detail or inner.abort_detail
    if r in rho.owned:
        if isinstance(c.body, Skip):
            new_rho = _cfg(rho.owned - {r}, rho.locked, rho.available | {r})
            succ = (Transition("W2", SKIP, sigma.with_config(new_rho)),)
        else:
            succ = tuple(
                Transition(
                    "W1",
                    Within(r, t.command),
                    t.state.with_config(
                        _cfg(t.state.config.owned | {r}, t.state.config.locked, t.state.config.available)
                    ),
                )
                for t in inner.successors
            )
            exhausted = inner.exhausted
    return StepResult(succ, frozenset(aborts), exhausted, detail)


# ---------------------------------------------------------------------------
# Environment transitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvParams:
    rely: frozenset[str]
    context: ResourceContext = EMPTY_CONTEXT
    bounds: DomainBounds = field(default_factory=DomainBounds)
    preds: PredicateTable = NO_PREDICATES
    # variables (besides FV(C), rely and protected ones) the environment may change
    extra_vars: frozenset[str] = frozenset()


def pv_of(ctx: ResourceContext, names: Iterable[str]) -> frozenset[str]:
    return ctx.pv([r for r in names if r in ctx])


def env_transforms(
    c: Command, sigma: MachineState, params: EnvParams
) -> list[MachineState]:
    """States the environment may transform sigma into, keeping heap and owned set."""
    s, rho = sigma.store, sigma.config
    fixed = params.rely | pv_of(params.context, locked(c))
    varying = sorted(
        x
        for x in (free_vars(c) | params.rely | params.context.pv() | params.extra_vars)
        if x in s and x not in fixed
    )
    shared = sorted(rho.locked | rho.available)
    qv = params.bounds.quantifier_values
    out = []
    for combo in product(qv, repeat=len(varying)):
        s2 = s.update(dict(zip(varying, combo))) if varying else s
        for mask in product((False, True), repeat=len(shared)):
            lk = frozenset(r for r, in_d in zip(shared, mask) if not in_d)
            av = frozenset(r for r, in_d in zip(shared, mask) if in_d)
            out.append(MachineState(s2, sigma.heap, ResourceConfiguration(rho.owned, lk, av)))
    return out


def env_steps(
    c: Command, sigma: MachineState, g: Heap, params: EnvParams
) -> list[tuple[MachineState, Heap]]:
    """Environment successors: transformed local state plus a fresh shared heap.

    Returned states carry the local heap only; the shared part is the second component.
    """
    ev = evaluator(params.bounds, params.preds)
    avail = [l for l in params.bounds.locations if l not in sigma.heap]
    out = []
    cache: dict = {}
    for sigma2 in env_transforms(c, sigma, params):
        key = (sigma2.store, sigma2.config.available)
        if key not in cache:
            inv = inv_subset(params.context, sigma2.config.available)
            cache[key] = ev.models(sigma2.store, inv, avail)
        for g2 in cache[key]:
            out.append((sigma2, g2))
    return out


@dataclass(frozen=True)
class CombinedResult:
    program: StepResult
    environment: tuple[tuple[MachineState, Heap], ...]


def combined_step(
    c: Command, sigma: MachineState, g: Heap, params: EnvParams, explore: bool = True
) -> CombinedResult:
    prog = step(c, sigma.with_heap(heap_union(sigma.heap, g)), params.bounds, explore)
    return CombinedResult(prog, tuple(env_steps(c, sigma, g, params)))


# ---------------------------------------------------------------------------
# Scheduled runs
# ---------------------------------------------------------------------------


@dataclass
class Trace:
    lines: list[str]
    status: str
    final: Optional[tuple[Command, MachineState]] = None

    def render(self) -> str:
        return "\n".join(self.lines + [f"STATUS {self.status}"])


def count_threads(c: Command) -> int:
    """Non-skip leaves of the top-level parallel structure."""
    if isinstance(c, Par):
        return count_threads(c.left) + count_threads(c.right)
    if isinstance(c, Seq):
        return count_threads(c.first)
    if isinstance(c, (Res, Within)):
        return count_threads(c.body)
    return 0 if isinstance(c, Skip) else 1


def run_scheduled(
    c: Command, sigma: MachineState, bounds: DomainBounds, seed: int = 0, max_steps: int = 1000
) -> Trace:
    """Random interleaving with deterministic allocation; reproducible for a fixed seed."""
    rng = random.Random(seed)
    lines: list[str] = []
    for n in range(1, max_steps + 1):
        if isinstance(c, Skip):
            return Trace(lines, "terminated", (c, sigma))
        res = step(c, sigma, bounds, explore=False)
        options: list[object] = list(res.successors) + sorted(res.aborts)
        if not options:
            if res.exhausted:
                return Trace(lines, "budget", (c, sigma))
            status = "deadlock" if count_threads(c) >= 2 else "blocked"
            return Trace(lines, status, (c, sigma))
        choice = options[rng.randrange(len(options))]
        if isinstance(choice, str):
            lines.append(f"{n} {choice} abort {sigma.dump()}")
            return Trace(lines, f"abort:{choice}", None)
        c, sigma = choice.command, choice.state
        lines.append(f"{n} {choice.tag} {show_cmd(c)} {sigma.dump()}")
    if isinstance(c, Skip):
        return Trace(lines, "terminated", (c, sigma))
    return Trace(lines, "budget", (c, sigma))
