"""Bounded exhaustive verification: validity, the Safe_n predicate, and smoke checks."""

from __future__ import annotations

import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from .assertions import (
    NO_PREDICATES,
    PredicateTable,
    enumerate_stores,
    evaluator,
    inv,
    inv_subset,
)
from .ast import (
    EMP,
    EMPTY_CONTEXT,
    NULL,
    SKIP,
    And,
    Assertion,
    Assign,
    BAnd,
    BinOp,
    BNot,
    BoolExpr,
    BTrue,
    Command,
    Cons,
    Dispose,
    Eq,
    Expr,
    If,
    Load,
    Lt,
    Num,
    Par,
    PointsTo,
    Pure,
    Res,
    ResourceContext,
    ResourceEntry,
    Seq,
    Skip,
    Star,
    Store as StoreCmd,
    Var,
    While,
    With,
    Within,
    a_exists,
    a_or,
    b_or,
    chng_vars,
    count_aux_assignments,
    erase_aux,
    free_vars,
    is_aux_set,
    is_extended,
    locked,
    mod_vars,
    rename_resource,
    res_names,
    show_assertion,
    show_cmd,
    show_vars,
)
from .sos import EnvParams, StepResult, env_steps, env_transforms, pv_of, step
from .state import (
    DEFAULT_BOUNDS,
    EMPTY_HEAP,
    DomainBounds,
    Heap,
    InvalidConfiguration,
    MachineState,
    ResourceConfiguration,
    Store,
    Value,
    heap_subtract,
    heap_union,
    is_subheap,
    make_bounds,
)

VERDICTS = ("valid", "abort-found", "postcondition-violated", "bound-exhausted")
VIOLATIONS = ("abort-found", "postcondition-violated")


# ---------------------------------------------------------------------------
# Initial-value relevance
# ---------------------------------------------------------------------------


def _reads(c: Command) -> frozenset[str]:
    if isinstance(c, Assign):
        return free_vars(c.expr)
    if isinstance(c, (Load, Dispose)):
        return free_vars(c.addr)
    if isinstance(c, StoreCmd):
        return free_vars(c.addr) | free_vars(c.value)
    if isinstance(c, Cons):
        out: frozenset[str] = frozenset()
        for e in c.args:
            out |= free_vars(e)
        return out
    return frozenset()


def _written(c: Command) -> Optional[str]:
    return c.var if isinstance(c, (Assign, Load, Cons)) else None


def _uninit(c: Command, assigned: frozenset[str]) -> tuple[frozenset[str], frozenset[str]]:
    """(variables possibly read before written, variables surely written afterwards)."""
    if isinstance(c, Skip):
        return frozenset(), assigned
    if isinstance(c, (Assign, Load, StoreCmd, Cons, Dispose)):
        early = _reads(c) - assigned
        w = _written(c)
        return early, assigned | {w} if w is not None else assigned
    if isinstance(c, Seq):
        e1, a1 = _uninit(c.first, assigned)
        e2, a2 = _uninit(c.second, a1)
        return e1 | e2, a2
    if isinstance(c, If):
        g = free_vars(c.cond) - assigned
        e1, a1 = _uninit(c.then, assigned)
        e2, a2 = _uninit(c.orelse, assigned)
        return g | e1 | e2, a1 & a2
    if isinstance(c, While):
        # later iterations start with at least the first iteration's writes
        g = free_vars(c.cond) - assigned
        e, _ = _uninit(c.body, assigned)
        return g | e, assigned
    if isinstance(c, Par):
        e1, a1 = _uninit(c.left, assigned)
        e2, a2 = _uninit(c.right, assigned)
        return e1 | e2, a1 | a2
    if isinstance(c, With):
        g = free_vars(c.cond) - assigned
        e, a = _uninit(c.body, assigned)
        return g | e, a
    assert isinstance(c, (Res, Within))
    return _uninit(c.body, assigned)


def initially_read(c: Command) -> frozenset[str]:
    """Variables whose initial value some execution of c may read.

    Each thread must write a variable itself before reading it to be excluded,
    so the result is independent of the interleaving.
    """
    return _uninit(c, frozenset())[0]


# ---------------------------------------------------------------------------
# Validity
# ---------------------------------------------------------------------------


@dataclass
class ExploreReport:
    verdict: str
    states_visited: int
    depth_reached: int
    bounds: DomainBounds
    counterexample: Optional[list[str]] = None
    initial_states: int = 0
    # inline assertion checked in every reachable state (None when absent)
    always_ok: Optional[bool] = None
    always_counterexample: Optional[list[str]] = None
    transitions_checked: int = 0
    shape_failures: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict}")
        if (self.counterexample is not None) != (self.verdict in VIOLATIONS):
            raise ValueError("counterexample present iff the verdict is a violation")

    @property
    def ok(self) -> bool:
        return self.verdict == "valid" and self.always_ok is not False and not self.shape_failures

    def to_json(self) -> dict:
        out: dict = {
            "verdict": self.verdict,
            "states": self.states_visited,
            "depth": self.depth_reached,
            "bounds": self.bounds.to_json(),
        }
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        out["initial_states"] = self.initial_states
        out["transitions_checked"] = self.transitions_checked
        if self.always_ok is not None:
            out["always"] = self.always_ok
            if self.always_counterexample is not None:
                out["always_counterexample"] = self.always_counterexample
        if self.shape_failures:
            out["shape_failures"] = self.shape_failures
        return out

    def human(self, name: str = "") -> str:
        head = f"{name}: " if name else ""
        lines = [
            f"{head}{self.verdict} ({self.states_visited} states, depth {self.depth_reached}, "
            f"{self.initial_states} initial states)"
        ]
        if self.always_ok is not None:
            lines.append(f"  always: {'holds' if self.always_ok else 'violated'}")
        for trace, label in ((self.counterexample, "counterexample"),
                             (self.always_counterexample, "always counterexample")):
            if trace:
                lines.append(f"  {label}:")
                lines.extend("    " + t for t in trace)
        for f in self.shape_failures:
            lines.append(f"  shape failure: {f}")
        return "\n".join(lines)


def initial_states(
    context: ResourceContext,
    pre: Assertion,
    cmd: Command,
    post: Assertion,
    bounds: DomainBounds,
    preds: PredicateTable = NO_PREDICATES,
    domains: Mapping[str, Iterable[Value]] | None = None,
    init: Optional[Assertion] = None,
    always: Optional[Assertion] = None,
) -> list[MachineState]:
    """States satisfying pre * inv(context), drawn from the models of init when given.

    Variables of the command whose initial value is never read and which no
    assertion mentions are fixed to null.
    """
    ev = evaluator(bounds, preds)
    start = Star(pre, inv(context))
    mentioned = free_vars(start) | free_vars(post)
    for extra in (init, always):
        if extra is not None:
            mentioned |= free_vars(extra)
    names = mentioned | initially_read(cmd)
    fixed = {x: None for x in free_vars(cmd) if x not in names}
    rho = ResourceConfiguration(available=frozenset(context.names()))
    out = []
    for env in enumerate_stores(names, bounds, domains):
        store = Store({**fixed, **env})
        if init is None:
            heaps = ev.models(store, start)
        else:
            heaps = [h for h in ev.models(store, init) if ev.sat(store, h, start)]
        out.extend(MachineState(store, h, rho) for h in heaps)
    return out


def _expand_chunk(args) -> list[StepResult]:
    bounds, items = args
    return [step(c, sigma, bounds, explore=True) for c, sigma in items]


def _jobs(jobs: Optional[int]) -> int:
    if jobs is None:
        try:
            jobs = int(os.environ.get("CSLV_JOBS", "1"))
        except ValueError:
            jobs = 1
    return max(1, jobs)


def _expand(frontier: list, bounds: DomainBounds, jobs: int, pool) -> list[StepResult]:
    if pool is None or len(frontier) < 64:
        return [step(c, sigma, bounds, explore=True) for c, sigma in frontier]
    size = -(-len(frontier) // jobs)
    chunks = [(bounds, frontier[i : i + size]) for i in range(0, len(frontier), size)]
    out: list[StepResult] = []
    # map preserves chunk order, so the merge is schedule-independent
    for part in pool.map(_expand_chunk, chunks):
        out.extend(part)
    return out


def _trace(parent: dict, key, bounds=None) -> list[str]:
    chain = []
    while key is not None:
        prev, tag = parent[key]
        chain.append((tag, key))
        key = prev
    chain.reverse()
    return [f"{i} {tag} {show_cmd(c)} {sigma.dump()}" for i, (tag, (c, sigma)) in enumerate(chain)]


def _shape(c: Command, rho: ResourceConfiguration, res: frozenset[str]) -> Optional[str]:
    lk = locked(c)
    expected = ResourceConfiguration(lk, frozenset(), res - lk)
    if rho != expected:
        return f"{show_cmd(c)}: configuration {rho.dump()}, expected {expected.dump()}"
    return None


def _config_law(before: ResourceConfiguration, after: ResourceConfiguration) -> Optional[str]:
    if before.locked != after.locked or (before.owned | before.available) != (
        after.owned | after.available
    ):
        return f"{before.dump()} -> {after.dump()}"
    return None


def check_valid(
    context: ResourceContext,
    pre: Assertion,
    cmd: Command,
    post: Assertion,
    bounds: DomainBounds = DEFAULT_BOUNDS,
    max_depth: int = 64,
    preds: PredicateTable = NO_PREDICATES,
    domains: Mapping[str, Iterable[Value]] | None = None,
    init: Optional[Assertion] = None,
    always: Optional[Assertion] = None,
    jobs: Optional[int] = 1,
) -> ExploreReport:
    """Breadth-first closure of the program transitions from every initial state.

    Stops at the first abort or failing terminal state in breadth-first order.
    Every transition is checked against the configuration laws: the locked set
    and owned-or-available set are preserved, and, for a non-extended start
    command, each reached configuration is (Locked(C), {}, Res \\ Locked(C)).
    """
    ev = evaluator(bounds, preds)
    goal = Star(post, inv(context))
    res = frozenset(context.names())
    starts = initial_states(context, pre, cmd, post, bounds, preds, domains, init, always)
    check_shape = not is_extended(cmd)
    parent: dict = {}
    frontier: list = []
    shape_failures: list[str] = []
    always_bad: Optional[list[str]] = None
    checked = 0

    def discover(key, prev, tag) -> Optional[tuple[str, list[str]]]:
        nonlocal always_bad
        parent[key] = (prev, tag)
        c, sigma = key
        if check_shape:
            bad = _shape(c, sigma.config, res)
            if bad is not None:
                shape_failures.append(bad)
        if always is not None and always_bad is None:
            if not ev.sat(sigma.store, sigma.heap, always):
                always_bad = _trace(parent, key) + ["STATUS always-violated"]
        if isinstance(c, Skip):
            if sigma.config == ResourceConfiguration(available=res) and not ev.sat(
                sigma.store, sigma.heap, goal
            ):
                return "postcondition-violated", _trace(parent, key) + [
                    "STATUS postcondition-violated"
                ]
            return None
        frontier.append(key)
        return None

    def report(verdict, depth, trace=None) -> ExploreReport:
        return ExploreReport(
            verdict,
            len(parent),
            depth,
            bounds,
            trace,
            len(starts),
            None if always is None else always_bad is None,
            always_bad,
            checked,
            shape_failures,
        )

    for sigma in starts:
        key = (cmd, sigma)
        if key not in parent:
            hit = discover(key, None, "INIT")
            if hit is not None:
                return report(hit[0], 0, hit[1])

    n = _jobs(jobs)
    pool = ProcessPoolExecutor(max_workers=n) if n > 1 else None
    try:
        depth = 0
        while frontier:
            if depth >= max_depth:
                return report("bound-exhausted", depth)
            level, frontier[:] = list(frontier), []
            depth += 1
            for key, res_step in zip(level, _expand(level, bounds, n, pool)):
                c, sigma = key
                if res_step.aborts:
                    tag = sorted(res_step.aborts)[0]
                    trace = _trace(parent, key) + [
                        f"{depth} {tag} abort {sigma.dump()}",
                        f"STATUS abort:{tag}",
                    ]
                    return report("abort-found", depth, trace)
                for t in res_step.successors:
                    checked += 1
                    bad = _config_law(sigma.config, t.state.config)
                    if bad is not None:
                        shape_failures.append(f"{t.tag}: {bad}")
                    succ = (t.command, t.state)
                    if succ in parent:
                        continue
                    hit = discover(succ, key, t.tag)
                    if hit is not None:
                        return report(hit[0], depth, hit[1])
        return report("valid", depth)
    finally:
        if pool is not None:
            pool.shutdown()


# ---------------------------------------------------------------------------
# Safe_n
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SafeQuery:
    n: int
    command: Command
    store: Store
    heap: Heap
    config: ResourceConfiguration
    context: ResourceContext
    post: Assertion
    rely: frozenset[str]

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("Safe_n needs n >= 0")


@dataclass(frozen=True)
class SafeFailure:
    clause: str  # "i" | "ii" | "iii" | "iv"
    detail: str
    n: int


@dataclass(frozen=True)
class SafeResult:
    ok: bool
    failure: Optional[SafeFailure] = None

    def __bool__(self) -> bool:
        return self.ok


class SafeChecker:
    """Memoized Safe_n for a fixed context, postcondition and rely set."""

    def __init__(
        self,
        context: ResourceContext,
        post: Assertion,
        rely: Iterable[str],
        bounds: DomainBounds,
        preds: PredicateTable = NO_PREDICATES,
    ) -> None:
        self.context = context
        self.post = post
        self.rely = frozenset(rely)
        self.bounds = bounds
        self.ev = evaluator(bounds, preds)
        self.params = EnvParams(self.rely, context, bounds, preds, free_vars(post))
        self._memo: dict = {}

    def safe(
        self, n: int, c: Command, s: Store, h: Heap, rho: ResourceConfiguration
    ) -> Optional[SafeFailure]:
        if n == 0:
            return None
        key = (c, s, h, rho)
        known = self._memo.get(key)
        # antitone in n: record the largest safe depth and the smallest failing one
        if known is not None:
            good, bad = known
            if n <= good:
                return None
            if bad is not None and n >= bad[0]:
                return bad[1]
        failure = self._safe(n, c, s, h, rho)
        good, bad = self._memo.get(key, (0, None))
        if failure is None:
            good = max(good, n)
        elif bad is None or n < bad[0]:
            bad = (n, failure)
        self._memo[key] = (good, bad)
        return failure

    def _safe(self, n, c, s, h, rho) -> Optional[SafeFailure]:
        ev, bounds = self.ev, self.bounds
        sigma = MachineState(s, h, rho)
        if isinstance(c, Skip) and not ev.sat(s, h, self.post):
            return SafeFailure("i", f"terminal state fails {show_assertion(self.post)}: {sigma.dump()}", n)
        res = step(c, sigma, bounds, explore=True)
        if res.aborts:
            return SafeFailure("ii", f"{show_cmd(c)} aborts ({', '.join(sorted(res.aborts))}) in {sigma.dump()}", n)
        clash = chng_vars(c) & pv_of(self.context, rho.locked | rho.available)
        if clash:
            return SafeFailure("iii", f"{show_cmd(c)} may change protected {show_vars(clash)}", n)
        avail = [l for l in bounds.locations if l not in h]
        shared = ev.models(s, inv_subset(self.context, rho.available), avail)
        if not shared:
            return None
        for g in shared:
            full = heap_union(h, g)
            for t in step(c, MachineState(s, full, rho), bounds, explore=True).successors:
                bad = self._split(n - 1, t.command, t.state.store, t.state.heap, t.state.config)
                if bad is not None:
                    return SafeFailure(
                        "iv", f"after {t.tag} from {sigma.dump()} with shared {g.dump()}: {bad.clause}: {bad.detail}", n
                    )
        # environment successors do not depend on the current shared heap
        for sigma2, g2 in env_steps(c, sigma, shared[0], self.params):
            bad = self._split(n - 1, c, sigma2.store, heap_union(h, g2), sigma2.config)
            if bad is not None:
                return SafeFailure("iv", f"after environment step to {sigma2.dump()}: {bad.clause}: {bad.detail}", n)
        return None

    def _split(self, n, c, s, hat, rho) -> Optional[SafeFailure]:
        """None when some split hat = h' + g' has g' |= inv(D') and Safe_n on h'."""
        if n == 0:
            return None
        splits = self.ev.satisfying_subheaps(s, hat, inv_subset(self.context, rho.available))
        if not splits:
            return SafeFailure("iv", f"no shared part satisfies the available invariants in {hat.dump()}", n)
        first = None
        for g in splits:
            bad = self.safe(n, c, s, heap_subtract(hat, g), rho)
            if bad is None:
                return None
            first = first or bad
        return first


def check_safe(
    q: SafeQuery, bounds: DomainBounds, preds: PredicateTable = NO_PREDICATES
) -> SafeResult:
    checker = SafeChecker(q.context, q.post, q.rely, bounds, preds)
    failure = checker.safe(q.n, q.command, q.store, q.heap, q.config)
    return SafeResult(failure is None, failure)


# ---------------------------------------------------------------------------
# Soundness smoke test
# ---------------------------------------------------------------------------


@dataclass
class SmokeReport:
    name: str
    accepted: bool
    checked: bool
    explore: Optional[ExploreReport]

    @property
    def red_flag(self) -> bool:
        """An accepted derivation whose conclusion is violated."""
        return self.accepted and self.explore is not None and self.explore.verdict in VIOLATIONS

    def to_json(self) -> dict:
        out: dict = {"derivation": self.name, "accepted": self.accepted, "red_flag": self.red_flag}
        if self.explore is not None:
            out.update(self.explore.to_json())
        return out


def soundness_smoke(
    d,
    bounds: DomainBounds = DEFAULT_BOUNDS,
    max_depth: int = 64,
    preds: PredicateTable = NO_PREDICATES,
    domains: Mapping[str, Iterable[Value]] | None = None,
    name: str = "",
    bypass: bool = False,
    mode: str = "csl",
) -> SmokeReport:
    """Check the derivation, then explore its conclusion.

    With bypass the conclusion is explored even when the checker rejects it.
    """
    from .proof import check_derivation

    report = check_derivation(d, mode, bounds, preds, domains)
    if not report.accepted and not bypass:
        return SmokeReport(name, False, False, None)
    j = d.conclusion
    explore = check_valid(
        j.context, j.pre, j.command, j.post, bounds, max_depth, preds, domains
    )
    return SmokeReport(name, report.accepted, True, explore)



# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------

# single-step suites
PROP_BOUNDS = make_bounds(int_range=(-1, 1), n_locations=4, max_heap_cells=4)
# Safe_n suites and environment transformations
SAFE_BOUNDS = make_bounds(int_range=(0, 1), n_locations=2, max_heap_cells=2)


class Discard(Exception):
    """The generated instance does not meet the proposition's hypotheses."""


class Generator:
    """Weighted random commands, stores, heaps and configurations."""

    def __init__(
        self,
        rng: random.Random,
        bounds: DomainBounds,
        variables: tuple[str, ...] = ("x", "y", "z", "w"),
        resources: tuple[str, ...] = ("r", "t"),
    ) -> None:
        self.rng = rng
        self.bounds = bounds
        self.variables = variables
        self.resources = resources

    # -- expressions --------------------------------------------------------

    def expr(self, depth: int = 1, variables: Optional[tuple[str, ...]] = None) -> Expr:
        rng, names = self.rng, variables or self.variables
        roll = rng.random()
        if depth > 0 and roll < 0.15:
            return BinOp(rng.choice("+-*"), self.expr(depth - 1, names), self.expr(depth - 1, names))
        if roll < 0.55:
            return Var(rng.choice(names))
        if roll < 0.75:
            return Num(rng.randint(*self.bounds.int_range))
        if roll < 0.95:
            return Num(rng.choice(self.bounds.locations))
        return NULL

    def address(self) -> Expr:
        rng = self.rng
        roll = rng.random()
        if roll < 0.45:
            return Var(rng.choice(self.variables))
        if roll < 0.9:
            return Num(rng.choice(self.bounds.locations))
        return BinOp("+", Var(rng.choice(self.variables)), Num(1))

    def guard(self, depth: int = 1) -> BoolExpr:
        rng = self.rng
        roll = rng.random()
        if roll < 0.15:
            return BTrue()
        if depth > 0 and roll < 0.25:
            return BNot(self.guard(depth - 1))
        if depth > 0 and roll < 0.32:
            return BAnd(self.guard(depth - 1), self.guard(depth - 1))
        if roll < 0.75:
            return Eq(self.expr(0), self.expr(0))
        return Lt(self.expr(0), self.expr(0))

    # -- commands -----------------------------------------------------------

    def basic(self, targets: Optional[tuple[str, ...]] = None) -> Command:
        rng = self.rng
        x = rng.choice(targets or self.variables)
        kind = rng.choices(("assign", "load", "store", "cons", "dispose"), (4, 2, 2, 1, 1))[0]
        if kind == "assign":
            return Assign(x, self.expr())
        if kind == "load":
            return Load(x, self.address())
        if kind == "store":
            return StoreCmd(self.address(), self.expr(0))
        if kind == "cons":
            return Cons(x, tuple(self.expr(0) for _ in range(rng.randint(1, 2))))
        return Dispose(self.address())

    def command(
        self,
        depth: int,
        extended: bool = False,
        resources: Optional[tuple[str, ...]] = None,
        targets: Optional[tuple[str, ...]] = None,
        parallel: bool = True,
    ) -> Command:
        rng = self.rng
        names = self.resources if resources is None else resources
        if depth <= 0:
            return SKIP if rng.random() < 0.15 else self.basic(targets)
        kinds = ["basic", "skip", "seq", "if", "while"]
        weights = [4, 1, 3, 1, 1]
        if parallel:
            kinds.append("par")
            weights.append(2)
        if names:
            kinds += ["res", "with"]
            weights += [1, 2]
            if extended:
                kinds.append("within")
                weights.append(2)
        kind = rng.choices(kinds, weights)[0]

        def sub() -> Command:
            return self.command(depth - 1, extended, names, targets, parallel)

        if kind == "basic":
            return self.basic(targets)
        if kind == "skip":
            return SKIP
        if kind == "seq":
            return Seq(sub(), sub())
        if kind == "if":
            return If(self.guard(), sub(), sub())
        if kind == "while":
            return While(self.guard(), sub())
        if kind == "par":
            return Par(sub(), sub())
        if kind == "res":
            return Res(rng.choice(names), sub())
        if kind == "with":
            return With(rng.choice(names), self.guard(0), sub())
        return Within(rng.choice(names), sub())

    # -- states ---------------------------------------------------------------

    def value(self) -> Value:
        return self.rng.choice(self.bounds.quantifier_values)

    def store(self, variables: Optional[Iterable[str]] = None) -> Store:
        return Store({x: self.value() for x in (variables or self.variables)})

    def heap(self, avoid: Iterable[int] = (), max_cells: Optional[int] = None) -> Heap:
        free = [l for l in self.bounds.locations if l not in set(avoid)]
        cap = self.bounds.max_heap_cells if max_cells is None else max_cells
        k = self.rng.randint(0, min(cap, len(free)))
        return Heap({l: self.value() for l in self.rng.sample(free, k)})

    def partition(self, names: Iterable[str], parts: int = 3) -> list[frozenset[str]]:
        out: list[set[str]] = [set() for _ in range(parts)]
        for r in sorted(names):
            out[self.rng.randrange(parts)].add(r)
        return [frozenset(p) for p in out]

    def config(self, names: Optional[Iterable[str]] = None) -> ResourceConfiguration:
        """Random (O, L, D); without names some resources stay absent."""
        if names is None:
            o, l, d, _ = self.partition(self.resources, 4)
        else:
            o, l, d = self.partition(names, 3)
        return ResourceConfiguration(o, l, d)

    def subset(self, items: Iterable[str], p: float = 0.5) -> frozenset[str]:
        return frozenset(x for x in sorted(items) if self.rng.random() < p)


# ---------------------------------------------------------------------------
# Single-step propositions
# ---------------------------------------------------------------------------


def _targets(res: StepResult) -> set:
    return {(t.command, t.state) for t in res.successors}


def _guarded_step(c: Command, sigma: MachineState, bounds: DomainBounds) -> StepResult:
    try:
        return step(c, sigma, bounds, explore=True)
    except InvalidConfiguration as exc:
        raise _Broken(f"ill-formed configuration from {show_cmd(c)}: {exc}") from None


class _Broken(Exception):
    """A step produced something the proposition says cannot exist."""


def _case_prop2(g: Generator) -> Optional[str]:
    c = g.command(3, extended=True)
    sigma = MachineState(g.store(), g.heap(), g.config())
    res = _guarded_step(c, sigma, g.bounds)
    if not res.successors:
        raise Discard
    for t in res.successors:
        bad = _config_law(sigma.config, t.state.config)
        if bad is not None:
            return f"{t.tag} on {show_cmd(c)}: {bad}"
    return None


def _case_prop3(g: Generator) -> Optional[str]:
    c = g.command(3, extended=False)
    res_names_ = g.subset(g.resources, 0.7)
    sigma = MachineState(g.store(), g.heap(), ResourceConfiguration(available=res_names_))
    steps = 0
    for _ in range(12):
        bad = _shape(c, sigma.config, res_names_)
        if bad is not None:
            return f"after {steps} steps: {bad}"
        r = _guarded_step(c, sigma, g.bounds)
        if r.aborts or not r.successors:
            break
        t = g.rng.choice(r.successors)
        c, sigma = t.command, t.state
        steps += 1
    else:
        bad = _shape(c, sigma.config, res_names_)
        if bad is not None:
            return f"after {steps} steps: {bad}"
    if steps == 0:
        raise Discard
    return None


def _framed(g: Generator):
    c = g.command(3, extended=True)
    h = g.heap()
    hf = g.heap(avoid=h)
    return c, g.store(), h, hf, g.config()


def _case_prop4(g: Generator) -> Optional[str]:
    c, s, h, hf, rho = _framed(g)
    if step(c, MachineState(s, h, rho), g.bounds).aborts:
        raise Discard
    big = step(c, MachineState(s, heap_union(h, hf), rho), g.bounds)
    if big.aborts:
        return f"{show_cmd(c)} aborts ({sorted(big.aborts)}) on {heap_union(h, hf).dump()} but not on {h.dump()}"
    return None


def _case_prop5(g: Generator) -> Optional[str]:
    c, s, h, hf, rho = _framed(g)
    small = step(c, MachineState(s, h, rho), g.bounds)
    if small.aborts:
        raise Discard
    big = step(c, MachineState(s, heap_union(h, hf), rho), g.bounds)
    if not big.successors:
        raise Discard
    targets = _targets(small)
    for t in big.successors:
        h2 = t.state.heap
        if not is_subheap(hf, h2):
            return f"{t.tag} on {show_cmd(c)}: frame {hf.dump()} not kept in {h2.dump()}"
        if (t.command, t.state.with_heap(heap_subtract(h2, hf))) not in targets:
            return f"{t.tag} on {show_cmd(c)}: no matching step without the frame {hf.dump()}"
    return None


def _split_owned(g: Generator):
    c = g.command(3, extended=True)
    o1, o2, l, d, _ = g.partition(("r", "t", "u"), 5)
    g_res = ("r", "t", "u")
    return c, g.store(), g.heap(), o1, o2, l, d, g_res


def _case_prop6(g: Generator) -> Optional[str]:
    c, s, h, o1, o2, l, d, _ = _split_owned(g)
    if step(c, MachineState(s, h, ResourceConfiguration(o1, l | o2, d)), g.bounds).aborts:
        raise Discard
    res = step(c, MachineState(s, h, ResourceConfiguration(o1 | o2, l, d)), g.bounds)
    if res.aborts:
        return f"{show_cmd(c)} aborts ({sorted(res.aborts)}) when {sorted(o2)} move from locked to owned"
    return None


def _case_prop7(g: Generator) -> Optional[str]:
    c, s, h, o1, o2, l, d, _ = _split_owned(g)
    rho2 = ResourceConfiguration(o1, l | o2, d)
    narrow = step(c, MachineState(s, h, rho2), g.bounds)
    if narrow.aborts:
        raise Discard
    wide = step(c, MachineState(s, h, ResourceConfiguration(o1 | o2, l, d)), g.bounds)
    if not wide.successors:
        raise Discard
    targets = _targets(narrow)
    for t in wide.successors:
        o, lk, av = t.state.config.owned, t.state.config.locked, t.state.config.available
        if lk != l or not o2 <= o:
            return f"{t.tag} on {show_cmd(c)}: {t.state.config.dump()} does not keep L and O2={sorted(o2)}"
        mirrored = t.state.with_config(ResourceConfiguration(o - o2, l | o2, av))
        if (t.command, mirrored) not in targets:
            return f"{t.tag} on {show_cmd(c)}: no matching step with {sorted(o2)} locked"
    return None


def _rename_state(sigma: MachineState, old: str, new: str) -> MachineState:
    return sigma.with_config(sigma.config.rename(old, new))


def _case_prop8(g: Generator) -> Optional[str]:
    c = g.command(3, extended=True)
    sigma = MachineState(g.store(), g.heap(), g.config())
    old = g.rng.choice(g.resources)
    taken = res_names(c) | sigma.config.names()
    new = next(n for n in ("u", "v", "w2") if n not in taken)
    c2, sigma2 = rename_resource(c, old, new), _rename_state(sigma, old, new)
    a, b = step(c, sigma, g.bounds), step(c2, sigma2, g.bounds)
    if bool(a.aborts) != bool(b.aborts):
        return f"abort differs after renaming {old} to {new} in {show_cmd(c)}"
    mapped = {(rename_resource(t.command, old, new), _rename_state(t.state, old, new)) for t in a.successors}
    if mapped != _targets(b):
        return f"successors differ after renaming {old} to {new} in {show_cmd(c)}"
    return None


def _env_set(c, sigma, rely, ctx, bounds) -> set:
    params = EnvParams(frozenset(rely), ctx, bounds)
    return {(t.store, t.config) for t in env_transforms(c, sigma, params)}


def _case_prop9(g: Generator) -> Optional[str]:
    ctx = _random_context(g, ("r", "t"))
    c = g.command(2, resources=ctx.names())
    o, l, d = g.partition(ctx.names(), 3)
    sigma = MachineState(g.store(), EMPTY_HEAP, ResourceConfiguration(o, l, d))
    rely = g.subset(g.variables)
    base = _env_set(c, sigma, rely, ctx, g.bounds)
    key = (sigma.store, sigma.config)
    if key not in base:
        return f"not reflexive at {sigma.dump()}"
    ordered = sorted(base, key=lambda k: (k[0].dump(), k[1].dump()))
    for store2, config2 in g.rng.sample(ordered, min(2, len(ordered))):
        other = MachineState(store2, EMPTY_HEAP, config2)
        back = _env_set(c, other, rely, ctx, g.bounds)
        if key not in back:
            return f"not symmetric between {sigma.dump()} and {other.dump()}"
        if not back <= base:
            return f"not transitive through {other.dump()}"
    smaller = g.subset(rely)
    if not base <= _env_set(c, sigma, smaller, ctx, g.bounds):
        return f"shrinking the rely set {show_vars(rely)} to {show_vars(smaller)} loses transformations"
    return None


# ---------------------------------------------------------------------------
# Safe_n lemmas
# ---------------------------------------------------------------------------

_X, _Y = Var("x"), Var("y")


def _invariant_menu() -> list[tuple[frozenset[str], Assertion]]:
    """Precise invariants with their protected variables."""
    return [
        (frozenset(), EMP),
        (frozenset({"x"}), And(Pure(b_or(Eq(_X, Num(0)), Eq(_X, Num(1)))), EMP)),
        (frozenset(), a_exists("v", PointsTo(Num(11), (Var("v"),)))),
        (
            frozenset({"x"}),
            a_or(And(Pure(Eq(_X, NULL)), EMP), a_exists("v", PointsTo(_X, (Var("v"),)))),
        ),
    ]


def _post_menu() -> list[Assertion]:
    return [
        Pure(BTrue()),
        EMP,
        Pure(Eq(_Y, Num(0))),
        a_exists("v", PointsTo(Num(10), (Var("v"),))),
    ]


def _frame_menu() -> list[Assertion]:
    return [
        EMP,
        Pure(Eq(_Y, Num(1))),
        a_exists("v", PointsTo(Num(10), (Var("v"),))),
        a_exists("v", PointsTo(Num(11), (Var("v"),))),
    ]


def _entry(g: Generator, name: str, unprotected: frozenset[str] = frozenset()) -> ResourceEntry:
    menu = [(x, r) for x, r in _invariant_menu() if not (x & unprotected)]
    protected, invariant = g.rng.choice(menu)
    return ResourceEntry(name, protected, invariant)


def _random_context(
    g: Generator, names: tuple[str, ...], unprotected: frozenset[str] = frozenset()
) -> ResourceContext:
    chosen = [n for n in names if g.rng.random() < 0.5]
    return ResourceContext(tuple(_entry(g, n, unprotected) for n in chosen))


def _depth(g: Generator) -> int:
    return g.rng.randint(1, 3)


def _safe_cmd(g: Generator, resources: Iterable[str], targets=None, depth: int = 2) -> Command:
    return g.command(depth, resources=tuple(resources), targets=targets, parallel=False)


def _safe(ctx, post, rely, n, c, s, h, rho, bounds) -> Optional[SafeFailure]:
    return SafeChecker(ctx, post, rely, bounds).safe(n, c, s, h, rho)


def _cover(g: Generator, post: Assertion) -> frozenset[str]:
    return free_vars(post) | g.subset(g.variables)


def _case_prop10(g: Generator) -> Optional[str]:
    ctx = _random_context(g, ("r", "t"))
    q = g.rng.choice(_post_menu())
    s, h = g.store(), g.heap()
    if not evaluator(g.bounds).sat(s, h, q):
        raise Discard
    rely = _cover(g, q)
    o, l, d = g.partition(ctx.names(), 3)
    n = _depth(g)
    bad = _safe(ctx, q, rely, n, SKIP, s, h, ResourceConfiguration(o, l, d), g.bounds)
    return None if bad is None else f"Safe_{n}(skip) fails for {show_assertion(q)}: {bad.clause}: {bad.detail}"


def _case_prop12(g: Generator) -> Optional[str]:
    ctx = _random_context(g, ("r",))
    c = _safe_cmd(g, ctx.names())
    q = g.rng.choice(_post_menu())
    r = g.rng.choice(_frame_menu())
    if mod_vars(c) & free_vars(r):
        raise Discard
    s, h = g.store(), g.heap()
    rely = _cover(g, q)
    _, l, d = g.partition(ctx.names(), 3)
    rho = ResourceConfiguration(frozenset(), l, d)
    n = _depth(g)
    frames = evaluator(g.bounds).models(s, r, [x for x in g.bounds.locations if x not in h])
    if not frames:
        raise Discard
    hr = g.rng.choice(frames)
    if _safe(ctx, q, rely, n, c, s, h, rho, g.bounds) is not None:
        raise Discard
    bad = _safe(ctx, Star(q, r), rely | free_vars(r), n, c, s, heap_union(h, hr), rho, g.bounds)
    if bad is None:
        return None
    return f"frame {show_assertion(r)} breaks Safe_{n}({show_cmd(c)}): {bad.clause}: {bad.detail}"


def _case_prop13(g: Generator) -> Optional[str]:
    ctx = _random_context(g, ("r",))
    c1 = _safe_cmd(g, ctx.names(), targets=("x",), depth=1)
    c2 = _safe_cmd(g, ctx.names(), targets=("y",), depth=1)
    q1, q2 = g.rng.choice(_post_menu()), g.rng.choice(_post_menu())
    a1, a2 = _cover(g, q1), _cover(g, q2)
    if (a1 & mod_vars(c2)) or (a2 & mod_vars(c1)):
        raise Discard
    s, h = g.store(), g.heap()
    left = g.subset(sorted(map(str, h)))
    h1 = Heap({l: v for l, v in h.items() if str(l) in left})
    h2 = heap_subtract(h, h1)
    _, l, d = g.partition(ctx.names(), 3)
    rho = ResourceConfiguration(frozenset(), l, d)
    n = _depth(g)
    if _safe(ctx, q1, a1, n, c1, s, h1, rho, g.bounds) is not None:
        raise Discard
    if _safe(ctx, q2, a2, n, c2, s, h2, rho, g.bounds) is not None:
        raise Discard
    bad = _safe(ctx, Star(q1, q2), a1 | a2, n, Par(c1, c2), s, h, rho, g.bounds)
    if bad is None:
        return None
    return f"Safe_{n}({show_cmd(Par(c1, c2))}) fails: {bad.clause}: {bad.detail}"


def _extension(g: Generator):
    base = _random_context(g, ("t",))
    entry = _entry(g, "r")
    return base, entry, base.extend(entry)


def _case_prop14(g: Generator) -> Optional[str]:
    base, entry, wide = _extension(g)
    c = _safe_cmd(g, base.names())
    q = g.rng.choice(_post_menu())
    rely = _cover(g, q)
    s, h = g.store(), g.heap()
    o, l, d = g.partition(base.names(), 3)
    rho = ResourceConfiguration(o | {"r"}, l, d)
    n = _depth(g)
    inner = _safe(base, Star(q, entry.invariant), rely | entry.protected, n, c, s, h, rho.remove("r"), g.bounds)
    if inner is not None:
        raise Discard
    bad = _safe(wide, q, rely, n, Within("r", c), s, h, rho, g.bounds)
    if bad is None:
        return None
    return f"Safe_{n}(within r do {show_cmd(c)}) fails: {bad.clause}: {bad.detail}"


def _case_prop15(g: Generator) -> Optional[str]:
    base, entry, wide = _extension(g)
    q = g.rng.choice(_post_menu())
    rely = _cover(g, q)
    s, h = g.store(), g.heap()
    o, l, d = g.partition(base.names(), 3)
    rho = ResourceConfiguration(o, l, d)
    n = _depth(g)
    post = Star(q, entry.invariant)
    rely2 = rely | entry.protected
    if g.rng.random() < 0.5:
        c = Within("r", _safe_cmd(g, wide.names(), depth=1))
        if _safe(wide, q, rely, n, c, s, h, ResourceConfiguration(o | {"r"}, l, d), g.bounds) is not None:
            raise Discard
        bad = _safe(base, post, rely2, n, Res("r", c), s, h, rho, g.bounds)
        case = "locked"
    else:
        c = _safe_cmd(g, wide.names())
        shares = evaluator(g.bounds).models(s, entry.invariant, [x for x in g.bounds.locations if x not in h])
        if not shares:
            raise Discard
        hr = g.rng.choice(shares)
        if _safe(wide, q, rely, n, c, s, h, ResourceConfiguration(o, l, d | {"r"}), g.bounds) is not None:
            raise Discard
        bad = _safe(base, post, rely2, n, Res("r", c), s, heap_union(h, hr), rho, g.bounds)
        case = "available"
    if bad is None:
        return None
    return f"{case} case: Safe_{n}(res r. {show_cmd(c)}) fails: {bad.clause}: {bad.detail}"


def _case_prop16(g: Generator) -> Optional[str]:
    base = _random_context(g, ("t",))
    ctx = base.extend(_entry(g, "r"))
    c = _safe_cmd(g, ctx.names())
    q = g.rng.choice(_post_menu())
    rely = _cover(g, q)
    s, h = g.store(), g.heap()
    _, l, d = g.partition(ctx.names(), 3)
    rho = ResourceConfiguration(frozenset(), l, d)
    n = _depth(g)
    renamed = _safe(ctx.rename("r", "u"), q, rely, n, rename_resource(c, "r", "u"), s, h, rho.rename("r", "u"), g.bounds)
    if renamed is not None:
        raise Discard
    bad = _safe(ctx, q, rely, n, c, s, h, rho, g.bounds)
    if bad is None:
        return None
    return f"Safe_{n}({show_cmd(c)}) fails although its renaming is safe: {bad.clause}: {bad.detail}"


def _with_aux(g: Generator, c: Command) -> Command:
    """Sprinkle assignments to the auxiliary variable z into c."""
    rng = g.rng

    def aux() -> Command:
        return Assign("z", rng.choice((Num(0), Num(1), _X, Var("z"), BinOp("+", Var("z"), _Y))))

    def walk(c: Command) -> Command:
        if isinstance(c, Seq):
            c = Seq(walk(c.first), walk(c.second))
        elif isinstance(c, If):
            c = If(c.cond, walk(c.then), walk(c.orelse))
        elif isinstance(c, While):
            c = While(c.cond, walk(c.body))
        elif isinstance(c, With):
            c = With(c.name, c.cond, walk(c.body))
        if rng.random() < 0.3:
            return Seq(aux(), c) if rng.random() < 0.5 else Seq(c, aux())
        return c

    return walk(c)


def _case_prop17(g: Generator) -> Optional[str]:
    ctx = _random_context(g, ("r",))
    c = _with_aux(g, _safe_cmd(g, ctx.names(), targets=("x", "y")))
    xs = frozenset({"z"})
    extra = count_aux_assignments(c, xs)
    if extra == 0 or extra > 2 or not is_aux_set(c, xs):
        raise Discard
    q = g.rng.choice(_post_menu())
    rely = _cover(g, q) - xs
    s = g.store(("x", "y", "z"))
    s2 = s.set("z", g.value())
    h = g.heap()
    _, l, d = g.partition(ctx.names(), 3)
    rho = ResourceConfiguration(frozenset(), l, d)
    n = g.rng.randint(1, 4 - extra)
    if _safe(ctx, q, rely | xs, n + extra, c, s, h, rho, g.bounds) is not None:
        raise Discard
    erased = erase_aux(c, xs)
    bad = _safe(ctx, q, rely, n, erased, s2, h, rho, g.bounds)
    if bad is None:
        return None
    return f"Safe_{n}({show_cmd(erased)}) fails after erasing z from {show_cmd(c)}: {bad.clause}: {bad.detail}"


def _case_antitone(g: Generator) -> Optional[str]:
    ctx = _random_context(g, ("r",))
    c = _safe_cmd(g, ctx.names())
    q = g.rng.choice(_post_menu())
    rely = _cover(g, q)
    s, h = g.store(), g.heap()
    _, l, d = g.partition(ctx.names(), 3)
    rho = ResourceConfiguration(frozenset(), l, d)
    n = g.rng.randint(0, 2)
    checker = SafeChecker(ctx, q, rely, g.bounds)
    if checker.safe(n + 1, c, s, h, rho) is not None:
        raise Discard
    # a fresh checker so the memo cannot answer from the deeper result
    bad = SafeChecker(ctx, q, rely, g.bounds).safe(n, c, s, h, rho)
    return None if bad is None else f"Safe_{n + 1} holds but Safe_{n} fails for {show_cmd(c)}"


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Suite:
    case: Callable[[Generator], Optional[str]]
    bounds: DomainBounds
    variables: tuple[str, ...]
    resources: tuple[str, ...]
    description: str


SUITES: dict[str, _Suite] = {
    "prop2": _Suite(_case_prop2, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t"),
                    "program steps keep L and O u D"),
    "prop3": _Suite(_case_prop3, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t"),
                    "owned equals Locked(C) along runs from non-extended commands"),
    "prop4": _Suite(_case_prop4, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t"),
                    "safety monotonicity"),
    "prop5": _Suite(_case_prop5, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t"),
                    "frame property"),
    "prop6": _Suite(_case_prop6, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t", "u"),
                    "no abort survives moving locked resources to owned"),
    "prop7": _Suite(_case_prop7, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t", "u"),
                    "steps with extra owned resources mirror steps with them locked"),
    "prop8": _Suite(_case_prop8, PROP_BOUNDS, ("x", "y", "z", "w"), ("r", "t"),
                    "steps commute with resource renaming"),
    "prop9": _Suite(_case_prop9, SAFE_BOUNDS, ("x", "y", "z"), ("r", "t"),
                    "environment transformation is an equivalence, antitone in the rely set"),
    "prop10": _Suite(_case_prop10, SAFE_BOUNDS, ("x", "y"), ("r", "t"), "skip is safe"),
    "prop12": _Suite(_case_prop12, SAFE_BOUNDS, ("x", "y"), ("r",), "safety under framing"),
    "prop13": _Suite(_case_prop13, SAFE_BOUNDS, ("x", "y"), ("r",), "safety of parallel composition"),
    "prop14": _Suite(_case_prop14, SAFE_BOUNDS, ("x", "y"), ("r", "t"), "safety inside a critical region"),
    "prop15": _Suite(_case_prop15, SAFE_BOUNDS, ("x", "y"), ("r", "t"), "safety of local resources"),
    "prop16": _Suite(_case_prop16, SAFE_BOUNDS, ("x", "y"), ("r", "t"), "safety under renaming"),
    "prop17": _Suite(_case_prop17, SAFE_BOUNDS, ("x", "y"), ("r",), "safety after erasing auxiliary variables"),
    "antitone": _Suite(_case_antitone, SAFE_BOUNDS, ("x", "y"), ("r",), "Safe_{n+1} implies Safe_n"),
}

ALIASES = {
    "prop-frame": "prop12",
    "prop-par": "prop13",
    "prop-with": "prop14",
    "prop-res": "prop15",
    "prop-rename-safe": "prop16",
    "prop-aux": "prop17",
}

STEP_SUITES = ("prop2", "prop3", "prop4", "prop5", "prop6", "prop7", "prop8", "prop9")
SAFE_SUITES = ("prop10", "prop12", "prop13", "prop14", "prop15", "prop16", "prop17")


@dataclass
class SuiteReport:
    suite: str
    target: int
    seed: int
    bounds: DomainBounds
    passed: int = 0
    failed: int = 0
    discarded: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def cases(self) -> int:
        return self.passed + self.failed

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.cases >= self.target

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "ok": self.ok,
            "cases": self.cases,
            "passed": self.passed,
            "failed": self.failed,
            "discarded": self.discarded,
            "target": self.target,
            "seed": self.seed,
            "bounds": self.bounds.to_json(),
            "failures": self.failures,
        }

    def human(self) -> str:
        status = "pass" if self.ok else "FAIL"
        line = (
            f"{self.suite}: {status} ({self.passed} passed, {self.failed} failed, "
            f"{self.discarded} discarded, target {self.target}, seed {self.seed})"
        )
        return "\n".join([line] + ["  " + f for f in self.failures])


def suite_id(name: str) -> str:
    sid = ALIASES.get(name, name)
    if sid not in SUITES:
        raise KeyError(f"unknown suite {name}")
    return sid


def property_suite(
    suite: str,
    cases: int,
    seed: int = 0,
    bounds: Optional[DomainBounds] = None,
    max_attempts: Optional[int] = None,
) -> SuiteReport:
    """Generate instances until `cases` meet the hypotheses; check each conclusion."""
    sid = suite_id(suite)
    spec = SUITES[sid]
    bounds = bounds or spec.bounds
    rng = random.Random(f"{sid}/{seed}")
    gen = Generator(rng, bounds, spec.variables, spec.resources)
    report = SuiteReport(sid, cases, seed, bounds)
    limit = max_attempts if max_attempts is not None else 50 * max(cases, 1)
    attempts = 0
    while report.cases < cases and attempts < limit:
        attempts += 1
        try:
            failure = spec.case(gen)
        except Discard:
            report.discarded += 1
            continue
        except _Broken as exc:
            failure = str(exc)
        if failure is None:
            report.passed += 1
        else:
            report.failed += 1
            if len(report.failures) < 5:
                report.failures.append(failure)
    return report


__all__ = [
    "ALIASES",
    "Discard",
    "ExploreReport",
    "Generator",
    "SAFE_SUITES",
    "STEP_SUITES",
    "SUITES",
    "SafeChecker",
    "SafeFailure",
    "SafeQuery",
    "SafeResult",
    "SmokeReport",
    "SuiteReport",
    "VERDICTS",
    "check_safe",
    "check_valid",
    "initial_states",
    "initially_read",
    "property_suite",
    "soundness_smoke",
    "suite_id",
]
