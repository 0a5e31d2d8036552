"""Machine states: stores, heaps, resource configurations and domain bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Optional

Value = Optional[int]  # None is the null value


def show_value(v: Value) -> str:
    return "null" if v is None else str(v)


def value_key(v: Value) -> tuple[int, int]:
    """Total order on values: null first, then integers."""
    return (0, 0) if v is None else (1, v)


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainBounds:
    int_range: tuple[int, int] = (-2, 2)
    locations: tuple[int, ...] = tuple(range(10, 18))
    quantifier_values: tuple[Value, ...] = ()
    # cap on the size of heaps produced by model enumeration (initial states,
    # semantic rule checks, shared heaps); reachable heaps are not capped
    max_heap_cells: int = 2

    def __post_init__(self) -> None:
        lo, hi = self.int_range
        if lo > hi:
            raise ValueError("empty integer range")
        if not self.locations:
            raise ValueError("empty location universe")
        if list(self.locations) != sorted(set(self.locations)):
            raise ValueError("locations must be strictly increasing")
        if min(self.locations) < 0:
            raise ValueError("locations are natural numbers")
        if not self.quantifier_values:
            object.__setattr__(self, "quantifier_values", self.default_quantifier_values())
        for v in self.quantifier_values:
            if not (v is None or lo <= v <= hi or v in self.locations):
                raise ValueError(f"quantifier value {v} outside the bounded value set")
        if self.max_heap_cells < 0:
            raise ValueError("negative heap cap")
        object.__setattr__(self, "_locset", frozenset(self.locations))

    def default_quantifier_values(self) -> tuple[Value, ...]:
        lo, hi = self.int_range
        ints = set(range(lo, hi + 1)) | set(self.locations)
        return (None,) + tuple(sorted(ints))

    def in_range(self, v: int) -> bool:
        lo, hi = self.int_range
        return lo <= v <= hi or v in self._locset

    def is_location(self, v: Value) -> bool:
        return v in self._locset

    def to_json(self) -> dict:
        return {
            "int_range": list(self.int_range),
            "locations": list(self.locations),
            "quantifier_values": [v for v in self.quantifier_values],
            "max_heap_cells": self.max_heap_cells,
        }


def make_bounds(
    int_range: tuple[int, int] = (-2, 2),
    n_locations: int = 8,
    base: int = 10,
    max_heap_cells: int = 2,
    quantifier_values: Iterable[Value] | None = None,
) -> DomainBounds:
    return DomainBounds(
        int_range=int_range,
        locations=tuple(range(base, base + n_locations)),
        quantifier_values=tuple(quantifier_values) if quantifier_values is not None else (),
        max_heap_cells=max_heap_cells,
    )


DEFAULT_BOUNDS = DomainBounds()


# ---------------------------------------------------------------------------
# Immutable finite maps
# ---------------------------------------------------------------------------


class _FrozenMap(Mapping):
    __slots__ = ("_d", "_hash", "_items")

    def __init__(self, items: Mapping | Iterable[tuple] = ()) -> None:
        d = dict(items)
        self._d = d
        self._items: tuple | None = None
        self._hash: int | None = None

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self):
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __contains__(self, key) -> bool:
        return key in self._d

    def sorted_items(self) -> tuple:
        if self._items is None:
            self._items = tuple(sorted(self._d.items()))
        return self._items

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((type(self).__name__, frozenset(self._d.items())))
        return self._hash

    def __eq__(self, other) -> bool:
        if type(other) is type(self):
            return self._d == other._d
        return NotImplemented

    def __reduce__(self):
        return (type(self), (self._d,))

    def as_dict(self) -> dict:
        return dict(self._d)


class Store(_FrozenMap):
    """Total map from the declared variables to values."""

    __slots__ = ()

    def set(self, var: str, value: Value) -> Store:
        if var not in self._d:
            raise KeyError(f"undeclared variable {var}")
        d = dict(self._d)
        d[var] = value
        return Store(d)

    def update(self, values: Mapping[str, Value]) -> Store:
        d = dict(self._d)
        d.update(values)
        return Store(d)

    def agrees_on(self, other: Store, names: Iterable[str]) -> bool:
        return all(self._d.get(x) == other._d.get(x) for x in names)

    def dump(self) -> str:
        return "s{" + ",".join(f"{k}={show_value(v)}" for k, v in self.sorted_items()) + "}"

    def __repr__(self) -> str:
        return self.dump()


class Heap(_FrozenMap):
    """Finite partial map from locations to values."""

    __slots__ = ()

    def domain(self) -> frozenset[int]:
        return frozenset(self._d)

    def set(self, loc: int, value: Value) -> Heap:
        d = dict(self._d)
        d[loc] = value
        return Heap(d)

    def remove(self, loc: int) -> Heap:
        d = dict(self._d)
        del d[loc]
        return Heap(d)

    def restrict(self, locs: Iterable[int]) -> Heap:
        return Heap({l: self._d[l] for l in locs if l in self._d})

    def dump(self) -> str:
        return "h{" + ",".join(f"{k}:{show_value(v)}" for k, v in self.sorted_items()) + "}"

    def __repr__(self) -> str:
        return self.dump()


EMPTY_HEAP = Heap()


class HeapOverlap(ValueError):
    pass


class NotSubheap(ValueError):
    pass


def heap_disjoint(h1: Heap, h2: Heap) -> bool:
    small, big = (h1, h2) if len(h1) <= len(h2) else (h2, h1)
    return not any(l in big for l in small)


def heap_union(h1: Heap, h2: Heap) -> Heap:
    if not h2:
        return h1
    if not h1:
        return h2
    if not heap_disjoint(h1, h2):
        raise HeapOverlap(f"heaps overlap on {sorted(h1.domain() & h2.domain())}")
    d = h1.as_dict()
    d.update(h2.as_dict())
    return Heap(d)


def is_subheap(g: Heap, h: Heap) -> bool:
    return all(l in h and h[l] == v for l, v in g.items())


def heap_subtract(h: Heap, g: Heap) -> Heap:
    if not is_subheap(g, h):
        raise NotSubheap("second heap is not a subheap of the first")
    if not g:
        return h
    return Heap({l: v for l, v in h.items() if l not in g})


def compatible(h1: Heap, h2: Heap) -> bool:
    """The two heaps agree on their common domain."""
    return all(h2[l] == v for l, v in h1.items() if l in h2)


def subheaps(h: Heap) -> list[Heap]:
    """All restrictions of h, by subset size then lexicographically by sorted domain."""
    locs = sorted(h)
    out: list[Heap] = []
    for k in range(len(locs) + 1):
        for combo in combinations(locs, k):
            out.append(h.restrict(combo))
    return out


# ---------------------------------------------------------------------------
# Resource configurations
# ---------------------------------------------------------------------------


class InvalidConfiguration(ValueError):
    pass


@dataclass(frozen=True)
class ResourceConfiguration:
    owned: frozenset[str] = frozenset()
    locked: frozenset[str] = frozenset()
    available: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        o, l, d = self.owned, self.locked, self.available
        if (o & l) or (o & d) or (l & d):
            raise InvalidConfiguration(
                f"owned/locked/available overlap: O={sorted(o)} L={sorted(l)} D={sorted(d)}"
            )

    def names(self) -> frozenset[str]:
        return self.owned | self.locked | self.available

    def __contains__(self, r: object) -> bool:
        return r in self.owned or r in self.locked or r in self.available

    def remove(self, r: str) -> ResourceConfiguration:
        if r not in self:
            return self
        return ResourceConfiguration(self.owned - {r}, self.locked - {r}, self.available - {r})

    def rename(self, old: str, new: str) -> ResourceConfiguration:
        def sub(xs: frozenset[str]) -> frozenset[str]:
            return frozenset(new if x == old else x for x in xs)

        return ResourceConfiguration(sub(self.owned), sub(self.locked), sub(self.available))

    def dump(self) -> str:
        def fmt(tag: str, xs: frozenset[str]) -> str:
            return tag + "{" + ",".join(sorted(xs)) + "}"

        return " ".join((fmt("O", self.owned), fmt("L", self.locked), fmt("D", self.available)))


def config_remove(rho: ResourceConfiguration, r: str) -> ResourceConfiguration:
    return rho.remove(r)


def config_member(rho: ResourceConfiguration, r: str) -> bool:
    return r in rho


def make_config(
    owned: Iterable[str] = (), locked: Iterable[str] = (), available: Iterable[str] = ()
) -> ResourceConfiguration:
    return ResourceConfiguration(frozenset(owned), frozenset(locked), frozenset(available))


# ---------------------------------------------------------------------------
# Machine state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MachineState:
    store: Store
    heap: Heap = EMPTY_HEAP
    config: ResourceConfiguration = field(default_factory=ResourceConfiguration)

    def dump(self) -> str:
        return f"{self.store.dump()} {self.heap.dump()} {self.config.dump()}"

    def with_heap(self, heap: Heap) -> MachineState:
        return MachineState(self.store, heap, self.config)

    def with_config(self, config: ResourceConfiguration) -> MachineState:
        return MachineState(self.store, self.heap, config)


def state(
    store: Mapping[str, Value] | None = None,
    heap: Mapping[int, Value] | None = None,
    owned: Iterable[str] = (),
    locked: Iterable[str] = (),
    available: Iterable[str] = (),
) -> MachineState:
    return MachineState(
        Store(store or {}), Heap(heap or {}), make_config(owned, locked, available)
    )


def heaps_over(
    locations: Iterable[int], values: Iterable[Value], max_cells: int
) -> Iterator[Heap]:
    """Every heap with at most max_cells cells over the given locations and values."""
    locs = sorted(locations)
    vals = list(values)

    def fill(chosen: tuple[int, ...], i: int, acc: dict) -> Iterator[Heap]:
        if i == len(chosen):
            yield Heap(acc)
            return
        for v in vals:
            acc[chosen[i]] = v
            yield from fill(chosen, i + 1, acc)
        acc.pop(chosen[i], None)

    for k in range(min(max_cells, len(locs)) + 1):
        for chosen in combinations(locs, k):
            yield from fill(chosen, 0, {})

