from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cslv.state import (
    EMPTY_HEAP,
    DomainBounds,
    Heap,
    HeapOverlap,
    InvalidConfiguration,
    NotSubheap,
    ResourceConfiguration,
    Store,
    config_member,
    config_remove,
    heap_disjoint,
    heap_subtract,
    heap_union,
    heaps_over,
    make_bounds,
    make_config,
    state,
    subheaps,
)

heaps = st.dictionaries(st.integers(10, 15), st.one_of(st.none(), st.integers(-2, 2)), max_size=4).map(Heap)


def test_heap_disjoint():
    assert heap_disjoint(Heap({10: 1}), Heap({11: 2}))
    assert not heap_disjoint(Heap({10: 1}), Heap({10: 2}))
    assert heap_disjoint(Heap({10: 1, 12: 3}), EMPTY_HEAP)


def test_heap_union():
    assert heap_union(Heap({10: 1}), Heap({11: 2})) == Heap({10: 1, 11: 2})
    assert heap_union(Heap({10: 1}), EMPTY_HEAP) == Heap({10: 1})
    with pytest.raises(HeapOverlap):
        heap_union(Heap({10: 1}), Heap({10: 2}))


def test_heap_subtract():
    assert heap_subtract(Heap({10: 1, 11: 2}), Heap({11: 2})) == Heap({10: 1})
    assert heap_subtract(Heap({10: 1}), EMPTY_HEAP) == Heap({10: 1})
    assert heap_subtract(Heap({10: 1}), Heap({10: 1})) == EMPTY_HEAP
    with pytest.raises(NotSubheap):
        heap_subtract(Heap({10: 1}), Heap({10: 2}))


def test_subheaps():
    assert subheaps(EMPTY_HEAP) == [EMPTY_HEAP]
    assert subheaps(Heap({10: 1})) == [EMPTY_HEAP, Heap({10: 1})]


@given(heaps)
def test_subheap_count(h):
    subs = subheaps(h)
    assert len(subs) == 2 ** len(h)
    assert len(set(subs)) == len(subs)


@given(heaps, heaps, heaps)
def test_union_laws(a, b, c):
    if not (heap_disjoint(a, b) and heap_disjoint(b, c) and heap_disjoint(a, c)):
        return
    assert heap_union(a, b) == heap_union(b, a)
    assert heap_union(heap_union(a, b), c) == heap_union(a, heap_union(b, c))
    assert heap_union(a, EMPTY_HEAP) == a
    assert heap_subtract(heap_union(a, b), b) == a


def test_config_remove_and_member():
    assert config_remove(make_config(owned={"r"}), "r") == make_config()
    rho = make_config(owned={"a"}, available={"b"})
    assert config_remove(rho, "r") == rho
    assert config_member(make_config(available={"r"}), "r")
    assert not config_member(make_config(), "r")


@given(st.lists(st.sampled_from("OLD"), min_size=3, max_size=3), st.lists(st.sampled_from("OLD"), min_size=3, max_size=3))
def test_configurations_are_pairwise_disjoint(first, second):
    # every resource placed in one or two parts; two parts must be refused
    parts = {k: set() for k in "OLD"}
    for name, a, b in zip("rst", first, second):
        parts[a].add(name)
        parts[b].add(name)
    overlapping = any(a != b for a, b in zip(first, second))
    if overlapping:
        with pytest.raises(InvalidConfiguration):
            make_config(parts["O"], parts["L"], parts["D"])
        return
    rho = make_config(parts["O"], parts["L"], parts["D"])
    for name in "rst":
        assert config_member(rho, name)
        assert sum(name in s for s in (rho.owned, rho.locked, rho.available)) == 1


def test_state_dump():
    sigma = state({"q": 0, "p": 1}, {11: None, 10: 5}, owned={"se"})
    assert sigma.dump() == "s{p=1,q=0} h{10:5,11:null} O{se} L{} D{}"


def test_store_update_is_persistent():
    s = Store({"x": 0})
    assert s.set("x", 1)["x"] == 1 and s["x"] == 0


def test_bounds_validation():
    assert make_bounds().locations == tuple(range(10, 18))
    assert None in make_bounds().quantifier_values
    with pytest.raises(ValueError):
        DomainBounds(int_range=(1, 0))
    with pytest.raises(ValueError):
        DomainBounds(locations=())
    with pytest.raises(ValueError):
        make_bounds(quantifier_values=(99,))


def test_heaps_over_counts():
    # heaps over 2 locations with 3 values, at most 2 cells: 1 + 2*3 + 9
    assert len(list(heaps_over((10, 11), (0, 1, None), 2))) == 16
    assert len(list(heaps_over((10, 11), (0, 1, None), 1))) == 7


def test_resource_configuration_dump():
    assert ResourceConfiguration(frozenset({"b", "a"}), frozenset(), frozenset({"c"})).dump() == "O{a,b} L{} D{c}"
