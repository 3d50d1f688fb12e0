import itertools

import pytest
from hypothesis import given, strategies as st

from liouville.blocks import YoungDiagram, diagrams_at_level
from liouville import DomainError


def brute_partitions(n):
    # independent enumeration: all weakly decreasing positive tuples summing to n
    found = set()
    if n == 0:
        return {()}
    for k in range(1, n + 1):
        for combo in itertools.combinations_with_replacement(range(1, n + 1), k):
            if sum(combo) == n:
                found.add(tuple(sorted(combo, reverse=True)))
    return found


@pytest.mark.parametrize("n,count", [(0, 1), (1, 1), (2, 2), (4, 5), (10, 42), (12, 77)])
def test_partition_counts(n, count):
    assert len(diagrams_at_level(n)) == count


@pytest.mark.parametrize("n", range(0, 11))
def test_matches_brute_force_enumeration(n):
    got = {d.parts for d in diagrams_at_level(n)}
    assert got == brute_partitions(n)


def test_lexicographic_descending_order():
    parts = [d.parts for d in diagrams_at_level(4)]
    assert parts == [(4,), (3, 1), (2, 2), (2, 1, 1), (1, 1, 1, 1)]
    for n in range(2, 9):
        seq = [d.parts for d in diagrams_at_level(n)]
        assert seq == sorted(seq, reverse=True)


def test_level_property():
    assert YoungDiagram(()).level == 0
    assert YoungDiagram((3, 1, 1)).level == 5


def test_invalid_diagrams_rejected():
    with pytest.raises(DomainError):
        YoungDiagram((1, 2))
    with pytest.raises(DomainError):
        YoungDiagram((2, 0))
    with pytest.raises(DomainError):
        YoungDiagram((-1,))


@given(st.integers(0, 14))
def test_diagram_invariants(n):
    for d in diagrams_at_level(n):
        assert d.level == n
        assert all(p > 0 for p in d.parts)
        assert all(a >= b for a, b in zip(d.parts, d.parts[1:]))
