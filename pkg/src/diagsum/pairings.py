"""Brute-force pairing enumeration, linkedness tests and direct diagram sums.

Everything here is the slow, obviously-correct ground truth that the fast
inclusion-exclusion kernels are verified against.  Pairings are represented
as tuples of ``(j, k)`` index pairs with 1-based indices and ``j < k``; a
pairing of order ``m`` covers ``{1, ..., m}`` exactly.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterator, Sequence, Tuple

from .errors import CapacityError, ValidationError

Pair = Tuple[int, int]
Pairing = Tuple[Pair, ...]

#: Largest order accepted by the enumeration-based oracles.  15!! is about
#: two million pairings, which keeps every oracle suite comfortably fast.
DEFAULT_ENUMERATION_CAP = 16


def double_factorial(n: int) -> int:
    """(n)!! for odd n >= -1; the number of pairings of n+1 points."""
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def _check_order(m: int, cap: int) -> None:
    if m < 0 or m % 2 != 0:
        raise ValidationError(f"pairings require an even nonnegative order, got m={m}")
    if m > cap:
        raise CapacityError(
            f"order m={m} exceeds the enumeration cap {cap} "
            f"({double_factorial(m - 1)} pairings)"
        )


def enumerate_pairings(m: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Pairing]:
    """Yield all (m-1)!! pairings of {1..m}.

    Deterministic order: the smallest unpaired index is always paired first,
    with its partner ascending, so m=4 yields {(1,2),(3,4)}, {(1,3),(2,4)},
    {(1,4),(2,3)} in that order.
    """
    _check_order(m, cap)
    if m == 0:
        yield ()
        return

    def rec(remaining: Tuple[int, ...], acc: list[Pair]) -> Iterator[Pairing]:
        if not remaining:
            yield tuple(acc)
            return
        first, rest = remaining[0], remaining[1:]
        for pos, partner in enumerate(rest):
            acc.append((first, partner))
            yield from rec(rest[:pos] + rest[pos + 1 :], acc)
            acc.pop()

    yield from rec(tuple(range(1, m + 1)), [])


@lru_cache(maxsize=32)
def all_pairings(m: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Tuple[Pairing, ...]:
    """Materialized, cached enumerate_pairings(m)."""
    return tuple(enumerate_pairings(m, cap=cap))


def validate_pairing(q: Sequence[Pair], m: int | None = None) -> None:
    """Raise ValidationError unless q is a pairing of {1..m}."""
    seen: set[int] = set()
    for j, k in q:
        if not j < k:
            raise ValidationError(f"pair ({j}, {k}) is not ordered")
        seen.update((j, k))
    if len(seen) != 2 * len(q):
        raise ValidationError("pairing indices are not distinct")
    if m is None:
        m = 2 * len(q)
    if seen and seen != set(range(1, m + 1)):
        raise ValidationError(f"pairing does not cover 1..{m}")


def pairs_linked(p1: Pair, p2: Pair) -> bool:
    """True iff the two arcs interleave.

    Nested or disjoint arcs are not linked.  Works on raw time values as
    well as on indices; each pair must satisfy first <= second.
    """
    (s1, s2), (t1, t2) = p1, p2
    return (s1 <= t1 <= s2 and t1 <= s2 <= t2) or (t1 <= s1 <= t2 and s1 <= t2 <= s2)


def is_linked(q: Sequence[Pair]) -> bool:
    """True iff the arcs of q form a single connected component.

    Connectivity of the graph whose vertices are the pairs and whose edges
    are pairs_linked relations, computed by union-find.
    """
    n = len(q)
    if n == 0:
        return True
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if pairs_linked(q[i], q[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    root = find(0)
    return all(find(i) == root for i in range(n))


@lru_cache(maxsize=32)
def linked_pairings(m: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Tuple[Pairing, ...]:
    """All linked pairings of {1..m}, in enumeration order (cached)."""
    return tuple(q for q in all_pairings(m, cap=cap) if is_linked(q))


def _product_over(B, q: Pairing) -> complex:
    prod = complex(1.0)
    for j, k in q:
        prod *= B[j - 1, k - 1]
    return prod


def direct_influence(B, cap: int = DEFAULT_ENUMERATION_CAP) -> complex:
    """Sum over all pairings of products of B entries (the hafnian of B).

    The empty product convention gives 1 for a 0x0 matrix.
    """
    m = B.shape[0]
    _check_order(m, cap)
    return complex(sum(_product_over(B, q) for q in all_pairings(m, cap=cap)))


def direct_linked_sum(B, cap: int = DEFAULT_ENUMERATION_CAP) -> complex:
    """Sum over linked pairings only."""
    m = B.shape[0]
    _check_order(m, cap)
    return complex(sum(_product_over(B, q) for q in linked_pairings(m, cap=cap)))


def direct_rectangular_sum(B, cap: int = DEFAULT_ENUMERATION_CAP) -> complex:
    """Pairing sum with every arc between adjacent indices annihilated.

    Equivalent to the hafnian of B with the sub- and superdiagonal zeroed.
    """
    m = B.shape[0]
    _check_order(m, cap)
    total = complex(0.0)
    for q in all_pairings(m, cap=cap):
        if any(k - j == 1 for j, k in q):
            continue
        total += _product_over(B, q)
    return total


# ---------------------------------------------------------------------------
# Counting of dotted-box configurations.
#
# count_dotted_configurations(p, 2k) is the number of ways to place pairwise
# non-adjacent boxes, each covering >= 4 consecutive points and 2k points in
# total, on the points 1..p-1 (the last point p is never boxed).  Boxes are
# non-adjacent when at least one free point separates them.
# ---------------------------------------------------------------------------


def count_dotted_configurations(p: int, q: int) -> int:
    """a(p, q): number of box placements with q boxed points over 1..p-1."""
    if p < 0 or q < 0:
        raise ValidationError(f"counts need nonnegative arguments, got ({p}, {q})")
    return _count(p, q)


@lru_cache(maxsize=None)
def _count(p: int, q: int) -> int:
    if q == 0:
        return 1
    if q % 2 != 0 or q == 2 or q > max(p - 1, 0):
        return 0
    # Classify by the box containing point p-1, if any: absent, of size
    # 2n < q (with a mandatory free point before it), or of full size q.
    total = _count(p - 1, q)
    for two_n in range(4, q - 3, 2):
        total += _count(p - two_n - 1, q - two_n)
    total += 1
    return total


def count_dotted_configurations_bruteforce(p: int, q: int) -> int:
    """Independent placement enumeration used to validate the recurrence."""
    if p < 0 or q < 0:
        raise ValidationError(f"counts need nonnegative arguments, got ({p}, {q})")
    if q % 2 != 0:
        return 0

    def rec(start: int, remaining: int) -> int:
        if remaining == 0:
            return 1
        ways = 0
        for i in range(start, p):
            for size in range(4, remaining + 1, 2):
                if i + size - 1 <= p - 1:
                    ways += rec(i + size + 1, remaining - size)
        return ways

    return rec(1, q)


def count_contributing_configurations(p: int, q: int) -> int:
    """Placements whose rectangular remainder is not two adjacent points.

    The only structurally zero-valued placement is the single full-width box
    covering 1..p-2 (possible exactly when q == p-2), whose remainder is the
    adjacent pair {p-1, p}.
    """
    total = count_dotted_configurations(p, q)
    if q >= 4 and q == p - 2:
        total -= 1
    return total


def fill_count_table(p_max: int) -> dict[tuple[int, int], int]:
    """CountTable for all 0 <= p <= p_max, 0 <= q <= p-1 (even q only)."""
    table: dict[tuple[int, int], int] = {}
    for p in range(p_max + 1):
        for q in range(0, max(p, 1), 2):
            table[(p, q)] = count_dotted_configurations(p, q)
    return table
