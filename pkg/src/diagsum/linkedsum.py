"""Fast evaluation of the linked-diagram sum via dotted and rectangular boxes.

The sum over linked pairings of an m-point window expands into placements of
pairwise non-adjacent "dotted" sub-windows (each covering an even number >= 4
of consecutive points, never the last one) combined with one rectangular-box
value over the leftover points:

    linked(1..m) = rect(1..m) + sum_placements  prod_r dotted(window_r)
                                               * rect(rest of points)

Dotted windows satisfy a linear recursion in terms of shorter dotted and
linked (rounded) windows, so a single bottom-up sweep over all sub-windows
evaluates the full linked sum in O(alpha^(m/2)) operations, alpha ~ 4.52,
instead of the ~e^-1 (m-1)!! terms of the direct sum.

Rectangular boxes over leftover points keep the adjacency of the original
index sequence: two points that were adjacent before dotted windows were
carved out remain forbidden as a pair, while points separated only by a
dotted window may pair up.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterator, Tuple

import numpy as np

from .errors import CapacityError, ValidationError
from .hafnian import DEFAULT_WORKSPACE_CAP, GRAY_MIN_ORDER, hafnian_ie_batch

Window = Tuple[int, int]  # (start, length), 1-based start, even length >= 4
Placement = Tuple[Window, ...]


def enumerate_box_placements(m: int) -> Iterator[Placement]:
    """All admissible dotted-window placements on an m-point sequence.

    Windows are (start, length) with 1-based starts; a window covers points
    start..start+length-1, never point m, and consecutive windows leave at
    least one free point between them.  The empty placement comes first and
    placements whose leftover points happen to form a zero-valued rectangle
    are yielded all the same.
    """
    if m < 0 or m % 2 != 0:
        raise ValidationError(f"placements require an even order, got m={m}")

    def rec(min_start: int, acc: list[Window]) -> Iterator[Placement]:
        yield tuple(acc)
        for start in range(min_start, m - 3):
            for length in range(4, m - start + 1, 2):
                acc.append((start, length))
                yield from rec(start + length + 1, acc)
                acc.pop()

    yield from rec(1, [])


@lru_cache(maxsize=64)
def _placements(m: int) -> Tuple[Placement, ...]:
    """Materialized enumerate_box_placements(m), shared across windows."""
    return tuple(enumerate_box_placements(m))


@lru_cache(maxsize=64)
def _placement_layout(m: int):
    """Placements grouped by leftover-point count.

    Grouping lets every rectangular box of one size evaluate as a single
    batched hafnian call.  Each group carries the placements, their leftover
    offsets (k, r), and the per-placement adjacency masks of the leftovers
    in original-index distance.
    """
    by_size: dict[int, list] = {}
    for pl in _placements(m):
        covered = np.zeros(m, dtype=bool)
        for start, length in pl:
            covered[start - 1 : start - 1 + length] = True
        rest = np.flatnonzero(~covered)
        by_size.setdefault(len(rest), []).append((pl, rest))
    groups = []
    for r, items in sorted(by_size.items()):
        placements = tuple(pl for pl, _ in items)
        offsets = np.array([rest for _, rest in items])
        adjacent = np.abs(offsets[:, :, np.newaxis] - offsets[:, np.newaxis, :]) <= 1
        groups.append((placements, offsets, adjacent))
    return tuple(groups)


class SegmentCache:
    """Bottom-up tables of linked ("rounded") and dotted window values.

    Entries are keyed by (start, length) over windows that exclude the last
    point of the m-point sequence; values carry whatever batch shape the
    input correlation matrices have.  All windows of one length fill in a
    single batched sweep (they only depend on strictly shorter windows), so
    each placement group costs one vectorized hafnian call per level.
    """

    def __init__(self, B: np.ndarray, cap: int = DEFAULT_WORKSPACE_CAP):
        B = np.asarray(B, dtype=complex)
        if B.ndim < 2 or B.shape[-1] != B.shape[-2]:
            raise ValidationError(f"expected square matrices, got shape {B.shape}")
        self.B = B
        self.m = B.shape[-1]
        self.cap = cap
        self.rounded: dict[Window, np.ndarray] = {}
        self.dotted: dict[Window, np.ndarray] = {}
        # per-length stacks over starts, last axis = start-1
        self._rounded_level: dict[int, np.ndarray] = {}
        self._dotted_level: dict[int, np.ndarray] = {}

    def fill(self) -> None:
        """Populate all windows of length 4..m-2, shortest first."""
        m, B = self.m, self.B
        if m < 6:
            return
        idx = np.arange(m - 4)
        seed = B[..., idx, idx + 2] * B[..., idx + 1, idx + 3]
        self._set_level(4, seed, -seed)
        for n2 in range(6, m - 1, 2):
            n_w = m - n2
            rounded = self._expand_level(n2, list(range(1, n_w + 1)))
            dotted = -rounded
            for j2 in range(4, n2 - 3, 2):
                dotted = dotted - (self._dotted_level[j2][..., :n_w]
                                   * self._rounded_level[n2 - j2][..., j2 : j2 + n_w])
            self._set_level(n2, rounded, dotted)

    def _set_level(self, n2: int, rounded: np.ndarray, dotted: np.ndarray) -> None:
        self._rounded_level[n2] = rounded
        self._dotted_level[n2] = dotted
        for w in range(rounded.shape[-1]):
            self.rounded[(w + 1, n2)] = rounded[..., w]
            self.dotted[(w + 1, n2)] = dotted[..., w]

    def _rect_rest(self, offsets: np.ndarray) -> np.ndarray:
        """Rectangular box over a point subset given by original offsets."""
        if offsets.size == 0:
            return np.ones(self.B.shape[:-2], dtype=complex)
        sub = self.B[..., offsets[:, np.newaxis], offsets[np.newaxis, :]].copy()
        adjacent = np.abs(offsets[:, np.newaxis] - offsets[np.newaxis, :]) <= 1
        sub[..., adjacent] = 0.0
        return hafnian_ie_batch(sub, cap=self.cap)

    # cap on batch-size * 2^r slab-table entries per grouped call; the
    # Gray-code regime has O(1) workspace and needs no chunking
    _GROUP_BUDGET = 1 << 22

    def _expand_level(self, n2: int, starts: list[int]) -> np.ndarray:
        """Linked sums of all windows (k, n2), k in starts, stacked last.

        Placements with equally many leftover points share one batched
        rectangular-box evaluation covering every window at once; the dotted
        products gather from the per-length level stacks.
        """
        bases = np.asarray(starts, dtype=np.intp) - 1
        n_w = len(starts)
        span = np.arange(n2)
        rows = bases[:, np.newaxis, np.newaxis] + span[np.newaxis, :, np.newaxis]
        cols = bases[:, np.newaxis, np.newaxis] + span[np.newaxis, np.newaxis, :]
        W = self.B[..., rows, cols]  # (..., n_w, n2, n2)
        batch_cells = int(np.prod(self.B.shape[:-2], dtype=np.int64))
        total = None
        for placements, offsets, adjacent in _placement_layout(n2):
            n_pl, r = offsets.shape
            if r >= GRAY_MIN_ORDER:
                chunk = n_pl
            else:
                chunk = max(1, self._GROUP_BUDGET
                            // max(batch_cells * n_w * (1 << r), 1))
            for lo in range(0, n_pl, chunk):
                offs = offsets[lo : lo + chunk]
                sub = W[..., offs[:, :, np.newaxis], offs[:, np.newaxis, :]]
                sub = np.where(adjacent[lo : lo + chunk], 0.0, sub)
                rect = hafnian_ie_batch(sub, cap=self.cap)  # (..., n_w, chunk)
                for pos, placement in enumerate(placements[lo : lo + chunk]):
                    term = rect[..., pos]
                    for start, length in placement:
                        term = term * self._dotted_level[length][..., bases + start - 1]
                    total = term if total is None else total + term
        return total

    def dotted_value(self, k: int, n2: int) -> np.ndarray:
        """Dotted window (k, n2) from the recursion over shorter windows.

        dotted(1..m) = -linked(1..m)
                       - sum_j dotted(1..2j) * linked(2j+1..m),  4 <= 2j <= m-4.

        Every shorter entry must already be cached; a missing one means the
        bottom-up fill order was violated.
        """
        try:
            value = -self.rounded[(k, n2)]
            for j2 in range(4, n2 - 3, 2):
                value = value - self.dotted[(k, j2)] * self.rounded[(k + j2, n2 - j2)]
        except KeyError as missing:
            raise AssertionError(
                f"segment cache filled out of order: missing window {missing}"
            ) from None
        return value

    def top_value(self) -> np.ndarray:
        """Linked sum of the full m-point sequence from the filled cache."""
        return self._expand_level(self.m, [1])[..., 0]


def dotted_box(cache: SegmentCache, k: int, n2: int) -> complex:
    """Dotted value of window (k, n2) using (and updating) the cache."""
    if (k, n2) not in cache.dotted:
        cache.dotted[(k, n2)] = cache.dotted_value(k, n2)
    return complex(cache.dotted[(k, n2)])


def rounded_box(B: np.ndarray, cap: int = DEFAULT_WORKSPACE_CAP) -> complex:
    """Sum over linked pairings of an m-point correlation matrix.

    Matches the direct linked sum exactly; cost O(alpha^(m/2)) with
    alpha ~ 4.52, dominated by the rectangular boxes of the final expansion.
    """
    value = rounded_box_batch(np.asarray(B, dtype=complex)[np.newaxis], cap=cap)[0]
    return complex(value)


def rounded_box_batch(B: np.ndarray, cap: int = DEFAULT_WORKSPACE_CAP) -> np.ndarray:
    """rounded_box over a stack of matrices of shape (..., m, m)."""
    B = np.asarray(B, dtype=complex)
    if B.ndim < 2 or B.shape[-1] != B.shape[-2]:
        raise ValidationError(f"expected square matrices, got shape {B.shape}")
    m = B.shape[-1]
    if m < 2 or m % 2 != 0:
        raise ValidationError(f"linked sums require an even order >= 2, got m={m}")
    if m > cap:
        raise CapacityError(f"order m={m} exceeds the workspace cap {cap}")
    if m == 2:
        return B[..., 0, 1].copy()
    cache = SegmentCache(B, cap=cap)
    cache.fill()
    return cache.top_value()
