"""Wall-clock benchmarks: direct summation vs inclusion-exclusion kernels.

Each order m gets one random complex matrix, shared by both engines so the
timing difference is purely algorithmic.  Direct engines sum products over
precomputed pairing index tables (built outside the timed region, mirroring
how a tuned direct implementation would amortize enumeration); runs use a
monotonic clock, one warm-up call, and the median of the timed trials.
"""

from __future__ import annotations

import gc
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ValidationError
from .hafnian import hafnian_ie
from .linkedsum import rounded_box
from .pairings import double_factorial, enumerate_pairings

#: Direct engines enumerate pairings; past this order they are skipped and
#: the report carries an out-of-cap marker instead of a timing.
DIRECT_BENCH_CAP = 16

#: Chunk of pairings per vectorized product-sum, keeps gathers in cache.
_CHUNK = 1 << 18


def _pairing_indices(m: int) -> np.ndarray:
    """(n_pairings, m/2, 2) zero-based index table, streamed to keep memory flat."""
    out = np.empty((double_factorial(m - 1), m // 2, 2), dtype=np.int16)
    for i, q in enumerate(enumerate_pairings(m, cap=max(m, DIRECT_BENCH_CAP))):
        out[i] = q
    out -= 1
    return out


def _linked_mask(pairs: np.ndarray) -> np.ndarray:
    """Boolean mask of linked pairings, vectorized over the pairing axis.

    Two arcs interleave iff exactly one endpoint of one lies strictly inside
    the other; connectivity over the k arcs comes from a Warshall sweep on
    the (n, k, k) adjacency stack.
    """
    n, k, _ = pairs.shape
    lo = pairs[:, :, 0]
    hi = pairs[:, :, 1]
    inside = (lo[:, :, None] < lo[:, None, :]) & (lo[:, None, :] < hi[:, :, None])
    inside_hi = (lo[:, :, None] < hi[:, None, :]) & (hi[:, None, :] < hi[:, :, None])
    adj = inside ^ inside_hi
    reach = adj | np.eye(k, dtype=bool)
    for mid in range(k):
        reach |= reach[:, :, mid, None] & reach[:, mid, None, :]
    return reach.all(axis=(1, 2))


def _direct_sum(B: np.ndarray, pairs: np.ndarray) -> complex:
    """Sum over the given pairing table of entry products."""
    total = 0.0 + 0.0j
    for start in range(0, pairs.shape[0], _CHUNK):
        block = pairs[start : start + _CHUNK]
        total += np.prod(B[block[:, :, 0], block[:, :, 1]], axis=1).sum()
    return total


@dataclass
class BenchReport:
    """Timings per order and engine, growth ratios, and the crossover order."""

    kind: str
    trials: int
    seed: int
    medians: dict[str, dict[int, float]] = field(default_factory=dict)
    skipped: dict[str, list[int]] = field(default_factory=dict)
    values: dict[str, dict[int, list[float]]] = field(default_factory=dict)
    results: dict[str, dict[int, complex]] = field(default_factory=dict)
    machine: dict = field(default_factory=dict)

    def ratio(self, engine: str, m: int) -> float:
        """Median-time ratio T(m+2) / T(m)."""
        times = self.medians[engine]
        return times[m + 2] / times[m]

    def crossover(self) -> int | None:
        """Smallest common m where the ie engine beats the direct engine."""
        direct, ie = self.medians["direct"], self.medians["ie"]
        for m in sorted(set(direct) & set(ie)):
            if ie[m] < direct[m]:
                return m
        return None

    def log_slope_per_halforder(self, engine: str, m_min: int) -> float:
        """Least-squares slope of log T against m/2 for m >= m_min."""
        pts = [(m / 2.0, math.log(t)) for m, t in self.medians[engine].items()
               if m >= m_min]
        if len(pts) < 2:
            raise ValidationError(f"need two orders >= {m_min} for a slope fit")
        x, y = np.array(pts).T
        return float(np.polyfit(x, y, 1)[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "trials": self.trials,
            "seed": self.seed,
            "medians": {e: {str(m): t for m, t in v.items()}
                        for e, v in self.medians.items()},
            "samples": {e: {str(m): t for m, t in v.items()}
                        for e, v in self.values.items()},
            # Engine outputs are deterministic for a given seed, unlike the
            # timings; they double as a direct-vs-ie agreement record.
            "results": {e: {str(m): [z.real, z.imag] for m, z in v.items()}
                        for e, v in self.results.items()},
            "skipped": self.skipped,
            "machine": self.machine,
        }


def _random_matrix(rng: np.random.Generator, m: int) -> np.ndarray:
    """Random symmetric zero-diagonal complex matrix, entries in the unit disc."""
    A = rng.uniform(-1, 1, (m, m)) + 1j * rng.uniform(-1, 1, (m, m))
    B = (A + A.T) / 2.0
    np.fill_diagonal(B, 0.0)
    return B


def _time_cases(cases: dict, trials: int) -> tuple[dict, dict]:
    """Timings and last values per case key.

    All cases are warmed up once, then the trials run round-robin over the
    cases so machine-speed drift hits every case evenly instead of biasing
    the growth ratios; BLAS is pinned to one thread and the garbage
    collector is paused while the clock runs.
    """
    values = {key: complex(fn()) for key, fn in cases.items()}  # warm-up
    times: dict = {key: [] for key in cases}
    gc.collect()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        with threadpool_limits(limits=1):
            for _ in range(trials):
                for key, fn in cases.items():
                    start = time.perf_counter()
                    value = fn()
                    times[key].append(time.perf_counter() - start)
                    values[key] = complex(value)
    finally:
        if gc_was_enabled:
            gc.enable()
    return times, values


def _machine_meta() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _run_bench(kind: str, direct_engine, ie_engine, prepare,
               ms_direct, ms_ie, trials, seed) -> BenchReport:
    if trials < 5:
        raise ValidationError(f"need at least 5 trials for a stable median, got {trials}")
    report = BenchReport(kind=kind, trials=trials, seed=seed, machine=_machine_meta())
    report.medians = {"direct": {}, "ie": {}}
    report.values = {"direct": {}, "ie": {}}
    report.results = {"direct": {}, "ie": {}}
    report.skipped = {"direct": [], "ie": []}
    rng = np.random.default_rng(seed)
    cases: dict = {}
    for m in sorted(set(ms_direct) | set(ms_ie)):
        B = _random_matrix(rng, m)
        if m in ms_direct:
            if m > DIRECT_BENCH_CAP:
                report.skipped["direct"].append(m)
            else:
                table = prepare(m)
                cases[("direct", m)] = (
                    lambda B=B, table=table: direct_engine(B, table))
        if m in ms_ie:
            cases[("ie", m)] = lambda B=B: ie_engine(B)
    times, values = _time_cases(cases, trials)
    for (engine, m), samples in times.items():
        report.values[engine][m] = samples
        report.medians[engine][m] = float(np.median(samples))
        report.results[engine][m] = values[(engine, m)]
    return report


def bench_hafnian(
    ms_direct=range(4, 17, 2),
    ms_ie=range(4, 25, 2),
    trials: int = 5,
    seed: int = 2024,
) -> BenchReport:
    """Direct pairing sum vs the O(2^m) kernel for the full influence sum."""
    return _run_bench(
        "hafnian",
        _direct_sum,
        hafnian_ie,
        _pairing_indices,
        list(ms_direct), list(ms_ie), trials, seed,
    )


def bench_linked(
    ms_direct=range(4, 17, 2),
    ms_ie=range(4, 23, 2),
    trials: int = 5,
    seed: int = 2024,
) -> BenchReport:
    """Direct linked-diagram sum vs the dotted/rectangular-box expansion."""

    def prepare(m: int) -> np.ndarray:
        pairs = _pairing_indices(m)
        return pairs[_linked_mask(pairs)]

    return _run_bench(
        "linked",
        _direct_sum,
        rounded_box,
        prepare,
        list(ms_direct), list(ms_ie), trials, seed,
    )
