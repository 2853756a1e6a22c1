"""Bare diagrammatic Monte Carlo for the spin-boson observable <sigma_z(t)>.

The observable expands in even orders m; the order-0 term is deterministic
and every higher order is estimated by importance sampling: draw an even
order m, draw m sorted uniform times on [0, 2t], and weight the integrand by
(2t)^m / m! divided by the order mass.  Orders come either from the exact
(influence-functional) distribution or from a truncated Poisson surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ValidationError
from .hafnian import DEFAULT_WORKSPACE_CAP, hafnian_ie, hafnian_ie_batch
from .series import ObservableSeries
from .spinboson import (
    RHO_S,
    W_S,
    SpinBosonParams,
    bare_propagator_batch,
    bare_system_propagator,
    correlation_matrix,
)

DEFAULT_M_MAX = 13


@dataclass(frozen=True)
class OrderDistribution:
    """Probability masses over even expansion orders m = 2..2*m_max.

    kind is "exact" (masses from the influence functional on an equispaced
    stencil), "poisson" (truncated Poisson surrogate with constant b_const),
    or "fixed" (convergence-study mode: every order up to the truncation is
    estimated with the same number of samples, no importance weights).
    """

    kind: str
    orders: Tuple[int, ...]
    masses: np.ndarray | None
    m_max: int
    t: float
    b_const: float | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "poisson", "fixed"):
            raise ValidationError(f"unknown sampler kind {self.kind!r}")
        if any(m % 2 or m < 2 for m in self.orders):
            raise ValidationError("order support must be even and >= 2")
        if self.masses is not None:
            total = float(np.sum(self.masses))
            if not math.isclose(total, 1.0, abs_tol=1e-12):
                raise ValidationError(f"order masses sum to {total}, not 1")

    def mass(self, m: int) -> float:
        if self.masses is None:
            raise ValidationError("fixed-order mode has no importance masses")
        return float(self.masses[self.orders.index(m)])

    def sample_orders(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.masses is None:
            raise ValidationError("fixed-order mode does not sample orders")
        return rng.choice(np.array(self.orders), size=n, p=self.masses)


def poisson_order_distribution(
    b_const: float, t: float, m_max: int = DEFAULT_M_MAX
) -> OrderDistribution:
    """Truncated-renormalized Poisson masses: m/2 - 1 ~ Pois(2 b t^2)."""
    if b_const <= 0 or t <= 0:
        raise ValidationError("poisson order sampling needs b_const > 0 and t > 0")
    lam = 2.0 * b_const * t * t
    ks = np.arange(m_max)
    log_fact = np.array([math.lgamma(k + 1) for k in ks])
    weights = np.exp(ks * math.log(lam) - log_fact)
    masses = weights / weights.sum()
    orders = tuple(2 * (ks + 1))
    return OrderDistribution("poisson", orders, masses, m_max, t, b_const=b_const)


def exact_order_distribution(
    p: SpinBosonParams, t: float, m_max: int = DEFAULT_M_MAX,
    cap: int = DEFAULT_WORKSPACE_CAP,
) -> OrderDistribution:
    """Order masses proportional to (2t)^m / m! |L_b| on equispaced stencils.

    For each order m = 2M the influence functional is evaluated on the
    stencil tau, 2 tau, ..., m tau with tau = 2t/(m+1).
    """
    if t <= 0:
        raise ValidationError("exact order masses need t > 0")
    weights = []
    for M in range(1, m_max + 1):
        m = 2 * M
        tau = 2.0 * t / (m + 1)
        stencil = tau * np.arange(1, m + 1)
        B = correlation_matrix(p, stencil, t)
        lb = abs(hafnian_ie(B, cap=cap))
        weights.append(math.exp(m * math.log(2 * t) - math.lgamma(m + 1)) * lb)
    weights = np.array(weights)
    total = weights.sum()
    if total == 0.0:
        raise ValidationError(
            "exact order masses are all zero (vanishing bath coupling?); "
            "use the poisson sampler instead"
        )
    orders = tuple(2 * np.arange(1, m_max + 1))
    return OrderDistribution("exact", orders, weights / total, m_max, t)


def fixed_order_distribution(m_bar: int, t: float) -> OrderDistribution:
    """Convergence-study mode: orders 2..m_bar, equal sampling, no masses."""
    if m_bar < 2 or m_bar % 2:
        raise ValidationError(f"fixed truncation must be even >= 2, got {m_bar}")
    return OrderDistribution("fixed", tuple(range(2, m_bar + 1, 2)), None, m_bar // 2, t)


def poisson_order_sample(
    rng: np.random.Generator, b_const: float, t: float, m_max: int = DEFAULT_M_MAX
) -> int:
    """One even order: m = 2(K+1), K ~ Pois(2 b t^2), redrawn while m > 2 m_max."""
    if b_const <= 0 or t <= 0:
        raise ValidationError("poisson order sampling needs b_const > 0 and t > 0")
    while True:
        m = 2 * (int(rng.poisson(2.0 * b_const * t * t)) + 1)
        if m <= 2 * m_max:
            return m


def poisson_order_sample_batch(
    rng: np.random.Generator, b_const: float, t: float, m_max: int, n: int
) -> np.ndarray:
    """Vectorized poisson_order_sample: n accepted even orders."""
    if b_const <= 0 or t <= 0:
        raise ValidationError("poisson order sampling needs b_const > 0 and t > 0")
    lam = 2.0 * b_const * t * t
    m = 2 * (rng.poisson(lam, size=n) + 1)
    rejected = m > 2 * m_max
    while np.any(rejected):
        m[rejected] = 2 * (rng.poisson(lam, size=int(rejected.sum())) + 1)
        rejected = m > 2 * m_max
    return m


def order0_term(p: SpinBosonParams, t: float) -> complex:
    """tr(rho_s e^{itH} sigma_z e^{-itH}): the deterministic order-0 term."""
    U = bare_system_propagator(p, 0.0, 2.0 * t, t)
    return complex(np.trace(RHO_S @ U))


def _chain_batch(p: SpinBosonParams, times: np.ndarray, t: float) -> np.ndarray:
    """System factor G0(s_m, 2t) W G0(s_{m-1}, s_m) W ... W G0(0, s_1)."""
    n, m = times.shape
    U = bare_propagator_batch(p, np.zeros(n), times[:, 0], t)
    for k in range(1, m):
        U = bare_propagator_batch(p, times[:, k - 1], times[:, k], t) @ (W_S @ U)
    U = bare_propagator_batch(p, times[:, -1], np.full(n, 2.0 * t), t) @ (W_S @ U)
    return U


def dyson_integrand(
    p: SpinBosonParams, times, t: float, cap: int = DEFAULT_WORKSPACE_CAP
) -> complex:
    """Full Dyson integrand at one sorted time configuration.

    i^m (-1)^{#{s < t}} tr_s(rho_s U0(0, s, 2t)) L_b(s); the fold count is
    strict, so a time exactly at t counts as on the upper branch.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValidationError("times must be a 1-d sorted sequence")
    return complex(_integrand_batch(p, times[np.newaxis], t, cap)[0])


def _integrand_batch(
    p: SpinBosonParams, times: np.ndarray, t: float, cap: int
) -> np.ndarray:
    n, m = times.shape
    if m == 0:
        return np.full(n, order0_term(p, t))
    if np.any(times[:, 1:] < times[:, :-1]):
        raise ValidationError("time configurations must be sorted ascending")
    sign = 1.0 - 2.0 * (np.count_nonzero(times < t, axis=1) % 2)
    U = _chain_batch(p, times, t)
    trace = np.einsum("ij,nji->n", RHO_S, U)
    lb = hafnian_ie_batch(correlation_matrix(p, times, t), cap=cap)
    return (1j) ** m * sign * trace * lb


def _partition_sizes(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


class _Moments:
    """Streaming sums of complex weights, reduced in a fixed order."""

    def __init__(self):
        self.n = 0
        self.s_re = 0.0
        self.s_im = 0.0
        self.s_re2 = 0.0
        self.s_im2 = 0.0

    def add(self, w: np.ndarray) -> None:
        self.n += w.size
        self.s_re += float(np.sum(w.real))
        self.s_im += float(np.sum(w.imag))
        self.s_re2 += float(np.sum(w.real**2))
        self.s_im2 += float(np.sum(w.imag**2))

    def mean_stderr(self) -> tuple[complex, float, float]:
        n = self.n
        if n == 0:
            return 0.0 + 0.0j, 0.0, 0.0
        mean = complex(self.s_re / n, self.s_im / n)
        if n == 1:
            return mean, 0.0, 0.0
        var_re = max(self.s_re2 - n * mean.real**2, 0.0) / (n - 1)
        var_im = max(self.s_im2 - n * mean.imag**2, 0.0) / (n - 1)
        return mean, math.sqrt(var_re / n), math.sqrt(var_im / n)


#: Sample-batch size that keeps the correlation-matrix temporaries small.
_BATCH = 4096


def _sampled_weights(
    p: SpinBosonParams, t: float, dist: OrderDistribution,
    rng: np.random.Generator, n: int, cap: int, moments: _Moments,
) -> None:
    """Accumulate n importance-sampled weights into ``moments``."""
    orders = dist.sample_orders(rng, n)
    for m in dist.orders:
        count = int(np.count_nonzero(orders == m))
        if count == 0:
            continue
        factor = math.exp(m * math.log(2 * t) - math.lgamma(m + 1)) / dist.mass(m) \
            if t > 0 else 0.0
        for start in range(0, count, _BATCH):
            size = min(_BATCH, count - start)
            times = np.sort(rng.uniform(0.0, 2.0 * t, size=(size, m)), axis=1)
            moments.add(factor * _integrand_batch(p, times, t, cap))


def _fixed_weights(
    p: SpinBosonParams, t: float, dist: OrderDistribution,
    rng: np.random.Generator, n: int, cap: int, per_order: dict[int, _Moments],
) -> None:
    """Convergence-study mode: n samples for every order in the truncation."""
    for m in dist.orders:
        factor = math.exp(m * math.log(2 * t) - math.lgamma(m + 1)) if t > 0 else 0.0
        for start in range(0, n, _BATCH):
            size = min(_BATCH, n - start)
            times = np.sort(rng.uniform(0.0, 2.0 * t, size=(size, m)), axis=1)
            per_order[m].add(factor * _integrand_batch(p, times, t, cap))


def dqmc_observable(
    p: SpinBosonParams,
    t: float,
    n_samples: int,
    sampler: OrderDistribution,
    seed: int | np.random.SeedSequence = 0,
    threads: int = 1,
    cap: int = DEFAULT_WORKSPACE_CAP,
) -> tuple[complex, tuple[float, float]]:
    """Monte Carlo estimate of <sigma_z(t)> with componentwise stderr.

    The sample index space splits into ``threads`` deterministic partitions,
    each with an independent child stream; the reduction order is fixed, so
    results replay bit-identically for a given (seed, threads).
    The deterministic order-0 term is excluded from the variance.
    """
    if n_samples < 1:
        raise ValidationError(f"need at least one sample, got {n_samples}")
    if threads < 1:
        raise ValidationError(f"threads must be positive, got {threads}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = [np.random.default_rng(child) for child in ss.spawn(threads)]
    sizes = _partition_sizes(n_samples, threads)

    if sampler.kind == "fixed":
        per_order = {m: _Moments() for m in sampler.orders}
        for rng, size in zip(streams, sizes):
            if size:
                _fixed_weights(p, t, sampler, rng, size, cap, per_order)
        mean = order0_term(p, t)
        var_re = var_im = 0.0
        for m in sampler.orders:
            part, se_re, se_im = per_order[m].mean_stderr()
            mean += part
            var_re += se_re**2
            var_im += se_im**2
        return mean, (math.sqrt(var_re), math.sqrt(var_im))

    moments = _Moments()
    for rng, size in zip(streams, sizes):
        if size:
            _sampled_weights(p, t, sampler, rng, size, cap, moments)
    mc_mean, se_re, se_im = moments.mean_stderr()
    return order0_term(p, t) + mc_mean, (se_re, se_im)


def make_sampler(
    kind: str,
    p: SpinBosonParams,
    t: float,
    b_const: float = 0.2,
    m_max: int = DEFAULT_M_MAX,
    m_bar: int | None = None,
    cap: int = DEFAULT_WORKSPACE_CAP,
) -> OrderDistribution:
    """Order sampler factory shared by the engine entry points and the CLI."""
    if kind == "poisson":
        return poisson_order_distribution(b_const, t, m_max)
    if kind == "exact":
        return exact_order_distribution(p, t, m_max, cap=cap)
    if kind == "fixed":
        if m_bar is None:
            raise ValidationError("fixed-order mode needs an explicit truncation")
        return fixed_order_distribution(m_bar, t)
    raise ValidationError(f"unknown sampler kind {kind!r}")


def dqmc_series(
    p: SpinBosonParams,
    t_final: float,
    h: float,
    n_samples: int,
    sampler_kind: str = "poisson",
    b_const: float = 0.2,
    m_max: int = DEFAULT_M_MAX,
    m_bar: int | None = None,
    seed: int = 0,
    threads: int = 1,
    cap: int = DEFAULT_WORKSPACE_CAP,
) -> ObservableSeries:
    """<sigma_z(nh)> for n = 1..t_final/h, one independent estimate per point."""
    if h <= 0 or t_final <= 0:
        raise ValidationError("need positive t_final and h")
    n_points = int(round(t_final / h))
    if abs(n_points * h - t_final) > 1e-9 * max(1.0, t_final) or n_points < 1:
        raise ValidationError(f"t_final={t_final} is not a multiple of h={h}")
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_points)
    times, re, im, se_re, se_im = [], [], [], [], []
    for idx in range(n_points):
        t = (idx + 1) * h
        sampler = make_sampler(sampler_kind, p, t, b_const, m_max, m_bar, cap)
        mean, (e_re, e_im) = dqmc_observable(
            p, t, n_samples, sampler, seed=children[idx], threads=threads, cap=cap
        )
        times.append(t)
        re.append(mean.real)
        im.append(mean.imag)
        se_re.append(e_re)
        se_im.append(e_im)
    return ObservableSeries(
        times=np.array(times), mean_re=np.array(re), mean_im=np.array(im),
        stderr_re=np.array(se_re), stderr_im=np.array(se_im),
        n_samples=n_samples, seed=seed,
        provenance={
            "engine": "dqmc", "sampler": sampler_kind, "b_const": b_const,
            "m_max": m_max, "m_bar": m_bar, "h": h, "t_final": t_final,
            "threads": threads, "params": vars(p) | {},
        },
    )
