"""Inchworm solver for the full contour propagator G(s_i, s_f).

G obeys an integro-differential equation in its final time: a deterministic
drift sgn(s_f - t) i H_s G plus a series over even orders m whose integrand
couples the system factor U (a product of already-computed propagators and
couplings) to the linked-diagram sum over the sampled interior times plus
s_f itself.  Rows of the triangular table are marched with Heun's method in
s_f, starting from the latest initial time, so every value a row needs from
other rows is already final.

Fold conventions: the fold t is a grid point; the stored column at the fold
holds the post-jump (upper-branch) limit O_s G(., t^-); the stored row at
the fold holds G(t^+, .); pre-jump limits are recovered by multiplying the
jump factor back on.  The series' branch count #{s <= t} is non-strict and
includes s_f itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dqmc import (
    DEFAULT_M_MAX,
    OrderDistribution,
    _partition_sizes,
    fixed_order_distribution,
    poisson_order_distribution,
)
from .errors import ValidationError
from .hafnian import DEFAULT_WORKSPACE_CAP
from .linkedsum import rounded_box_batch
from .series import ObservableSeries
from .spinboson import (
    IDENTITY,
    O_S,
    RHO_S,
    W_S,
    SpinBosonParams,
    correlation_matrix,
    hamiltonian,
)

#: Distance (in grid units) below which a query snaps onto a grid node.
_SNAP = 1e-9


@dataclass
class PropagatorTable:
    """Triangular grid of 2x2 propagators G(grid[i], grid[j]), i <= j.

    The grid spans [0, 2 t_obs] with the fold at index ``fold``; ``frontier``
    tracks, per row, the highest column already written.
    """

    t_obs: float
    h: float
    grid: np.ndarray
    fold: int
    G: np.ndarray = field(repr=False, default=None)
    frontier: np.ndarray = field(repr=False, default=None)

    @classmethod
    def create(cls, t_obs: float, h: float) -> "PropagatorTable":
        if t_obs < 0 or h <= 0:
            raise ValidationError("need t_obs >= 0 and h > 0")
        steps = int(round(t_obs / h))
        if abs(steps * h - t_obs) > 1e-9 * max(1.0, t_obs):
            raise ValidationError(f"t_obs={t_obs} is not a multiple of h={h}")
        n = 2 * steps + 1
        grid = np.arange(n) * h
        table = cls(t_obs=t_obs, h=h, grid=grid, fold=steps)
        table.G = np.full((n, n, 2, 2), np.nan, dtype=complex)
        table.frontier = np.arange(n)
        for i in range(n):
            table.G[i, i] = IDENTITY
        return table

    @property
    def t_fold(self) -> float:
        """The fold time as the grid itself represents it."""
        return float(self.grid[self.fold])

    # -- interpolation -----------------------------------------------------

    def _node(self, rows: np.ndarray, cols: np.ndarray,
              row_pre: np.ndarray, col_pre: np.ndarray) -> np.ndarray:
        """Stored node values mapped to the requested branch side.

        row_pre / col_pre mark queries needing the pre-jump limit when the
        node sits exactly on the fold row / column.
        """
        vals = self.G[rows, cols]
        fix_col = col_pre & (cols == self.fold)
        if np.any(fix_col):
            vals = np.where(fix_col[..., None, None], O_S @ vals, vals)
        fix_row = row_pre & (rows == self.fold)
        if np.any(fix_row):
            vals = np.where(fix_row[..., None, None], vals @ O_S, vals)
        return vals

    @staticmethod
    def _locate(x: np.ndarray, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Cell index and fractional offset, snapped onto nearby grid nodes."""
        ratio = x / h
        nearest = np.rint(ratio).astype(int)
        on_node = np.abs(ratio - nearest) <= _SNAP
        cell = np.where(on_node, nearest, np.floor(ratio).astype(int))
        cell = np.clip(cell, 0, n - 1)
        frac = np.where(on_node, 0.0, ratio - cell)
        return cell, frac

    def interp(self, a: np.ndarray, b: np.ndarray, *,
               fold_col_lower: bool = False) -> np.ndarray:
        """G(a, b) for a <= b by bilinear interpolation on the triangle.

        Interpolation never mixes branches: node values on the fold row or
        column are first mapped onto the side the query lies on, and cells
        touching the diagonal interpolate against the boundary G(x, x) = Id.
        ``fold_col_lower`` selects the pre-jump side for queries with b
        exactly at the fold.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(b - a < -1e-12):
            raise ValidationError("interpolation requires a <= b")
        h, n = self.h, len(self.grid)
        r, u = self._locate(a, h, n)
        c, v = self._locate(b, h, n)
        r_hi = np.where(u > 0.0, r + 1, r)
        c_hi = np.where(v > 0.0, c + 1, c)

        t_fold = self.t_fold
        row_pre = a < t_fold
        col_pre = (b < t_fold) | ((b == t_fold) & fold_col_lower)

        diag = r == c
        off = ~diag
        out = np.empty(a.shape + (2, 2), dtype=complex)
        if np.any(off):
            ro, rho, co, cho = r[off], r_hi[off], c[off], c_hi[off]
            uo = u[off, None, None]
            vo = v[off, None, None]
            rp, cp = row_pre[off], col_pre[off]
            g00 = self._node(ro, co, rp, cp)
            g01 = self._node(ro, cho, rp, cp)
            g10 = self._node(rho, co, rp, cp)
            g11 = self._node(rho, cho, rp, cp)
            out[off] = ((1 - uo) * (1 - vo) * g00 + (1 - uo) * vo * g01
                        + uo * (1 - vo) * g10 + uo * vo * g11)
        if np.any(diag):
            # Barycentric on the triangle (r,r), (r,r+1), (r+1,r+1): the two
            # diagonal vertices are the identity.
            rd = r[diag]
            w = (v[diag] - u[diag])[:, None, None]
            edge = self._node(rd, np.minimum(rd + 1, n - 1),
                              row_pre[diag], col_pre[diag])
            out[diag] = (1.0 - w) * IDENTITY + w * np.where(w > 0.0, edge, IDENTITY)
        return out

    def value(self, a: float, b: float, *, fold_col_lower: bool = False) -> np.ndarray:
        """Single-point interp."""
        return self.interp(np.asarray([float(a)]), np.asarray([float(b)]),
                           fold_col_lower=fold_col_lower)[0]


def full_propagator_functional(table: PropagatorTable, points) -> np.ndarray:
    """U(s_i, s_1, ..., s_{m-1}, s_f): alternating G factors and couplings.

    points is the full sorted sequence (s_i, s_1, ..., s_{m-1}, s_f); the
    product is assembled right to left: G(s_{m-1}, s_f) W ... W G(s_i, s_1).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 2:
        raise ValidationError("need at least the two endpoint times")
    if np.any(np.diff(pts) < 0):
        raise ValidationError("times must be sorted ascending")
    U = table.value(pts[0], pts[1])
    for k in range(1, pts.size - 1):
        U = table.value(pts[k], pts[k + 1]) @ (W_S @ U)
    return U


def _series_term(
    table: PropagatorTable,
    p: SpinBosonParams,
    s_i: float,
    s_f: float,
    order_dist: OrderDistribution,
    rng: np.random.Generator,
    n_samples: int,
    fold_col_lower: bool,
    cap: int,
    corr_fn=None,
) -> np.ndarray:
    """Monte Carlo average of the linked series at fixed (s_i, s_f)."""
    t_fold = table.t_fold
    length = s_f - s_i
    corr = corr_fn or (lambda times: correlation_matrix(p, times, t_fold))

    # s_f enters the branch count like the G values do: below the fold it
    # counts, at the fold it counts only on the pre-jump side.  (Counting it
    # on the post-jump side too would negate the series against its
    # upper-branch limit and drop the marching to first order.)
    sf_in_count = s_f < t_fold or (s_f == t_fold and fold_col_lower)

    def group_value(m: int, count: int) -> np.ndarray:
        interior = np.sort(rng.uniform(s_i, s_f, size=(count, m - 1)), axis=1)
        times = np.concatenate([interior, np.full((count, 1), s_f)], axis=1)
        linked = rounded_box_batch(corr(times), cap=cap)
        branch_count = np.count_nonzero(interior <= t_fold, axis=1) + sf_in_count
        sign = 1.0 - 2.0 * (branch_count % 2)
        U = table.interp(np.full(count, s_i), interior[:, 0])
        for k in range(m - 2):
            U = table.interp(interior[:, k], interior[:, k + 1]) @ (W_S @ U)
        U = table.interp(interior[:, -1], np.full(count, s_f),
                         fold_col_lower=fold_col_lower) @ (W_S @ U)
        weight = (1j) ** m * sign * linked
        return np.sum((W_S @ U) * weight[:, None, None], axis=0)

    total = np.zeros((2, 2), dtype=complex)
    if order_dist.kind == "fixed":
        for m in order_dist.orders:
            factor = length ** (m - 1) / math.factorial(m - 1)
            total += factor * group_value(m, n_samples) / n_samples
        return total

    orders = order_dist.sample_orders(rng, n_samples)
    for m in order_dist.orders:
        count = int(np.count_nonzero(orders == m))
        if count == 0:
            continue
        factor = length ** (m - 1) / math.factorial(m - 1) / order_dist.mass(m)
        total += factor * group_value(m, count)
    return total / n_samples


def inchworm_rhs(
    table: PropagatorTable,
    s_i: float,
    s_f: float,
    p: SpinBosonParams,
    n_samples: int,
    rng: np.random.Generator,
    order_dist: OrderDistribution,
    G_cur: np.ndarray,
    *,
    leg_sign: float,
    fold_col_lower: bool = False,
    cap: int = DEFAULT_WORKSPACE_CAP,
    corr_fn=None,
) -> np.ndarray:
    """d G(s_i, s_f) / d s_f: drift plus the sampled linked-diagram series.

    ``leg_sign`` is sgn(s_f - t) for the branch the current step lives on,
    +1 at the fold itself (treated as the start of the upper branch).  At
    vanishing coupling the series is identically zero and only the drift
    remains.
    """
    drift = leg_sign * 1j * (hamiltonian(p) @ G_cur)
    if n_samples <= 0 or s_f <= s_i or p.xi == 0.0:
        return drift
    return drift + _series_term(table, p, s_i, s_f, order_dist, rng,
                                n_samples, fold_col_lower, cap, corr_fn)


def _rhs_series_partitioned(table, p, s_i, s_f, order_dist, eval_ss, n_rhs,
                            fold_col_lower, threads, cap):
    """Series estimate with deterministic per-partition streams.

    The sample space splits into ``threads`` fixed partitions, each drawing
    from its own child stream; partial sums reduce in partition order, so a
    rerun with the same (seed, threads) replays bit-identically.
    """
    series = np.zeros((2, 2), dtype=complex)
    sizes = _partition_sizes(n_rhs, threads)
    for child, size in zip(eval_ss.spawn(threads), sizes):
        if size:
            series += size * _series_term(
                table, p, s_i, s_f, order_dist, np.random.default_rng(child),
                size, fold_col_lower, cap, None)
    return series / n_rhs


def solve_inchworm(
    p: SpinBosonParams,
    t_obs: float,
    h: float,
    n_rhs: int,
    seed: int | np.random.SeedSequence = 0,
    b_const: float = 0.2,
    m_max: int = DEFAULT_M_MAX,
    m_bar: int | None = None,
    threads: int = 1,
    cap: int = DEFAULT_WORKSPACE_CAP,
) -> tuple[PropagatorTable, complex]:
    """March the propagator table over [0, 2 t_obs]; return it and <O(t)>.

    Rows are processed from the latest initial time downwards; each row
    advances in s_f with Heun's predictor-corrector, two independently
    sampled right-hand sides per step.  The step that reaches the fold
    evaluates its corrector on the pre-jump side, then stores the post-jump
    value O_s G(., t^-).
    """
    if 2 * m_max > cap:
        raise ValidationError(
            f"m_max={m_max} needs order {2 * m_max}, beyond the workspace cap {cap}")
    table = PropagatorTable.create(t_obs, h)
    n = len(table.grid)
    if m_bar is not None:
        order_dist = fixed_order_distribution(m_bar, max(t_obs, h))
    else:
        order_dist = poisson_order_distribution(b_const, max(t_obs, h), m_max)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    H = hamiltonian(p)
    sample = p.xi != 0.0 and n_rhs > 0

    for i in range(n - 1, -1, -1):
        s_i = float(table.grid[i])
        for j in range(i, n - 1):
            lower = j + 1 <= table.fold
            sign = -1.0 if lower else 1.0
            at_fold = lower and j + 1 == table.fold
            s0, s1 = float(table.grid[j]), float(table.grid[j + 1])

            F1 = sign * 1j * (H @ table.G[i, j])
            if sample and j > i:
                F1 = F1 + _rhs_series_partitioned(
                    table, p, s_i, s0, order_dist, ss.spawn(1)[0], n_rhs,
                    False, threads, cap)
            pred = table.G[i, j] + h * F1
            # The fold column always stores the post-jump limit, including
            # the provisional predictor the corrector interpolates against.
            table.G[i, j + 1] = (O_S @ pred) if at_fold else pred
            table.frontier[i] = j + 1

            F2 = sign * 1j * (H @ pred)
            if sample:
                F2 = F2 + _rhs_series_partitioned(
                    table, p, s_i, s1, order_dist, ss.spawn(1)[0], n_rhs,
                    at_fold, threads, cap)
            corrected = table.G[i, j] + 0.5 * h * (F1 + F2)
            table.G[i, j + 1] = (O_S @ corrected) if at_fold else corrected

    observable = complex(np.trace(RHO_S @ table.G[0, n - 1]))
    return table, observable


def inchworm_series(
    p: SpinBosonParams,
    t_final: float,
    h: float,
    n_rhs: int,
    replicas: int = 4,
    seed: int = 0,
    b_const: float = 0.2,
    m_max: int = DEFAULT_M_MAX,
    m_bar: int | None = None,
    threads: int = 1,
    cap: int = DEFAULT_WORKSPACE_CAP,
) -> ObservableSeries:
    """<sigma_z(nh)> for n = 1..t_final/h, each from its own contour solve.

    The fold position depends on the observation time, so every grid time
    runs its own solves; ``replicas`` independent solves per time give the
    mean and its standard error.
    """
    if h <= 0 or t_final <= 0:
        raise ValidationError("need positive t_final and h")
    if replicas < 2:
        raise ValidationError(f"need at least two replicas for a stderr, got {replicas}")
    n_points = int(round(t_final / h))
    if abs(n_points * h - t_final) > 1e-9 * max(1.0, t_final) or n_points < 1:
        raise ValidationError(f"t_final={t_final} is not a multiple of h={h}")
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_points * replicas)
    times, re, im, se_re, se_im = [], [], [], [], []
    for idx in range(n_points):
        t = (idx + 1) * h
        values = []
        for rep in range(replicas):
            _, obs = solve_inchworm(
                p, t, h, n_rhs, seed=children[idx * replicas + rep],
                b_const=b_const, m_max=m_max, m_bar=m_bar, threads=threads, cap=cap)
            values.append(obs)
        values = np.array(values)
        mean = values.mean()
        times.append(t)
        re.append(mean.real)
        im.append(mean.imag)
        se_re.append(float(values.real.std(ddof=1) / math.sqrt(replicas)))
        se_im.append(float(values.imag.std(ddof=1) / math.sqrt(replicas)))
    return ObservableSeries(
        times=np.array(times), mean_re=np.array(re), mean_im=np.array(im),
        stderr_re=np.array(se_re), stderr_im=np.array(se_im),
        n_samples=n_rhs, seed=seed,
        provenance={
            "engine": "inchworm", "b_const": b_const, "m_max": m_max,
            "m_bar": m_bar, "h": h, "t_final": t_final, "threads": threads,
            "replicas": replicas, "params": vars(p) | {},
        },
    )
