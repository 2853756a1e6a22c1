"""Spin-boson model: parameters, discretized Ohmic bath, bare propagators.

The two-level system lives on a folded time axis [0, 2t] with the observable
inserted at the fold t; contour positions below t belong to the forward
branch, positions above to the backward branch.  All propagators are exact
2x2 Pauli rotations, and the bath enters only through the two-point
correlation of a finite set of harmonic modes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np

from .errors import ValidationError

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

#: System density matrix: spin up.
RHO_S = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)

#: Coupling operator W_s and observable O_s are both sigma_z.
W_S = PAULI_Z
O_S = PAULI_Z


@dataclass(frozen=True)
class SpinBosonParams:
    """Physical parameters of the spin-boson model.

    xi:        Kondo parameter (dimensionless coupling strength)
    beta:      inverse temperature
    omega_c:   primary frequency of the Ohmic density
    omega_max: maximum mode frequency
    epsilon:   energy difference of the two-level system
    delta:     spin-flip frequency
    L:         number of discretized bath modes
    """

    xi: float
    beta: float
    omega_c: float
    omega_max: float
    epsilon: float
    delta: float
    L: int

    def __post_init__(self):
        if self.xi < 0:
            raise ValidationError(f"xi must be nonnegative, got {self.xi}")
        for name in ("beta", "omega_c", "omega_max"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.L < 1 or self.L != int(self.L):
            raise ValidationError(f"L must be a positive integer, got {self.L}")


CASE1 = SpinBosonParams(xi=0.4, beta=5.0, omega_c=2.5, omega_max=4.0,
                        epsilon=1.0, delta=1.0, L=400)
CASE2 = SpinBosonParams(xi=0.1, beta=0.2, omega_c=1.0, omega_max=4.0,
                        epsilon=1.0, delta=1.0, L=400)


def load_params(path) -> SpinBosonParams:
    """Read parameters from a flat ``key = value`` text file.

    Keys are exactly the field names (xi, beta, omega_c, omega_max, epsilon,
    delta, L); blank lines and '#' comments are ignored.
    """
    values: dict[str, float] = {}
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise ValidationError(f"cannot read params file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        try:
            values[key] = float(val.strip())
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric value {val.strip()!r}")
    names = {f.name for f in fields(SpinBosonParams)}
    unknown = set(values) - names
    if unknown:
        raise ValidationError(f"{path}: unknown parameter(s) {sorted(unknown)}")
    missing = names - set(values)
    if missing:
        raise ValidationError(f"{path}: missing parameter(s) {sorted(missing)}")
    values["L"] = int(values["L"])
    return SpinBosonParams(**values)


def coth(x: np.ndarray) -> np.ndarray:
    """coth(x) for x > 0, stable for both tiny and large arguments."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    out = 1.0 + 2.0 / np.expm1(2.0 * safe)
    # Laurent series around 0; with |x| < 1e-6 the x^3 term is below 1e-19.
    series = 1.0 / np.where(small, x, 1.0) + x / 3.0
    return np.where(small, series, out)


@lru_cache(maxsize=16)
def mode_discretization(p: SpinBosonParams) -> tuple[np.ndarray, np.ndarray]:
    """Coupling intensities c_l and frequencies omega_l, l = 1..L.

    omega_l = -omega_c * ln(1 - (l/L) (1 - e^(-omega_max/omega_c)))
    c_l     = omega_l * sqrt(xi omega_c / L * (1 - e^(-omega_max/omega_c)))

    so that omega_L = omega_max exactly.  Arrays are cached per parameter
    set and must not be mutated by callers.
    """
    l = np.arange(1, p.L + 1, dtype=float)
    span = -np.expm1(-p.omega_max / p.omega_c)  # 1 - e^(-omega_max/omega_c)
    omega = -p.omega_c * np.log1p(-(l / p.L) * span)
    c = omega * np.sqrt(p.xi * p.omega_c / p.L * span)
    omega.setflags(write=False)
    c.setflags(write=False)
    return c, omega


@lru_cache(maxsize=16)
def _mode_weights(p: SpinBosonParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode prefactors of the correlation: (cos weight, sin weight)."""
    c, omega = mode_discretization(p)
    base = c**2 / (2.0 * omega)
    return base * coth(p.beta * omega / 2.0), base


def contour_delta_tau(tau1: float, tau2: float, t_obs: float) -> float:
    """Keldysh-contour time difference for tau1 <= tau2, fold at t_obs.

    tau2 - tau1 when both are below the fold, tau1 - tau2 when both are at
    or above it (nonpositive on purpose), 2 t - tau1 - tau2 across it.
    """
    if tau1 > tau2:
        raise ValidationError(f"contour times must be ordered, got {tau1} > {tau2}")
    if tau2 < t_obs:
        return tau2 - tau1
    if tau1 >= t_obs:
        return tau1 - tau2
    return 2.0 * t_obs - tau1 - tau2


def _delta_tau_array(tau1: np.ndarray, tau2: np.ndarray, t_obs: float) -> np.ndarray:
    below = tau2 < t_obs
    above = tau1 >= t_obs
    return np.where(below, tau2 - tau1, np.where(above, tau1 - tau2, 2.0 * t_obs - tau1 - tau2))


def bath_correlation(p: SpinBosonParams, tau1: float, tau2: float, t_obs: float) -> complex:
    """Two-point bath correlation B(tau1, tau2) on the contour, tau1 <= tau2.

    B = sum_l c_l^2/(2 omega_l) [coth(beta omega_l / 2) cos(omega_l dtau)
                                 - i sin(omega_l dtau)].
    """
    dtau = contour_delta_tau(tau1, tau2, t_obs)
    wc, ws = _mode_weights(p)
    _, omega = mode_discretization(p)
    phase = omega * dtau
    return complex(np.dot(wc, np.cos(phase)) - 1j * np.dot(ws, np.sin(phase)))


def correlation_matrix(p: SpinBosonParams, times: np.ndarray, t_obs: float) -> np.ndarray:
    """Symmetrized correlation matrix over sorted contour times.

    ``times`` has shape (..., m) with each row sorted ascending; the result
    has shape (..., m, m), is symmetric and has a zero diagonal.
    """
    times = np.asarray(times, dtype=float)
    m = times.shape[-1]
    wc, ws = _mode_weights(p)
    _, omega = mode_discretization(p)

    def block(rows: np.ndarray) -> np.ndarray:
        t1 = rows[..., :, np.newaxis]
        t2 = rows[..., np.newaxis, :]
        dtau = _delta_tau_array(np.minimum(t1, t2), np.maximum(t1, t2), t_obs)
        phase = dtau[..., np.newaxis] * omega
        return np.cos(phase) @ wc - 1j * (np.sin(phase) @ ws)

    if times.ndim == 1:
        B = block(times)
    else:
        flat = times.reshape(-1, m)
        # Keep the (chunk, m, m, L) phase tensor around 64 MB.
        chunk = max(1, 8_000_000 // max(m * m * len(omega), 1))
        pieces = [block(flat[i : i + chunk]) for i in range(0, flat.shape[0], chunk)]
        B = np.concatenate(pieces, axis=0).reshape(times.shape[:-1] + (m, m))
    idx = np.arange(m)
    B[..., idx, idx] = 0.0
    return B


def hamiltonian(p: SpinBosonParams) -> np.ndarray:
    """H_s = epsilon sigma_z + delta sigma_x."""
    return p.epsilon * PAULI_Z + p.delta * PAULI_X


def _rotation(p: SpinBosonParams, tau) -> np.ndarray:
    """exp(-i tau H_s) in closed form, batched over tau of any shape.

    H_s = w (n . sigma) with w = sqrt(eps^2 + delta^2) gives
    exp(-i tau H_s) = cos(w tau) I - i sin(w tau) (n . sigma).
    """
    tau = np.asarray(tau, dtype=float)
    w = float(np.hypot(p.epsilon, p.delta))
    out = np.zeros(tau.shape + (2, 2), dtype=complex)
    if w == 0.0:
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out
    cos = np.cos(w * tau)
    sin = np.sin(w * tau) / w
    out[..., 0, 0] = cos - 1j * sin * p.epsilon
    out[..., 1, 1] = cos + 1j * sin * p.epsilon
    out[..., 0, 1] = -1j * sin * p.delta
    out[..., 1, 0] = -1j * sin * p.delta
    return out


def bare_system_propagator(
    p: SpinBosonParams, s_i: float, s_f: float, t_obs: float
) -> np.ndarray:
    """Bare contour propagator G_s0(s_i, s_f) for s_i <= s_f.

    exp(-i (s_f - s_i) H_s) when both points sit below the fold,
    exp(-i (s_i - s_f) H_s) when both sit at or above it, and
    exp(-i (t - s_f) H_s) O_s exp(-i (t - s_i) H_s) across it.
    """
    if s_i > s_f:
        raise ValidationError(f"contour times must be ordered, got {s_i} > {s_f}")
    return bare_propagator_batch(p, np.asarray(s_i, dtype=float), np.asarray(s_f, dtype=float), t_obs)


def bare_propagator_batch(p: SpinBosonParams, a, b, t_obs: float) -> np.ndarray:
    """bare_system_propagator broadcast over arrays of ordered times a <= b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    below = b < t_obs
    above = a >= t_obs
    across = ~(below | above)
    same_leg = np.where(below, b - a, a - b)
    out = _rotation(p, np.where(across, 0.0, same_leg))
    if np.any(across):
        left = _rotation(p, t_obs - b)
        right = _rotation(p, t_obs - a)
        crossed = left @ O_S @ right
        out = np.where(across[..., np.newaxis, np.newaxis], crossed, out)
    return out
