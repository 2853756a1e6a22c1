import math

import numpy as np
import pytest

from diagsum.errors import ValidationError
from diagsum.spinboson import (
    CASE1,
    CASE2,
    IDENTITY,
    PAULI_X,
    PAULI_Z,
    SpinBosonParams,
    bare_propagator_batch,
    bare_system_propagator,
    bath_correlation,
    contour_delta_tau,
    correlation_matrix,
    coth,
    hamiltonian,
    load_params,
    mode_discretization,
)

FREE = SpinBosonParams(xi=0.0, beta=5.0, omega_c=2.5, omega_max=4.0,
                       epsilon=1.0, delta=1.0, L=400)


class TestParams:
    def test_case_constants(self):
        assert CASE1.xi == 0.4 and CASE1.beta == 5.0 and CASE1.omega_c == 2.5
        assert CASE1.omega_max == 4.0 and CASE1.L == 400
        assert CASE2.xi == 0.1 and CASE2.beta == 0.2 and CASE2.omega_c == 1.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            SpinBosonParams(xi=-0.1, beta=1, omega_c=1, omega_max=1, epsilon=0, delta=0, L=1)
        with pytest.raises(ValidationError):
            SpinBosonParams(xi=0.1, beta=0, omega_c=1, omega_max=1, epsilon=0, delta=0, L=1)
        with pytest.raises(ValidationError):
            SpinBosonParams(xi=0.1, beta=1, omega_c=1, omega_max=1, epsilon=0, delta=0, L=0)

    def test_load_params(self, tmp_path):
        cfg = tmp_path / "case.cfg"
        cfg.write_text(
            "# spin-boson configuration\n"
            "xi = 0.4\nbeta = 5\nomega_c = 2.5\nomega_max = 4\n"
            "epsilon = 1\ndelta = 1\nL = 400\n")
        assert load_params(cfg) == CASE1

    def test_load_params_missing_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("xi = 0.4\n")
        with pytest.raises(ValidationError, match="missing"):
            load_params(cfg)

    def test_load_params_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("xi = 0.4\nbeta = 5\nomega_c = 2.5\nomega_max = 4\n"
                       "epsilon = 1\ndelta = 1\nL = 400\nbogus = 3\n")
        with pytest.raises(ValidationError, match="unknown"):
            load_params(cfg)


class TestModes:
    def test_endpoint_exact(self):
        _, omega = mode_discretization(CASE1)
        assert omega[-1] == pytest.approx(CASE1.omega_max, abs=1e-12)

    def test_monotone_positive(self):
        _, omega = mode_discretization(CASE2)
        assert np.all(omega > 0)
        assert np.all(np.diff(omega) > 0)

    def test_single_mode_by_hand(self):
        p = SpinBosonParams(xi=0.4, beta=5.0, omega_c=2.5, omega_max=4.0,
                            epsilon=1.0, delta=1.0, L=1)
        c, omega = mode_discretization(p)
        span = 1.0 - math.exp(-p.omega_max / p.omega_c)
        w1 = -p.omega_c * math.log(1.0 - span)
        assert omega[0] == pytest.approx(w1)
        assert c[0] == pytest.approx(w1 * math.sqrt(p.xi * p.omega_c * span))

    def test_zero_coupling(self):
        c, _ = mode_discretization(FREE)
        assert np.all(c == 0)


class TestContourDeltaTau:
    def test_three_cases(self):
        assert contour_delta_tau(0.2, 0.5, 1.0) == pytest.approx(0.3)
        assert contour_delta_tau(1.2, 1.5, 1.0) == pytest.approx(-0.3)
        assert contour_delta_tau(0.8, 1.5, 1.0) == pytest.approx(-0.3)

    def test_ordering_error(self):
        with pytest.raises(ValidationError):
            contour_delta_tau(0.5, 0.2, 1.0)


class TestBathCorrelation:
    def test_equal_times_real_positive(self):
        c, omega = mode_discretization(CASE1)
        expected = np.sum(c**2 / (2 * omega) * coth(CASE1.beta * omega / 2))
        val = bath_correlation(CASE1, 0.3, 0.3, 1.0)
        assert val.imag == 0.0
        assert val.real == pytest.approx(expected)
        assert val.real > 0

    def test_decay(self):
        # Case 1 correlation falls well below a fifth of its peak by dtau = 5
        b0 = abs(bath_correlation(CASE1, 0.0, 0.0, 6.0))
        b5 = abs(bath_correlation(CASE1, 0.0, 5.0, 6.0))
        assert b5 < b0 / 5

    def test_zero_coupling(self):
        assert bath_correlation(FREE, 0.1, 0.9, 1.0) == 0.0

    def test_single_branch_stationarity(self):
        early = bath_correlation(CASE1, 0.1, 0.4, 1.0)
        late = bath_correlation(CASE1, 0.5, 0.8, 1.0)
        assert early == pytest.approx(late)

    def test_matrix_invariants(self):
        rng = np.random.default_rng(50)
        times = np.sort(rng.uniform(0, 2.0, 8))
        B = correlation_matrix(CASE1, times, 1.0)
        assert np.allclose(B, B.T)
        assert np.all(B.diagonal() == 0)
        for i in range(8):
            for j in range(i + 1, 8):
                assert B[i, j] == pytest.approx(
                    bath_correlation(CASE1, times[i], times[j], 1.0))

    def test_matrix_batch(self):
        rng = np.random.default_rng(51)
        times = np.sort(rng.uniform(0, 2.0, (7, 6)), axis=1)
        B = correlation_matrix(CASE1, times, 1.0)
        assert B.shape == (7, 6, 6)
        single = correlation_matrix(CASE1, times[3], 1.0)
        assert np.allclose(B[3], single)


class TestCoth:
    def test_series_branch_continuity(self):
        # both branches evaluated at the same abscissa agree to near round-off
        x = 1e-6
        series = 1.0 / x + x / 3.0
        direct = 1.0 + 2.0 / math.expm1(2.0 * x)
        assert coth(np.array([x]))[0] == pytest.approx(series, rel=1e-12)
        assert series == pytest.approx(direct, rel=1e-9)

    def test_large_argument(self):
        assert coth(np.array([50.0]))[0] == pytest.approx(1.0)


class TestBarePropagator:
    def test_identity_at_coincidence(self):
        assert np.allclose(bare_system_propagator(CASE1, 0.4, 0.4, 1.0), IDENTITY)

    def test_hamiltonian(self):
        H = hamiltonian(CASE1)
        assert np.allclose(H, PAULI_Z + PAULI_X)

    def test_semigroup_on_branch(self):
        a, b, c = 0.1, 0.35, 0.65
        G_ab = bare_system_propagator(CASE1, a, b, 1.0)
        G_bc = bare_system_propagator(CASE1, b, c, 1.0)
        G_ac = bare_system_propagator(CASE1, a, c, 1.0)
        assert np.allclose(G_bc @ G_ab, G_ac, atol=1e-12)

    def test_unit_determinant_on_branch(self):
        for (a, b) in ((0.0, 0.7), (1.2, 1.9)):
            G = bare_system_propagator(CASE1, a, b, 1.0)
            assert abs(abs(np.linalg.det(G)) - 1.0) < 1e-12

    def test_across_fold_factorization(self):
        t, delta = 1.0, 0.2
        G = bare_system_propagator(CASE1, t - delta, t + delta, t)
        w = math.hypot(CASE1.epsilon, CASE1.delta)
        H = hamiltonian(CASE1)
        rot = lambda tau: (math.cos(w * tau) * IDENTITY
                           - 1j * math.sin(w * tau) / w * H)
        expected = rot(-delta) @ PAULI_Z @ rot(delta)
        assert np.allclose(G, expected, atol=1e-12)

    def test_matches_scipy_expm(self):
        from scipy.linalg import expm
        H = hamiltonian(CASE1)
        tau = 0.37
        assert np.allclose(bare_system_propagator(CASE1, 0.0, tau, 1.0),
                           expm(-1j * tau * H), atol=1e-12)

    def test_batch(self):
        a = np.array([0.1, 1.3, 0.6])
        b = np.array([0.5, 1.9, 1.4])
        batch = bare_propagator_batch(CASE1, a, b, 1.0)
        for k in range(3):
            assert np.allclose(batch[k],
                               bare_system_propagator(CASE1, a[k], b[k], 1.0))

    def test_ordering_error(self):
        with pytest.raises(ValidationError):
            bare_system_propagator(CASE1, 0.9, 0.1, 1.0)
