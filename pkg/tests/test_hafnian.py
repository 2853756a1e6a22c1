import math

import numpy as np
import pytest

from diagsum.errors import CapacityError, ValidationError
from diagsum.hafnian import (
    exclusion_tables,
    hafnian_ie,
    hafnian_ie_batch,
    rectangular_box_ie,
    rectangular_box_ie_batch,
    subset_iteration_order,
    subset_parent,
    zero_adjacent,
)
from diagsum.pairings import direct_influence, direct_rectangular_sum

from test_pairings import random_corr


def reference_hafnian(B):
    """Scalar per-subset evaluation of the inclusion-exclusion formula.

    Walks every subset after its parent, doing one subtraction per Q and R
    entry, without any of the production code's array slicing.
    """
    m = B.shape[0]
    if m == 0:
        return 1.0 + 0.0j
    Q = np.zeros(1 << m, dtype=complex)
    R = np.zeros(1 << m, dtype=complex)
    Q[0] = B.sum() / 2.0
    total = Q[0] ** (m // 2)
    for mask in range(1, 1 << m):
        i = mask.bit_length() - 1
        rest = subset_parent(mask)
        key_i = 1 << i
        if rest == 0:
            R[key_i] = B[i].sum()
            Q[mask] = Q[0] - R[key_i]
        else:
            kn = rest.bit_length() - 1
            R[key_i | rest] = R[key_i | subset_parent(rest)] - B[i, kn]
            Q[mask] = Q[rest] - R[key_i | rest]
        total += (-1) ** bin(mask).count("1") * Q[mask] ** (m // 2)
    return total / math.factorial(m // 2)


class TestHafnianIE:
    def test_m0(self):
        assert hafnian_ie(np.zeros((0, 0))) == 1.0

    def test_m2(self):
        B = np.array([[0, 3 + 4j], [3 + 4j, 0]])
        assert hafnian_ie(B) == pytest.approx(3 + 4j)

    def test_m4_expansion(self):
        rng = np.random.default_rng(1)
        B = random_corr(rng, 4)
        expected = B[0, 1] * B[2, 3] + B[0, 2] * B[1, 3] + B[0, 3] * B[1, 2]
        assert hafnian_ie(B) == pytest.approx(expected)

    @pytest.mark.parametrize("m", [2, 4, 6, 8, 10, 12])
    def test_oracle_equivalence(self, m):
        rng = np.random.default_rng(m)
        for _ in range(20):
            B = random_corr(rng, m)
            direct = direct_influence(B)
            ie = hafnian_ie(B)
            assert abs(ie - direct) / (abs(direct) + 1e-30) <= 1e-10

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        B = random_corr(rng, 8)
        ref = hafnian_ie(B)
        for _ in range(5):
            perm = rng.permutation(8)
            assert hafnian_ie(B[np.ix_(perm, perm)]) == pytest.approx(ref)

    def test_scaling(self):
        rng = np.random.default_rng(3)
        B = random_corr(rng, 6)
        c = 1.7 - 0.4j
        assert hafnian_ie(c * B) == pytest.approx(c**3 * hafnian_ie(B))

    def test_block_diagonal(self):
        rng = np.random.default_rng(4)
        B1, B2 = random_corr(rng, 4), random_corr(rng, 6)
        B = np.zeros((10, 10), dtype=complex)
        B[:4, :4] = B1
        B[4:, 4:] = B2
        assert hafnian_ie(B) == pytest.approx(hafnian_ie(B1) * hafnian_ie(B2))

    def test_zero_row_kills(self):
        rng = np.random.default_rng(5)
        B = random_corr(rng, 6)
        B[2, :] = 0.0
        B[:, 2] = 0.0
        assert hafnian_ie(B) == pytest.approx(0.0, abs=1e-14)

    def test_reference_parity(self):
        rng = np.random.default_rng(6)
        for m in (2, 4, 6, 8, 10):
            B = random_corr(rng, m)
            ref = reference_hafnian(B)
            assert abs(hafnian_ie(B) - ref) / abs(ref) <= 1e-12

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(7)
        stack = np.array([random_corr(rng, 6) for _ in range(9)])
        batch = hafnian_ie_batch(stack)
        for k in range(9):
            assert batch[k] == pytest.approx(hafnian_ie(stack[k]))

    def test_odd_order_rejected(self):
        with pytest.raises(ValidationError):
            hafnian_ie(np.zeros((3, 3)))

    def test_cap_names_memory(self):
        with pytest.raises(CapacityError, match="2\\^33"):
            hafnian_ie(np.zeros((32, 32)))
        with pytest.raises(CapacityError):
            hafnian_ie(np.zeros((12, 12)), cap=10)

    def test_workspace_invariants(self):
        rng = np.random.default_rng(8)
        m = 6
        B = random_corr(rng, m)
        Q, sign = exclusion_tables(B)
        assert Q[0] == pytest.approx(B.sum() / 2.0)
        # Q(S + {i}) = Q(S) - R_S^(i) for every S and i not in S, with R
        # rebuilt independently from its definition
        for mask in range(1 << m):
            assert sign[mask] == (-1) ** bin(mask).count("1")
            for i in range(m):
                if mask & (1 << i):
                    continue
                members = [k for k in range(m) if mask & (1 << k)]
                r_def = B[i].sum() - sum(B[i, k] for k in members)
                assert Q[mask | (1 << i)] == pytest.approx(Q[mask] - r_def)


class TestSubsetOrder:
    def test_m2_sequence(self):
        assert list(subset_iteration_order(2)) == [0, 1, 2, 3]

    @pytest.mark.parametrize("m", [3, 4])
    def test_parent_before_child(self, m):
        seen = set()
        count = 0
        for mask in subset_iteration_order(m):
            if mask:
                assert subset_parent(mask) in seen
            seen.add(mask)
            count += 1
        assert count == 2**m

    def test_parent_of_empty_rejected(self):
        with pytest.raises(ValidationError):
            subset_parent(0)


class TestRectangularBox:
    def test_zeroing(self):
        rng = np.random.default_rng(9)
        B = random_corr(rng, 6)
        Z = zero_adjacent(B)
        idx = np.arange(5)
        assert np.all(Z[idx, idx + 1] == 0)
        assert np.all(Z[idx + 1, idx] == 0)
        assert Z[0, 2] == B[0, 2]

    def test_m2_zero(self):
        B = np.array([[0, 1.0], [1.0, 0]], dtype=complex)
        assert rectangular_box_ie(B) == 0.0

    def test_m4(self):
        rng = np.random.default_rng(10)
        B = random_corr(rng, 4)
        assert rectangular_box_ie(B) == pytest.approx(B[0, 2] * B[1, 3])

    @pytest.mark.parametrize("m", [4, 6, 8, 10])
    def test_oracle_equivalence(self, m):
        rng = np.random.default_rng(20 + m)
        for _ in range(10):
            B = random_corr(rng, m)
            direct = direct_rectangular_sum(B)
            ie = rectangular_box_ie(B)
            assert abs(ie - direct) / (abs(direct) + 1e-30) <= 1e-10

    def test_batch(self):
        rng = np.random.default_rng(11)
        stack = np.array([random_corr(rng, 4) for _ in range(5)])
        batch = rectangular_box_ie_batch(stack)
        for k in range(5):
            assert batch[k] == pytest.approx(rectangular_box_ie(stack[k]))
