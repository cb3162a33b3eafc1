import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_ep_operator
from epopinf.pde import Grid1D, assemble_burgers
from epopinf.tensor_ops import (
    build_constraint_matrix,
    compact_width,
    empty_constraints,
    ep_violation,
    eval_quadratic,
    extract_submodel,
    f_to_h,
    h_to_f,
    is_energy_preserving,
    kron_square,
    vech_index,
    vech_pairs,
    vech_square,
)

dims = st.integers(min_value=1, max_value=7)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def brute_violation(H, r):
    """Sum |h_ijk + h_jik + h_kji| straight from the index definition."""
    h = lambda i, j, k: H[i, r * k + j]  # 0-based form of H[i, r(k-1)+j]
    return sum(abs(h(i, j, k) + h(j, i, k) + h(k, j, i))
               for i, j, k in itertools.product(range(r), repeat=3))


class TestIndexing:
    def test_kron_square_examples(self):
        assert np.array_equal(kron_square([0.0, 0.0]), np.zeros(4))
        assert np.array_equal(kron_square([1.0, 2.0]), [1, 2, 2, 4])
        assert np.array_equal(kron_square([3.0]), [9.0])

    def test_kron_square_position_formula(self):
        x = np.array([2.0, 3.0, 5.0, 7.0])
        n = x.size
        out = kron_square(x)
        for j, k in itertools.product(range(1, n + 1), repeat=2):
            assert out[n * (k - 1) + j - 1] == x[j - 1] * x[k - 1]

    def test_vech_square_order_n3(self):
        x1, x2, x3 = 2.0, 3.0, 5.0
        expected = [x1 * x1, x2 * x1, x3 * x1, x2 * x2, x3 * x2, x3 * x3]
        assert np.array_equal(vech_square([x1, x2, x3]), expected)

    def test_vech_square_ones(self):
        assert np.array_equal(vech_square(np.ones(3)), np.ones(6))

    def test_vech_index_example(self):
        # (j, k) = (3, 2) at n = 3 sits at 1-based column (3 - 1)(1) + 3 = 5
        assert vech_index(2, 1, 3) + 1 == 5

    @given(n=st.integers(1, 12))
    def test_vech_index_matches_formula(self, n):
        j_idx, k_idx = vech_pairs(n)
        for pos, (j, k) in enumerate(zip(j_idx, k_idx)):
            J, K = j + 1, k + 1
            assert (n - K / 2) * (K - 1) + J == pos + 1
            assert vech_index(j, k, n) == pos
        assert len(j_idx) == compact_width(n)

    def test_vech_index_rejects_upper(self):
        with pytest.raises(ValueError):
            vech_index(0, 1, 3)

    def test_batch_columns(self):
        X = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(vech_square(X)[:, 1], vech_square(X[:, 1]))
        assert np.array_equal(kron_square(X)[:, 0], kron_square(X[:, 0]))


class TestConversions:
    def test_zero(self):
        assert np.array_equal(h_to_f(np.zeros((3, 9))), np.zeros((3, 6)))
        assert np.array_equal(f_to_h(np.zeros((3, 6))), np.zeros((3, 9)))

    def test_h_to_f_example(self):
        H = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0]])
        assert np.array_equal(h_to_f(H)[0], [1.0, 5.0, 4.0])

    def test_f_to_h_example(self):
        F = np.array([[1.0, 5.0, 4.0], [0.0, 0.0, 0.0]])
        assert np.array_equal(f_to_h(F)[0], [1.0, 2.5, 2.5, 4.0])

    def test_h_to_f_random_identity(self):
        rng = np.random.default_rng(4)
        H = rng.standard_normal((4, 16))
        F = h_to_f(H)
        for _ in range(100):
            x = rng.standard_normal(4)
            a, b = H @ kron_square(x), F @ vech_square(x)
            assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(a)

    def test_round_trip_exact_n5(self):
        F = np.random.default_rng(5).standard_normal((5, 15))
        assert np.array_equal(h_to_f(f_to_h(F)), F)

    @given(n=dims, seed=seeds)
    def test_f_to_h_symmetric(self, n, seed):
        H = f_to_h(np.random.default_rng(seed).standard_normal((n, compact_width(n))))
        T = H.reshape(n, n, n)  # T[i, k, j] = h_ijk
        assert np.array_equal(T, T.transpose(0, 2, 1))

    @given(n=dims, seed=seeds)
    def test_evaluation_preserved(self, n, seed):
        rng = np.random.default_rng(seed)
        F = rng.standard_normal((n, compact_width(n)))
        x = rng.standard_normal(n)
        a = f_to_h(F) @ kron_square(x)
        b = eval_quadratic(F, x)
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(F) * np.linalg.norm(x) ** 2

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            h_to_f(np.zeros((3, 8)))
        with pytest.raises(ValueError):
            f_to_h(np.zeros((3, 5)))
        with pytest.raises(ValueError):
            eval_quadratic(np.zeros((3, 6)), np.zeros(4))


class TestEvaluation:
    def test_zero_and_scalar(self):
        assert np.array_equal(eval_quadratic(np.zeros((2, 3)), [1.0, 2.0]), [0.0, 0.0])
        assert eval_quadratic(np.array([[2.0]]), [3.0])[0] == 18.0

    def test_dual_path_n6(self):
        rng = np.random.default_rng(6)
        F = rng.standard_normal((6, 21))
        x = rng.standard_normal(6)
        a = f_to_h(F) @ kron_square(x)
        assert np.linalg.norm(eval_quadratic(F, x) - a) <= 1e-12 * np.linalg.norm(a)

    def test_sparse_matches_dense(self):
        model = assemble_burgers(Grid1D(8, 1.0), 0.1)
        x = np.random.default_rng(0).standard_normal(8)
        assert np.allclose(eval_quadratic(model.F, x), model.F.toarray() @ vech_square(x))


class TestViolation:
    def test_examples(self):
        assert ep_violation(np.zeros((3, 6))) == 0.0
        assert ep_violation(np.array([[1.0]])) == 3.0

    def test_burgers_n8(self):
        model = assemble_burgers(Grid1D(8, 1.0), 0.1)
        assert ep_violation(model.F) <= 1e-13
        assert ep_violation(model.F.toarray()) <= 1e-13

    @given(n=st.integers(1, 5), seed=seeds)
    def test_matches_brute_force(self, n, seed):
        F = np.random.default_rng(seed).standard_normal((n, compact_width(n)))
        assert ep_violation(F) == pytest.approx(brute_violation(f_to_h(F), n), rel=1e-12)

    @given(n=dims, seed=seeds)
    def test_round_trip_invariant(self, n, seed):
        F = np.random.default_rng(seed).standard_normal((n, compact_width(n)))
        assert ep_violation(h_to_f(f_to_h(F))) == ep_violation(F)

    def test_is_energy_preserving_examples(self):
        assert is_energy_preserving(np.zeros((2, 3)), samples=10, tol=1e-10)
        assert not is_energy_preserving(np.array([[1.0]]), samples=10, tol=1e-10)

    @settings(max_examples=30)
    @given(r=st.integers(1, 6), seed=seeds)
    def test_ep_operator_has_zero_energy_rate(self, r, seed):
        rng = np.random.default_rng(seed)
        F = random_ep_operator(r, rng)
        assert ep_violation(F) <= 1e-12
        assert is_energy_preserving(F, samples=1000, tol=1e-10, seed=seed)

    @settings(max_examples=30)
    @given(r=st.integers(1, 6), seed=seeds)
    def test_nonzero_violation_detected(self, r, seed):
        F = np.random.default_rng(seed).standard_normal((r, compact_width(r)))
        assert ep_violation(F) > 1e-6
        assert not is_energy_preserving(F, samples=1000, tol=1e-10, seed=seed)


class TestConstraints:
    def test_r1(self):
        C = build_constraint_matrix(1)
        assert C.matrix.toarray().tolist() == [[1.0]]
        assert C.triple_index == ((0, 0, 0),)

    @pytest.mark.parametrize("r, rows", [(3, 10), (10, 220)])
    def test_row_counts(self, r, rows):
        assert build_constraint_matrix(r).num_constraints == rows

    @pytest.mark.parametrize("r", range(1, 13))
    def test_count_matches_triple_enumeration(self, r):
        triples = {tuple(sorted(t)) for t in itertools.product(range(r), repeat=3)}
        C = build_constraint_matrix(r)
        assert C.num_constraints == len(triples) == r * (r + 1) * (r + 2) // 6
        assert C.matrix.shape[1] == r * compact_width(r)

    @pytest.mark.parametrize("r", [2, 4, 7])
    def test_row_structure(self, r):
        M = build_constraint_matrix(r).matrix.tocsr()
        for t in range(M.shape[0]):
            vals = M.data[M.indptr[t]:M.indptr[t + 1]]
            assert 1 <= vals.size <= 3
            assert set(vals.tolist()) <= {1.0, 0.5}

    def test_row_encodes_triple(self):
        # distinct i > j > k: (f_ijk + f_jik + f_kij) / 2
        r, s = 3, 6
        C = build_constraint_matrix(r)
        t = C.triple_index.index((2, 1, 0))
        row = C.matrix.toarray()[t]
        expected = np.zeros(r * s)
        expected[2 * s + vech_index(1, 0, r)] = 0.5
        expected[1 * s + vech_index(2, 0, r)] = 0.5
        expected[0 * s + vech_index(2, 1, r)] = 0.5
        assert np.array_equal(row, expected)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            build_constraint_matrix(0)

    def test_empty(self):
        assert empty_constraints(3).num_constraints == 0

    @settings(max_examples=40)
    @given(r=st.integers(1, 6), seed=seeds)
    def test_feasible_iff_zero_violation(self, r, seed):
        rng = np.random.default_rng(seed)
        C = build_constraint_matrix(r)
        F_ep = random_ep_operator(r, rng)
        assert np.max(np.abs(C.residual(F_ep))) <= 1e-12
        assert ep_violation(F_ep) <= 1e-12
        F = rng.standard_normal(F_ep.shape)
        assert np.max(np.abs(C.residual(F))) > 1e-8
        assert ep_violation(F) > 1e-8

    def test_row_is_symmetrized_ep_sum(self):
        # row residual = sum of h over distinct permutations of (i, j, k),
        # halved when all three indices differ (six permutations)
        r = 4
        F = np.random.default_rng(9).standard_normal((r, compact_width(r)))
        T = f_to_h(F).reshape(r, r, r).transpose(0, 2, 1)  # T[i, j, k] = h_ijk
        C = build_constraint_matrix(r)
        res = C.residual(F)
        for t, triple in enumerate(C.triple_index):
            perms = set(itertools.permutations(triple))
            expected = sum(T[p] for p in perms) / (2 if len(perms) == 6 else 1)
            assert res[t] == pytest.approx(expected, rel=1e-12, abs=1e-13)


class TestSubmodel:
    def test_identity(self):
        rng = np.random.default_rng(1)
        A, F = rng.standard_normal((3, 3)), rng.standard_normal((3, 6))
        A2, F2 = extract_submodel(A, F, 3)
        assert np.array_equal(A2, A) and np.array_equal(F2, F)

    def test_r3_to_r2(self):
        rng = np.random.default_rng(2)
        A, F = rng.standard_normal((3, 3)), rng.standard_normal((3, 6))
        A2, F2 = extract_submodel(A, F, 2)
        assert F2.shape == (2, 3)
        assert np.array_equal(A2, A[:2, :2])
        # (1,1), (2,1), (2,2) in the r=3 ordering are columns 0, 1, 3
        assert np.array_equal(F2, F[:2, [0, 1, 3]])

    def test_evaluation_on_leading_subspace(self):
        rng = np.random.default_rng(3)
        F = rng.standard_normal((5, 15))
        _, F3 = extract_submodel(np.eye(5), F, 3)
        x = np.zeros(5)
        x[:3] = rng.standard_normal(3)
        assert np.allclose(eval_quadratic(F, x)[:3], eval_quadratic(F3, x[:3]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            extract_submodel(np.eye(2), np.zeros((2, 3)), 3)
        with pytest.raises(ValueError):
            extract_submodel(np.eye(2), np.zeros((2, 3)), 0)

    @settings(max_examples=25)
    @given(r=st.integers(2, 7), seed=seeds)
    def test_preserves_ep_exactly(self, r, seed):
        F = random_ep_operator(r, np.random.default_rng(seed))
        parent = build_constraint_matrix(r)
        parent_res = dict(zip(parent.triple_index, parent.residual(F)))
        for rs in range(1, r + 1):
            _, Fs = extract_submodel(np.zeros((r, r)), F, rs)
            child = build_constraint_matrix(rs)
            # every retained row is a parent row acting on the same entries
            for t, res in zip(child.triple_index, child.residual(Fs)):
                assert res == parent_res[t]
            assert ep_violation(Fs) <= 1e-12
