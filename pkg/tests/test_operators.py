import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import I2, PHI_PLUS, X, Y, Z, phi_plus_pauli, rand_density, rand_herm, rand_unit
from epsnet.operators import (
    DecomposedOperator,
    ProductStateWitness,
    embed_qubits,
    extreme_eigenvalue,
    herm_defect,
    hs_inner,
    kron_all,
    merge_terms,
    operator_schmidt,
    partial_contract,
    partial_contract_second,
    reconstruct,
    symmetrize,
    validate_hermitian,
)

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square_complex(n):
    return st.tuples(
        hnp.arrays(np.float64, (n, n), elements=finite),
        hnp.arrays(np.float64, (n, n), elements=finite),
    ).map(lambda ab: ab[0] + 1j * ab[1])


class TestValidateHermitian:
    def test_identity(self):
        h = validate_hermitian(np.eye(2))
        assert h.herm_defect == 0
        assert h.dim == 2

    def test_nilpotent_rejected(self):
        with pytest.raises(ValueError, match="not Hermitian"):
            validate_hermitian([[0, 1], [0, 0]])

    def test_pauli_y(self):
        h = validate_hermitian(Y)
        assert h.herm_defect == 0
        np.testing.assert_array_equal(h.entries, Y)

    def test_not_square(self):
        with pytest.raises(ValueError):
            validate_hermitian(np.zeros((2, 3)))

    def test_entries_read_only(self):
        h = validate_hermitian(np.eye(2))
        with pytest.raises(ValueError):
            h.entries[0, 0] = 5


class TestReconstruct:
    def test_identity_term(self):
        D = DecomposedOperator([(I2, I2)], (2, 2), (1, 1))
        np.testing.assert_allclose(reconstruct(D).entries, np.eye(4))

    def test_phi_plus(self):
        np.testing.assert_allclose(
            reconstruct(phi_plus_pauli()).entries, np.outer(PHI_PLUS, PHI_PLUS.conj()), atol=1e-15
        )

    def test_zzz(self):
        D = DecomposedOperator([(Z, Z, Z)], (2, 2, 2), (1, 1, 1))
        np.testing.assert_allclose(
            reconstruct(D).entries, np.diag([1, -1, -1, 1, -1, 1, 1, -1]).astype(complex)
        )

    def test_width_violation(self):
        with pytest.raises(ValueError, match="width"):
            DecomposedOperator([(2 * Z, Z)], (2, 2), (1, 1))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            DecomposedOperator([(Z, np.eye(3))], (2, 2), (1, 1))

    def test_non_hermitian_factors_allowed_when_sum_is(self):
        s = np.array([[0, 1], [0, 0]], dtype=complex)
        D = DecomposedOperator([(s, s.conj().T), (s.conj().T, s)], (2, 2), (1, 1))
        h = reconstruct(D)
        assert herm_defect(h.entries) == 0


class TestSymmetrize:
    def test_fixed_point(self, rng):
        h = rand_herm(rng, 3)
        np.testing.assert_allclose(symmetrize(h).entries, h)

    def test_forced(self):
        np.testing.assert_array_equal(symmetrize([[0, 2], [0, 0]]).entries, X)

    def test_anti_hermitian(self):
        np.testing.assert_array_equal(symmetrize(1j * np.eye(2)).entries, np.zeros((2, 2)))

    @given(square_complex(3))
    def test_idempotent_and_hermitian(self, a):
        h = symmetrize(a).entries
        assert herm_defect(h) <= 1e-12
        np.testing.assert_array_equal(symmetrize(h).entries, h)


class TestExtremeEigenvalue:
    def test_diagonal(self):
        assert extreme_eigenvalue(np.diag([3.0, 1, -2]), "max")[0] == pytest.approx(3)

    def test_pauli_x_min(self):
        assert extreme_eigenvalue(X, "min")[0] == pytest.approx(-1)

    def test_projector(self):
        assert extreme_eigenvalue(np.outer(PHI_PLUS, PHI_PLUS), "max")[0] == pytest.approx(1)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            extreme_eigenvalue(X, "median")

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5))
    def test_negation(self, seed, d):
        h = rand_herm(np.random.default_rng(seed), d)
        assert extreme_eigenvalue(h, "max")[0] == pytest.approx(-extreme_eigenvalue(-h, "min")[0], abs=1e-12)


class TestInner:
    def test_trace_normalisation(self, rng):
        assert hs_inner(np.eye(3), rand_density(rng, 3)) == pytest.approx(1)

    def test_eigenstate(self):
        assert hs_inner(Z, np.diag([1, 0])) == pytest.approx(1)

    def test_maximally_mixed(self):
        assert hs_inner(Z, np.eye(2) / 2) == pytest.approx(0)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            hs_inner(Z, np.eye(3))


class TestPartialContract:
    def test_product(self, rng):
        A, B = rand_herm(rng, 2), rand_herm(rng, 3)
        v = rand_unit(rng, 2)
        out = partial_contract(np.kron(A, B), v, (2, 3)).entries
        np.testing.assert_allclose(out, (v.conj() @ A @ v).real * B, atol=1e-12)

    def test_swap(self):
        out = partial_contract(SWAP, [1, 0]).entries
        np.testing.assert_allclose(out, np.diag([1, 0]))

    def test_identity(self, rng):
        np.testing.assert_allclose(partial_contract(np.eye(4), rand_unit(rng, 2)).entries, np.eye(2))

    def test_mismatch(self):
        with pytest.raises(ValueError):
            partial_contract(np.eye(5), [1, 0])
        with pytest.raises(ValueError):
            partial_contract(np.eye(4), [1, 0], dims=(3, 2))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 4))
    def test_local_sum(self, seed, d):
        rng = np.random.default_rng(seed)
        H = rand_herm(rng, d)
        v, u = rand_unit(rng, d), rand_unit(rng, d)
        Q = np.kron(H, np.eye(d)) + np.kron(np.eye(d), H)
        lhs = hs_inner(partial_contract(Q, v), np.outer(u, u.conj())).real
        rhs = (v.conj() @ H @ v + u.conj() @ H @ u).real
        assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_second_party(self, rng):
        Q = rand_herm(rng, 6)
        u, v = rand_unit(rng, 3), rand_unit(rng, 2)
        a = hs_inner(partial_contract_second(Q, u, (2, 3)), np.outer(v, v.conj())).real
        psi = np.kron(v, u)
        assert a == pytest.approx((psi.conj() @ Q @ psi).real, abs=1e-12)


class TestOperatorSchmidt:
    @given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (2, 3), (3, 2)]))
    def test_reconstructs(self, seed, dims):
        rng = np.random.default_rng(seed)
        Q = rand_herm(rng, dims[0] * dims[1])
        D = operator_schmidt(Q, dims)
        assert D.M <= (dims[0] ** 2) * (dims[1] ** 2)
        np.testing.assert_allclose(reconstruct(D).entries, Q, atol=1e-12)
        for A, B in D.terms:
            assert np.linalg.norm(A, 2) == pytest.approx(1)
            assert np.linalg.norm(B, 2) <= D.widths[1] + 1e-12

    def test_product_has_rank_one(self):
        D = operator_schmidt(np.kron(Z, X), (2, 2))
        assert D.M == 1


class TestMergeTerms:
    def test_folds_shared_factor(self):
        D = DecomposedOperator([(Z, X), (Z, Y), (X, I2)], (2, 2), (1, 1))
        m = merge_terms(D)
        assert m.M == 2
        np.testing.assert_allclose(reconstruct(m).entries, reconstruct(D).entries)
        assert m.widths[1] == pytest.approx(np.sqrt(2))

    def test_cancellation_drops(self):
        D = DecomposedOperator([(Z, X), (Z, -X)], (2, 2), (1, 1))
        assert merge_terms(D).M == 0


class TestHelpers:
    def test_kron_all(self):
        np.testing.assert_array_equal(kron_all([Z, X]), np.kron(Z, X))

    def test_embed_positions(self):
        # X on qubit 2 of 3 equals I (x) I (x) X
        np.testing.assert_array_equal(embed_qubits(X, [2], 3), kron_all([I2, I2, X]))
        cnot = np.kron(np.diag([1, 0]), I2) + np.kron(np.diag([0, 1]), X)
        # reversed order: control on qubit 1, target on qubit 0
        rev = np.kron(I2, np.diag([1, 0])) + np.kron(X, np.diag([0, 1]))
        np.testing.assert_array_equal(embed_qubits(cnot, [1, 0], 2), rev)

    def test_embed_rejects(self):
        with pytest.raises(ValueError):
            embed_qubits(X, [3], 3)
        with pytest.raises(ValueError):
            embed_qubits(np.eye(4), [0, 0], 3)

    def test_witness(self):
        w = ProductStateWitness(([1, 0], [0, 1]), 0.5)
        np.testing.assert_array_equal(w.state(), [0, 1, 0, 0])
        with pytest.raises(ValueError):
            ProductStateWitness(([1, 1],), 0.0)

    def test_negate_and_scale(self, rng):
        D = phi_plus_pauli()
        np.testing.assert_allclose(reconstruct(D.negate()).entries, -reconstruct(D).entries)
        S = D.scaled(3.0, party=0)
        np.testing.assert_allclose(reconstruct(S).entries, 3 * reconstruct(D).entries)
        assert S.W == pytest.approx(3 * D.W)
