import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conclab.errors import DomainError, InputError
from conclab.linalg import (MatrixFamily, SymMatrix, batch_spectral_norm, diag_part, effective_rank,
                            eigenvalues, format_matrix, hadamard, hs_norm, jacobi_eigenvalues,
                            off_part, parse_matrix, psd_leq, random_family, random_orthogonal,
                            random_psd, random_symmetric, spectral_norm, sqrt_psd)

from conftest import psd_arrays, sym_arrays


def test_spectral_norm_identity():
    assert spectral_norm(SymMatrix.identity(5)) == 1.0


def test_spectral_norm_diagonal():
    assert spectral_norm(SymMatrix.diagonal([1, -3, 2])) == 3.0


def test_spectral_norm_matches_jacobi(gen):
    A = random_symmetric(6, gen)
    ref = np.abs(jacobi_eigenvalues(A.values)).max()
    assert spectral_norm(A) == pytest.approx(ref, rel=1e-9)
    assert spectral_norm(A, method="jacobi") == pytest.approx(ref, rel=1e-12)


def test_jacobi_agrees_with_lapack_at_64(gen):
    A = random_symmetric(64, gen)
    np.testing.assert_allclose(jacobi_eigenvalues(A.values), np.linalg.eigvalsh(A.values), atol=1e-12)


def test_non_finite_rejected():
    with pytest.raises(InputError):
        SymMatrix([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(InputError):
        SymMatrix([[1.0, 2.0, 3.0]])


def test_symmetrization_flag():
    A = SymMatrix([[1.0, 2.0], [0.0, 1.0]])
    assert A.symmetrized
    np.testing.assert_array_equal(A.values, [[1.0, 1.0], [1.0, 1.0]])
    assert not SymMatrix.identity(3).symmetrized


def test_hs_norm_examples():
    assert hs_norm(SymMatrix.identity(4)) == 2.0
    assert hs_norm(SymMatrix.zeros(3)) == 0.0
    assert hs_norm(SymMatrix(np.ones((3, 3)))) == pytest.approx(3.0, abs=1e-15)


def test_diag_off_parts(gen):
    assert diag_part(SymMatrix.identity(3)) == SymMatrix.identity(3)
    assert off_part(SymMatrix.identity(3)) == SymMatrix.zeros(3)
    A = random_symmetric(5, gen)
    np.testing.assert_array_equal(diag_part(A).values + off_part(A).values, A.values)


def test_effective_rank_examples():
    assert effective_rank(SymMatrix.identity(7)) == 7.0
    assert effective_rank(SymMatrix.diagonal([2, 1, 1])) == 2.0
    assert effective_rank(SymMatrix.diagonal([1, 0, 0, 0])) == 1.0
    with pytest.raises(DomainError):
        effective_rank(SymMatrix.zeros(3))
    with pytest.raises(DomainError):
        effective_rank(SymMatrix.diagonal([1, -1]))


def test_hadamard_examples(gen):
    A = random_symmetric(4, gen)
    assert hadamard(A, SymMatrix(np.ones((4, 4)))) == A
    assert hadamard(A, SymMatrix.identity(4)) == diag_part(A)
    B = random_symmetric(4, gen)
    naive = np.array([[A.values[i, j] * B.values[i, j] for j in range(4)] for i in range(4)])
    np.testing.assert_array_equal(hadamard(A, B).values, naive)
    with pytest.raises(InputError):
        hadamard(A, SymMatrix.identity(3))


def test_psd_leq_examples(gen):
    Z, I = SymMatrix.zeros(3), SymMatrix.identity(3)
    assert psd_leq(Z, I, 0)
    assert not psd_leq(I, Z, 0)
    A = random_symmetric(3, gen)
    assert psd_leq(A, A, 0)
    with pytest.raises(InputError):
        psd_leq(I, SymMatrix.identity(2))


def test_sqrt_psd(gen):
    S = random_psd(6, gen)
    R = sqrt_psd(S)
    np.testing.assert_allclose(R.values @ R.values, S.values, atol=1e-9 * spectral_norm(S))


def test_matrix_text_round_trip(gen):
    A = random_symmetric(4, gen)
    assert parse_matrix(format_matrix(A)) == A


def test_family_and_batch_norms(gen):
    fam = random_family(3, 5, gen, zero_diagonal=True)
    assert len(fam) == 3 and fam.dim == 5
    assert np.all(np.diagonal(fam.stack, axis1=1, axis2=2) == 0)
    np.testing.assert_allclose(batch_spectral_norm(fam.stack), [spectral_norm(m) for m in fam])
    with pytest.raises(InputError):
        MatrixFamily([SymMatrix.identity(2), SymMatrix.identity(3)])


def test_random_orthogonal(gen):
    Q = random_orthogonal(8, gen)
    np.testing.assert_allclose(Q @ Q.T, np.eye(8), atol=1e-12)


@given(sym_arrays())
def test_norm_sandwich(a):
    A = SymMatrix(a)
    op, hs = spectral_norm(A), hs_norm(A)
    assert op <= hs * (1 + 1e-12) + 1e-300
    assert hs <= np.sqrt(A.dim) * op * (1 + 1e-12) + 1e-300


@given(psd_arrays())
def test_effective_rank_range(s):
    A = SymMatrix(s)
    if spectral_norm(A) < 1e-6:
        return
    r = effective_rank(A)
    assert 1 - 1e-9 <= r <= A.dim + 1e-9


@given(sym_arrays(2, 5))
def test_jacobi_matches_lapack(a):
    A = SymMatrix(a)
    scale = max(1.0, hs_norm(A))
    np.testing.assert_allclose(eigenvalues(A, "jacobi"), eigenvalues(A), atol=1e-10 * scale)


@given(st.data())
def test_psd_leq_partial_order(data):
    n = data.draw(st.integers(1, 4))
    A, B, C = (SymMatrix(data.draw(psd_arrays(n, n))) for _ in range(3))
    assert psd_leq(A, A, 0)
    assert psd_leq(A, A + B, 1e-9 * (1 + spectral_norm(B)))
    if psd_leq(A, B, 0) and psd_leq(B, A, 0):
        assert spectral_norm(A - B) <= 1e-12 * max(1.0, spectral_norm(A))
    AB, ABC = A + B, A + B + C
    tol = 1e-9 * (1 + spectral_norm(ABC))
    assert psd_leq(A, AB, tol) and psd_leq(AB, ABC, tol) and psd_leq(A, ABC, tol)


@given(st.data())
def test_hadamard_algebra(data):
    n = data.draw(st.integers(1, 5))
    A, B, C = (SymMatrix(data.draw(sym_arrays(n, n))) for _ in range(3))
    assert hadamard(A, B) == hadamard(B, A)
    lhs = hadamard(A, B + C).values
    rhs = (hadamard(A, B) + hadamard(A, C)).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(lhs).max()))
