import warnings

import numpy as np
import pytest

from uhlmann_kit.errors import InputError, SingularStateError
from uhlmann_kit.matcore import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_density,
    comm_norm,
    commutator,
    dagger,
    eig_hermitian,
    fro,
    polar_positive,
    random_density,
    random_hermitian,
    random_traceless_hermitian,
    random_unitary,
    sld_residual,
    solve_sld,
    sqrtm_psd,
)


def sld_by_vectorization(rho, drho):
    """Independent oracle: solve (rho^T (x) I + I (x) rho) vec(L) / 2 = vec(drho)."""
    n = rho.shape[0]
    eye = np.eye(n)
    # column-major vec: vec(A X B) = (B^T (x) A) vec(X)
    op = (np.kron(rho.T, eye) + np.kron(eye, rho)) / 2
    x = np.linalg.solve(op, drho.reshape(-1, order="F"))
    return x.reshape(n, n, order="F")


class TestEigHermitian:
    def test_diagonal(self):
        lam, v = eig_hermitian(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(lam, [1.0, 2.0])
        np.testing.assert_allclose(np.abs(v), [[0, 1], [1, 0]])

    def test_pauli_x(self):
        lam, _ = eig_hermitian(SIGMA_X)
        np.testing.assert_allclose(lam, [-1.0, 1.0], atol=1e-15)

    @pytest.mark.parametrize("n", [2, 3, 4, 6])
    def test_reconstruction(self, n, rng):
        for _ in range(20):
            a = random_hermitian(n, rng)
            lam, v = eig_hermitian(a)
            assert np.all(np.diff(lam) >= 0)
            assert fro((v * lam) @ dagger(v) - a) <= 1e-12 * fro(a)
            assert fro(dagger(v) @ v - np.eye(n)) <= 1e-12

    def test_rejects_non_hermitian(self):
        with pytest.raises(InputError, match="not Hermitian"):
            eig_hermitian(np.array([[0, 1], [0, 0]]))


class TestSolveSld:
    def test_maximally_mixed(self):
        L = solve_sld(np.eye(2) / 2, SIGMA_X / 2)
        np.testing.assert_allclose(L, SIGMA_X, atol=1e-15)

    def test_diagonal_state_off_diagonal_entry(self):
        d = 0.1 + 0.05j
        drho = np.array([[0, d], [np.conj(d), 0]])
        L = solve_sld(np.diag([0.8, 0.2]), drho)
        assert L[0, 1] == pytest.approx(2 * d / (0.8 + 0.2))
        assert abs(L[0, 0]) < 1e-15 and abs(L[1, 1]) < 1e-15

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_matches_vectorized_oracle(self, n, rng):
        for _ in range(25):
            rho = random_density(n, rng)
            drho = random_traceless_hermitian(n, rng)
            np.testing.assert_allclose(solve_sld(rho, drho), sld_by_vectorization(rho, drho), atol=1e-10)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_residual_and_hermiticity(self, n, rng):
        for _ in range(200):
            rho = random_density(n, rng, min_eig=1e-3)
            drho = random_traceless_hermitian(n, rng)
            L = solve_sld(rho, drho)
            assert fro(L - dagger(L)) <= 1e-12
            assert sld_residual(rho, drho, L) <= 1e-10 * max(1.0, fro(drho))

    def test_singular_state_rejected(self):
        with pytest.raises(SingularStateError, match="positivity_floor"):
            solve_sld(np.diag([1.0, 0.0]), SIGMA_X / 2)

    def test_trace_must_vanish(self):
        with pytest.raises(InputError, match="traceless"):
            solve_sld(np.eye(2) / 2, np.eye(2))


class TestPolar:
    def test_unitary_input(self, rng):
        u = random_unitary(3, rng)
        p, k = polar_positive(u)
        np.testing.assert_allclose(p, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(k, u, atol=1e-12)

    def test_positive_input(self, rng):
        p0 = random_density(3, rng)
        p, k = polar_positive(p0)
        np.testing.assert_allclose(p, p0, atol=1e-12)
        np.testing.assert_allclose(k, np.eye(3), atol=1e-12)

    def test_random_invertible(self, rng):
        for _ in range(50):
            a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            p, k = polar_positive(a)
            assert fro(p @ k - a) <= 1e-12 * max(1.0, fro(a))
            assert np.linalg.eigvalsh(p)[0] >= -1e-12
            assert fro(dagger(k) @ k - np.eye(3)) <= 1e-12
            np.testing.assert_allclose(p, sqrtm_psd(a @ dagger(a)), atol=1e-10)

    def test_rank_deficient_warns(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            p, k = polar_positive(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert any(issubclass(w.category, RuntimeWarning) for w in caught)
        np.testing.assert_allclose(p @ k, [[1, 0], [0, 0]], atol=1e-15)


class TestCommutator:
    def test_self(self):
        assert fro(commutator(SIGMA_X, SIGMA_X)) == 0.0

    def test_pauli_algebra(self):
        np.testing.assert_allclose(commutator(SIGMA_X, SIGMA_Y), 2j * SIGMA_Z)

    def test_diagonal_commute(self, rng):
        a = np.diag(rng.normal(size=4))
        b = np.diag(rng.normal(size=4))
        assert comm_norm(a, b) <= 1e-15

    def test_scale_free_floor(self):
        assert comm_norm(np.zeros((2, 2)), SIGMA_X) == 0.0
        assert comm_norm(10 * SIGMA_X, 10 * SIGMA_Y) == pytest.approx(comm_norm(SIGMA_X, SIGMA_Y))

    def test_mismatch(self):
        with pytest.raises(InputError):
            commutator(np.eye(2), np.eye(3))


def test_density_validation():
    with pytest.raises(InputError, match="trace"):
        as_density(np.eye(2))
    with pytest.raises(SingularStateError):
        as_density(np.diag([1.0, 0.0]))
    as_density(np.diag([0.6, 0.4]))
