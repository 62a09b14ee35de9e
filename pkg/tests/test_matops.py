import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilqg import matops
from trilqg.errors import (DimensionMismatch, ImaginaryAxisEigs, NonzeroD, ResonantFrequency,
                           SingularPhi, SingularPsi, SpectraOverlap, UnstableA)
from trilqg.matops import StateSpace

from conftest import stable_matrix

R2 = np.sqrt(2) - 1


def are_p_residual(A, B, F, H, X):
    Psi = H.T @ H
    G = X @ B + F.T @ H
    return A.T @ X + X @ A - G @ np.linalg.solve(Psi, G.T) + F.T @ F


# -- Riccati ------------------------------------------------------------------

def test_are_p_scalar_closed_form():
    X, K = matops.solve_are_p([[-1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [1.0]])
    assert X[0, 0] == pytest.approx(R2, abs=1e-12)
    assert K[0, 0] == pytest.approx(-R2, abs=1e-12)


def test_are_p_zero_state_cost():
    X, K = matops.solve_are_p([[-1.0]], [[1.0]], [[0.0], [0.0]], [[0.0], [1.0]])
    assert np.abs(X).max() < 1e-14 and np.abs(K).max() < 1e-14


def test_are_p_on_p2(p2):
    X, K = matops.solve_are_p(p2.A, p2.B, p2.F, p2.H)
    assert np.linalg.norm(are_p_residual(p2.A, p2.B, p2.F, p2.H, X)) < 1e-9
    assert matops.spectral_abscissa(p2.A + p2.B @ K) < 0


def test_are_d_independent_noise():
    Y, L = matops.solve_are_d([[-1.0]], [[1.0]], [[1.0, 0.0]], [[0.0, 1.0]])
    assert Y[0, 0] == pytest.approx(R2, abs=1e-12)
    assert L[0, 0] == pytest.approx(-R2, abs=1e-12)


def test_are_d_shared_noise_channel():
    # one channel drives both state and measurement: the measurement reveals
    # the disturbance exactly, so Y = 0 and L = -1 (from -4Y - Y^2 = 0)
    Y, L = matops.solve_are_d([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert abs(Y[0, 0]) < 1e-12
    assert L[0, 0] == pytest.approx(-1.0, abs=1e-12)


def test_are_d_no_process_noise():
    Y, L = matops.solve_are_d([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
    assert np.abs(Y).max() < 1e-14 and np.abs(L).max() < 1e-14


def test_are_errors():
    with pytest.raises(SingularPsi):
        matops.solve_are_p([[-1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [0.0]])
    with pytest.raises(SingularPhi):
        matops.solve_are_d([[-1.0]], [[1.0]], [[1.0, 0.0]], [[0.0, 0.0]])
    # marginal mode with no state weight: Hamiltonian eigenvalues on the axis
    with pytest.raises(ImaginaryAxisEigs):
        matops.solve_are_p([[0.0]], [[1.0]], [[0.0], [0.0]], [[0.0], [1.0]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 4), m=st.integers(1, 3), extra=st.integers(0, 2))
def test_are_p_properties(seed, n, m, extra):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    F = np.vstack([rng.standard_normal((n + extra, n)), np.zeros((m, n))])
    H = np.vstack([np.zeros((n + extra, m)), np.eye(m) + 0.1 * rng.standard_normal((m, m))])
    X, K = matops.solve_are_p(A, B, F, H)
    res = np.linalg.norm(are_p_residual(A, B, F, H, X))
    assert res <= 1e-8 * (1 + np.linalg.norm(X))
    assert np.abs(X - X.T).max() <= 1e-12 * max(np.linalg.norm(X), 1e-300)
    assert np.linalg.eigvalsh(X).min() >= -1e-10 * max(np.linalg.norm(X), 1.0)
    assert matops.spectral_abscissa(A + B @ K) < 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 4), p=st.integers(1, 3))
def test_are_duality(seed, n, p):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    C = rng.standard_normal((p, n))
    W = np.hstack([rng.standard_normal((n, n)), 0.3 * rng.standard_normal((n, p))])
    V = np.hstack([0.3 * rng.standard_normal((p, n)), np.eye(p)])
    Y, L = matops.solve_are_d(A, C, W, V)
    X, K = matops.solve_are_p(A.T, C.T, W.T, V.T)
    scale = 1 + np.abs(X).max()
    assert np.abs(Y - X).max() < 1e-10 * scale
    assert np.abs(L - K.T).max() < 1e-10 * (1 + np.abs(K).max())


# -- Lyapunov / Sylvester -----------------------------------------------------

def test_lyapunov_examples():
    assert matops.solve_lyapunov([[-1.0]], [[2.0]])[0, 0] == pytest.approx(1.0)
    X = matops.solve_lyapunov(np.diag([-1.0, -2.0]), np.eye(2))
    np.testing.assert_allclose(X, np.diag([0.5, 0.25]), atol=1e-14)


def test_lyapunov_unstable():
    with pytest.raises(UnstableA):
        matops.solve_lyapunov([[1.0]], [[1.0]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 5))
def test_lyapunov_psd_residual(seed, n):
    rng = np.random.default_rng(seed)
    A = stable_matrix(rng, n)
    M = rng.standard_normal((n, n))
    Q = M.T @ M
    X = matops.solve_lyapunov(A, Q)
    assert np.linalg.norm(A.T @ X + X @ A + Q) <= 1e-10 * (1 + np.linalg.norm(Q))
    assert np.allclose(X, X.T, atol=0)
    assert np.linalg.eigvalsh(X).min() >= -1e-12 * np.linalg.norm(X)


def test_sylvester_examples():
    assert matops.solve_sylvester([[-1.0]], [[-1.0]], [[2.0]])[0, 0] == pytest.approx(1.0)
    assert matops.solve_sylvester([[0.0]], [[-2.0]], [[4.0]])[0, 0] == pytest.approx(2.0)


def test_sylvester_overlap_and_shape():
    with pytest.raises(SpectraOverlap):
        matops.solve_sylvester([[1.0]], [[-1.0]], [[1.0]])
    with pytest.raises(DimensionMismatch):
        matops.solve_sylvester(np.eye(2), np.eye(3), np.ones((3, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 4), k=st.integers(1, 4))
def test_sylvester_residual(seed, n, k):
    rng = np.random.default_rng(seed)
    A, B = stable_matrix(rng, n), stable_matrix(rng, k)
    C = rng.standard_normal((n, k))
    X = matops.solve_sylvester(A, B, C)
    assert np.linalg.norm(A @ X + X @ B + C) <= 1e-10 * (1 + np.linalg.norm(C))


# -- systems ------------------------------------------------------------------

def test_h2_first_order():
    sys = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    assert matops.h2_norm(sys) == pytest.approx(1 / np.sqrt(2), abs=1e-14)
    assert matops.h2_norm(StateSpace([[-1.0]], [[1.0]], [[0.0]], [[0.0]])) == 0.0


def test_h2_errors():
    with pytest.raises(NonzeroD):
        matops.h2_norm(StateSpace([[-1.0]], [[1.0]], [[1.0]], [[1.0]]))
    with pytest.raises(UnstableA):
        matops.h2_norm(StateSpace([[1.0]], [[1.0]], [[1.0]], [[0.0]]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 5))
def test_h2_gramian_duality(seed, n):
    rng = np.random.default_rng(seed)
    sys = StateSpace(stable_matrix(rng, n), rng.standard_normal((n, 2)),
                     rng.standard_normal((3, n)), np.zeros((3, 2)))
    a = matops.h2_norm(sys)
    b = matops.h2_norm(sys, gramian="observability")
    assert abs(a - b) <= 1e-10 * max(a, 1e-300)


def test_freq_response_examples():
    sys = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    assert matops.freq_response(sys, 0.0)[0, 0] == pytest.approx(1.0)
    assert abs(matops.freq_response(sys, 1e9)[0, 0]) < 1e-8
    assert matops.freq_response(sys, 1.0)[0, 0] == pytest.approx(0.5 - 0.5j)
    with pytest.raises(ResonantFrequency):
        matops.freq_response(StateSpace([[0.0, 1.0], [-1.0, 0.0]], np.eye(2), np.eye(2), np.zeros((2, 2))), 1.0)


def test_spectral_abscissa_examples():
    assert matops.spectral_abscissa(np.diag([-1.0, -3.0])) == pytest.approx(-1.0)
    assert matops.spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)
    assert matops.spectral_abscissa([[-1.0, 10.0], [0.0, -2.0]]) == pytest.approx(-1.0)


def test_assemble_linear_operator(rng):
    np.testing.assert_array_equal(matops.assemble_linear_operator(lambda v: v, 3, 3), np.eye(3))
    np.testing.assert_array_equal(matops.assemble_linear_operator(lambda v: 2 * v, 2, 2), 2 * np.eye(2))
    A, B = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))

    def f(v):
        X = v.reshape(2, 2, order="F")
        return (A @ X + X @ B).reshape(-1, order="F")

    M = matops.assemble_linear_operator(f, 4, 4)
    np.testing.assert_allclose(M, np.kron(np.eye(2), A) + np.kron(B.T, np.eye(2)), atol=1e-15)
    for _ in range(5):
        v = rng.standard_normal(4)
        assert np.abs(M @ v - f(v)).max() < 1e-12
    with pytest.raises(DimensionMismatch):
        matops.assemble_linear_operator(lambda v: v[:1], 2, 2)


def test_state_space_algebra(rng):
    a = StateSpace(stable_matrix(rng, 2), rng.standard_normal((2, 1)), rng.standard_normal((1, 2)), [[0.3]])
    b = StateSpace(stable_matrix(rng, 3), rng.standard_normal((3, 1)), rng.standard_normal((1, 3)), [[-0.2]])
    s = 0.4 + 1.3j
    assert np.allclose((a @ b)(s), a(s) @ b(s))
    assert np.allclose((a - b)(s), a(s) - b(s))
    with pytest.raises(DimensionMismatch):
        StateSpace(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.zeros((1, 1))) @ \
            StateSpace(np.eye(1), np.ones((1, 2)), np.ones((2, 1)), np.zeros((2, 2)))


def test_frequency_grid():
    w = matops.frequency_grid()
    assert w[0] == 0.0 and len(w) == 21
    assert w[1] == pytest.approx(1e-3) and w[-1] == pytest.approx(1e3)
