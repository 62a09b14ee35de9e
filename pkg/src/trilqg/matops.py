"""
Dense real linear algebra used throughout the package.

Riccati equations are solved through an ordered real Schur decomposition of
the Hamiltonian matrix; Lyapunov and Sylvester equations are delegated to the
Bartels-Stewart routines in :mod:`scipy.linalg`.  Matrices are plain
``numpy.ndarray`` objects; :class:`StateSpace` is the only container type.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from trilqg.errors import (
    DimensionMismatch,
    ImaginaryAxisEigs,
    NonzeroD,
    NoStableSubspace,
    ResonantFrequency,
    RiccatiResidualError,
    SingularPhi,
    SingularPsi,
    SpectraOverlap,
    UnstableA,
)

__all__ = [
    "StateSpace",
    "as_matrix",
    "solve_are_p",
    "solve_are_d",
    "solve_lyapunov",
    "solve_sylvester",
    "h2_norm",
    "freq_response",
    "spectral_abscissa",
    "assemble_linear_operator",
    "sym_sqrt",
    "sym_inv_sqrt",
]

ARE_TOL = 1e-8
LIN_TOL = 1e-10
AXIS_TOL = 1e-8
COND_LIMIT = 1e12


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class StateSpace:
    """Real realization ``C (sI - A)^{-1} B + D``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A") if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        D = np.array(self.D, dtype=float)
        if D.ndim != 2:
            D = as_matrix(D, "D")
        p, m = D.shape
        B = np.array(self.B, dtype=float).reshape(n, m)
        C = np.array(self.C, dtype=float).reshape(p, n)
        for name, M in (("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.D.shape[1]

    @property
    def noutputs(self) -> int:
        return self.D.shape[0]

    def __call__(self, s: complex) -> np.ndarray:
        n = self.nstates
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D

    def __matmul__(self, other: "StateSpace") -> "StateSpace":
        # series connection: other feeds self
        if self.ninputs != other.noutputs:
            raise DimensionMismatch(
                f"cannot cascade {other.noutputs} outputs into {self.ninputs} inputs"
            )
        n1, n2 = self.nstates, other.nstates
        A = np.block([
            [self.A, self.B @ other.C],
            [np.zeros((n2, n1)), other.A],
        ])
        B = np.vstack([self.B @ other.D, other.B])
        C = np.hstack([self.C, self.D @ other.C])
        return StateSpace(A, B, C, self.D @ other.D)

    def __add__(self, other: "StateSpace") -> "StateSpace":
        if self.D.shape != other.D.shape:
            raise DimensionMismatch("parallel connection needs equal I/O sizes")
        A = la.block_diag(self.A, other.A)
        return StateSpace(A, np.vstack([self.B, other.B]),
                          np.hstack([self.C, other.C]), self.D + other.D)

    def __neg__(self) -> "StateSpace":
        return StateSpace(self.A, self.B, -self.C, -self.D)

    def __sub__(self, other: "StateSpace") -> "StateSpace":
        return self + (-other)

    def select(self, rows=slice(None), cols=slice(None)) -> "StateSpace":
        """Sub-system from output ``rows`` to input ``cols``."""
        return StateSpace(self.A, self.B[:, cols], self.C[rows, :], self.D[rows, cols])

    @staticmethod
    def static(D) -> "StateSpace":
        D = as_matrix(D, "D")
        return StateSpace(np.zeros((0, 0)), np.zeros((0, D.shape[1])),
                          np.zeros((D.shape[0], 0)), D)


# ---------------------------------------------------------------------------
# Riccati equations
# ---------------------------------------------------------------------------

def _pd_inverse(M: np.ndarray, err, name: str) -> np.ndarray:
    w = np.linalg.eigvalsh(M) if M.size else np.ones(1)
    if w.min() <= 0 or w.max() / w.min() > COND_LIMIT:
        raise err(f"{name} is numerically singular (eigenvalues {w.min():.3e}..{w.max():.3e})")
    return np.linalg.inv(M)


def _care_core(A: np.ndarray, R: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Stabilizing solution of ``A^T X + X A - X R X + Q = 0`` via ordered Schur."""
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    Ham = np.block([[A, -R], [-Q, -A.T]])
    scale = max(np.linalg.norm(Ham, 1), 1.0)
    eigs = np.linalg.eigvals(Ham)
    dist = np.min(np.abs(eigs.real))
    if dist < AXIS_TOL * scale:
        raise ImaginaryAxisEigs(
            f"Hamiltonian has eigenvalue within {dist:.3e} of the imaginary axis",
            distance=dist / scale,
        )
    T, Z, sdim = la.schur(Ham, output="real", sort="lhp")
    if sdim != n:
        raise NoStableSubspace(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > COND_LIMIT:
        raise NoStableSubspace("stable invariant subspace is not the graph of a matrix")
    X = np.linalg.solve(U1.T, U2.T).T
    return (X + X.T) / 2


def _are_residual(A, R, Q, X):
    return A.T @ X + X @ A - X @ R @ X + Q


def _refine(A, R, Q, X):
    # one Newton (Kleinman) defect-correction step
    Acl = A - R @ X
    Res = _are_residual(A, R, Q, X)
    try:
        dX = la.solve_continuous_lyapunov(Acl.T, -Res)
    except (np.linalg.LinAlgError, ValueError):
        return X
    X = X + dX
    return (X + X.T) / 2


def _solve_reduced(A, R, Q, tol):
    X = _care_core(A, R, Q)
    res = np.linalg.norm(_are_residual(A, R, Q, X))
    if res > tol * (1 + np.linalg.norm(X)):
        X = _refine(A, R, Q, X)
        res = np.linalg.norm(_are_residual(A, R, Q, X))
        if res > tol * (1 + np.linalg.norm(X)):
            raise RiccatiResidualError(f"Riccati residual {res:.3e} exceeds tolerance")
    return X


def solve_are_p(A, B, F, H, tol: float = ARE_TOL):
    """
    Stabilizing solution of the control-type Riccati equation.

    Solves ``A^T X + X A - (X B + F^T H) Psi^{-1} (X B + F^T H)^T + F^T F = 0``
    with ``Psi = H^T H``.

    Returns
    -------
    X : ndarray
        Symmetric positive semidefinite solution.
    K : ndarray
        Gain ``-Psi^{-1} (X B + F^T H)^T``; ``A + B K`` is Hurwitz.
    """
    A, B, F, H = (as_matrix(M, nm) for M, nm in zip((A, B, F, H), "ABFH"))
    n, m = B.shape
    if A.shape != (n, n) or F.shape[1] != n or H.shape != (F.shape[0], m):
        raise DimensionMismatch(
            f"inconsistent shapes A{A.shape} B{B.shape} F{F.shape} H{H.shape}"
        )
    Psi = H.T @ H
    Psi_inv = _pd_inverse(Psi, SingularPsi, "Psi = H^T H")
    S = F.T @ H
    Abar = A - B @ Psi_inv @ S.T
    R = B @ Psi_inv @ B.T
    Qbar = F.T @ F - S @ Psi_inv @ S.T
    X = _solve_reduced(Abar, (R + R.T) / 2, (Qbar + Qbar.T) / 2, tol)
    K = -Psi_inv @ (X @ B + S).T
    if n and spectral_abscissa(A + B @ K) >= 0:
        raise NoStableSubspace("Riccati solution is not stabilizing")
    return X, K


def solve_are_d(A, C, W, V, tol: float = ARE_TOL):
    """
    Stabilizing solution of the filter-type Riccati equation.

    Solves ``A Y + Y A^T - (C Y + V W^T)^T Phi^{-1} (C Y + V W^T) + W W^T = 0``
    with ``Phi = V V^T`` and returns ``(Y, L)``, ``L = -(C Y + V W^T)^T Phi^{-1}``.
    """
    A, C, W, V = (as_matrix(M, nm) for M, nm in zip((A, C, W, V), "ACWV"))
    p, n = C.shape
    if A.shape != (n, n) or W.shape[0] != n or V.shape != (p, W.shape[1]):
        raise DimensionMismatch(
            f"inconsistent shapes A{A.shape} C{C.shape} W{W.shape} V{V.shape}"
        )
    Phi = V @ V.T
    Phi_inv = _pd_inverse(Phi, SingularPhi, "Phi = V V^T")
    S = W @ V.T
    Abar = A - S @ Phi_inv @ C
    R = C.T @ Phi_inv @ C
    Qbar = W @ W.T - S @ Phi_inv @ S.T
    # Abar Y + Y Abar^T - Y R Y + Qbar = 0 is the control form in Abar^T
    Y = _solve_reduced(Abar.T, (R + R.T) / 2, (Qbar + Qbar.T) / 2, tol)
    L = -(C @ Y + S.T).T @ Phi_inv
    if n and spectral_abscissa(A + L @ C) >= 0:
        raise NoStableSubspace("Riccati solution is not stabilizing")
    return Y, L


# ---------------------------------------------------------------------------
# Lyapunov / Sylvester
# ---------------------------------------------------------------------------

def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A^T X + X A + Q = 0`` for Hurwitz ``A``."""
    A, Q = as_matrix(A, "A"), as_matrix(Q, "Q")
    if A.size == 0:
        return np.zeros_like(A)
    if spectral_abscissa(A) >= 0:
        raise UnstableA(f"A is not Hurwitz (spectral abscissa {spectral_abscissa(A):.3e})")
    X = la.solve_continuous_lyapunov(A.T, -Q)
    if np.allclose(Q, Q.T, rtol=0, atol=1e-14 * (1 + np.abs(Q).max())):
        X = (X + X.T) / 2
    return X


def solve_sylvester(A, B, C) -> np.ndarray:
    """Solve ``A X + X B + C = 0``."""
    A, B, C = as_matrix(A, "A"), as_matrix(B, "B"), as_matrix(C, "C")
    if C.shape != (A.shape[0], B.shape[0]):
        raise DimensionMismatch(f"C must be {A.shape[0]}x{B.shape[0]}, got {C.shape}")
    if C.size == 0:
        return np.zeros_like(C)
    ea, eb = np.linalg.eigvals(A), np.linalg.eigvals(B)
    gap = np.min(np.abs(ea[:, None] + eb[None, :]))
    if gap < 1e-10 * (1 + np.linalg.norm(A, 1) + np.linalg.norm(B, 1)):
        raise SpectraOverlap(f"spectra of A and -B overlap (gap {gap:.3e})")
    return la.solve_sylvester(A, B, -C)


# ---------------------------------------------------------------------------
# System-level quantities
# ---------------------------------------------------------------------------

def controllability_gramian(sys: StateSpace) -> np.ndarray:
    return solve_lyapunov(sys.A.T, sys.B @ sys.B.T)


def observability_gramian(sys: StateSpace) -> np.ndarray:
    return solve_lyapunov(sys.A, sys.C.T @ sys.C)


def h2_norm(sys: StateSpace, gramian: str = "controllability") -> float:
    """H2 norm of a stable, strictly proper realization."""
    if sys.D.size and np.abs(sys.D).max() > 0:
        raise NonzeroD("H2 norm requires a strictly proper realization")
    if sys.nstates == 0:
        return 0.0
    if gramian == "controllability":
        P = controllability_gramian(sys)
        val = np.trace(sys.C.T @ sys.C @ P)
    else:
        Qo = observability_gramian(sys)
        val = np.trace(sys.B @ sys.B.T @ Qo)
    return float(np.sqrt(max(val, 0.0)))


def freq_response(sys: StateSpace, omega: float) -> np.ndarray:
    """``C (j omega I - A)^{-1} B + D``."""
    n = sys.nstates
    if n:
        gap = np.min(np.abs(1j * omega - np.linalg.eigvals(sys.A)))
        if gap < 1e-12 * (1 + np.linalg.norm(sys.A, 1)):
            raise ResonantFrequency(f"j*{omega} is an eigenvalue of A")
    return sys(1j * omega)


def spectral_abscissa(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def assemble_linear_operator(apply: Callable[[np.ndarray], np.ndarray],
                             dim_in: int, dim_out: int) -> np.ndarray:
    """Materialize a linear map by probing it with the unit basis vectors."""
    M = np.empty((dim_out, dim_in))
    for k in range(dim_in):
        e = np.zeros(dim_in)
        e[k] = 1.0
        col = np.asarray(apply(e), dtype=float).ravel()
        if col.size != dim_out:
            raise DimensionMismatch(f"apply returned length {col.size}, expected {dim_out}")
        M[:, k] = col
    return M


def sym_sqrt(M: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix."""
    w, U = np.linalg.eigh((M + M.T) / 2)
    return (U * np.sqrt(np.clip(w, 0, None))) @ U.T


def sym_inv_sqrt(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh((M + M.T) / 2)
    return (U / np.sqrt(w)) @ U.T


def frequency_grid(lo: float = 1e-3, hi: float = 1e3, n: int = 20) -> np.ndarray:
    """``n`` log-spaced frequencies in ``[lo, hi]`` with ``omega = 0`` prepended."""
    if not 0 < lo < hi or n < 1:
        raise ValueError(f"bad frequency grid ({lo}, {hi}, {n})")
    return np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), n)])
