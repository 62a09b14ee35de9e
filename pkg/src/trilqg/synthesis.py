"""
Controller and closed-loop realizations built from a solved GainSet.

Controller state is ``col(x^{K_1}, ..., x^{K_N})`` with one full-order state
estimate per player; closed-loop state is ``col(x^K, x)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from trilqg import matops
from trilqg.coupled_riccati import GainSet
from trilqg.errors import DimensionMismatch, SchemaError, UnstableClosedLoop
from trilqg.matops import StateSpace
from trilqg.plant import TriangularPlant, _matrix_to_list, _parse_matrix, _parse_sizes
from trilqg.structure import Partition, incidence_bar, incidence_zeta_mu, selector

STABILITY_MARGIN = -1e-10
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Controller:
    realization: StateSpace
    np_: Partition
    mp: Partition
    pp: Partition

    @property
    def N(self) -> int:
        return self.np_.N

    @property
    def A_K(self) -> np.ndarray:
        return self.realization.A

    @property
    def B_K(self) -> np.ndarray:
        return self.realization.B

    @property
    def C_K(self) -> np.ndarray:
        return self.realization.C

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "state_sizes": list(self.np_.sizes),
            "input_sizes": list(self.mp.sizes),
            "output_sizes": list(self.pp.sizes),
            "A_K": _matrix_to_list(self.A_K),
            "B_K": _matrix_to_list(self.B_K),
            "C_K": _matrix_to_list(self.C_K),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=1) + "\n"


def load_controller(path_or_text) -> Controller:
    text = str(path_or_text)
    if not text.lstrip().startswith("{"):
        text = Path(path_or_text).read_text()
    doc = json.loads(text)
    known = {"schema_version", "state_sizes", "input_sizes", "output_sizes", "A_K", "B_K", "C_K"}
    if set(doc) != known:
        raise SchemaError(f"controller document fields {sorted(doc)} != {sorted(known)}")
    nprt, mprt, pprt = (_parse_sizes(k, doc[k]) for k in ("state_sizes", "input_sizes", "output_sizes"))
    nK = nprt.total * nprt.N
    A_K = _parse_matrix("A_K", doc["A_K"], (nK, nK))
    B_K = _parse_matrix("B_K", doc["B_K"], (nK, pprt.total))
    C_K = _parse_matrix("C_K", doc["C_K"], (mprt.total, nK))
    return Controller(StateSpace(A_K, B_K, C_K, np.zeros((mprt.total, pprt.total))),
                      nprt, mprt, pprt)


def _embed_rows(M: np.ndarray, total: int, rng: slice) -> np.ndarray:
    out = np.zeros((total, M.shape[1]))
    out[rng, :] = M
    return out


def _embed_cols(M: np.ndarray, total: int, rng: slice) -> np.ndarray:
    out = np.zeros((M.shape[0], total))
    out[:, rng] = M
    return out


def controller_matrices(pl: TriangularPlant, gains: GainSet):
    """Blockwise assembly of ``(A_K, B_K, C_K)``."""
    N, n, ms, ps = pl.N, pl.n, pl.mp, pl.pp
    K, L = gains.K, gains.L
    BK = {i: pl.B[:, ms.down(i)] @ K[i] for i in range(1, N + 1)}
    BK[N + 1] = np.zeros((n, n))
    A_K = np.zeros((n * N, n * N))
    for r in range(1, N + 1):
        rs = slice((r - 1) * n, r * n)
        A_K[rs, rs] = pl.A + L[r] @ pl.C[ps.up(r), :] + BK[r]
        for c in range(1, r):
            A_K[rs, (c - 1) * n:c * n] = BK[c] - BK[c + 1]
    B_K = np.vstack([-_embed_cols(L[i], pl.p, ps.up(i)) for i in range(1, N + 1)])
    EK = {i: _embed_rows(K[i], pl.m, ms.down(i)) for i in range(1, N + 1)}
    EK[N + 1] = np.zeros((pl.m, n))
    C_K = np.hstack([EK[c] - EK[c + 1] for c in range(1, N + 1)])
    return A_K, B_K, C_K


def controller_matrices_literal(pl: TriangularPlant, gains: GainSet):
    """Same matrices via the materialized incidence matrices (used as a cross-check)."""
    N, n, ms, ps = pl.N, pl.n, pl.mp, pl.pp
    zeta, mu = incidence_zeta_mu(n, N)
    diag_LC = np.zeros((n * N, n * N))
    diag_BK = np.zeros((n * N, n * N))
    for i in range(1, N + 1):
        s = slice((i - 1) * n, i * n)
        diag_LC[s, s] = gains.L[i] @ pl.C[ps.up(i), :]
        diag_BK[s, s] = pl.B[:, ms.down(i)] @ gains.K[i]
    A_K = np.kron(np.eye(N), pl.A) + diag_LC + zeta @ diag_BK @ mu
    B_K = -np.vstack([gains.L[i] @ selector(ps, ps.up(i), rows=True) for i in range(1, N + 1)])
    C_K = np.hstack([selector(ms, ms.down(i)) @ gains.K[i] for i in range(1, N + 1)]) @ mu
    return A_K, B_K, C_K


def build_controller(pl: TriangularPlant, gains: GainSet) -> Controller:
    if gains.plant is not pl and gains.N != pl.N:
        raise DimensionMismatch("gains were computed for a different plant")
    A_K, B_K, C_K = controller_matrices(pl, gains)
    return Controller(StateSpace(A_K, B_K, C_K, np.zeros((pl.m, pl.p))), pl.np_, pl.mp, pl.pp)


@dataclass(frozen=True)
class ClosedLoop:
    """
    Closed loop of the plant with a controller, as a two-port::

        [ calA | calW  calB ]
        [ calF |  0     H   ]
        [ calC |  V     0   ]
    """

    calA: np.ndarray
    calB: np.ndarray
    calC: np.ndarray
    calF: np.ndarray
    calW: np.ndarray
    H: np.ndarray
    V: np.ndarray

    @property
    def G11(self) -> StateSpace:
        return StateSpace(self.calA, self.calW, self.calF, np.zeros((self.calF.shape[0], self.calW.shape[1])))

    @property
    def G12(self) -> StateSpace:
        return StateSpace(self.calA, self.calB, self.calF, self.H)

    @property
    def G21(self) -> StateSpace:
        return StateSpace(self.calA, self.calW, self.calC, self.V)

    @property
    def G22(self) -> StateSpace:
        return StateSpace(self.calA, self.calB, self.calC, np.zeros((self.calC.shape[0], self.calB.shape[1])))


def closed_loop(pl: TriangularPlant, controller: Controller, check_stability: bool = True) -> ClosedLoop:
    A_K, B_K, C_K = controller.A_K, controller.B_K, controller.C_K
    n, nK = pl.n, A_K.shape[0]
    if B_K.shape != (nK, pl.p) or C_K.shape != (pl.m, nK):
        raise DimensionMismatch("controller does not match the plant's input/output sizes")
    calA = np.block([[A_K, B_K @ pl.C], [pl.B @ C_K, pl.A]])
    calB = np.vstack([np.zeros((nK, pl.m)), pl.B])
    calC = np.hstack([np.zeros((pl.p, nK)), pl.C])
    calF = np.hstack([pl.H @ C_K, pl.F])
    calW = np.vstack([B_K @ pl.V, pl.W])
    if check_stability:
        a = matops.spectral_abscissa(calA)
        if a >= STABILITY_MARGIN:
            raise UnstableClosedLoop(
                f"closed-loop spectral abscissa {a:.3e} is not negative",
                eigenvalues=np.linalg.eigvals(calA),
            )
    return ClosedLoop(calA, calB, calC, calF, calW, pl.H, pl.V)


def block_triangularize(cl: ClosedLoop, N: int, n: int) -> np.ndarray:
    """Similarity ``mu_bar calA zeta_bar``; block upper triangular for the optimal gains."""
    if cl.calA.shape != (n * (N + 1), n * (N + 1)):
        raise DimensionMismatch(f"closed-loop state has size {cl.calA.shape[0]}, expected {n * (N + 1)}")
    zbar, mbar = incidence_bar(n, N)
    return mbar @ cl.calA @ zbar


def strictly_lower_defect(M: np.ndarray, n: int) -> float:
    nb = M.shape[0] // n
    worst = 0.0
    for r in range(nb):
        for c in range(r):
            worst = max(worst, float(np.abs(M[r * n:(r + 1) * n, c * n:(c + 1) * n]).max()))
    return worst


def diagonal_blocks(M: np.ndarray, n: int) -> list[np.ndarray]:
    return [M[k * n:(k + 1) * n, k * n:(k + 1) * n] for k in range(M.shape[0] // n)]


@dataclass(frozen=True)
class CostBreakdown:
    J_cnt_sq: float
    J_dcnt_sq: float

    @property
    def J_opt_sq(self) -> float:
        return self.J_cnt_sq + self.J_dcnt_sq

    @property
    def J_opt(self) -> float:
        return float(np.sqrt(self.J_opt_sq))

    @property
    def J_cnt(self) -> float:
        return float(np.sqrt(self.J_cnt_sq))

    @property
    def J_dcnt(self) -> float:
        return float(np.sqrt(max(self.J_dcnt_sq, 0.0)))

    def to_dict(self) -> dict:
        return {"J_opt": self.J_opt, "J_cnt": self.J_cnt, "J_dcnt": self.J_dcnt,
                "J_opt_sq": self.J_opt_sq, "J_cnt_sq": self.J_cnt_sq, "J_dcnt_sq": self.J_dcnt_sq}


def optimal_cost(pl: TriangularPlant, gains: GainSet) -> CostBreakdown:
    """
    Closed-form optimal cost split into the centralized part and the price
    of the triangular information constraint.
    """
    X, K, Y = gains.X, gains.K, gains.Y
    N, ms = pl.N, pl.mp
    cnt = np.trace(pl.W.T @ X[1] @ pl.W) + np.trace(pl.Psi @ K[1] @ Y[N] @ K[1].T)
    dcnt = 0.0
    for j in range(1, N):
        D = pl.H @ K[1] - pl.H[:, ms.down(j + 1)] @ K[j + 1]
        dcnt += np.trace(D @ Y[j] @ D.T)
    return CostBreakdown(float(cnt), float(dcnt))
