"""
Independent optimality certification for a synthesized controller.

The checks fall in three groups:

* inner / co-inner factors ``U_i``, ``V_j`` and the factorization identities
  ``G12 E^{down i} = U_1...U_i M_i^{-1}`` and ``E_{up j} G21 = N_j^{-1} V_j...V_N``;
* projection residuals ``P'_{i,j} = (calA, Lambda_j, Gamma_i, 0)``, whose
  diagonal entries vanish exactly at the optimum, together with the residual
  norms that telescope to the optimal cost;
* a certainty-equivalence identity and a brute-force probe that perturbs the
  controller inside the set of triangular controllers.

Every check returns a number; the caller compares it with a threshold.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from trilqg import matops
from trilqg.coupled_riccati import GainSet
from trilqg.errors import (IndexOutOfDiagram, PerturbationDestabilized, SingularPhiBlock,
                           SingularPsiBlock, UnstableFactor)
from trilqg.matops import StateSpace
from trilqg.plant import TriangularPlant
from trilqg.structure import Partition
from trilqg.synthesis import ClosedLoop, Controller, build_controller, closed_loop

SCHEMA_VERSION = 1

INNER_TOL = 1e-8
FACTOR_TOL = 1e-8
PROJECTION_TOL = 1e-8
NORM_TOL = 1e-6
CE_TOL = 1e-8
PERTURBATION_TOL = 1e-9


def _pd_sqrt_pair(M: np.ndarray, err, what: str):
    w = np.linalg.eigvalsh((M + M.T) / 2)
    if w.min() <= 1e-12 * (1 + np.abs(w).max()):
        raise err(f"{what} is singular (min eigenvalue {w.min():.3e})")
    return matops.sym_sqrt(M), matops.sym_inv_sqrt(M)


def _max_norm(values) -> float:
    return float(max((np.linalg.norm(v, 2) for v in values), default=0.0))


# ---------------------------------------------------------------------------
# Shared data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuredSelectors:
    """``calK_i``, ``calL_j``, ``Jt_i``, ``Jh_j`` on the n(N+1) closed-loop state."""

    K: dict[int, np.ndarray]
    L: dict[int, np.ndarray]
    Jt: dict[int, np.ndarray]
    Jh: dict[int, np.ndarray]


def structured_selectors(pl: TriangularPlant, gains: GainSet) -> StructuredSelectors:
    N, n, m, p = pl.N, pl.n, pl.m, pl.p
    ms, ps = pl.mp, pl.pp
    nc = n * (N + 1)

    def EK(i):
        out = np.zeros((m, n))
        if i <= N:
            out[ms.down(i), :] = gains.K[i]
        return out

    def blk(k):
        return slice((k - 1) * n, k * n)

    calK, calL, Jt, Jh = {}, {}, {}, {}
    for i in range(1, N + 1):
        row = np.zeros((m, nc))
        for k in range(i, N + 1):
            row[:, blk(k)] = EK(k + 1) - EK(k)
        row[:, blk(N + 1)] = EK(i)
        calK[i] = row[ms.down(i), :]
    for j in range(1, N + 1):
        pj = ps.size_up(j)
        col = np.zeros((nc, pj))
        for k in range(1, N + 2):
            src = min(k, j)
            col[blk(k), :ps.size_up(src)] = gains.L[src]
        calL[j] = col
    for i in range(1, N + 2):
        J = np.zeros((n, nc))
        if i >= 2:
            J[:, blk(i - 1)] = np.eye(n)
        J[:, blk(N + 1)] -= np.eye(n)
        Jt[i] = J
    for j in range(0, N + 1):
        J = np.zeros((nc, n))
        for k in range(j + 1, N + 2):
            J[blk(k), :] = np.eye(n)
        Jh[j] = J
    return StructuredSelectors(calK, calL, Jt, Jh)


@dataclass
class Context:
    """Everything the individual checks share, built once per (plant, gains, controller)."""

    plant: TriangularPlant
    gains: GainSet
    controller: Controller
    cl: ClosedLoop
    sel: StructuredSelectors
    psi_half: dict[int, np.ndarray]
    psi_inv_half: dict[int, np.ndarray]
    phi_half: dict[int, np.ndarray]
    phi_inv_half: dict[int, np.ndarray]
    _factors: "FactorSet | None" = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.plant.N

    def gamma(self, i: int) -> np.ndarray:
        if i == 0:
            return self.cl.calF
        return -self.psi_half[i] @ self.sel.K[i]

    def lam(self, j: int) -> np.ndarray:
        if j == self.N + 1:
            return self.cl.calW
        return -self.sel.L[j] @ self.phi_half[j]

    @property
    def factors(self) -> "FactorSet":
        if self._factors is None:
            self._factors = _build_factors(self)
        return self._factors


def build_context(pl: TriangularPlant, gains: GainSet, controller: Controller | None = None) -> Context:
    if controller is None:
        controller = build_controller(pl, gains)
    cl = closed_loop(pl, controller)
    psi_h, psi_ih, phi_h, phi_ih = {}, {}, {}, {}
    for i in range(1, pl.N + 1):
        Hd = pl.H[:, pl.mp.down(i)]
        psi_h[i], psi_ih[i] = _pd_sqrt_pair(Hd.T @ Hd, SingularPsiBlock, f"Psi block {i}")
        Vu = pl.V[pl.pp.up(i), :]
        phi_h[i], phi_ih[i] = _pd_sqrt_pair(Vu @ Vu.T, SingularPhiBlock, f"Phi block {i}")
    return Context(pl, gains, controller, cl, structured_selectors(pl, gains),
                   psi_h, psi_ih, phi_h, phi_ih)


# ---------------------------------------------------------------------------
# Inner / co-inner factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorSet:
    """Factor lists indexed from 0 (entry ``k`` belongs to player ``k+1``)."""

    U: list[StateSpace]
    Minv: list[StateSpace]
    V: list[StateSpace]
    Ninv: list[StateSpace]


def _build_factors(ctx: Context) -> FactorSet:
    pl, g, N = ctx.plant, ctx.gains, ctx.N
    ms, ps, n = pl.mp, pl.pp, pl.n
    cl = ctx.cl
    U, Minv, V, Ninv = [], [], [], []
    for i in range(1, N + 1):
        Bd = pl.B[:, ms.down(i)]
        if i == 1:
            C_U = pl.F + pl.H @ g.K[1]
            D_U = pl.H @ ctx.psi_inv_half[1]
        else:
            # rows of the "from i-1 down" input block
            md = ms.size_down(i - 1)
            off = ms.size_down(i - 1) - ms.size_down(i)
            Ki = np.zeros((md, n))
            Ki[off:, :] = g.K[i]
            C_U = ctx.psi_half[i - 1] @ (Ki - g.K[i - 1])
            S = np.zeros((md, ms.size_down(i)))
            S[off:, :] = np.eye(ms.size_down(i))
            D_U = ctx.psi_half[i - 1] @ S @ ctx.psi_inv_half[i]
        U.append(StateSpace(g.akl(i), Bd @ ctx.psi_inv_half[i], C_U, D_U))
        Minv.append(StateSpace(cl.calA, cl.calB[:, ms.down(i)],
                               -ctx.psi_half[i] @ ctx.sel.K[i], ctx.psi_half[i]))
    for j in range(1, N + 1):
        Cu = pl.C[ps.up(j), :]
        if j == N:
            B_V = pl.W + g.L[N] @ pl.V
            D_V = ctx.phi_inv_half[N] @ pl.V
        else:
            pj, pj1 = ps.size_up(j), ps.size_up(j + 1)
            Lj = np.zeros((n, pj1))
            Lj[:, :pj] = g.L[j]
            B_V = (Lj - g.L[j + 1]) @ ctx.phi_half[j + 1]
            S = np.eye(pj, pj1)
            D_V = ctx.phi_inv_half[j] @ S @ ctx.phi_half[j + 1]
        V.append(StateSpace(g.akl(j + 1), B_V, ctx.phi_inv_half[j] @ Cu, D_V))
        Ninv.append(StateSpace(cl.calA, -ctx.sel.L[j] @ ctx.phi_half[j],
                               cl.calC[ps.up(j), :], ctx.phi_half[j]))
    return FactorSet(U, Minv, V, Ninv)


def build_factors(pl: TriangularPlant, gains: GainSet, ctx: Context | None = None) -> FactorSet:
    return (ctx or build_context(pl, gains)).factors


def check_inner(U: StateSpace, freqs: Sequence[float], tol: float = 1e-10, co: bool = False) -> float:
    """
    Max over ``freqs`` of ``||U(jw)^H U(jw) - I||_2`` (``U U^H`` when ``co``).

    ``tol`` is the stability margin: a factor whose spectral abscissa is not
    below ``-tol`` raises UnstableFactor.
    """
    if U.nstates and matops.spectral_abscissa(U.A) >= -tol:
        raise UnstableFactor(f"factor has spectral abscissa {matops.spectral_abscissa(U.A):.3e}")
    k = U.noutputs if co else U.ninputs
    worst = 0.0
    for w in freqs:
        G = U(1j * w)
        P = G @ G.conj().T if co else G.conj().T @ G
        worst = max(worst, float(np.linalg.norm(P - np.eye(k), 2)))
    return worst


def _chain(systems: Sequence[StateSpace], s: complex) -> np.ndarray:
    out = systems[0](s)
    for sys in systems[1:]:
        out = out @ sys(s)
    return out


def factorization_defects(ctx: Context, freqs: Sequence[float]) -> dict[str, list[float]]:
    """Relative defects of both factorization identities, one entry per index."""
    fs, cl, pl = ctx.factors, ctx.cl, ctx.plant
    left, right = [], []
    for i in range(1, ctx.N + 1):
        G = cl.G12.select(cols=pl.mp.down(i))
        worst = 0.0
        for w in freqs:
            s = 1j * w
            lhs = G(s)
            rhs = _chain(fs.U[:i] + [fs.Minv[i - 1]], s)
            worst = max(worst, np.linalg.norm(lhs - rhs) / (1 + np.linalg.norm(lhs) + np.linalg.norm(rhs)))
        left.append(float(worst))
    for j in range(1, ctx.N + 1):
        G = cl.G21.select(rows=pl.pp.up(j))
        worst = 0.0
        for w in freqs:
            s = 1j * w
            lhs = G(s)
            rhs = _chain([fs.Ninv[j - 1]] + fs.V[j - 1:], s)
            worst = max(worst, np.linalg.norm(lhs - rhs) / (1 + np.linalg.norm(lhs) + np.linalg.norm(rhs)))
        right.append(float(worst))
    return {"control_side": left, "filter_side": right}


# ---------------------------------------------------------------------------
# Projection residuals
# ---------------------------------------------------------------------------

def in_diagram(N: int, i: int, j: int) -> bool:
    return (0 <= i < j <= N + 1) or (1 <= i == j <= N)


@dataclass(frozen=True)
class ProjectionResidual:
    i: int
    j: int
    realization: StateSpace

    def sampled_norm(self, freqs: Sequence[float]) -> float:
        return _max_norm(self.realization(1j * w) for w in freqs)

    def scale(self, freqs: Sequence[float]) -> float:
        """Size of the terms whose product forms each sample."""
        r = self.realization
        n = r.nstates
        worst = 0.0
        for w in freqs:
            inner = np.linalg.solve(1j * w * np.eye(n) - r.A, r.B)
            worst = max(worst, np.linalg.norm(r.C) * np.linalg.norm(inner))
        return 1.0 + float(worst)

    def relative_norm(self, freqs: Sequence[float]) -> float:
        return self.sampled_norm(freqs) / self.scale(freqs)

    @property
    def h2(self) -> float:
        return matops.h2_norm(self.realization)


def projection_residual(pl: TriangularPlant, gains: GainSet, i: int, j: int,
                        ctx: Context | None = None) -> ProjectionResidual:
    if not in_diagram(pl.N, i, j):
        raise IndexOutOfDiagram(f"(i, j) = ({i}, {j}) is not a node of the subspace diagram for N={pl.N}")
    ctx = ctx or build_context(pl, gains)
    lam, gam = ctx.lam(j), ctx.gamma(i)
    return ProjectionResidual(i, j, StateSpace(ctx.cl.calA, lam, gam, np.zeros((gam.shape[0], lam.shape[1]))))


def vertical_residual(ctx: Context, i: int, j: int) -> StateSpace:
    """``R_{(i-1,j) -> (i,j)}``."""
    N = ctx.N
    if not (1 <= i <= N and i <= j <= N + 1):
        raise IndexOutOfDiagram(f"no vertical edge into ({i}, {j})")
    U = ctx.factors.U[i - 1]
    B = -ctx.sel.Jt[i] @ ctx.lam(j)
    return StateSpace(U.A, B, U.C, np.zeros((U.C.shape[0], B.shape[1])))


def horizontal_residual(ctx: Context, i: int, j: int) -> StateSpace:
    """
    ``R_{(i,j+1) -> (i,j)} = P'_{i,j+1} - P'_{i,j} V_j``.

    The output map is ``+Gamma_i Jh_j``; with the opposite sign the realization
    equals the negated difference (same norm).
    """
    N = ctx.N
    if not (0 <= i <= N and max(i, 1) <= j <= N):
        raise IndexOutOfDiagram(f"no horizontal edge into ({i}, {j})")
    V = ctx.factors.V[j - 1]
    C = ctx.gamma(i) @ ctx.sel.Jh[j]
    return StateSpace(V.A, V.B, C, np.zeros((C.shape[0], V.B.shape[1])))


def _LV(ctx: Context, k: int) -> np.ndarray:
    """``L_k V_{up k}`` with ``L_0 V_0 = 0`` and ``L_{N+1} V_{up N+1} = -W``."""
    pl = ctx.plant
    if k == 0:
        return np.zeros_like(pl.W)
    if k == ctx.N + 1:
        return -pl.W
    return ctx.gains.L[k] @ pl.V[pl.pp.up(k), :]


def _HK(ctx: Context, k: int) -> np.ndarray:
    """``H^{down k} K_k`` with ``H^{down 0} K_0 = -F`` and ``K_{N+1} = 0``."""
    pl = ctx.plant
    if k == 0:
        return -pl.F
    if k == ctx.N + 1:
        return np.zeros_like(pl.F)
    return pl.H[:, pl.mp.down(k)] @ ctx.gains.K[k]


def vertical_closed_form(ctx: Context, i: int, j: int) -> float:
    D = _LV(ctx, i - 1) - _LV(ctx, j)
    return float(np.trace(D.T @ ctx.gains.X[i] @ D))


def horizontal_closed_form(ctx: Context, i: int, j: int) -> float:
    T = _HK(ctx, i) - _HK(ctx, j + 1)
    return float(np.trace(T @ ctx.gains.Y[j] @ T.T))


@dataclass(frozen=True)
class ResidualNorm:
    kind: str  # "vertical" is (i-1,j)->(i,j), "horizontal" is (i,j+1)->(i,j)
    i: int
    j: int
    closed_form: float
    realization: float
    identity_defect: float

    @property
    def relative_gap(self) -> float:
        return abs(self.closed_form - self.realization) / (1 + abs(self.realization))


@dataclass(frozen=True)
class ResidualTable:
    entries: list[ResidualNorm]
    telescope: float
    g11_sq: float

    @property
    def telescope_gap(self) -> float:
        return abs(self.telescope - self.g11_sq) / max(self.g11_sq, 1e-300)

    @property
    def max_gap(self) -> float:
        return max((e.relative_gap for e in self.entries), default=0.0)

    @property
    def max_identity_defect(self) -> float:
        return max((e.identity_defect for e in self.entries), default=0.0)

    def get(self, kind: str, i: int, j: int) -> ResidualNorm:
        for e in self.entries:
            if (e.kind, e.i, e.j) == (kind, i, j):
                return e
        raise KeyError((kind, i, j))


def _edge_identity_defect(ctx: Context, kind: str, i: int, j: int, R: StateSpace,
                          freqs: Sequence[float]) -> float:
    """Sampled ``P'_{i-1,j} - U_i P'_{i,j} - R`` or ``P'_{i,j+1} - P'_{i,j} V_j - R``."""
    pl, g = ctx.plant, ctx.gains
    worst = 0.0
    if kind == "vertical":
        P0 = projection_residual(pl, g, i - 1, j, ctx).realization
        P1 = projection_residual(pl, g, i, j, ctx).realization
        U = ctx.factors.U[i - 1]
        for w in freqs:
            s = 1j * w
            a, b, r = P0(s), U(s) @ P1(s), R(s)
            worst = max(worst, np.linalg.norm(a - b - r) / (1 + np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(r)))
    else:
        P0 = projection_residual(pl, g, i, j + 1, ctx).realization
        P1 = projection_residual(pl, g, i, j, ctx).realization
        V = ctx.factors.V[j - 1]
        for w in freqs:
            s = 1j * w
            a, b, r = P0(s), P1(s) @ V(s), R(s)
            worst = max(worst, np.linalg.norm(a - b - r) / (1 + np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(r)))
    return float(worst)


def residual_norms(pl: TriangularPlant, gains: GainSet, ctx: Context | None = None,
                   freqs: Sequence[float] | None = None) -> ResidualTable:
    """
    Squared norms of every residual edge of the subspace diagram, by closed
    form and by the Gramian of its realization, plus the telescoping sum
    along ``(0,N+1) -> (1,N+1) -> (1,N) -> ... -> (1,1)``.
    """
    ctx = ctx or build_context(pl, gains)
    freqs = matops.frequency_grid() if freqs is None else freqs
    N = pl.N
    entries = []
    for i in range(1, N + 1):
        for j in range(i, N + 2):
            R = vertical_residual(ctx, i, j)
            entries.append(ResidualNorm("vertical", i, j, vertical_closed_form(ctx, i, j),
                                        matops.h2_norm(R) ** 2,
                                        _edge_identity_defect(ctx, "vertical", i, j, R, freqs)))
    for i in range(0, N + 1):
        for j in range(max(i, 1), N + 1):
            R = horizontal_residual(ctx, i, j)
            entries.append(ResidualNorm("horizontal", i, j, horizontal_closed_form(ctx, i, j),
                                        matops.h2_norm(R) ** 2,
                                        _edge_identity_defect(ctx, "horizontal", i, j, R, freqs)))
    table = ResidualTable(entries, 0.0, 0.0)
    tel = table.get("vertical", 1, N + 1).closed_form
    tel += sum(table.get("horizontal", 1, j).closed_form for j in range(1, N + 1))
    g11 = matops.h2_norm(ctx.cl.G11) ** 2
    return ResidualTable(entries, float(tel), float(g11))


# ---------------------------------------------------------------------------
# Certainty equivalence
# ---------------------------------------------------------------------------

def certainty_equivalence_check(pl: TriangularPlant, gains: GainSet, j: int,
                                ctx: Context | None = None,
                                freqs: Sequence[float] | None = None) -> float:
    """
    Relative sampled norm of ``Phat_j - Q_{x_j} N_j^{-1}``.

    ``Q_{x_j}`` maps the first ``j`` measurement blocks to player ``j``'s
    state estimate; the identity says that estimate is the least-mean-square
    estimate of the plant state given those measurements.  The reduced
    difference realization ``(calA, -calL_j Phi^{1/2}, row{-E_j, I}, 0)`` is
    sampled as well and the larger of the two defects is returned.
    """
    if not 1 <= j <= pl.N:
        raise IndexOutOfDiagram(f"estimator index {j} outside [1, {pl.N}]")
    ctx = ctx or build_context(pl, gains)
    freqs = matops.frequency_grid() if freqs is None else freqs
    n, N = pl.n, pl.N
    cl, K = ctx.cl, ctx.controller
    Lam = ctx.lam(j)
    out_sel = np.zeros((n, n * (N + 1)))
    out_sel[:, N * n:] = np.eye(n)
    Phat = StateSpace(cl.calA, Lam, out_sel, np.zeros((n, Lam.shape[1])))
    Ej = np.zeros((n, n * N))
    Ej[:, (j - 1) * n:j * n] = np.eye(n)
    Qx = StateSpace(K.A_K, K.B_K[:, pl.pp.up(j)], Ej, np.zeros((n, pl.pp.size_up(j))))
    Ninv = ctx.factors.Ninv[j - 1]
    reduced_out = out_sel.copy()
    reduced_out[:, (j - 1) * n:j * n] = -np.eye(n)
    reduced = StateSpace(cl.calA, Lam, reduced_out, np.zeros((n, Lam.shape[1])))
    worst = 0.0
    for w in freqs:
        s = 1j * w
        a, b = Phat(s), Qx(s) @ Ninv(s)
        scale = 1 + np.linalg.norm(a) + np.linalg.norm(b)
        worst = max(worst, np.linalg.norm(a - b) / scale, np.linalg.norm(reduced(s)) / scale)
    return float(worst)


# ---------------------------------------------------------------------------
# Perturbation probe
# ---------------------------------------------------------------------------

def random_lbt_q(rng: np.random.Generator, mp: Partition, pp: Partition, scale: float) -> StateSpace:
    """
    Random stable, strictly proper, lower block triangular ``Q`` (m x p).

    Each admissible scalar entry is an independent first- or second-order
    transfer function with poles in the open left half plane and numerator
    coefficients of size ``scale``.
    """
    m, p = mp.total, pp.total
    row_blk = np.repeat(np.arange(mp.N), mp.sizes)
    col_blk = np.repeat(np.arange(pp.N), pp.sizes)
    As, Bs, Cs = [], [], []
    for a in range(m):
        for b in range(p):
            if col_blk[b] > row_blk[a]:
                continue
            order = int(rng.integers(1, 3))
            if order == 1:
                A = np.array([[-rng.uniform(0.5, 5.0)]])
            else:
                a0, a1 = rng.uniform(0.5, 5.0, size=2)
                A = np.array([[0.0, 1.0], [-a0, -a1]])
            Bcol = np.zeros((order, p))
            Bcol[-1, b] = 1.0
            Crow = np.zeros((m, order))
            Crow[a, :] = scale * rng.standard_normal(order)
            As.append(A)
            Bs.append(Bcol)
            Cs.append(Crow)

    return StateSpace(la.block_diag(*As), np.vstack(Bs), np.hstack(Cs), np.zeros((m, p)))


def perturbed_loop(cl: ClosedLoop, Q: StateSpace) -> StateSpace:
    """
    ``w -> z`` after adding ``K' = -(I - Q G22)^{-1} Q`` around the nominal loop.

    ``K'`` is realized as ``v = Q(G22 v - y)``, i.e. ``Q`` driven by the
    mismatch between a copy of ``G22`` and the measurement.
    """
    A, B, C, F, W = cl.calA, cl.calB, cl.calC, cl.calF, cl.calW
    nc, nq = A.shape[0], Q.nstates
    BC = B @ Q.C
    Aall = np.block([
        [A, np.zeros((nc, nc)), BC],
        [np.zeros((nc, nc)), A, BC],
        [-Q.B @ C, Q.B @ C, Q.A],
    ])
    Ball = np.vstack([W, np.zeros((nc, W.shape[1])), -Q.B @ cl.V])
    Call = np.hstack([F, np.zeros((F.shape[0], nc)), cl.H @ Q.C])
    return StateSpace(Aall, Ball, Call, np.zeros((F.shape[0], W.shape[1])))


@dataclass(frozen=True)
class PerturbationResult:
    deltas: list[float]
    nominal: float
    skipped: int
    oracle_gap: float

    @property
    def worst(self) -> float:
        return min(self.deltas) if self.deltas else 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.deltas)) if self.deltas else 0.0

    def to_dict(self) -> dict:
        return {"worst_decrease": self.worst, "mean_increase": self.mean, "trials": len(self.deltas),
                "skipped": self.skipped, "nominal_cost_sq": self.nominal, "oracle_gap": self.oracle_gap}


def perturbation_optimality(pl: TriangularPlant, controller: Controller, trials: int = 100,
                            scale: float = 1e-3, seed: int = 0,
                            cl: ClosedLoop | None = None) -> PerturbationResult:
    """
    Probe the squared H2 cost around ``controller`` with random triangular
    Youla perturbations.

    Trial ``t`` draws from substream ``t`` of ``SeedSequence(seed)``, so results
    do not depend on how trials are scheduled.  Each delta is
    ``J'^2 - J^2``; the cost of every trial is cross-checked against the
    model-matching form ``||G11 - G12 Q G21||^2``.
    """
    cl = cl or closed_loop(pl, controller)
    nominal = matops.h2_norm(cl.G11) ** 2
    deltas, skipped, gap = [], 0, 0.0
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        Q = random_lbt_q(rng, pl.mp, pl.pp, scale)
        if not np.any(Q.C):
            # a zero perturbation leaves the loop unchanged
            deltas.append(0.0)
            continue
        sys = perturbed_loop(cl, Q)
        try:
            if matops.spectral_abscissa(sys.A) >= -1e-10:
                raise PerturbationDestabilized("perturbed loop is not stable")
        except PerturbationDestabilized:
            skipped += 1
            continue
        cost = matops.h2_norm(sys) ** 2
        oracle = matops.h2_norm(cl.G11 - cl.G12 @ Q @ cl.G21) ** 2
        gap = max(gap, abs(cost - oracle) / (1 + nominal))
        deltas.append(float(cost - nominal))
    return PerturbationResult(deltas, float(nominal), skipped, float(gap))


# ---------------------------------------------------------------------------
# Certificate
# ---------------------------------------------------------------------------

@dataclass
class CertificateCheck:
    name: str
    value: float
    threshold: float
    passed: bool
    sense: str = "<"


@dataclass
class CertificateReport:
    level: str
    checks: list[CertificateCheck] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> CertificateCheck | None:
        return next((c for c in self.checks if not c.passed), None)

    def add(self, name: str, value: float, threshold: float, sense: str = "<") -> None:
        value = float(value)
        passed = value < threshold if sense == "<" else value >= threshold
        self.checks.append(CertificateCheck(name, value, threshold, bool(passed and np.isfinite(value)), sense))

    def to_dict(self) -> dict:
        fail = self.first_failure
        return {
            "schema_version": SCHEMA_VERSION,
            "level": self.level,
            "ok": self.ok,
            "first_failure": fail.name if fail else None,
            "checks": [asdict(c) for c in self.checks],
            "details": self.details,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def certify(pl: TriangularPlant, gains: GainSet, controller: Controller | None = None,
            level: str = "full", freqs: Sequence[float] | None = None,
            trials: int = 100, scale: float = 1e-3, seed: int = 0) -> CertificateReport:
    """
    Run the verification suite.

    ``structural`` covers the frequency-domain identities (factors,
    projections, certainty equivalence); ``full`` adds residual norms,
    the cost telescope and the perturbation probe.
    """
    if level not in ("none", "structural", "full"):
        raise ValueError(f"unknown verification level {level!r}")
    report = CertificateReport(level)
    if level == "none":
        return report
    freqs = matops.frequency_grid() if freqs is None else np.asarray(freqs)
    ctx = build_context(pl, gains, controller)
    N = pl.N

    ref = build_controller(pl, gains)
    mismatch = max(np.abs(a - b).max() / (1 + np.abs(b).max())
                   for a, b in ((ctx.controller.A_K, ref.A_K), (ctx.controller.B_K, ref.B_K),
                                (ctx.controller.C_K, ref.C_K)))
    report.details["controller_mismatch"] = float(mismatch)

    fs = ctx.factors
    for i in range(1, N + 1):
        report.add(f"inner_defect[U_{i}]", check_inner(fs.U[i - 1], freqs), INNER_TOL)
    for j in range(1, N + 1):
        report.add(f"coinner_defect[V_{j}]", check_inner(fs.V[j - 1], freqs, co=True), INNER_TOL)
    fd = factorization_defects(ctx, freqs)
    for i, d in enumerate(fd["control_side"], 1):
        report.add(f"factorization_defect[G12_E_down_{i}]", d, FACTOR_TOL)
    for j, d in enumerate(fd["filter_side"], 1):
        report.add(f"factorization_defect[E_up_{j}_G21]", d, FACTOR_TOL)
    for i in range(1, N + 1):
        pr = projection_residual(pl, gains, i, i, ctx)
        report.add(f"projection_residual[P_{i}_{i}]", pr.relative_norm(freqs), PROJECTION_TOL)
    for j in range(1, N + 1):
        report.add(f"certainty_equivalence[{j}]",
                   certainty_equivalence_check(pl, gains, j, ctx, freqs), CE_TOL)

    if level == "full":
        table = residual_norms(pl, gains, ctx, freqs)
        report.add("residual_norm_gap", table.max_gap, NORM_TOL)
        report.add("residual_identity_defect", table.max_identity_defect, FACTOR_TOL)
        report.add("telescope_gap", table.telescope_gap, NORM_TOL)
        report.details["residual_norms"] = [
            {"kind": e.kind, "i": e.i, "j": e.j, "closed_form": e.closed_form,
             "realization": e.realization, "identity_defect": e.identity_defect}
            for e in table.entries
        ]
        report.details["g11_norm_sq"] = table.g11_sq
        report.details["telescope_sum"] = table.telescope
        pert = perturbation_optimality(pl, ctx.controller, trials, scale, seed, ctx.cl)
        report.details["perturbation"] = pert.to_dict()
        report.add("perturbation_worst_decrease", pert.worst,
                   -PERTURBATION_TOL * (1 + pert.nominal), sense=">=")
        report.add("perturbation_oracle_gap", pert.oracle_gap, 1e-6)
    return report
