"""
Three-step solution of the 2N coupled Riccati equations.

For each player ``i`` the unknowns are split as::

    X_i = [[Xc_i, Xb_i], [Xb_i^T, Xh_i]]     K_i = [Kb_i, Kh_i]
    Y_i = [[Yh_i, Yb_i], [Yb_i^T, Yc_i]]     L_i = [[Lh_i], [Lb_i]]

where the hat blocks (``h``) are the lower-right / upper-left parts on the
state blocks ``i..N`` / ``1..i``.  Step 1 obtains the hats from small Riccati
equations solved along the chain (forward for the control side, backward for
the filter side), step 2 obtains the bars (``b``) from one square linear
system, and step 3 obtains the remaining corner blocks (``c``) from Lyapunov
equations.

Indices ``i`` are 1-based throughout this module.
"""
from __future__ import annotations

import warnings

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from trilqg import matops
from trilqg.errors import (
    PSDViolation,
    RiccatiError,
    SingularStep2System,
    UnstableA,
    UnstableDiagonalBlock,
)
from trilqg.plant import TriangularPlant

STEP2_COND_LIMIT = 1e12
PSD_FLOOR = 1e-8


@dataclass
class Hats:
    Xh: dict[int, np.ndarray]
    Kh: dict[int, np.ndarray]
    Yh: dict[int, np.ndarray]
    Lh: dict[int, np.ndarray]


@dataclass
class Bars:
    Kb: dict[int, np.ndarray]
    Xb: dict[int, np.ndarray]
    Lb: dict[int, np.ndarray]
    Yb: dict[int, np.ndarray]
    condition: float = 1.0


@dataclass
class Checks:
    Xc: dict[int, np.ndarray]
    Yc: dict[int, np.ndarray]


@dataclass
class GainSet:
    """Solutions ``X_i, K_i, Y_i, L_i`` indexed 1..N."""

    X: dict[int, np.ndarray]
    K: dict[int, np.ndarray]
    Y: dict[int, np.ndarray]
    L: dict[int, np.ndarray]
    plant: TriangularPlant = field(repr=False)
    step2_condition: float = 1.0

    @property
    def N(self) -> int:
        return self.plant.N

    def akl(self, i: int) -> np.ndarray:
        """``A + B^{down i} K_i + L_{i-1} C_{up i-1}`` for i = 1..N+1."""
        return akl(self.plant, self.K, self.L, i)

    def split(self, i: int) -> dict[str, np.ndarray]:
        """Hat/bar/check blocks of player ``i``'s matrices (inverse of assembly)."""
        pl = self.plant
        ns = pl.np_
        lo, hi = ns.up(i - 1), ns.down(i)
        yl, yh = ns.up(i), ns.down(i + 1)
        return {
            "Xc": self.X[i][lo, lo], "Xb": self.X[i][lo, hi], "Xh": self.X[i][hi, hi],
            "Kb": self.K[i][:, lo], "Kh": self.K[i][:, hi],
            "Yh": self.Y[i][yl, yl], "Yb": self.Y[i][yl, yh], "Yc": self.Y[i][yh, yh],
            "Lh": self.L[i][yl, :], "Lb": self.L[i][yh, :],
        }


def akl(pl: TriangularPlant, K, L, i: int) -> np.ndarray:
    M = pl.A.copy()
    if i <= pl.N:
        M += pl.B[:, pl.mp.down(i)] @ K[i]
    if i >= 2:
        M += L[i - 1] @ pl.C[pl.pp.up(i - 1), :]
    return M


# ---------------------------------------------------------------------------
# Step 1
# ---------------------------------------------------------------------------

def step1_sequential(pl: TriangularPlant, tol: float = matops.ARE_TOL) -> Hats:
    """Hat blocks from the chain of reduced Riccati equations."""
    N, ns, ms, ps = pl.N, pl.np_, pl.mp, pl.pp
    A, B, C, H, V = pl.A, pl.B, pl.C, pl.H, pl.V
    Xh, Kh, Yh, Lh = {}, {}, {}, {}

    def run(side, i, fn, *args):
        try:
            return fn(*args, tol=tol)
        except RiccatiError as exc:
            raise exc.annotate(side, i)

    Xh[1], Kh[1] = run("control", 1, matops.solve_are_p, A, B, pl.F, H)
    for i in range(2, N + 1):
        # Kh^b_{i-1}: columns of Kh_{i-1} past state block i-1
        Kb_prev = Kh[i - 1][:, ns.sizes[i - 2]:]
        Fi = -H[:, ms.down(i - 1)] @ Kb_prev
        d, dm = ns.down(i), ms.down(i)
        Xh[i], Kh[i] = run("control", i, matops.solve_are_p, A[d, d], B[d, dm], Fi, H[:, dm])

    Yh[N], Lh[N] = run("filter", N, matops.solve_are_d, A, C, pl.W, V)
    for i in range(N - 1, 0, -1):
        Lb_next = Lh[i + 1][: ns.size_up(i), :]
        Wi = -Lb_next @ V[ps.up(i + 1), :]
        u, up_ = ns.up(i), ps.up(i)
        Yh[i], Lh[i] = run("filter", i, matops.solve_are_d, A[u, u], C[up_, u], Wi, V[up_, :])
    return Hats(Xh, Kh, Yh, Lh)


# ---------------------------------------------------------------------------
# Step 2
# ---------------------------------------------------------------------------

def _bar_shapes(pl: TriangularPlant):
    """Ordered list of (name, index, shape) for the step-2 unknowns."""
    N, ns, ms, ps = pl.N, pl.np_, pl.mp, pl.pp
    out = []
    for i in range(2, N + 1):
        out.append(("Kb", i, (ms.size_down(i), ns.size_up(i - 1))))
        out.append(("Xb", i, (ns.size_up(i - 1), ns.size_down(i))))
    for i in range(1, N):
        out.append(("Lb", i, (ns.size_down(i + 1), ps.size_up(i))))
        out.append(("Yb", i, (ns.size_up(i), ns.size_down(i + 1))))
    return out


def _unpack(pl, shapes, v):
    bars = {"Kb": {}, "Xb": {}, "Lb": {}, "Yb": {}}
    k = 0
    for name, i, shp in shapes:
        size = shp[0] * shp[1]
        bars[name][i] = v[k:k + size].reshape(shp, order="F")
        k += size
    N, ns, ms, ps = pl.N, pl.np_, pl.mp, pl.pp
    bars["Kb"][1] = np.zeros((ms.total, 0))
    bars["Lb"][N] = np.zeros((0, ps.total))
    return bars


def step2_equations(pl: TriangularPlant, hats: Hats, bars: dict) -> list[tuple[str, int, np.ndarray]]:
    """
    Left-hand sides of the bar equations, in the same order as the unknowns:
    for i = 2..N the control-gain block row and the off-diagonal Lyapunov
    block, then for i = 1..N-1 their filter counterparts.
    """
    N, ns, ms, ps = pl.N, pl.np_, pl.mp, pl.pp
    A, B, C = pl.A, pl.B, pl.C
    Psi, Phi = pl.Psi, pl.Phi
    Xh, Kh, Yh, Lh = hats.Xh, hats.Kh, hats.Yh, hats.Lh
    Kb, Xb, Lb, Yb = bars["Kb"], bars["Xb"], bars["Lb"], bars["Yb"]

    def AhK(i):
        d = ns.down(i)
        return A[d, d] + B[d, ms.down(i)] @ Kh[i]

    def AhL(i):
        u = ns.up(i)
        return A[u, u] + Lh[i] @ C[ps.up(i), u]

    def AbL(i):
        return A[ns.down(i + 1), ns.up(i)] + Lb[i] @ C[ps.up(i), ns.up(i)]

    def AbK(i):
        return A[ns.down(i), ns.up(i - 1)] + B[ns.down(i), ms.down(i)] @ Kb[i]

    eqs = []
    for i in range(2, N + 1):
        ni1 = ns.sizes[i - 2]
        R = np.hstack([Kb[i - 1], Kh[i - 1][:, :ni1]])       # K_{i-1} E^{up i-1}
        Kb_hat_prev = Kh[i - 1][:, ni1:]
        dm, dm1 = ms.down(i), ms.down(i - 1)
        e_gain = Kb[i].T @ Psi[dm, dm] + Xb[i] @ B[ns.down(i), dm] - R.T @ Psi[dm1, dm]
        e_lyap = (AhL(i - 1).T @ Xb[i] + Xb[i] @ AhK(i) + AbL(i - 1).T @ Xh[i]
                  + R.T @ (Psi[dm1, dm1] @ Kb_hat_prev - Psi[dm1, dm] @ Kh[i]))
        eqs.append(("control_gain", i, e_gain))
        eqs.append(("control_lyap", i, e_lyap))
    for i in range(1, N):
        nu = ns.size_up(i)
        S = np.vstack([Lh[i + 1][nu:, :], Lb[i + 1]])         # E_{down i+1} L_{i+1}
        Lb_hat_next = Lh[i + 1][:nu, :]
        up, up1 = ps.up(i), ps.up(i + 1)
        e_gain = Phi[up, up] @ Lb[i].T + C[up, ns.up(i)] @ Yb[i] - Phi[up, up1] @ S.T
        e_lyap = (AhL(i) @ Yb[i] + Yb[i] @ AhK(i + 1).T + Yh[i] @ AbK(i + 1).T
                  + (Lb_hat_next @ Phi[up1, up1] - Lh[i] @ Phi[up, up1]) @ S.T)
        eqs.append(("filter_gain", i, e_gain))
        eqs.append(("filter_lyap", i, e_lyap))
    return eqs


def _flatten(eqs) -> np.ndarray:
    if not eqs:
        return np.zeros(0)
    return np.concatenate([e.ravel(order="F") for _, _, e in eqs])


def step2_operator(pl: TriangularPlant, hats: Hats) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and right-hand side of the (affine) bar system ``M v = rhs``."""
    shapes = _bar_shapes(pl)
    dim = sum(s[0] * s[1] for _, _, s in shapes)

    def f(v):
        return _flatten(step2_equations(pl, hats, _unpack(pl, shapes, v)))

    f0 = f(np.zeros(dim))
    M = matops.assemble_linear_operator(lambda v: f(v) - f0, dim, f0.size)
    return M, -f0


def _pow2_scale(v: np.ndarray) -> np.ndarray:
    v = np.where(v > 0, v, 1.0)
    return 2.0 ** (-np.round(np.log2(v)))


def solve_step2_system(M: np.ndarray, rhs: np.ndarray,
                       cond_limit: float = STEP2_COND_LIMIT,
                       lin_tol: float | None = None) -> tuple[np.ndarray, float]:
    """
    LU solve with one refinement pass.

    Rows and columns are first scaled by powers of two so that every row and
    column has max-abs entry near 1.  The unknowns mix gain and Riccati blocks
    whose magnitudes can differ by orders of magnitude, and without this the
    condition estimate mostly measures units rather than solvability.

    Raises SingularStep2System if the 1-norm condition estimate of the
    equilibrated matrix exceeds ``cond_limit`` or, when ``lin_tol`` is given,
    if the refined relative residual ``|Mx - rhs| / (1 + |M||x| + |rhs|)``
    exceeds it.
    """
    if M.size == 0:
        return np.zeros(0), 1.0
    if not np.all(np.isfinite(M)):
        raise SingularStep2System("step-2 operator has non-finite entries", condition=np.inf)
    r = _pow2_scale(np.abs(M).max(axis=1))
    c = _pow2_scale(np.abs(M * r[:, None]).max(axis=0))
    S = M * r[:, None] * c[None, :]
    b = rhs * r
    with warnings.catch_warnings():
        # singularity is reported through the condition estimate below
        warnings.simplefilter("ignore", la.LinAlgWarning)
        lu, piv = la.lu_factor(S, check_finite=False)
    rcond, info = la.lapack.dgecon(lu, np.linalg.norm(S, 1), norm="1")
    cond = np.inf if rcond == 0 or not np.isfinite(rcond) else 1.0 / rcond
    if cond > cond_limit:
        raise SingularStep2System(
            f"step-2 linear system is singular or ill-conditioned (cond ~ {cond:.3e})",
            condition=cond,
        )
    y = la.lu_solve((lu, piv), b)
    y = y + la.lu_solve((lu, piv), b - S @ y)
    x = c * y
    if lin_tol is not None:
        rel = np.linalg.norm(M @ x - rhs, 1) / (
            1 + np.linalg.norm(M, 1) * np.linalg.norm(x, 1) + np.linalg.norm(rhs, 1))
        if not rel <= lin_tol:
            raise SingularStep2System(
                f"step-2 residual {rel:.3e} exceeds tolerance {lin_tol:.1e} (cond ~ {cond:.3e})",
                condition=cond,
            )
    return x, cond


def step2_linear(pl: TriangularPlant, hats: Hats,
                 cond_limit: float = STEP2_COND_LIMIT, lin_tol: float | None = None) -> Bars:
    """Bar blocks from one dense linear solve."""
    shapes = _bar_shapes(pl)
    M, rhs = step2_operator(pl, hats)
    v, cond = solve_step2_system(M, rhs, cond_limit, lin_tol)
    b = _unpack(pl, shapes, v)
    return Bars(b["Kb"], b["Xb"], b["Lb"], b["Yb"], condition=cond)


def _bars_dict(bars: Bars) -> dict:
    return {"Kb": bars.Kb, "Xb": bars.Xb, "Lb": bars.Lb, "Yb": bars.Yb}


# ---------------------------------------------------------------------------
# Step 3
# ---------------------------------------------------------------------------

def step3_lyapunov(pl: TriangularPlant, hats: Hats, bars: Bars) -> Checks:
    """Remaining corner blocks from Lyapunov equations."""
    N, ns, ms, ps = pl.N, pl.np_, pl.mp, pl.pp
    A, B, C, Psi, Phi = pl.A, pl.B, pl.C, pl.Psi, pl.Phi
    Kh, Lh = hats.Kh, hats.Lh
    Kb, Xb, Lb, Yb = bars.Kb, bars.Xb, bars.Lb, bars.Yb
    Xc, Yc = {}, {}
    for i in range(2, N + 1):
        u = ns.up(i - 1)
        AhL = A[u, u] + Lh[i - 1] @ C[ps.up(i - 1), u]
        AbL = A[ns.down(i), u] + Lb[i - 1] @ C[ps.up(i - 1), u]
        R = np.hstack([Kb[i - 1], Kh[i - 1][:, :ns.sizes[i - 2]]])
        dm, dm1 = ms.down(i), ms.down(i - 1)
        Q = (AbL.T @ Xb[i].T + Xb[i] @ AbL - Kb[i].T @ Psi[dm, dm] @ Kb[i]
             + R.T @ Psi[dm1, dm1] @ R)
        try:
            Xc[i] = matops.solve_lyapunov(AhL, (Q + Q.T) / 2)
        except UnstableA as exc:
            raise UnstableDiagonalBlock(f"filter block {i - 1}: {exc}") from exc
    for i in range(1, N):
        d = ns.down(i + 1)
        AhK = A[d, d] + B[d, ms.down(i + 1)] @ Kh[i + 1]
        AbK = A[d, ns.up(i)] + B[d, ms.down(i + 1)] @ Kb[i + 1]
        S = np.vstack([Lh[i + 1][ns.size_up(i):, :], Lb[i + 1]])
        up, up1 = ps.up(i), ps.up(i + 1)
        Q = (AbK @ Yb[i] + Yb[i].T @ AbK.T - Lb[i] @ Phi[up, up] @ Lb[i].T
             + S @ Phi[up1, up1] @ S.T)
        try:
            Yc[i] = matops.solve_lyapunov(AhK.T, (Q + Q.T) / 2)
        except UnstableA as exc:
            raise UnstableDiagonalBlock(f"control block {i + 1}: {exc}") from exc
    return Checks(Xc, Yc)


# ---------------------------------------------------------------------------
# Assembly and diagnostics
# ---------------------------------------------------------------------------

def assemble_gains(pl: TriangularPlant, hats: Hats, bars: Bars, checks: Checks,
                   psd_floor: float = PSD_FLOOR) -> GainSet:
    N = pl.N
    X, K, Y, L = {}, {}, {}, {}
    for i in range(1, N + 1):
        if i == 1:
            X[i], K[i] = hats.Xh[1], hats.Kh[1]
        else:
            X[i] = np.block([[checks.Xc[i], bars.Xb[i]], [bars.Xb[i].T, hats.Xh[i]]])
            K[i] = np.hstack([bars.Kb[i], hats.Kh[i]])
        if i == N:
            Y[i], L[i] = hats.Yh[N], hats.Lh[N]
        else:
            Y[i] = np.block([[hats.Yh[i], bars.Yb[i]], [bars.Yb[i].T, checks.Yc[i]]])
            L[i] = np.vstack([hats.Lh[i], bars.Lb[i]])
    for name, mats in (("X", X), ("Y", Y)):
        for i, M in mats.items():
            w = np.linalg.eigvalsh((M + M.T) / 2)
            if w.min() < -psd_floor * (1 + np.linalg.norm(M, 2)):
                raise PSDViolation(f"{name}_{i} has eigenvalue {w.min():.3e}", i, float(w.min()))
    return GainSet(X, K, Y, L, pl, step2_condition=bars.condition)


def solve_coupled(pl: TriangularPlant, tol: float = matops.ARE_TOL,
                  cond_limit: float = STEP2_COND_LIMIT, lin_tol: float | None = None) -> GainSet:
    """Run all three steps and assemble the gains."""
    hats = step1_sequential(pl, tol)
    bars = step2_linear(pl, hats, cond_limit, lin_tol)
    checks = step3_lyapunov(pl, hats, bars)
    return assemble_gains(pl, hats, bars, checks)


@dataclass
class EquationResidual:
    name: str
    index: int
    absolute: float
    scale: float

    @property
    def relative(self) -> float:
        return self.absolute / self.scale

    def to_dict(self) -> dict:
        return {"name": self.name, "index": self.index, "absolute": self.absolute,
                "scale": self.scale, "relative": self.relative}


@dataclass
class StepReport:
    residuals: list[EquationResidual]
    step2_condition: float
    stability_margins: dict[int, float]

    @property
    def max_relative(self) -> float:
        return max((r.relative for r in self.residuals), default=0.0)

    def to_dict(self) -> dict:
        return {
            "residuals": [r.to_dict() for r in self.residuals],
            "max_relative_residual": self.max_relative,
            "step2_condition": self.step2_condition,
            "spectral_abscissa": {str(k): v for k, v in self.stability_margins.items()},
        }


def _res(name, i, terms) -> EquationResidual:
    total = sum(terms)
    scale = 1.0 + sum(np.linalg.norm(t) for t in terms)
    return EquationResidual(name, i, float(np.linalg.norm(total)), float(scale))


def control_terms(pl: TriangularPlant, gains: GainSet, i: int):
    """Additive terms of the closed-loop Lyapunov and gain forms of control equation i."""
    ms = pl.mp
    X, K = gains.X[i], gains.K[i]
    Psi = pl.Psi
    AKL = gains.akl(i)
    if i == 1:
        G = pl.F + pl.H @ K
        cross = pl.F.T @ pl.H
    else:
        G = pl.H[:, ms.down(i)] @ K - pl.H[:, ms.down(i - 1)] @ gains.K[i - 1]
        cross = -gains.K[i - 1].T @ Psi[ms.down(i - 1), ms.down(i)]
    lyap = [AKL.T @ X, X @ AKL, G.T @ G]
    gain = [K.T @ Psi[ms.down(i), ms.down(i)], X @ pl.B[:, ms.down(i)], cross]
    return lyap, gain


def filter_terms(pl: TriangularPlant, gains: GainSet, i: int):
    ps = pl.pp
    Y, L = gains.Y[i], gains.L[i]
    Phi = pl.Phi
    AKL = gains.akl(i + 1)
    if i == pl.N:
        G = L @ pl.V + pl.W
        cross = pl.V @ pl.W.T
    else:
        G = L @ pl.V[ps.up(i), :] - gains.L[i + 1] @ pl.V[ps.up(i + 1), :]
        cross = -Phi[ps.up(i), ps.up(i + 1)] @ gains.L[i + 1].T
    lyap = [AKL @ Y, Y @ AKL.T, G @ G.T]
    gain = [Phi[ps.up(i), ps.up(i)] @ L.T, pl.C[ps.up(i), :] @ Y, cross]
    return lyap, gain


def residuals(pl: TriangularPlant, gains: GainSet) -> StepReport:
    """
    Substitute the gains into all 2N equations (closed-loop Lyapunov form plus
    gain identity).  Each residual is reported with the scale
    ``1 + sum of Frobenius norms of its additive terms``.
    """
    out = []
    for i in range(1, pl.N + 1):
        lyap, gain = control_terms(pl, gains, i)
        out.append(_res("control_lyap", i, lyap))
        out.append(_res("control_gain", i, gain))
    for i in range(1, pl.N + 1):
        lyap, gain = filter_terms(pl, gains, i)
        out.append(_res("filter_lyap", i, lyap))
        out.append(_res("filter_gain", i, gain))
    margins = {i: matops.spectral_abscissa(gains.akl(i)) for i in range(1, pl.N + 2)}
    return StepReport(out, gains.step2_condition, margins)
