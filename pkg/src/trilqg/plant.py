"""
Problem data for the triangular LQG problem, assumption checks and JSON I/O.

The generalized plant is::

    [ z ]   [ A | W  B ] [ w ]
    [ y ] = [ F | 0  H ] [ u ]
            [ C | V  0 ]

with ``A``, ``B``, ``C`` lower block triangular over a chain of N subsystems.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trilqg.errors import ParseError, SchemaError, StructureError
from trilqg.matops import as_matrix
from trilqg.structure import Partition, default_lbt_tol, lbt_defect

MATRIX_FIELDS = ("A", "B", "C", "F", "H", "W", "V")
SIZE_FIELDS = ("state_sizes", "input_sizes", "output_sizes")

HAUTUS_EIG_TOL = 1e-9
HAUTUS_SV_TOL = 1e-8
RANK_TOL = 1e-10
AXIS_TOL = 1e-8


@dataclass(frozen=True)
class TriangularPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    H: np.ndarray
    W: np.ndarray
    V: np.ndarray
    np_: Partition
    mp: Partition
    pp: Partition

    def __post_init__(self):
        for name in MATRIX_FIELDS:
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        check_dimensions(self)

    @classmethod
    def from_sizes(cls, A, B, C, F, H, W, V, state_sizes, input_sizes, output_sizes):
        return cls(A, B, C, F, H, W, V, Partition(tuple(state_sizes)),
                   Partition(tuple(input_sizes)), Partition(tuple(output_sizes)))

    @property
    def N(self) -> int:
        return self.np_.N

    @property
    def n(self) -> int:
        return self.np_.total

    @property
    def m(self) -> int:
        return self.mp.total

    @property
    def p(self) -> int:
        return self.pp.total

    @property
    def q(self) -> int:
        return self.F.shape[0]

    @property
    def r(self) -> int:
        return self.W.shape[1]

    @property
    def Psi(self) -> np.ndarray:
        return self.H.T @ self.H

    @property
    def Phi(self) -> np.ndarray:
        return self.V @ self.V.T

    def replace(self, **changes) -> "TriangularPlant":
        kw = {k: getattr(self, k) for k in (*MATRIX_FIELDS, "np_", "mp", "pp")}
        kw.update(changes)
        return TriangularPlant(**kw)


def check_dimensions(pl: TriangularPlant) -> None:
    if not pl.np_.N == pl.mp.N == pl.pp.N:
        raise SchemaError(
            f"partitions disagree on N: {pl.np_.N}, {pl.mp.N}, {pl.pp.N}"
        )
    n, m, p = pl.np_.total, pl.mp.total, pl.pp.total
    q, r = pl.F.shape[0], pl.W.shape[1]
    expected = {
        "A": (n, n), "B": (n, m), "C": (p, n), "F": (q, n),
        "H": (q, m), "W": (n, r), "V": (p, r),
    }
    for name, shape in expected.items():
        got = getattr(pl, name).shape
        if got != shape:
            raise SchemaError(f"{name} has shape {got}, expected {shape}")


def lbt_violations(pl: TriangularPlant) -> dict[str, float]:
    """Upper-block defect of A, B, C (only entries above tolerance)."""
    out = {}
    for name, rp, cp in (("A", pl.np_, pl.np_), ("B", pl.np_, pl.mp), ("C", pl.pp, pl.np_)):
        M = getattr(pl, name)
        d = lbt_defect(M, rp, cp)
        if d > default_lbt_tol(M):
            out[name] = d
    return out


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.margin = float(self.margin)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "margin": _finite(self.margin), "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.to_dict() for c in self.checks]}


def _finite(x: float):
    return float(x) if np.isfinite(x) else None


def hautus_margin(A: np.ndarray, B: np.ndarray) -> tuple[float, complex | None]:
    """
    Smallest ``sigma_min([A - lam I, B])`` over eigenvalues with Re(lam) >= -1e-9,
    relative to ``||A||``.  Returns ``(inf, None)`` if A has no such eigenvalue.
    """
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), 1.0)
    worst, where = np.inf, None
    for lam in np.linalg.eigvals(A):
        if lam.real < -HAUTUS_EIG_TOL:
            continue
        M = np.hstack([A - lam * np.eye(n), B])
        s = np.linalg.svd(M, compute_uv=False)[-1] if n else np.inf
        if s / scale < worst:
            worst, where = s / scale, lam
    return worst, where


def _rank_margin(M: np.ndarray, rank_needed: int) -> float:
    s = np.linalg.svd(M, compute_uv=False)
    if rank_needed == 0:
        return np.inf
    if len(s) < rank_needed or s[0] == 0:
        return 0.0
    return float(s[rank_needed - 1] / s[0])


def _hamiltonian_axis_distance(A, B, F, H) -> float:
    """Relative distance of the control Hamiltonian's spectrum from the imaginary axis."""
    Psi = H.T @ H
    try:
        Pinv = np.linalg.inv(Psi)
    except np.linalg.LinAlgError:
        return 0.0
    S = F.T @ H
    Abar = A - B @ Pinv @ S.T
    R = B @ Pinv @ B.T
    Q = F.T @ F - S @ Pinv @ S.T
    Ham = np.block([[Abar, -R], [-Q, -Abar.T]])
    scale = max(np.linalg.norm(Ham, 1), 1.0)
    return float(np.min(np.abs(np.linalg.eigvals(Ham).real)) / scale)


def validate(plant: TriangularPlant) -> ValidationReport:
    """Evaluate every clause of the standing assumptions plus the LBT structure."""
    pl = plant
    rep = ValidationReport()
    for i in range(1, pl.N + 1):
        bn, bm, bp = pl.np_.block(i), pl.mp.block(i), pl.pp.block(i)
        Aii, Bii, Cii = pl.A[bn, bn], pl.B[bn, bm], pl.C[bp, bn]
        margin, lam = hautus_margin(Aii, Bii)
        rep.checks.append(Check(
            f"stabilizable[{i}]", margin > HAUTUS_SV_TOL, margin,
            "" if lam is None else f"block {i}: worst eigenvalue {lam:.6g}",
        ))
        margin, lam = hautus_margin(Aii.T, Cii.T)
        rep.checks.append(Check(
            f"detectable[{i}]", margin > HAUTUS_SV_TOL, margin,
            "" if lam is None else f"block {i}: worst eigenvalue {lam:.6g}",
        ))
    mh = _rank_margin(pl.H, pl.m)
    rep.checks.append(Check("H_full_column_rank", mh > RANK_TOL, mh,
                            f"rank {np.linalg.matrix_rank(pl.H)} of {pl.m} needed"))
    mv = _rank_margin(pl.V, pl.p)
    rep.checks.append(Check("V_full_row_rank", mv > RANK_TOL, mv,
                            f"rank {np.linalg.matrix_rank(pl.V)} of {pl.p} needed"))
    if mh > RANK_TOL:
        d = _hamiltonian_axis_distance(pl.A, pl.B, pl.F, pl.H)
        rep.checks.append(Check("control_no_imaginary_axis_zeros", d > AXIS_TOL, d))
    else:
        rep.checks.append(Check("control_no_imaginary_axis_zeros", False, 0.0, "H rank deficient"))
    if mv > RANK_TOL:
        d = _hamiltonian_axis_distance(pl.A.T, pl.C.T, pl.W.T, pl.V.T)
        rep.checks.append(Check("filter_no_imaginary_axis_zeros", d > AXIS_TOL, d))
    else:
        rep.checks.append(Check("filter_no_imaginary_axis_zeros", False, 0.0, "V rank deficient"))
    for name, rp, cp in (("A", pl.np_, pl.np_), ("B", pl.np_, pl.mp), ("C", pl.pp, pl.np_)):
        M = getattr(pl, name)
        d = lbt_defect(M, rp, cp)
        rep.checks.append(Check(f"{name}_lower_block_triangular", d <= default_lbt_tol(M), d))
    return rep


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------

def _matrix_to_list(M: np.ndarray) -> list:
    return [[float(x) for x in row] for row in M]


def to_document(plant: TriangularPlant) -> dict:
    doc = {
        "state_sizes": list(plant.np_.sizes),
        "input_sizes": list(plant.mp.sizes),
        "output_sizes": list(plant.pp.sizes),
    }
    for name in MATRIX_FIELDS:
        doc[name] = _matrix_to_list(getattr(plant, name))
    return doc


def save(plant: TriangularPlant, path: str | Path | None = None) -> str:
    """Serialize to JSON text (floats use the shortest round-tripping repr)."""
    text = json.dumps(to_document(plant), indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _parse_matrix(name: str, value, shape: tuple[int, int]) -> np.ndarray:
    rows, cols = shape
    if not isinstance(value, list) or any(not isinstance(r, list) for r in value):
        raise SchemaError(f"field {name!r} must be a nested array")
    if len(value) != rows or any(len(r) != cols for r in value):
        got = (len(value), len(value[0]) if value else 0)
        raise SchemaError(f"field {name!r} has shape {got}, expected {shape}")
    for r in value:
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise SchemaError(f"field {name!r} contains non-numeric entry {x!r}")
    M = np.array(value, dtype=float).reshape(rows, cols)
    if not np.all(np.isfinite(M)):
        raise SchemaError(f"field {name!r} contains non-finite entries")
    return M


def _parse_sizes(name: str, value) -> Partition:
    if (not isinstance(value, list) or not value
            or any(isinstance(x, bool) or not isinstance(x, int) or x < 1 for x in value)):
        raise SchemaError(f"field {name!r} must be a non-empty array of positive integers")
    return Partition(tuple(value))


def parse_document(doc: dict, allowed_extra: tuple[str, ...] = ()) -> TriangularPlant:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    known = set(SIZE_FIELDS) | set(MATRIX_FIELDS) | set(allowed_extra)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise SchemaError(f"unknown fields: {unknown}")
    missing = [k for k in (*SIZE_FIELDS, *MATRIX_FIELDS) if k not in doc]
    if missing:
        raise SchemaError(f"missing fields: {missing}")
    nprt, mprt, pprt = (_parse_sizes(k, doc[k]) for k in SIZE_FIELDS)
    if not nprt.N == mprt.N == pprt.N:
        raise SchemaError("state_sizes, input_sizes and output_sizes must have equal length")
    n, m, p = nprt.total, mprt.total, pprt.total
    F_raw, W_raw = doc["F"], doc["W"]
    q = len(F_raw) if isinstance(F_raw, list) else -1
    r = len(W_raw[0]) if isinstance(W_raw, list) and W_raw and isinstance(W_raw[0], list) else -1
    if q < 1 or r < 1:
        raise SchemaError("F and W must be non-empty nested arrays")
    shapes = {"A": (n, n), "B": (n, m), "C": (p, n), "F": (q, n),
              "H": (q, m), "W": (n, r), "V": (p, r)}
    mats = {k: _parse_matrix(k, doc[k], s) for k, s in shapes.items()}
    plant = TriangularPlant(**mats, np_=nprt, mp=mprt, pp=pprt)
    bad = lbt_violations(plant)
    if bad:
        desc = ", ".join(f"{k} (upper-block entry {v:.3g})" for k, v in bad.items())
        raise StructureError(f"not lower block triangular: {desc}")
    return plant


def loads(text: str) -> TriangularPlant:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_document(doc)


def load(path_or_text: str | Path) -> TriangularPlant:
    """Load a plant from a file path, or from JSON text if the argument starts with '{'."""
    if isinstance(path_or_text, str) and path_or_text.lstrip().startswith("{"):
        return loads(path_or_text)
    return loads(Path(path_or_text).read_text())


# ---------------------------------------------------------------------------
# Reference plants and generators
# ---------------------------------------------------------------------------

def plant_p1() -> TriangularPlant:
    """
    Scalar single-player plant with closed-form solution sqrt(2) - 1.

    Process and measurement noise are independent unit-intensity channels.
    """
    return TriangularPlant.from_sizes(
        A=[[-1.0]], B=[[1.0]], C=[[1.0]], F=[[1.0], [0.0]], H=[[0.0], [1.0]],
        W=[[1.0, 0.0]], V=[[0.0, 1.0]], state_sizes=[1], input_sizes=[1], output_sizes=[1],
    )


def plant_p2() -> TriangularPlant:
    """Two scalar players, the first driving the second."""
    I2, Z2 = np.eye(2), np.zeros((2, 2))
    return TriangularPlant.from_sizes(
        A=[[-1.0, 0.0], [1.0, -2.0]], B=I2, C=I2,
        F=np.vstack([I2, Z2]), H=np.vstack([Z2, I2]),
        W=np.hstack([I2, Z2]), V=np.hstack([Z2, I2]),
        state_sizes=[1, 1], input_sizes=[1, 1], output_sizes=[1, 1],
    )


def random_plant(rng: np.random.Generator, N: int, max_block: int = 3,
                 sizes: tuple | None = None) -> TriangularPlant:
    """
    Random plant with lower-block-triangular A, B, C and generic dense
    F, H, W, V (q = n + m, r = n + p).  It is not validated here.
    """
    if sizes is None:
        ns, ms, ps = (tuple(int(x) for x in rng.integers(1, max_block + 1, size=N))
                      for _ in range(3))
    else:
        ns, ms, ps = sizes
    nprt, mprt, pprt = Partition(ns), Partition(ms), Partition(ps)
    n, m, p = nprt.total, mprt.total, pprt.total

    def lbt(rp, cp):
        M = rng.standard_normal((rp.total, cp.total))
        for i in range(1, rp.N):
            M[rp.block(i), cp.down(i + 1)] = 0.0
        return M

    A = lbt(nprt, nprt)
    B = lbt(nprt, mprt)
    C = lbt(pprt, nprt)
    F = np.vstack([rng.standard_normal((n, n)), np.zeros((m, n))])
    H = np.vstack([0.3 * rng.standard_normal((n, m)), np.eye(m) + 0.3 * rng.standard_normal((m, m))])
    W = np.hstack([rng.standard_normal((n, n)), np.zeros((n, p))])
    V = np.hstack([0.3 * rng.standard_normal((p, n)), np.eye(p) + 0.3 * rng.standard_normal((p, p))])
    return TriangularPlant(A, B, C, F, H, W, V, nprt, mprt, pprt)


def random_valid_plants(seed: int, count: int, Ns=(2, 3), max_block: int = 3) -> list[TriangularPlant]:
    """``count`` random plants that pass :func:`validate`, cycling through ``Ns``."""
    rng = np.random.default_rng(seed)
    out: list[TriangularPlant] = []
    k = 0
    while len(out) < count:
        pl = random_plant(rng, Ns[k % len(Ns)], max_block)
        if validate(pl).ok:
            out.append(pl)
            k += 1
    return out


def dual_plant(plant: TriangularPlant) -> TriangularPlant:
    """
    Transposed plant with the chain order reversed.  Its filter-side solutions
    are the block-reversed control-side solutions of the original and vice versa.
    """
    Jn, Jm, Jp = (block_reversal(p) for p in (plant.np_, plant.mp, plant.pp))
    return TriangularPlant(
        A=Jn @ plant.A.T @ Jn.T,
        B=Jn @ plant.C.T @ Jp.T,
        C=Jm @ plant.B.T @ Jn.T,
        F=plant.W.T @ Jn.T,
        H=plant.V.T @ Jp.T,
        W=Jn @ plant.F.T,
        V=Jm @ plant.H.T,
        np_=plant.np_.reversed(), mp=plant.pp.reversed(), pp=plant.mp.reversed(),
    )


def block_reversal(p: Partition) -> np.ndarray:
    idx = np.concatenate([np.arange(p.total)[p.block(i)] for i in range(p.N, 0, -1)])
    return np.eye(p.total)[idx]
