"""
Command-line front end.

    python3 -m trilqg validate plant.json --out DIR
    python3 -m trilqg synth    plant.json --out DIR
    python3 -m trilqg certify  plant.json --out DIR --level full --seed 0

Exit codes: 0 success, 2 assumption failure, 3 unreadable input,
4 singular step-2 system, 5 Riccati failure, 6 certificate failure.
Every output is JSON with a ``schema_version`` field and is written to a
temporary file in ``DIR`` and then renamed, so a failed run never leaves a
half-written file behind.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from trilqg import matops
from trilqg.coupled_riccati import residuals, solve_coupled
from trilqg.errors import (ParseError, PSDViolation, RiccatiError, RiccatiResidualError,
                           SchemaError, SingularStep2System, StructureError, TrilqgError,
                           UnstableClosedLoop, UnstableDiagonalBlock)
from trilqg.plant import load, validate
from trilqg.synthesis import build_controller, closed_loop, load_controller, optimal_cost

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ASSUMPTION = 2
EXIT_INPUT = 3
EXIT_STEP2 = 4
EXIT_RICCATI = 5
EXIT_CERTIFICATE = 6

LEVELS = ("none", "structural", "full")


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path
    out: Path
    are_tol: float = matops.ARE_TOL
    lin_tol: float = matops.LIN_TOL
    freq_lo: float = 1e-3
    freq_hi: float = 1e3
    freq_n: int = 20
    level: str = "full"
    seed: int = 0
    trials: int = 100
    controller: Path | None = None

    def __post_init__(self):
        for name in ("are_tol", "lin_tol", "freq_lo", "freq_hi"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.freq_lo >= self.freq_hi:
            raise ValueError("freq_lo must be below freq_hi")
        if self.freq_n < 3:
            raise ValueError(f"freq_n must be at least 3, got {self.freq_n}")
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def freqs(self):
        return matops.frequency_grid(self.freq_lo, self.freq_hi, self.freq_n)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """Make ``obj`` strict-JSON: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path: Path, doc: dict) -> None:
    text = json.dumps(_clean(doc), indent=1, sort_keys=True, allow_nan=False) + "\n"
    write_text(path, text)


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _error_doc(exc: BaseException) -> dict:
    doc = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("condition", "distance", "side", "stage", "index", "min_eig"):
        val = getattr(exc, attr, None)
        if val is not None:
            doc[attr] = val
    return doc


def _header(cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": cfg.command, "input": cfg.input.name}


class _Exit(Exception):
    def __init__(self, code: int, report: dict):
        self.code = code
        self.report = report


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _load_plant(cfg: RunConfig):
    try:
        return load(cfg.input)
    except (ParseError, SchemaError, StructureError, OSError) as exc:
        raise _Exit(EXIT_INPUT, {"ok": False, "error": _error_doc(exc)})


def _synthesize(cfg: RunConfig, pl, report: dict):
    try:
        gains = solve_coupled(pl, tol=cfg.are_tol, lin_tol=cfg.lin_tol)
    except SingularStep2System as exc:
        raise _Exit(EXIT_STEP2, {**report, "ok": False, "error": _error_doc(exc)})
    except (RiccatiError, UnstableDiagonalBlock, PSDViolation) as exc:
        raise _Exit(EXIT_RICCATI, {**report, "ok": False, "error": _error_doc(exc)})
    step = residuals(pl, gains)
    report["riccati"] = step.to_dict()
    if step.max_relative > cfg.are_tol:
        exc = RiccatiResidualError(
            f"coupled equation residual {step.max_relative:.3e} exceeds {cfg.are_tol:.1e}")
        raise _Exit(EXIT_RICCATI, {**report, "ok": False, "error": _error_doc(exc)})
    return gains


def cmd_validate(cfg: RunConfig) -> int:
    pl = _load_plant(cfg)
    rep = validate(pl)
    doc = {**_header(cfg), "ok": rep.ok, **rep.to_dict(),
           "failures": [c.name for c in rep.failures]}
    write_json(cfg.out / "validation.json", doc)
    if not rep.ok:
        print("assumption failure: " + ", ".join(c.name for c in rep.failures), file=sys.stderr)
        return EXIT_ASSUMPTION
    print("plant satisfies all standing assumptions")
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    pl = _load_plant(cfg)
    report = {**_header(cfg), "validation": validate(pl).to_dict()}
    gains = _synthesize(cfg, pl, report)
    controller = build_controller(pl, gains)
    try:
        closed_loop(pl, controller)
    except UnstableClosedLoop as exc:
        raise _Exit(EXIT_RICCATI, {**report, "ok": False, "error": _error_doc(exc)})
    cost = optimal_cost(pl, gains)
    report.update({"ok": True, "cost": cost.to_dict(), "step2_condition": gains.step2_condition})
    write_text(cfg.out / "controller.json", json.dumps(
        _clean(controller.to_document()), indent=1, sort_keys=True, allow_nan=False) + "\n")
    write_json(cfg.out / "summary.json", report)
    print(f"J_opt = {cost.J_opt:.10g} (J_cnt = {cost.J_cnt:.10g}, J_dcnt = {cost.J_dcnt:.10g})")
    return EXIT_OK


def cmd_certify(cfg: RunConfig) -> int:
    from trilqg.verify import certify

    pl = _load_plant(cfg)
    report = _header(cfg)
    if cfg.level == "none":
        write_json(cfg.out / "certificate.json", {**report, "level": "none", "ok": True,
                                                   "first_failure": None, "checks": [], "details": {}})
        print("verification level none: nothing checked")
        return EXIT_OK
    gains = _synthesize(cfg, pl, report)
    controller = None
    if cfg.controller is not None:
        try:
            controller = load_controller(cfg.controller)
        except (SchemaError, ValueError, OSError) as exc:
            raise _Exit(EXIT_INPUT, {**report, "ok": False, "error": _error_doc(exc)})
    try:
        cert = certify(pl, gains, controller, level=cfg.level, freqs=cfg.freqs,
                       trials=cfg.trials, seed=cfg.seed)
    except TrilqgError as exc:
        raise _Exit(EXIT_CERTIFICATE, {**report, "ok": False, "first_failure": type(exc).__name__,
                                       "error": _error_doc(exc)})
    write_json(cfg.out / "certificate.json", {**report, **cert.to_dict()})
    if not cert.ok:
        fail = cert.first_failure
        print(f"certificate failed at {fail.name}: {fail.value:.3e} (threshold {fail.threshold:.1e})",
              file=sys.stderr)
        return EXIT_CERTIFICATE
    print(f"certificate ok: {len(cert.checks)} checks passed")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "synth": cmd_synth, "certify": cmd_certify}
REPORT_NAMES = {"validate": "validation.json", "synth": "summary.json", "certify": "certificate.json"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are input errors; exit 2 is reserved for assumption failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trilqg", description="Optimal controller synthesis for triangular LQG plants.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("plant", type=Path, help="plant JSON document")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--are-tol", type=float, default=matops.ARE_TOL)
    p.add_argument("--lin-tol", type=float, default=matops.LIN_TOL)
    p.add_argument("--freq-lo", type=float, default=1e-3)
    p.add_argument("--freq-hi", type=float, default=1e3)
    p.add_argument("--freq-n", type=int, default=20)
    p.add_argument("--level", choices=LEVELS, default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100, help="perturbation trials (certify)")
    p.add_argument("--controller", type=Path, default=None,
                   help="certify this controller document instead of the synthesized one")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args.command, args.plant, args.out, args.are_tol, args.lin_tol,
                        args.freq_lo, args.freq_hi, args.freq_n, args.level, args.seed,
                        args.trials, args.controller)
    except ValueError as exc:
        print(f"trilqg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[cfg.command](cfg)
    except _Exit as ex:
        write_json(cfg.out / REPORT_NAMES[cfg.command], {**_header(cfg), **ex.report})
        err = ex.report.get("error", {})
        print(f"{err.get('type', 'error')}: {err.get('message', '')}", file=sys.stderr)
        return ex.code


if __name__ == "__main__":
    sys.exit(main())
