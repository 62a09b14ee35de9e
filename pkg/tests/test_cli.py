import json
import subprocess
import sys

import numpy as np
import pytest

from trilqg import build_controller, coupled_riccati
from trilqg.cli import (EXIT_ASSUMPTION, EXIT_CERTIFICATE, EXIT_INPUT, EXIT_OK, EXIT_RICCATI,
                        EXIT_STEP2, RunConfig, main)
from trilqg.plant import TriangularPlant, save


def scalar_plant(A=-1.0, B=1.0, F=((1.0,), (0.0,))):
    return TriangularPlant.from_sizes([[A]], [[B]], [[1.0]], F, [[0.0], [1.0]],
                                      [[1.0, 0.0]], [[0.0, 1.0]], [1], [1], [1])


@pytest.fixture
def p2_file(tmp_path, p2):
    path = tmp_path / "p2.json"
    save(p2, path)
    return path


def read(path):
    return json.loads(path.read_text())


def test_validate_ok(p2_file, tmp_path):
    out = tmp_path / "v"
    assert main(["validate", str(p2_file), "--out", str(out)]) == EXIT_OK
    doc = read(out / "validation.json")
    assert doc["ok"] and doc["schema_version"] == 1


def test_validate_failure(tmp_path):
    path = tmp_path / "u.json"
    save(scalar_plant(A=1.0, B=0.0), path)
    assert main(["validate", str(path), "--out", str(tmp_path)]) == EXIT_ASSUMPTION
    assert "stabilizable[1]" in read(tmp_path / "validation.json")["failures"]


def test_synth_outputs(p2_file, tmp_path, p2, g2):
    assert main(["synth", str(p2_file), "--out", str(tmp_path)]) == EXIT_OK
    summary = read(tmp_path / "summary.json")
    assert summary["ok"] and summary["riccati"]["max_relative_residual"] < 1e-8
    assert summary["cost"]["J_opt_sq"] == pytest.approx(summary["cost"]["J_cnt_sq"] + summary["cost"]["J_dcnt_sq"])
    ctrl = read(tmp_path / "controller.json")
    np.testing.assert_allclose(ctrl["A_K"], build_controller(p2, g2).A_K, atol=1e-12)


def test_synth_is_byte_deterministic(p2_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", str(p2_file), "--out", str(a)]) == EXIT_OK
    assert main(["synth", str(p2_file), "--out", str(b)]) == EXIT_OK
    for name in ("controller.json", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_imaginary_axis_exit(tmp_path):
    path = tmp_path / "axis.json"
    save(scalar_plant(A=0.0, F=((0.0,), (0.0,))), path)
    assert main(["synth", str(path), "--out", str(tmp_path)]) == EXIT_RICCATI
    err = read(tmp_path / "summary.json")["error"]
    assert err["type"] == "ImaginaryAxisEigs"
    assert err["side"] == "control" and err["stage"] == 1


def test_step2_singular_exit(p2_file, tmp_path, monkeypatch):
    real = coupled_riccati.step2_operator

    def rank_deficient(pl, hats):
        M, rhs = real(pl, hats)
        M = M.copy()
        M[-1] = M[0]
        return M, rhs

    monkeypatch.setattr(coupled_riccati, "step2_operator", rank_deficient)
    assert main(["synth", str(p2_file), "--out", str(tmp_path)]) == EXIT_STEP2
    err = read(tmp_path / "summary.json")["error"]
    assert err["type"] == "SingularStep2System"
    assert err["condition"] == "inf" or err["condition"] > 1e12


def test_unreadable_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["synth", str(bad), "--out", str(tmp_path)]) == EXIT_INPUT
    assert read(tmp_path / "summary.json")["error"]["type"] == "ParseError"
    assert main(["validate", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_INPUT


def test_usage_errors_are_input_errors(p2_file):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate", str(p2_file)])
    assert info.value.code == EXIT_INPUT
    assert main(["synth", str(p2_file), "--freq-n", "1"]) == EXIT_INPUT


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError):
        RunConfig("synth", tmp_path, tmp_path, are_tol=-1.0)
    with pytest.raises(ValueError):
        RunConfig("synth", tmp_path, tmp_path, freq_lo=10.0, freq_hi=1.0)
    assert len(RunConfig("synth", tmp_path, tmp_path).freqs) == 21


def test_certify_ok_and_deterministic(p2_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["certify", str(p2_file), "--out", str(out), "--trials", "20", "--seed", "3"]) == EXIT_OK
    assert (a / "certificate.json").read_bytes() == (b / "certificate.json").read_bytes()
    assert read(a / "certificate.json")["first_failure"] is None


def test_certify_level_none(p2_file, tmp_path):
    assert main(["certify", str(p2_file), "--out", str(tmp_path), "--level", "none"]) == EXIT_OK
    assert read(tmp_path / "certificate.json")["checks"] == []


def test_certify_corrupted_controller(p2_file, tmp_path, p2, g2):
    c = build_controller(p2, g2).to_document()
    c["C_K"][0][0] += 0.1
    cpath = tmp_path / "ctrl.json"
    cpath.write_text(json.dumps(c))
    code = main(["certify", str(p2_file), "--out", str(tmp_path), "--trials", "20",
                 "--controller", str(cpath)])
    assert code == EXIT_CERTIFICATE
    doc = read(tmp_path / "certificate.json")
    assert not doc["ok"] and doc["first_failure"]


def test_certify_bad_controller_document(p2_file, tmp_path):
    cpath = tmp_path / "ctrl.json"
    cpath.write_text('{"A_K": []}')
    code = main(["certify", str(p2_file), "--out", str(tmp_path), "--controller", str(cpath)])
    assert code == EXIT_INPUT


def test_module_entry_point(p2_file, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "trilqg", "validate", str(p2_file), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK, proc.stderr
