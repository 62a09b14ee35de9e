import json

import numpy as np
import pytest

from trilqg import build_controller, closed_loop, matops, optimal_cost, solve_coupled
from trilqg.errors import SchemaError, UnstableClosedLoop
from trilqg.plant import TriangularPlant
from trilqg.structure import is_lbt
from trilqg.synthesis import (block_triangularize, controller_matrices_literal, diagonal_blocks,
                              load_controller, strictly_lower_defect)

R2 = np.sqrt(2) - 1


def test_p1_is_standard_lqg(p1, g1):
    c = build_controller(p1, g1)
    K, L = g1.K[1], g1.L[1]
    np.testing.assert_allclose(c.A_K, p1.A + p1.B @ K + L @ p1.C, atol=1e-12)
    np.testing.assert_allclose(c.B_K, -L, atol=1e-12)
    np.testing.assert_allclose(c.C_K, K, atol=1e-12)
    assert c.A_K[0, 0] == pytest.approx(-1 - 2 * R2, abs=1e-12)


def test_p1_cost(p1, g1):
    cost = optimal_cost(p1, g1)
    assert cost.J_opt_sq == pytest.approx(6 * np.sqrt(2) - 8, abs=1e-12)
    assert cost.J_dcnt_sq == 0.0
    eig = np.linalg.eigvals(closed_loop(p1, build_controller(p1, g1)).calA)
    np.testing.assert_allclose(np.sort(eig.real), [-np.sqrt(2)] * 2, atol=1e-6)


def test_literal_and_blockwise_agree(random_suite):
    for pl, g in random_suite[:6]:
        c = build_controller(pl, g)
        for a, b in zip((c.A_K, c.B_K, c.C_K), controller_matrices_literal(pl, g)):
            np.testing.assert_allclose(a, b, atol=1e-13 * (1 + np.abs(b).max()))


def test_controller_is_lower_block_triangular(random_suite):
    for pl, g in random_suite[:8]:
        K = build_controller(pl, g).realization
        for w in matops.frequency_grid():
            Kjw = K(1j * w)
            scale = 1 + np.abs(Kjw).max()
            assert is_lbt(np.abs(Kjw), pl.mp, pl.pp, tol=1e-10 * scale)


def test_block_triangular_closed_loop(random_suite):
    for pl, g in random_suite[:8]:
        cl = closed_loop(pl, build_controller(pl, g))
        T = block_triangularize(cl, pl.N, pl.n)
        assert strictly_lower_defect(T, pl.n) < 1e-10 * np.linalg.norm(cl.calA)
        diag = diagonal_blocks(T, pl.n)
        for i, D in enumerate(diag, 1):
            np.testing.assert_allclose(D, g.akl(i), atol=1e-10 * (1 + np.abs(D).max()))


def test_cost_identity(random_suite):
    for pl, g in random_suite[:8]:
        cl = closed_loop(pl, build_controller(pl, g))
        h2 = matops.h2_norm(cl.G11) ** 2
        cost = optimal_cost(pl, g)
        assert abs(h2 - cost.J_opt_sq) / h2 < 1e-10
        assert cost.J_dcnt_sq >= -1e-12 * h2


def test_decoupled_plant_has_no_decentralization_cost():
    I2, Z2 = np.eye(2), np.zeros((2, 2))
    pl = TriangularPlant.from_sizes(
        A=np.diag([-1.0, -2.0]), B=I2, C=I2, F=np.vstack([I2, Z2]), H=np.vstack([Z2, I2]),
        W=np.hstack([I2, Z2]), V=np.hstack([Z2, I2]),
        state_sizes=[1, 1], input_sizes=[1, 1], output_sizes=[1, 1])
    cost = optimal_cost(pl, solve_coupled(pl))
    assert abs(cost.J_dcnt_sq) < 1e-14 and cost.J_cnt_sq > 0


def test_p2_pays_for_the_constraint(p2, g2):
    cost = optimal_cost(p2, g2)
    assert cost.J_dcnt_sq > 1e-6


def test_unstable_loop_detected(p1):
    g = solve_coupled(p1)
    g.K[1] = np.array([[5.0]])
    with pytest.raises(UnstableClosedLoop):
        closed_loop(p1, build_controller(p1, g))


def test_controller_document_roundtrip(p2, g2, tmp_path):
    c = build_controller(p2, g2)
    path = tmp_path / "c.json"
    path.write_text(c.dumps())
    back = load_controller(path)
    for a, b in ((back.A_K, c.A_K), (back.B_K, c.B_K), (back.C_K, c.C_K)):
        np.testing.assert_array_equal(a, b)
    assert back.np_ == c.np_
    doc = c.to_document()
    doc["extra"] = 1
    with pytest.raises(SchemaError):
        load_controller(json.dumps(doc))
