import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilqg import build_controller, closed_loop, matops
from trilqg.errors import IndexOutOfDiagram, UnstableFactor
from trilqg.matops import StateSpace
from trilqg.structure import Partition, is_lbt
from trilqg.synthesis import Controller
from trilqg.verify import (build_context, certainty_equivalence_check, certify, check_inner,
                           factorization_defects, in_diagram, perturbation_optimality,
                           projection_residual, random_lbt_q, residual_norms)

FREQS = matops.frequency_grid()


def static(D):
    D = np.atleast_2d(D)
    return StateSpace([[-1.0]], np.zeros((1, D.shape[1])), np.zeros((D.shape[0], 1)), D)


def test_check_inner_static():
    assert check_inner(static(np.eye(2)), FREQS) == 0.0
    assert check_inner(static(2 * np.eye(2)), FREQS) == pytest.approx(3.0)


def test_check_inner_allpass():
    U = StateSpace([[-1.0]], [[1.0]], [[-2.0]], [[1.0]])
    assert check_inner(U, FREQS) < 1e-14
    assert check_inner(U, FREQS, co=True) < 1e-14


def test_check_inner_tall_isometry_is_not_coinner():
    D = np.array([[1.0], [0.0]])
    assert check_inner(static(D), FREQS) < 1e-15
    assert check_inner(static(D), FREQS, co=True) == pytest.approx(1.0)


def test_check_inner_unstable():
    with pytest.raises(UnstableFactor):
        check_inner(StateSpace([[1.0]], [[1.0]], [[-2.0]], [[1.0]]), FREQS)


def test_in_diagram():
    assert in_diagram(2, 0, 3) and in_diagram(2, 1, 1) and in_diagram(2, 2, 2)
    assert not in_diagram(2, 0, 0) and not in_diagram(2, 2, 1) and not in_diagram(2, 3, 3)


@pytest.mark.parametrize("ij", [(0, 0), (2, 1), (3, 3), (-1, 2)])
def test_projection_index_out_of_diagram(p2, g2, ij):
    with pytest.raises(IndexOutOfDiagram):
        projection_residual(p2, g2, *ij)


def test_factors_on_suite(random_suite):
    for pl, g in random_suite[:6]:
        ctx = build_context(pl, g)
        fs = ctx.factors
        for U in fs.U:
            assert check_inner(U, FREQS) < 1e-8
        for V in fs.V:
            assert check_inner(V, FREQS, co=True) < 1e-8
        d = factorization_defects(ctx, FREQS)
        assert max(d["control_side"] + d["filter_side"]) < 1e-8


def test_diagonal_projections_vanish(random_suite):
    for pl, g in random_suite[:6]:
        ctx = build_context(pl, g)
        for i in range(1, pl.N + 1):
            assert projection_residual(pl, g, i, i, ctx).relative_norm(FREQS) < 1e-8


def test_top_projection_is_g11(p2, g2):
    ctx = build_context(p2, g2)
    P = projection_residual(p2, g2, 0, p2.N + 1, ctx)
    assert P.h2 == pytest.approx(matops.h2_norm(ctx.cl.G11), rel=1e-12)


def test_residual_norms_and_telescope(random_suite):
    for pl, g in [random_suite[0]] + random_suite[4:7]:
        table = residual_norms(pl, g)
        assert table.max_gap < 1e-6
        assert table.telescope_gap < 1e-6
        assert table.max_identity_defect < 1e-8
        assert all(e.closed_form >= -1e-12 for e in table.entries)


def test_residual_norms_p1(p1, g1):
    # one player: the telescope is one vertical and one horizontal edge
    table = residual_norms(p1, g1)
    assert len([e for e in table.entries if e.kind == "vertical"]) == 2
    assert table.telescope == pytest.approx(6 * np.sqrt(2) - 8, rel=1e-10)


def test_certainty_equivalence(p1, g1, p2, g2):
    for pl, g in ((p1, g1), (p2, g2)):
        for j in range(1, pl.N + 1):
            assert certainty_equivalence_check(pl, g, j) < 1e-8
    with pytest.raises(IndexOutOfDiagram):
        certainty_equivalence_check(p2, g2, 3)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), sizes=st.lists(st.integers(1, 2), min_size=1, max_size=3))
def test_random_q_is_stable_lbt(seed, sizes):
    mp = Partition(tuple(sizes))
    pp = Partition(tuple(reversed(sizes)))
    Q = random_lbt_q(np.random.default_rng(seed), mp, pp, 1.0)
    assert matops.spectral_abscissa(Q.A) < 0
    for w in (0.0, 0.7, 20.0):
        assert is_lbt(np.abs(Q(1j * w)), mp, pp, tol=0)


def test_zero_perturbation(p2, g2):
    res = perturbation_optimality(p2, build_controller(p2, g2), trials=5, scale=0.0)
    assert res.deltas == [0.0] * 5 and res.skipped == 0


def test_perturbation_p1(p1, g1):
    res = perturbation_optimality(p1, build_controller(p1, g1), trials=100, seed=42)
    assert res.worst >= -1e-9
    assert res.oracle_gap < 1e-9


def test_perturbation_p2(p2, g2):
    res = perturbation_optimality(p2, build_controller(p2, g2), trials=200, seed=1)
    assert res.worst >= -1e-9
    assert res.mean > 0
    assert res.skipped == 0


def test_perturbation_trial_streams(p2, g2):
    c = build_controller(p2, g2)
    a = perturbation_optimality(p2, c, trials=4, seed=3)
    b = perturbation_optimality(p2, c, trials=8, seed=3)
    assert a.deltas == b.deltas[:4]


def corrupted(pl, g, delta=0.1):
    c = build_controller(pl, g)
    C_K = c.C_K.copy()
    C_K[0, 0] += delta
    return Controller(StateSpace(c.A_K, c.B_K, C_K, c.realization.D), c.np_, c.mp, c.pp)


def test_certify_passes(p1, g1, p2, g2):
    for pl, g in ((p1, g1), (p2, g2)):
        rep = certify(pl, g, trials=20)
        assert rep.ok, rep.first_failure
        assert rep.details["controller_mismatch"] == 0.0


def test_certify_structural_level(p2, g2):
    rep = certify(p2, g2, level="structural")
    assert rep.ok
    assert not any(c.name.startswith("perturbation") for c in rep.checks)
    assert certify(p2, g2, level="none").checks == []


def test_certify_detects_corruption(p2, g2):
    bad = corrupted(p2, g2)
    assert closed_loop(p2, bad) is not None
    rep = certify(p2, g2, bad, trials=20)
    assert not rep.ok
    failed = {c.name for c in rep.checks if not c.passed}
    assert any(n.startswith("projection_residual") for n in failed)
    assert "perturbation_worst_decrease" in failed
    assert rep.details["perturbation"]["worst_decrease"] < 0


def test_certificate_json_is_deterministic(p2, g2):
    a = certify(p2, g2, trials=10, seed=5).dumps()
    b = certify(p2, g2, trials=10, seed=5).dumps()
    assert a == b
