import math

import gmpy2
import numpy as np
import pytest

from faithful_newton.cr import cr_init, cr_solve, cr_step, numerical_grade, verify_cr_properties
from faithful_newton.exceptions import Breakdown, OperatorNotPD, ZeroGradient
from faithful_newton.problems import philox, random_spd, spd_spectrum
from faithful_newton.suites import MP_PRECISION, householder_spd, to_mp


def op(H):
    calls = []

    def hvp(v):
        calls.append(1)
        return H @ v

    hvp.calls = calls
    return hvp


def test_init_identity():
    st = cr_init(op(np.eye(2)), np.array([1.0, 0.0]))
    np.testing.assert_array_equal(st.r, [-1.0, 0.0])
    assert st.rHr == 1.0 and st.t == 0


def test_init_diag12():
    assert cr_init(op(np.diag([1.0, 2.0])), np.array([1.0, 1.0])).rHr == 3.0


def test_init_zero_gradient():
    with pytest.raises(ZeroGradient):
        cr_init(op(np.eye(2)), np.zeros(2))


def test_step_identity_one_step():
    st = cr_init(op(np.eye(2)), np.array([3.0, 4.0]))
    cr_step(st, op(np.eye(2)))
    assert st.alpha_hist == [1.0]
    np.testing.assert_array_equal(st.s, [-3.0, -4.0])
    np.testing.assert_array_equal(st.r, [0.0, 0.0])


def test_step_diag12_hand_values():
    H = np.diag([1.0, 2.0])
    st = cr_init(op(H), np.array([1.0, 1.0]))
    cr_step(st, op(H))
    assert st.alpha_hist[0] == pytest.approx(0.6, rel=1e-15)
    np.testing.assert_allclose(st.s, [-0.6, -0.6], rtol=1e-15)
    np.testing.assert_allclose(st.r, [-0.4, 0.2], rtol=1e-14)
    cr_step(st, op(H))
    np.testing.assert_allclose(st.s, -np.linalg.solve(H, [1.0, 1.0]), rtol=1e-14)


def test_one_product_per_step():
    H = random_spd(philox(0), 10, 30.0)
    hvp = op(H)
    _, _, t, _ = cr_solve(hvp, philox(1).standard_normal(10), tol=0.0, max_iter=7)
    assert t == 7 and len(hvp.calls) == t + 1


def test_recurrence_uses_new_residual():
    # p_{t+1} must be r_{t+1} + gamma p_t for <s, H r> = 0 to hold
    H = random_spd(philox(3), 8, 10.0)
    _, _, _, st = cr_solve(op(H), philox(4).standard_normal(8), max_iter=5, record=True)
    for snap in st.snapshots[1:]:
        assert abs(snap.s @ (H @ snap.r)) <= 1e-10 * st.gnorm**2
        np.testing.assert_allclose(snap.Hp, H @ snap.p, rtol=1e-9, atol=1e-12 * st.gnorm)


def test_solve_random_spd_reaches_grade_float64():
    # float64 CR keeps enough orthogonality for finite termination at modest kappa
    worst = 0.0
    for seed in range(200):
        rng = philox(seed)
        H = random_spd(rng, 20, 10.0)
        g = rng.standard_normal(20)
        s, _, _, _ = cr_solve(op(H), g, tol=0.0, max_iter=20)
        worst = max(worst, np.linalg.norm(H @ s + g) / np.linalg.norm(g))
        np.testing.assert_allclose(s, -np.linalg.solve(H, g), rtol=1e-8)
    assert worst <= 1e-9


@pytest.mark.parametrize("cond", [100.0, 1e6])
def test_solve_random_spd_reaches_grade_extended(cond):
    # wider spectra: same code in 320-bit arithmetic (exact-arithmetic statement)
    rng = philox(7)
    ctx = gmpy2.get_context().copy()
    ctx.precision = MP_PRECISION
    with gmpy2.context(ctx):
        Hm = householder_spd(rng, spd_spectrum(rng, 20, cond), gmpy2.mpfr)
        g = to_mp(rng.standard_normal(20))
        s, _, t, _ = cr_solve(lambda v: Hm @ v, g, tol=0.0, max_iter=20)
        res = Hm @ s + g
        rel = float(gmpy2.sqrt(res @ res) / gmpy2.sqrt(g @ g))
    assert rel <= 1e-9
    H64 = np.array(Hm, dtype=float)
    np.testing.assert_allclose(np.array(s, dtype=float), -np.linalg.solve(H64, np.array(g, dtype=float)),
                               rtol=1e-8 * cond)


def test_solve_identity_one_iteration():
    g = np.array([1.0, -2.0, 0.5])
    s, _, t, _ = cr_solve(op(np.eye(3)), g, max_iter=1)
    np.testing.assert_array_equal(s, -g)
    assert t == 1


def test_solve_tolerance_stops_early():
    _, rn, t, _ = cr_solve(op(np.diag([1.0, 2.0])), np.array([1.0, 1.0]), tol=0.5)
    assert t == 1 and rn == pytest.approx(math.sqrt(0.2), rel=1e-14)


def test_solve_validates_arguments():
    with pytest.raises(ValueError):
        cr_solve(op(np.eye(2)), np.ones(2), tol=1.0)
    with pytest.raises(ValueError):
        cr_solve(op(np.eye(2)), np.ones(2), max_iter=0)


def test_indefinite_operator_raises():
    with pytest.raises(OperatorNotPD):
        cr_solve(op(np.diag([-1.0, 1.0])), np.array([1.0, 0.0]))


def test_breakdown():
    with pytest.raises(Breakdown):
        cr_solve(op(np.diag([1e-160, 1e-160])), np.array([1.0, 0.0]))


def test_properties_identity_alpha_tight():
    _, _, _, st = cr_solve(op(np.eye(3)), np.ones(3), record=True)
    rep = verify_cr_properties(st, np.eye(3), lam=(1.0, 1.0))
    assert rep.passed
    assert st.alpha_hist[0] == 1.0


def test_properties_diag12():
    H = np.diag([1.0, 2.0])
    _, _, _, st = cr_solve(op(H), np.array([1.0, 1.0]), record=True)
    rep = verify_cr_properties(st, H, lam=(1.0, 2.0))
    assert rep.passed, rep.failures()
    assert 0.5 <= st.alpha_hist[0] <= 1.0


def test_properties_report_lists_every_check():
    H = random_spd(philox(5), 6, 5.0)
    _, _, _, st = cr_solve(op(H), philox(6).standard_normal(6), record=True)
    rep = verify_cr_properties(st, H)
    names = {c.name for c in rep.checks}
    assert {"residual_decrease", "step_increase", "Hs_increase", "exact_at_grade", "gs_decrease",
            "Hp_le_Hr", "gs_le_minus_sHs", "sHr_orthogonal", "alpha_bounds",
            "gs_telescoping", "residual_consistency"} <= names
    assert rep.passed, rep.failures()


def test_properties_detect_a_corrupted_run():
    H = random_spd(philox(8), 6, 5.0)
    _, _, _, st = cr_solve(op(H), philox(9).standard_normal(6), record=True)
    st.alpha_hist[1] = 10.0  # far outside [1/lmax, 1/lmin]
    assert not verify_cr_properties(st, H)["alpha_bounds"].passed


def test_numerical_grade():
    H = np.diag([1.0, 1.0, 2.0, 2.0])
    _, _, _, st = cr_solve(op(H), np.ones(4), tol=0.0, max_iter=4, record=True)
    assert numerical_grade(st) == 2
