from dataclasses import replace

import numpy as np
import pytest

from drawdown_dividend import policy as P, verifier as V


def test_dual_ode_passes(fb, vp):
    r = V.check_dual_ode(fb, vp, 300)
    assert r.passed and r.max_violation <= 1e-9 and r.grid_size == 300


def test_dual_ode_grid_independent_verdict(fb, vp):
    assert V.check_dual_ode(fb, vp, 3).passed == V.check_dual_ode(fb, vp, 300).passed


def test_perturbed_c2_fails_in_low_region(fb, vp):
    bad = replace(fb, c2=fb.c2 * 1.01)
    r = V.check_dual_ode(bad, vp, 300)
    assert not r.passed
    assert r.worst_point[0] >= fb.y_alpha  # LOW region


def test_free_boundary_conditions(fb, vp):
    r = V.check_free_boundaries(fb, vp)
    assert r.passed and r.max_violation <= 1e-8


def test_perturbed_ystar_breaks_super_contact(fb, vp):
    conds = V.free_boundary_conditions(replace(fb, y_star=fb.y_star + 1e-4), vp)
    assert conds["super_contact"] > 1e-8


def test_constants_and_boundaries(fb, vp):
    assert V.check_constants(fb, vp).passed
    assert V.check_boundary_recovery(fb, vp).passed
    assert V.check_legendre_round_trip(fb, vp).passed


def test_comparison_conditions(fb, vp):
    vz, gen, eq = V.check_comparison_conditions(fb, vp, grid=50, n_ctrl=21)
    assert vz.passed and gen.passed and eq.passed
    assert vz.grid_size >= 2500
    assert eq.max_violation <= 1e-7


def test_generator_zero_at_optimum_inside(fb, vp):
    for x in (1.0, 4.5, 8.0, 11.0):
        v, vx, vxx, _ = P.derivatives(x, 1.0, fb, vp)
        g = V._gen(P.pi_star(x, 1.0, fb, vp), P.c_star(x, 1.0, fb, vp), v, vx, vxx, vp)
        assert abs(g) <= 1e-7


def test_above_domain_strict_and_flat_in_peak(fb, vp):
    x, z = 1.5 * fb.w_star, 1.0
    _, _, _, vz = P.derivatives(x, z, fb, vp)
    assert vz == 0.0
    pis = np.linspace(0.0, 3.0 * P.pi_star(x, z, fb, vp), 41)
    cs = np.linspace(vp.alpha * z, z, 41)
    g = V.generator(pis[:, None], cs[None, :], x, z, fb, vp)
    assert g.max() < 0.0


def test_generator_lattice_respects_ratchet(fb, vp):
    # in the full-dividend band the free maximiser exceeds z; paying more raises the peak
    x, z = 8.0, 1.0
    _, vx, _, _ = P.derivatives(x, z, fb, vp)
    assert vx ** (-1 / vp.p) > z
    g = V.generator(P.pi_star(x, z, fb, vp), np.linspace(z, 3 * z, 9), x, z, fb, vp)
    assert g.max() <= 1e-9


def test_comparative_statics(vp):
    hard, soft = V.check_comparative_statics(vp, [0.1, 0.3, 0.5, 0.7, 0.9])
    assert hard.passed
    assert not soft.hard


def test_statics_pair_value_order(vp):
    hard, _ = V.check_comparative_statics(vp, [0.25, 0.75], states=[(4.0, 1.0)])
    assert hard.passed


def test_limits(vp):
    assert V.check_merton_limit(vp).passed
    assert V.check_ratcheting_limit(vp).passed


def test_report_invariant():
    r = V.VerificationReport.build("x", 3, [0.1, 0.5, 0.2], [(1,), (2,), (3,)], 0.4)
    assert r.passed == (r.max_violation <= r.tolerance)
    assert r.worst_point == (2.0,)
    nan = V.VerificationReport.build("x", 1, [np.nan], [(0,)], 1.0)
    assert not nan.passed


def test_run_all_deterministic_across_threads(vp):
    a = V.run_all(vp, grid=12, threads=1)
    b = V.run_all(vp, grid=12, threads=4)
    assert a == b
    assert V.all_hard_passed(a)
