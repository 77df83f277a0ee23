"""Numerical certification of a solved instance.

Each check is a pure function returning a :class:`VerificationReport`.
Hard checks gate the ``verify`` exit code; soft checks are diagnostics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dual, policy
from .freeboundary import FreeBoundarySolution, constants_from_y, solve
from .params import ValidatedParams

ODE_TOL = 1e-9
FB_TOL = 1e-8
CONST_RTOL = 1e-8
COMPARISON_TOL = 1e-6
HJB_EQUALITY_TOL = 1e-7
FD_REL_STEP = 1e-5
MERTON_RTOL = 0.01
RATCHET_RTOL = 0.005


@dataclass(frozen=True)
class VerificationReport:
    check_name: str
    grid_size: int
    max_violation: float
    tolerance: float
    passed: bool
    worst_point: tuple
    hard: bool = True
    note: str = ""

    @classmethod
    def build(cls, name, grid_size, violations, points, tolerance, hard=True, note=""):
        """Report from parallel sequences of violations and the points they came from."""
        v = np.asarray(violations, dtype=float)
        if v.size == 0:
            return cls(name, grid_size, 0.0, tolerance, True, (), hard, note)
        # nan counts as a failure
        k = int(np.argmax(np.where(np.isnan(v), np.inf, v)))
        worst = float(v[k]) if not np.isnan(v[k]) else math.inf
        pt = tuple(float(t) for t in np.atleast_1d(points[k]))
        return cls(name, grid_size, worst, tolerance, worst <= tolerance, pt, hard, note)


# --- dual ODE and free-boundary conditions ---------------------------------------

def seam_jumps(fb: FreeBoundarySolution, vp: ValidatedParams) -> list[tuple[float, float]]:
    """(seam, relative jump) for U-hat and U-hat_y across y = 1 and y = alpha^-p.

    The homogeneous terms C y and C y^-kd solve the ODE for any constants, so
    the pointwise residual alone cannot detect a wrong constant; the matching
    at the seams does.
    """
    out = []
    seams = [(1.0, dual.HIGH, dual.MID)]
    if fb.y_alpha > 1.0:
        seams.append((fb.y_alpha, dual.MID, dual.LOW))
    for y, left, right in seams:
        a = dual._terms(y, fb, vp, left)
        b = dual._terms(y, fb, vp, right)
        for i in range(2):
            out.append((y, abs(a[i] - b[i]) / (1.0 + abs(a[i]))))
    return out


def check_dual_ode(fb: FreeBoundarySolution, vp: ValidatedParams, n: int = 300) -> VerificationReport:
    """Relative ODE residual on n points over the region interiors, plus C^1 matching at the seams."""
    per = max(1, n // 3)
    ys = list(dual.dual_grid(fb, per))
    viol = []
    for y in ys:
        ev = dual.eval_dual(float(y), fb, vp)
        viol.append(abs(dual.ode_residual(ev, vp)) / (1.0 + abs(ev.uhat)))
    for y, jump in seam_jumps(fb, vp):
        ys.append(y)
        viol.append(jump)
    return VerificationReport.build("dual_ode", per * 3, viol, ys, ODE_TOL)


def free_boundary_conditions(fb: FreeBoundarySolution, vp: ValidatedParams) -> dict:
    """The four scalar conditions, each divided by (1 + its natural scale)."""
    p = vp.p
    e0 = dual.eval_dual(fb.y0, fb, vp)
    es = dual.eval_dual(fb.y_star, fb, vp)
    ys = fb.y_star
    return {
        "uhat_y0": abs(e0.uhat) / (1.0 + abs(fb.c1 * fb.y0)),
        "uhat_y_y0": abs(e0.uhat_y) / (1.0 + abs(fb.c1)),
        "smooth_pasting": abs((1 - p) * es.uhat + p * ys * es.uhat_y) / (1.0 + abs(es.uhat)),
        "super_contact": abs(es.uhat_y + p * ys * es.uhat_yy) / (1.0 + abs(es.uhat_y)),
    }


def check_free_boundaries(fb: FreeBoundarySolution, vp: ValidatedParams) -> VerificationReport:
    cond = free_boundary_conditions(fb, vp)
    # identity for U-hat at y* that follows from the two conditions at y*
    es = dual.eval_dual(fb.y_star, fb, vp)
    target = vp.kappa * vp.p**2 / vp.q * (1.0 / (1.0 - vp.p) - fb.y_star)
    cond["uhat_ystar_identity"] = abs(es.uhat - target) / abs(target)
    names = list(cond)
    pts = [(fb.y0,), (fb.y0,), (fb.y_star,), (fb.y_star,), (fb.y_star,)]
    rep = VerificationReport.build("free_boundaries", len(names), list(cond.values()), pts, FB_TOL)
    worst = names[int(np.argmax(list(cond.values())))]
    return VerificationReport(**{**rep.__dict__, "note": f"worst={worst}"})


def check_constants(fb: FreeBoundarySolution, vp: ValidatedParams) -> VerificationReport:
    """C2..C6 in use against a fresh evaluation of their y*-forms."""
    ref = constants_from_y(vp, fb.y_star)
    used = {"c2": fb.c2, "c3": fb.c3, "c4": fb.c4, "c5": fb.c5, "c6": fb.c6}
    viol = [abs(used[k] - ref[k]) / max(abs(ref[k]), 1e-300) for k in used]
    return VerificationReport.build("constants", len(used), viol, [(i,) for i in range(2, 7)], CONST_RTOL)


def check_boundary_recovery(fb: FreeBoundarySolution, vp: ValidatedParams) -> VerificationReport:
    """-U_y at alpha^-p, 1 and y* against the closed-form w_alpha, w_1, w*."""
    pts = [(fb.y_alpha, fb.w_alpha), (1.0, fb.w_one), (fb.y_star, fb.w_star)]
    if vp.alpha == 1.0:
        pts = pts[1:]
    viol = [abs(-dual.eval_dual(y, fb, vp).uhat_y - w) / w for y, w in pts]
    return VerificationReport.build("boundary_recovery", len(pts), viol, pts, FB_TOL)


def check_legendre_round_trip(fb: FreeBoundarySolution, vp: ValidatedParams, n: int = 100) -> VerificationReport:
    w = np.linspace(0.0, fb.w_star, n)
    y = dual.invert_dual_many(w, fb, vp)
    _, u_y, _ = dual.eval_dual_many(y, fb, vp)
    viol = np.abs(-u_y - w) / (1.0 + w)
    return VerificationReport.build("legendre_round_trip", n, viol, w, 1e-10)


# --- comparison-lemma conditions ---------------------------------------------------

def generator(pi, c, x, z, fb, vp):
    """HJB generator at (x, z) for controls (pi, c); broadcasts over arrays.

    A control c above z is evaluated at the ratcheted state (x, c), since
    paying it moves the peak to c.
    """
    pi, c, x, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (pi, c, x, z)))
    v, vx, vxx, _ = policy.derivatives_many(x, np.maximum(z, c), fb, vp)
    return _gen(pi, c, v, vx, vxx, vp)


def _gen(pi, c, v, vx, vxx, vp):
    return (0.5 * vp.sigma**2 * pi * pi * vxx + (vp.mu * pi - c) * vx
            - vp.delta * v + c ** (1.0 - vp.p) / (1.0 - vp.p))


def analytic_maximizers(x, z, fb, vp):
    """First-order-condition pi and the three-branch c; vectorised."""
    _, vx, vxx, _ = policy.derivatives_many(x, z, fb, vp)
    pi = -vp.mu * vx / (vp.sigma**2 * vxx)
    return pi, np.clip(vx ** (-1.0 / vp.p), vp.alpha * np.asarray(z), z)


def state_grid(fb: FreeBoundarySolution, n: int, above: float = 1.5) -> np.ndarray:
    """States (x, z): z on [0.5, 2] and x/z on (0, above * w*], boundary ratio included."""
    zs = np.linspace(0.5, 2.0, n)
    ws = np.unique(np.append(np.linspace(0.0, above * fb.w_star, n + 1)[1:], fb.w_star))
    zz, ww = np.meshgrid(zs, ws, indexing="ij")
    return np.column_stack([(ww * zz).ravel(), zz.ravel()])


def check_comparison_conditions(fb: FreeBoundarySolution, vp: ValidatedParams, grid: int = 50,
                                n_ctrl: int = 21) -> tuple[VerificationReport, ...]:
    """Conditions (i) and (ii) on a grid over D and above it.

    Returns three reports: scaled finite-difference V_z <= tol, the largest
    generator value over the control lattice <= tol, and the HJB equality at
    (pi*, c*) for states inside D. Generator values are divided by
    z^(1-p) so the tolerance is scale-free.
    """
    st = state_grid(fb, grid)
    x, z = st[:, 0], st[:, 1]
    h = FD_REL_STEP * z
    vz = (policy.derivatives_many(x, z + h, fb, vp)[0]
          - policy.derivatives_many(x, z - h, fb, vp)[0]) / (2 * h) * z**vp.p

    ze = np.maximum(z, x / fb.w_star)  # above D the peak in force is x/w*
    pi_hat, c_hat = analytic_maximizers(x, ze, fb, vp)
    t = np.linspace(0.0, 1.0, n_ctrl)
    pis = np.column_stack([2.0 * np.maximum(pi_hat, x)[:, None] * t, pi_hat])
    cs = np.column_stack([(vp.alpha + (3.0 - vp.alpha) * t) * ze[:, None], c_hat])
    # derivatives depend on c only through the peak max(ze, c)
    v, vx, vxx, _ = policy.derivatives_many(x[:, None], np.maximum(ze[:, None], cs), fb, vp)
    g = _gen(pis[:, :, None], cs[:, None, :], v[:, None, :], vx[:, None, :], vxx[:, None, :], vp)
    gmax = g.max(axis=(1, 2)) / ze ** (1.0 - vp.p)

    inside = x < fb.w_star * z
    xi, zi = x[inside], z[inside]
    v, vx, vxx, _ = policy.derivatives_many(xi, zi, fb, vp)
    _, pi_s, c_s = _policy_many(xi, zi, fb, vp)
    eq = np.abs(_gen(pi_s, c_s, v, vx, vxx, vp)) / zi ** (1.0 - vp.p)
    pts = [tuple(r) for r in st]
    return (
        VerificationReport.build("condition_i_vz", len(st), vz, pts, COMPARISON_TOL),
        VerificationReport.build("condition_ii_generator", len(st), gmax, pts, COMPARISON_TOL),
        VerificationReport.build("hjb_equality", int(inside.sum()), eq, st[inside], HJB_EQUALITY_TOL),
    )


def _policy_many(x, z, fb, vp):
    out = [policy.policy_on_grid(x[z == zz], float(zz), fb, vp) for zz in np.unique(z)]
    order = np.concatenate([np.flatnonzero(z == zz) for zz in np.unique(z)])
    res = [np.empty_like(x) for _ in range(3)]
    for i in range(3):
        res[i][order] = np.concatenate([o[i] for o in out])
    return res


# --- comparative statics and limits ---------------------------------------------

def sample_states(n: int = 10):
    return [(float(x), 1.0) for x in np.linspace(0.5, 4.4, n)]


def check_comparative_statics(vp_base: ValidatedParams, alphas,
                              states=None) -> tuple[VerificationReport, VerificationReport]:
    """Hard: w* strictly up, V and U-hat non-increasing in alpha.

    Soft: w_alpha and w_1 increasing in alpha.
    """
    alphas = sorted(float(a) for a in alphas)
    if len(alphas) < 2:
        raise ValueError("need at least two alpha values")
    sols = [(vp_base.with_alpha(a), solve(vp_base.with_alpha(a))) for a in alphas]
    states = sample_states() if states is None else states
    viol, pts = [], []
    for (va, fa), (vb, fbb), a, b in zip(sols, sols[1:], alphas, alphas[1:]):
        # strictness: equal w* is a failure
        viol.append(math.inf if not fbb.w_star > fa.w_star else (fa.w_star - fbb.w_star) / fa.w_star)
        pts.append((a, b, math.nan))
        for x, z in states:
            va_val = policy.value(x, z, fa, va)
            viol.append((policy.value(x, z, fbb, vb) - va_val) / abs(va_val))
            pts.append((a, b, x))
        lo, hi = max(fa.y_star, fbb.y_star), min(fa.y0, fbb.y0)
        for y in np.geomspace(lo, hi, 12)[1:-1]:
            ua = dual.eval_dual(float(y), fa, va).uhat
            viol.append((dual.eval_dual(float(y), fbb, vb).uhat - ua) / (1.0 + abs(ua)))
            pts.append((a, b, float(y)))
    hard = VerificationReport.build("comparative_statics", len(alphas), viol, pts, 1e-12)
    soft_v, soft_p = [], []
    for (_, fa), (_, fbb), a in zip(sols, sols[1:], alphas):
        soft_v += [fa.w_alpha - fbb.w_alpha, fa.w_one - fbb.w_one]
        soft_p += [(a, 0.0), (a, 1.0)]
    soft = VerificationReport.build("statics_w_alpha_w_one", len(alphas), soft_v, soft_p, 0.0, hard=False)
    return hard, soft


def check_merton_limit(vp: ValidatedParams, alpha: float = 1e-4, xs=(1.0, 2.0, 3.0, 4.0)) -> VerificationReport:
    va = vp.with_alpha(alpha)
    fa = solve(va)
    m = policy.merton_limit(vp)
    viol, pts = [], []
    for x in xs:
        viol += [abs(policy.value(x, 1.0, fa, va) / m.value(x) - 1.0),
                 abs(policy.pi_star(x, 1.0, fa, va) / m.pi(x) - 1.0),
                 abs(policy.c_star(x, 1.0, fa, va) / m.c(x) - 1.0)]
        pts += [(x, 0.0), (x, 1.0), (x, 2.0)]
    return VerificationReport.build("merton_limit", len(xs), viol, pts, MERTON_RTOL)


def check_ratcheting_limit(vp: ValidatedParams, alpha: float = 1.0 - 1e-4, n: int = 20) -> VerificationReport:
    va = vp.with_alpha(alpha)
    fa = solve(va)
    f1 = policy.ratcheting_limit(vp)
    xs = np.linspace(0.0, 1.5 * f1.w_star, n + 1)[1:]
    viol = [abs(policy.value(x, 1.0, fa, va) / policy.ratcheting_value(x, 1.0, f1, vp) - 1.0) for x in xs]
    return VerificationReport.build("ratcheting_limit", n, viol, xs, RATCHET_RTOL)


def check_lipschitz(fb: FreeBoundarySolution, vp: ValidatedParams, n: int = 400) -> VerificationReport:
    """Soft: largest finite-difference slope of pi* and c* in x on [0, 1.5 w*], z = 1."""
    x = np.linspace(0.0, 1.5 * fb.w_star, n)
    _, pi, c = policy.policy_on_grid(x, 1.0, fb, vp)
    slope = np.maximum(np.abs(np.diff(pi)), np.abs(np.diff(c))) / np.diff(x)
    bound = 100.0 * (vp.mu / vp.sigma**2 / vp.p + 1.0)
    return VerificationReport.build("lipschitz_slopes", n, slope, x[:-1], bound, hard=False)


DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def run_all(vp: ValidatedParams, grid: int = 50, threads: int = 1) -> list[VerificationReport]:
    """Full suite in a fixed order.

    Checks are independent; with threads > 1 they run concurrently and the
    results are collected in the same order, so output does not depend on it.
    """
    fb = solve(vp)
    jobs = [
        lambda: [check_dual_ode(fb, vp)],
        lambda: [check_free_boundaries(fb, vp)],
        lambda: [check_constants(fb, vp)],
        lambda: [check_boundary_recovery(fb, vp)],
        lambda: [check_legendre_round_trip(fb, vp)],
        lambda: list(check_comparison_conditions(fb, vp, grid=grid)),
        lambda: list(check_comparative_statics(vp, DEFAULT_ALPHAS)),
        lambda: [check_merton_limit(vp)],
        lambda: [check_ratcheting_limit(vp)],
        lambda: [check_lipschitz(fb, vp)],
    ]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda f: f(), jobs))
    else:
        parts = [f() for f in jobs]
    return [r for part in parts for r in part]


def all_hard_passed(reports) -> bool:
    return all(r.passed for r in reports if r.hard)
