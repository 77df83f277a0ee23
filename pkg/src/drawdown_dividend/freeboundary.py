"""Free-boundary solver.

Finds the pair (eta*, y*) solving the two-equation system that pins the dual
free boundaries, then derives y0, the six integration constants of the
piecewise dual function and the three critical surplus-to-peak ratios.

Both curves of the system are strictly monotone on the relevant branch
(eta > 1/(1-p)), so nested bracketed bisection converges unconditionally:
an inner bisection in eta along the first equation, an outer bisection in y
on the second equation with eta = eta(y) substituted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AlphaOutOfRange, BracketNotFound, ConstantMismatch, NoRoot, OrderingViolation
from .params import ValidatedParams

BRACKET_WIDTH = 1e-13
RESIDUAL_TOL = 1e-10
CONSTANT_RTOL = 1e-8
EXP_GUARD = 700.0
EPS = 2.220446049250313e-16
_MAX_DOUBLINGS = 200


@dataclass(frozen=True)
class FreeBoundarySolution:
    eta_star: float
    y_star: float
    y0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    w_alpha: float
    w_one: float
    w_star: float
    alpha: float

    @property
    def y_alpha(self) -> float:
        """Dual seam between the LOW and MID regions, alpha^(-p)."""
        return self.y0 / self.eta_star

    def as_dict(self) -> dict:
        return {
            "eta_star": self.eta_star,
            "y_star": self.y_star,
            "y0": self.y0,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "c4": self.c4,
            "c5": self.c5,
            "c6": self.c6,
            "w_alpha": self.w_alpha,
            "w_one": self.w_one,
            "w_star": self.w_star,
        }


def _pow(base: float, expo: float) -> float:
    """base**expo through exp/log, raising BracketNotFound instead of overflowing."""
    arg = expo * math.log(base)
    if arg > EXP_GUARD:
        raise BracketNotFound(f"{base:.6g}**{expo:.6g} exceeds the overflow guard exp({EXP_GUARD:g})")
    return math.exp(arg)


# --- the two equations -------------------------------------------------------

def first_residual(eta: float, y: float, vp: ValidatedParams) -> float:
    """ln(eta^a / y) + a/(eta(1-p)) - 1/y - (a(1+p) - 1)."""
    a, p = vp.alpha, vp.p
    return (a * math.log(eta) - math.log(y) + a / (eta * (1.0 - p)) - 1.0 / y
            - (a * (1.0 + p) - 1.0))


def _eta_bracket_term(eta: float, vp: ValidatedParams) -> float:
    kd = vp.kd
    return (vp.kappa / (1.0 + kd) * _pow(eta, 1.0 + kd)
            - _pow(eta, kd) / (vp.delta * (1.0 - vp.p)))


def second_residual(eta: float, y: float, vp: ValidatedParams) -> float:
    """Left minus right side of the second equation of the system."""
    kd, d = vp.kd, vp.delta
    big_a = vp.alpha ** (-vp.q)
    lhs = (big_a * vp.q * _eta_bracket_term(eta, vp)
           + vp.kappa / (1.0 + kd) * y ** (1.0 + kd) - y**kd / d)
    return lhs - (big_a - 1.0) / (d * (1.0 + kd))


def _second_scaled(eta: float, y: float, vp: ValidatedParams) -> float:
    """second_residual multiplied by alpha**q; O(1) coefficients for every alpha."""
    kd, d = vp.kd, vp.delta
    a_q = vp.alpha ** vp.q
    return (vp.q * _eta_bracket_term(eta, vp)
            + a_q * (vp.kappa / (1.0 + kd) * y ** (1.0 + kd) - y**kd / d)
            - (1.0 - a_q) / (d * (1.0 + kd)))


def second_residual_tol(vp: ValidatedParams, eta: float | None = None, y: float | None = None) -> float:
    """Absolute acceptance tolerance for second_residual.

    1e-10 up to the alpha**(-q) scale. Given the root, it is raised to the
    rounding bound of evaluating the residual there, which dominates once
    eta**(1+kd) is large and the bracketed terms cancel.
    """
    tol = RESIDUAL_TOL * max(1.0, vp.alpha ** (-vp.q))
    if eta is not None and y is not None:
        kd, d, s = vp.kd, vp.delta, 1.0 + vp.kd
        big_a = vp.alpha ** (-vp.q)
        size = (big_a * vp.q * (vp.kappa / s * _pow(eta, s) + _pow(eta, kd) / (d * (1.0 - vp.p)))
                + vp.kappa / s * y**s + y**kd / d + abs(big_a - 1.0) / (d * s))
        tol = max(tol, 16.0 * EPS * size)
    return tol


def y_p(vp: ValidatedParams) -> float:
    """Point where the first-equation curve reaches eta = 1/(1-p).

    The first equation has a root eta > 1/(1-p) only for y < y_p. Exposed as
    a diagnostic.
    """
    eta_min = 1.0 / (1.0 - vp.p)
    lo, hi = 1e-300, 1.0
    if first_residual(eta_min, hi, vp) <= 0.0:
        raise BracketNotFound("first equation has no sign change in y on (0, 1) at eta = 1/(1-p)")
    while True:
        mid = 0.5 * (lo + hi) if hi / lo < 4.0 else math.sqrt(lo * hi)
        if mid <= lo or mid >= hi or hi - lo <= BRACKET_WIDTH * hi:
            return lo
        if first_residual(eta_min, mid, vp) < 0.0:
            lo = mid
        else:
            hi = mid


def solve_eta_given_y(y: float, vp: ValidatedParams) -> float:
    """Unique eta > 1/(1-p) solving the first equation at fixed y in (0, 1)."""
    if not 0.0 < y < 1.0:
        raise ValueError(f"y must lie in (0, 1), got {y!r}")
    lo = (1.0 + 1e-12) / (1.0 - vp.p)
    g_lo = first_residual(lo, y, vp)
    if g_lo >= 0.0:
        raise BracketNotFound(
            f"no root with eta > 1/(1-p) at y={y:.6g}: residual at the lower end is {g_lo:.3e} >= 0 "
            "(y is at or beyond y_p)")
    # guard keeps eta**(1+kd) representable for the second equation
    eta_cap = math.exp(EXP_GUARD / (1.0 + vp.kd))
    hi = 2.0 * lo
    for _ in range(_MAX_DOUBLINGS):
        if first_residual(hi, y, vp) > 0.0:
            break
        if hi >= eta_cap:
            raise BracketNotFound(
                f"no sign change for eta in [{lo:.6g}, {eta_cap:.6g}] at y={y:.6g}; "
                "search capped by the overflow guard")
        hi = min(2.0 * hi, eta_cap)
    else:
        raise BracketNotFound(f"no sign change for eta in [{lo:.6g}, {hi:.6g}] at y={y:.6g}")

    while hi - lo > max(BRACKET_WIDTH, 4e-16 * hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if first_residual(mid, y, vp) < 0.0:
            lo = mid
        else:
            hi = mid
    g_lo, g_hi = first_residual(lo, y, vp), first_residual(hi, y, vp)
    return lo if abs(g_lo) <= abs(g_hi) else hi


def _outer_residual(y: float, vp: ValidatedParams) -> float:
    try:
        eta = solve_eta_given_y(y, vp)
        return _second_scaled(eta, y, vp)
    except BracketNotFound:
        # eta(y) beyond the overflow guard: the eta**(1+kd) term dominates
        # and the residual is positive. y >= y_p is a genuine failure.
        if first_residual((1.0 + 1e-12) / (1.0 - vp.p), y, vp) < 0.0:
            return math.inf
        raise


def _jacobian(eta, y, vp):
    a, p, kd, kappa = vp.alpha, vp.p, vp.kd, vp.kappa
    g_eta = a / eta * (1.0 - 1.0 / (eta * (1.0 - p)))
    g_y = -1.0 / y + 1.0 / y**2
    a_q = a ** vp.q
    h_eta = vp.q * (kappa * _pow(eta, kd) - kd * _pow(eta, kd - 1.0) / (vp.delta * (1.0 - p)))
    h_y = a_q * (kappa * y**kd - kd * y ** (kd - 1.0) / vp.delta)
    return g_eta, g_y, h_eta, h_y


def _newton_polish(eta, y, vp, steps=3):
    """A few Newton steps on the 2x2 system from a bisection-quality start.

    Bisection along the first curve stalls at the resolution of y; eta moves
    orders of magnitude faster than y along that curve, so the second residual
    needs the joint correction.
    """
    best = (max(abs(first_residual(eta, y, vp)), abs(_second_scaled(eta, y, vp))), eta, y)
    for _ in range(steps):
        g = first_residual(eta, y, vp)
        h = _second_scaled(eta, y, vp)
        g_eta, g_y, h_eta, h_y = _jacobian(eta, y, vp)
        det = g_eta * h_y - g_y * h_eta
        if det == 0.0:
            break
        eta = eta - (h_y * g - g_y * h) / det
        y = y - (-h_eta * g + g_eta * h) / det
        if not (0.0 < y < 1.0 and eta > 1.0 / (1.0 - vp.p)):
            break
        err = max(abs(first_residual(eta, y, vp)), abs(_second_scaled(eta, y, vp)))
        if err < best[0]:
            best = (err, eta, y)
    return best[1], best[2]


def _residual_profile(lo, hi, vp, n=33):
    profile = []
    for i in range(n):
        y = lo * (hi / lo) ** (i / (n - 1))
        try:
            profile.append((y, _outer_residual(y, vp)))
        except BracketNotFound:
            profile.append((y, math.nan))
    return profile


def solve_system(vp: ValidatedParams, y_bracket: tuple[float, float] | None = None) -> tuple[float, float]:
    """Return (eta*, y*) for 0 < alpha <= 1.

    ``y_bracket`` overrides the initial outer bracket; it is shrunk to the
    feasible branch y < y_p and expanded downwards until the residual of the
    second equation changes sign.
    """
    if not 0.0 < vp.alpha <= 1.0:
        raise AlphaOutOfRange("solve_system needs 0 < alpha <= 1; alpha = 0 is the Merton branch")
    yp = y_p(vp)
    y_hi = yp * (1.0 - 1e-10)
    y_lo = 0.5 * y_hi
    if y_bracket is not None:
        y_lo = max(min(y_bracket), 1e-300)
        y_hi = min(max(y_bracket), y_hi)
        if y_lo >= y_hi:
            y_lo = 0.5 * y_hi

    try:
        f_hi = _outer_residual(y_hi, vp)
    except BracketNotFound as exc:
        raise NoRoot(f"cannot evaluate the outer residual at y={y_hi:.6g}: {exc}") from exc
    while f_hi >= 0.0 and y_hi < yp * (1.0 - 1e-10):
        y_hi = min(2.0 * y_hi, yp * (1.0 - 1e-10))
        f_hi = _outer_residual(y_hi, vp)
    if f_hi >= 0.0:
        raise NoRoot(f"second-equation residual {f_hi:.3e} is non-negative at y={y_hi:.6g} near y_p",
                     _residual_profile(max(y_lo, 1e-12), y_hi, vp))

    f_lo = _outer_residual(y_lo, vp)
    while f_lo <= 0.0:
        if y_lo < 1e-300:
            raise NoRoot("no sign change of the second-equation residual for y down to 1e-300",
                         _residual_profile(1e-300, y_hi, vp))
        y_lo *= 0.5
        f_lo = _outer_residual(y_lo, vp)

    profile = _residual_profile(y_lo, y_hi, vp)
    signs = [math.copysign(1.0, r) for _, r in profile if not math.isnan(r)]
    changes = sum(1 for s0, s1 in zip(signs, signs[1:]) if s0 != s1)
    if changes != 1:
        raise NoRoot(f"expected exactly one sign change of the outer residual, found {changes}", profile)

    lo, hi = y_lo, y_hi
    while hi - lo > BRACKET_WIDTH * max(1.0, hi) and hi - lo > 4e-16 * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _outer_residual(mid, vp) > 0.0:
            lo = mid
        else:
            hi = mid
    f_lo, f_hi = _outer_residual(lo, vp), _outer_residual(hi, vp)
    y = lo if abs(f_lo) <= abs(f_hi) else hi
    eta = solve_eta_given_y(y, vp)
    eta, y = _newton_polish(eta, y, vp)

    r1, r2 = first_residual(eta, y, vp), second_residual(eta, y, vp)
    tol2 = second_residual_tol(vp, eta, y)
    if abs(r1) > RESIDUAL_TOL or abs(r2) > tol2:
        raise NoRoot(f"residuals ({r1:.3e}, {r2:.3e}) exceed ({RESIDUAL_TOL:g}, {tol2:.3e}) "
                     f"at eta={eta!r}, y={y!r}", profile)
    return eta, y


# --- constants and boundaries --------------------------------------------------

def constants_primary(vp: ValidatedParams, eta: float) -> tuple[float, ...]:
    """C1..C6 written in terms of eta*."""
    a, p, kappa, kd, d, q = vp.alpha, vp.p, vp.kappa, vp.kd, vp.delta, vp.q
    s = 1.0 + kd
    ln_eta = math.log(eta)
    inv = 1.0 / (eta * (1.0 - p))
    a_pow = a ** (1.0 - p * s)
    bracket = _eta_bracket_term(eta, vp)
    c1 = -kappa * a / s * (ln_eta - p * math.log(a) + inv + 1.0 / s)
    c2 = a_pow / s * bracket
    c3 = -kappa * a / s * (ln_eta + inv - (1.0 + p))
    c4 = a_pow / s * (bracket - 1.0 / (d * s * q))
    c5 = -kappa / s * (a * ln_eta + a * inv + (1.0 - a) * (1.0 + p) + 1.0 / s)
    c6 = a_pow / s * bracket - (a_pow - 1.0) / (d * s**2 * q)
    return c1, c2, c3, c4, c5, c6


def bracket_from_y(vp: ValidatedParams, y: float) -> float:
    """kappa/s eta*^s - eta*^kd/(delta(1-p)) recovered from the second equation at y*.

    Direct evaluation at eta* cancels two terms of size eta*^(1+kd); this
    form has O(1) terms for every alpha.
    """
    kd, d = vp.kd, vp.delta
    s = 1.0 + kd
    a_q = vp.alpha ** vp.q
    return ((1.0 - a_q) / (d * s) - a_q * (vp.kappa / s * y**s - y**kd / d)) / vp.q


def constants_from_y(vp: ValidatedParams, y: float) -> dict:
    """C2..C6 written in terms of y*; independent of eta* once the system holds."""
    p, kappa, kd, d, q = vp.p, vp.kappa, vp.kd, vp.delta, vp.q
    s = 1.0 + kd
    ykd, ys1 = y**kd, y**s
    return {
        "c2": vp.alpha ** (1.0 - p * s) / s * bracket_from_y(vp, y),
        "c3": -kappa / s * (1.0 / y + math.log(y) - 1.0),
        "c4": (-1.0 / s + ykd - kd / s * ys1) / (d * s * q),
        "c5": -kappa / s * (math.log(y) + 1.0 / y + p + 1.0 / s),
        "c6": (ykd - kd / s * ys1) / (d * s * q),
    }


def _primary_rounding(vp: ValidatedParams, eta: float) -> dict:
    """Rounding bound of the eta*-forms of C2..C6.

    C2, C4 and C6 subtract terms of size alpha**(1-ps) eta*^s to get an O(1)
    result, so the eta*-forms lose digits as alpha -> 0 or kd grows.
    """
    s = 1.0 + vp.kd
    a_pow = vp.alpha ** (1.0 - vp.p * s)
    big = a_pow / s * (vp.kappa / s * _pow(eta, s) + _pow(eta, vp.kd) / (vp.delta * (1.0 - vp.p))
                       + 1.0 / (vp.delta * s * vp.q))
    small = vp.kappa / s * (abs(math.log(eta)) + 1.0 / (eta * (1.0 - vp.p)) + 1.0 + vp.p + 1.0 / s)
    eps = 64.0 * 2.2e-16
    return {"c2": eps * big, "c3": eps * small, "c4": eps * big, "c5": eps * small, "c6": eps * big}


def compute_constants(vp: ValidatedParams, eta_star: float, y_star: float) -> tuple[float, ...]:
    """C1..C6.

    C1 comes from its eta*-form. C2..C6 are taken from the y*-forms, which
    stay well conditioned as alpha -> 0 and for large kd, and each is checked
    against its eta*-form counterpart: 1e-8 relative, or the rounding bound of
    the eta*-form when that is larger.
    """
    prim = constants_primary(vp, eta_star)
    alt = constants_from_y(vp, y_star)
    # the y*-forms themselves cancel to O(1 - y*)^2 as alpha -> 0
    floor = 64.0 * 2.2e-16 * vp.kappa / (1.0 + vp.kd)
    rounding = _primary_rounding(vp, eta_star)
    for name, idx in (("c2", 1), ("c3", 2), ("c4", 3), ("c5", 4), ("c6", 5)):
        a, b = prim[idx], alt[name]
        tol = max(CONSTANT_RTOL * max(abs(a), abs(b)), floor, rounding[name])
        if abs(a - b) > tol:
            raise ConstantMismatch(
                f"{name}: eta*-form {a!r} vs y*-form {b!r} differ by {abs(a - b):.3e} > {tol:.3e}")
    return prim[0], alt["c2"], alt["c3"], alt["c4"], alt["c5"], alt["c6"]


def compute_boundaries(vp: ValidatedParams, eta_star: float, y_star: float) -> tuple[float, float, float]:
    a, p, kappa, kd, q = vp.alpha, vp.p, vp.kappa, vp.kd, vp.q
    s = 1.0 + kd
    # (kd/s - 1/(eta(1-p))) eta^s equals delta times the bracket; use its y*-form
    w_alpha = kappa * a / s * (math.log(eta_star) + vp.delta * bracket_from_y(vp, y_star)
                               - (kd / s - 1.0 / (eta_star * (1.0 - p))))
    w_one = kappa / s * (math.log(y_star) + p
                         + (1.0 / y_star - kd / s) * (1.0 + y_star**s / q))
    w_star = kappa * p / q * (1.0 / y_star - (1.0 - p))
    # alpha = 1 collapses the interior-rate band: w_alpha == w_one up to rounding
    ok = 0.0 < w_alpha and w_one < w_star and (w_alpha < w_one or (a == 1.0 and math.isclose(w_alpha, w_one, rel_tol=1e-9)))
    if not ok:
        raise OrderingViolation(f"expected 0 < w_alpha < w_one < w_star, got {w_alpha!r}, {w_one!r}, {w_star!r}")
    return w_alpha, w_one, w_star


def solve(vp: ValidatedParams, y_bracket=None) -> FreeBoundarySolution:
    """Full free-boundary solution for 0 < alpha <= 1."""
    eta, y = solve_system(vp, y_bracket)
    cs = compute_constants(vp, eta, y)
    w_alpha, w_one, w_star = compute_boundaries(vp, eta, y)
    y0 = eta * vp.alpha ** (-vp.p)
    return FreeBoundarySolution(eta, y, y0, *cs, w_alpha, w_one, w_star, vp.alpha)
