"""Piecewise dual value function and its Legendre inversion.

The dual function solves a linear second-order ODE on [y*, y0] with three
right-hand sides: LOW on [alpha^-p, y0] (dividend at the floor alpha*z),
MID on (1, alpha^-p) (interior dividend rate) and HIGH on [y*, 1] (dividend
at the peak z). Region seams take the closed interval of each
partition piece, LOW at alpha^-p and HIGH at 1; U-hat is C^2 across both seams so
the choice does not move any value beyond rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfDualRange, OutOfPrimalRange
from .freeboundary import FreeBoundarySolution
from .params import ValidatedParams

LOW, MID, HIGH = "LOW", "MID", "HIGH"
ENDPOINT_TOL = 1e-12
MAX_BISECT = 200


@dataclass(frozen=True)
class DualEval:
    y: float
    uhat: float
    uhat_y: float
    uhat_yy: float
    region: str


def region_of(y: float, fb: FreeBoundarySolution) -> str:
    if y >= fb.y_alpha:
        return LOW
    if y > 1.0:
        return MID
    return HIGH


def _terms(y: float, fb: FreeBoundarySolution, vp: ValidatedParams, region: str):
    """(U, U_y, U_yy) from the closed form of one region."""
    return tuple(float(v) for v in _terms_array(np.float64(y), fb, vp, region))


def eval_dual(y: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> DualEval:
    """Evaluate U-hat and its first two derivatives at a dual point in [y*, y0]."""
    lo, hi = fb.y_star, fb.y0
    if not (lo * (1.0 - ENDPOINT_TOL) <= y <= hi * (1.0 + ENDPOINT_TOL)):
        raise OutOfDualRange(f"dual point {y!r} outside [y*, y0] = [{lo!r}, {hi!r}]")
    region = region_of(y, fb)
    return DualEval(y, *_terms(y, fb, vp, region), region)


def ode_rhs(y: float, vp: ValidatedParams, region: str) -> float:
    kappa, p, a = vp.kappa, vp.p, vp.alpha
    if region == LOW:
        return kappa * (a * y - a ** (1.0 - p) / (1.0 - p))
    if region == MID:
        return -kappa * p / (1.0 - p) * y ** (-(1.0 - p) / p)
    return kappa * (y - 1.0 / (1.0 - p))


def ode_residual(ev: DualEval, vp: ValidatedParams) -> float:
    """y^2 U_yy + kd y U_y - kd U minus the region's right-hand side."""
    y, kd = ev.y, vp.kd
    return y * y * ev.uhat_yy + kd * y * ev.uhat_y - kd * ev.uhat - ode_rhs(y, vp, ev.region)


def invert_dual(w: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    """Dual point y in [y*, y0] with -U_y(y) = w, for 0 <= w <= w*.

    Bisection on the strictly increasing map y -> U_y(y).
    """
    if not (w >= 0.0 and w <= fb.w_star * (1.0 + 1e-9)):
        raise OutOfPrimalRange(f"surplus-to-peak ratio {w!r} outside [0, w*] = [0, {fb.w_star!r}]")
    if w == 0.0:
        return fb.y0
    if w >= fb.w_star:
        return fb.y_star
    lo, hi = fb.y_star, fb.y0  # -U_y(lo) = w* > w > 0 = -U_y(hi)
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if -_terms(mid, fb, vp, region_of(mid, fb))[1] > w:
            lo = mid
        else:
            hi = mid
    err_lo = abs(-_terms(lo, fb, vp, region_of(lo, fb))[1] - w)
    err_hi = abs(-_terms(hi, fb, vp, region_of(hi, fb))[1] - w)
    return lo if err_lo <= err_hi else hi


def primal_from_dual(ev: DualEval) -> tuple[float, float]:
    """(w, U(w)) from the concave Legendre transform: w = -U_y, U = U-hat - y U_y."""
    return -ev.uhat_y, ev.uhat - ev.y * ev.uhat_y


def explicit_ratio(y: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    """x/z as an explicit function of y, one formula per region.

    Independent of the C1..C6 route; used to cross-check the numeric inverse.
    """
    kappa, kd, p, q, a = vp.kappa, vp.kd, vp.p, vp.q, vp.alpha
    s = 1.0 + kd
    ys, y0 = fb.y_star, fb.y0
    region = region_of(y, fb)
    if region == LOW:
        r = y0 / y
        return kappa * a / s * (math.log(r) + (kd / s - a ** (-p) / (y0 * (1.0 - p))) * (r**s - 1.0))
    if region == MID:
        brace = kd * ys**s / s - ys**kd + 1.0 / s
        return (kappa / s * (math.log(ys) + 1.0 / ys - 1.0)
                + kappa * p**2 / q * y ** (-1.0 / p)
                - kappa * y ** (-s) / (s * q) * brace)
    r = ys / y
    return kappa / s * (math.log(r) + p + (1.0 / ys - kd / s) * (1.0 + r**s / q))


def explicit_pi_ratio(y: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    """pi*/z as an explicit function of y, one formula per region."""
    mu, kd, p, q, a = vp.mu, vp.kd, vp.p, vp.q, vp.alpha
    s = 1.0 + kd
    ys, y0 = fb.y_star, fb.y0
    region = region_of(y, fb)
    if region == LOW:
        return 2.0 * a / mu * ((kd / s - a ** (-p) / (y0 * (1.0 - p))) * (y0 / y) ** s + 1.0 / s)
    if region == MID:
        return 2.0 / (mu * q) * (p * y ** (-1.0 / p) - y ** (-s) / s + (1.0 / ys - kd / s) * (ys / y) ** s)
    return 2.0 / mu * (1.0 / s + (1.0 / ys - kd / s) * (ys / y) ** s / q)


def dual_grid(fb: FreeBoundarySolution, n: int) -> np.ndarray:
    """n log-spaced interior points per region."""
    edges = [(fb.y_star, 1.0), (1.0, fb.y_alpha), (fb.y_alpha, fb.y0)]
    pts = []
    for a, b in edges:
        if b <= a:
            continue
        t = np.linspace(0.0, 1.0, n + 2)[1:-1]
        pts.append(np.exp(np.log(a) + t * (np.log(b) - np.log(a))))
    return np.concatenate(pts)


def eval_dual_many(y, fb: FreeBoundarySolution, vp: ValidatedParams):
    """Vectorised (U, U_y, U_yy) for an array of dual points in [y*, y0]."""
    y = np.asarray(y, dtype=float)
    out = np.empty((3,) + y.shape)
    low = y >= fb.y_alpha
    mid = (y > 1.0) & ~low
    high = ~(low | mid)
    with np.errstate(over="ignore", invalid="ignore"):
        for mask, region in ((low, LOW), (mid, MID), (high, HIGH)):
            if mask.any():
                vals = _terms_array(y[mask], fb, vp, region)
                for i in range(3):
                    out[i][mask] = vals[i]
    return out[0], out[1], out[2]


def _terms_array(y, fb, vp, region):
    # y**-kd through exp/log so large y0 does not overflow
    kappa, kd, p, d = vp.kappa, vp.kd, vp.p, vp.delta
    s = 1.0 + kd
    ly = np.log(y)
    y_mkd = np.exp(-kd * ly)
    if region == MID:
        g = kappa * p**3 / ((1.0 - p) * vp.q)
        y_pow = np.exp(-(1.0 - p) / p * ly)
        u = fb.c3 * y + fb.c4 * y_mkd + g * y_pow
        u_y = fb.c3 - kd * fb.c4 * y_mkd / y - kappa * p**2 / vp.q * y_pow / y
        u_yy = kd * s * fb.c4 * y_mkd / y**2 + kappa * p / vp.q * y_pow / y**2
        return u, u_y, u_yy
    if region == LOW:
        a1, a2, lin = fb.c1, fb.c2, vp.alpha
        const = vp.alpha ** (1.0 - p) / (d * (1.0 - p))
    else:
        a1, a2, lin = fb.c5, fb.c6, 1.0
        const = 1.0 / (d * (1.0 - p))
    k_log = kappa * lin / s
    u = a1 * y + a2 * y_mkd + k_log * y * ly + const
    u_y = a1 - kd * a2 * y_mkd / y + k_log * (ly + 1.0)
    u_yy = kd * s * a2 * y_mkd / y**2 + k_log / y
    return u, u_y, u_yy


def invert_dual_many(w, fb: FreeBoundarySolution, vp: ValidatedParams) -> np.ndarray:
    """Vectorised invert_dual: lock-step bisection over an array of ratios."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0.0) or np.any(w > fb.w_star * (1.0 + 1e-9)):
        raise OutOfPrimalRange(f"surplus-to-peak ratios must lie in [0, w*] = [0, {fb.w_star!r}]")
    lo = np.full(w.shape, fb.y_star)
    hi = np.full(w.shape, fb.y0)
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if not np.any((mid > lo) & (mid < hi)):
            break
        above = -eval_dual_many(mid, fb, vp)[1] > w
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    err_lo = np.abs(-eval_dual_many(lo, fb, vp)[1] - w)
    err_hi = np.abs(-eval_dual_many(hi, fb, vp)[1] - w)
    y = np.where(err_lo <= err_hi, lo, hi)
    y = np.where(w == 0.0, fb.y0, y)
    return np.where(w >= fb.w_star, fb.y_star, y)
