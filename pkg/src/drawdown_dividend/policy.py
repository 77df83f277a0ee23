"""Value function and optimal feedback policies in the primal variables.

Every quantity on the domain D = {0 <= x <= w* z} goes through the same
path: invert the dual at w = x/z, then read V, pi*, c* off U-hat. The
explicit region formulas are kept as independent cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dual
from .errors import InvalidState
from .freeboundary import FreeBoundarySolution, solve
from .params import ValidatedParams

A, B, C, E_BOUNDARY, D_ABOVE = "A", "B", "C", "E_boundary", "D_above"


@dataclass(frozen=True)
class StatePoint:
    x: float
    z: float

    def __post_init__(self):
        check_state(self.x, self.z)


@dataclass(frozen=True)
class PolicyEval:
    x: float
    z: float
    region: str
    y: float  # nan above the boundary
    value: float
    pi: float
    c: float


@dataclass(frozen=True)
class MertonSolution:
    value_coeff: float
    pi_slope: float
    c_slope: float
    p: float

    def value(self, x):
        return np.asarray(x, dtype=float) ** (1.0 - self.p) / (1.0 - self.p) * self.value_coeff

    def pi(self, x):
        return self.pi_slope * np.asarray(x, dtype=float)

    def c(self, x):
        return self.c_slope * np.asarray(x, dtype=float)


def check_state(x: float, z: float) -> None:
    if not (math.isfinite(x) and x >= 0.0):
        raise InvalidState(f"surplus x must be finite and x >= 0, got x={x!r}")
    if not (math.isfinite(z) and z > 0.0):
        raise InvalidState(f"historical peak z must be finite and z > 0, got z={z!r}")


def classify(x: float, z: float, fb: FreeBoundarySolution) -> str:
    check_state(x, z)
    if x > fb.w_star * z:
        return D_ABOVE
    if x == fb.w_star * z:
        return E_BOUNDARY
    if x <= fb.w_alpha * z:
        return A
    if x < fb.w_one * z:
        return B
    return C


def _above_coeff(fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    """K in V(x, z) = K x^(1-p)/(1-p) for x > w* z."""
    kp = vp.kappa * vp.p
    return kp * fb.w_star**vp.p / (vp.q * fb.w_star + kp * (1.0 - vp.p))


def _dual_at(x, z, fb, vp):
    return dual.eval_dual(dual.invert_dual(min(x / z, fb.w_star), fb, vp), fb, vp)


def value(x: float, z: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    check_state(x, z)
    if x > fb.w_star * z:
        return _above_coeff(fb, vp) * x ** (1.0 - vp.p) / (1.0 - vp.p)
    ev = _dual_at(x, z, fb, vp)
    return z ** (1.0 - vp.p) * (ev.uhat - ev.y * ev.uhat_y)


def value_closed_form(x: float, z: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    """V on D from the per-region closed form; cross-check for value()."""
    check_state(x, z)
    kappa, kd, p, d, q, a = vp.kappa, vp.kd, vp.p, vp.delta, vp.q, vp.alpha
    s = 1.0 + kd
    ys, y0 = fb.y_star, fb.y0
    y = dual.invert_dual(min(x / z, fb.w_star), fb, vp)
    zp = z ** (1.0 - p)
    region = dual.region_of(y, fb)
    if region == dual.LOW:
        r = y0 / y
        return (kappa * a * zp * y / s * (r**s - 1.0)
                - (a * z) ** (1.0 - p) / (d * (1.0 - p)) * (r**kd - 1.0))
    if region == dual.MID:
        brace = kd * ys**s / s - ys**kd + 1.0 / s
        return (kd * p**2 / (1.0 - p) * y ** (-(1.0 - p) / p) - brace * y ** (-kd)) * zp / (d * q)
    return (zp / q * (1.0 / d - kappa * ys / s) * (ys / y) ** kd
            + zp / (d * (1.0 - p)) - kappa * zp * y / s)


def pi_star(x: float, z: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    check_state(x, z)
    m = vp.mu / vp.sigma**2
    if x > fb.w_star * z:
        ev = dual.eval_dual(fb.y_star, fb, vp)
        return m * fb.y_star / fb.w_star * ev.uhat_yy * x
    ev = _dual_at(x, z, fb, vp)
    return m * z * ev.y * ev.uhat_yy


def c_star(x: float, z: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> float:
    region = classify(x, z, fb)
    if region == D_ABOVE:
        return x / fb.w_star
    if region == A:
        return fb.alpha * z
    if region in (C, E_BOUNDARY):
        return z
    y = dual.invert_dual(x / z, fb, vp)
    return y ** (-1.0 / vp.p) * z


def evaluate(x: float, z: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> PolicyEval:
    region = classify(x, z, fb)
    y = math.nan if region == D_ABOVE else dual.invert_dual(min(x / z, fb.w_star), fb, vp)
    return PolicyEval(x, z, region, y, value(x, z, fb, vp), pi_star(x, z, fb, vp), c_star(x, z, fb, vp))


def derivatives(x: float, z: float, fb: FreeBoundarySolution, vp: ValidatedParams) -> tuple[float, float, float, float]:
    """(V, V_x, V_xx, V_z) from the dual representation.

    On D: V_x = z^-p y, V_xx = -z^(-1-p) / U_yy and V_z = z^-p ((1-p) U + p y U_y).
    Above D the closed form depends on x only.
    """
    check_state(x, z)
    p = vp.p
    if x > fb.w_star * z:
        k = _above_coeff(fb, vp)
        return k * x ** (1.0 - p) / (1.0 - p), k * x**-p, -p * k * x ** (-p - 1.0), 0.0
    ev = _dual_at(x, z, fb, vp)
    zp = z**-p
    v = z ** (1.0 - p) * (ev.uhat - ev.y * ev.uhat_y)
    return v, zp * ev.y, -zp / z / ev.uhat_yy, zp * ((1.0 - p) * ev.uhat + p * ev.y * ev.uhat_y)


def merton_limit(vp: ValidatedParams) -> MertonSolution:
    """Unconstrained (alpha -> 0) solution; alpha is ignored."""
    kp2 = vp.kappa * vp.p**2
    return MertonSolution((kp2 / vp.q) ** vp.p, vp.mu / (vp.sigma**2 * vp.p), vp.q / kp2, vp.p)


def ratcheting_limit(vp: ValidatedParams) -> FreeBoundarySolution:
    """alpha = 1 solution. The interior-rate band is empty and c* = z on D."""
    return solve(vp.with_alpha(1.0))


def ratcheting_value(x: float, z: float, fb1: FreeBoundarySolution, vp: ValidatedParams) -> float:
    """V for alpha = 1 from the single-region closed form.

    Above the boundary this uses V(x, x/w*), which is what the alpha = 1
    limit of the general above-boundary value reduces to.
    """
    check_state(x, z)
    vp1 = vp.with_alpha(1.0)
    kappa, kd, p, d, q = vp1.kappa, vp1.kd, vp1.p, vp1.delta, vp1.q
    s = 1.0 + kd
    if x > fb1.w_star * z:
        kp = kappa * p
        return x ** (1.0 - p) / (1.0 - p) * kp * fb1.w_star**p / (q * fb1.w_star + kp * (1.0 - p))
    ys = fb1.y_star
    y = dual.invert_dual(x / z, fb1, vp1)
    zp = z ** (1.0 - p)
    return zp / q * (1.0 / d - kappa * ys / s) * (ys / y) ** kd + zp / (d * (1.0 - p)) - kappa * zp * y / s


# --- vectorised evaluation ------------------------------------------------------

def derivatives_many(x, z, fb: FreeBoundarySolution, vp: ValidatedParams):
    """Vectorised :func:`derivatives` over broadcast arrays of states."""
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(~np.isfinite(z)) or np.any(z <= 0.0):
        raise InvalidState("states must satisfy x >= 0 and z > 0, finite")
    p = vp.p
    above = x > fb.w_star * z
    y = dual.invert_dual_many(np.minimum(x / z, fb.w_star), fb, vp)
    u, u_y, u_yy = dual.eval_dual_many(y, fb, vp)
    zp = z**-p
    v = z ** (1.0 - p) * (u - y * u_y)
    vx = zp * y
    vxx = -zp / z / u_yy
    vz = zp * ((1.0 - p) * u + p * y * u_y)
    if above.any():
        k = _above_coeff(fb, vp)
        xa = x[above]
        v[above] = k * xa ** (1.0 - p) / (1.0 - p)
        vx[above] = k * xa**-p
        vxx[above] = -p * k * xa ** (-p - 1.0)
        vz[above] = 0.0
    return v, vx, vxx, vz


def policy_on_grid(x, z: float, fb: FreeBoundarySolution, vp: ValidatedParams):
    """(V, pi*, c*) arrays for an array of surplus values at a fixed peak z."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0):
        raise InvalidState("surplus grid must be finite and non-negative")
    check_state(0.0, z)
    p = vp.p
    above = x > fb.w_star * z
    w = np.minimum(x / z, fb.w_star)
    y = dual.invert_dual_many(w, fb, vp)
    u, u_y, u_yy = dual.eval_dual_many(y, fb, vp)
    val = z ** (1.0 - p) * (u - y * u_y)
    pi = vp.mu / vp.sigma**2 * z * y * u_yy
    c = np.where(w <= fb.w_alpha, fb.alpha * z, np.where(w < fb.w_one, y ** (-1.0 / p) * z, z))
    if above.any():
        k = _above_coeff(fb, vp)
        u_yy_s = dual.eval_dual(fb.y_star, fb, vp).uhat_yy
        xa = x[above]
        val[above] = k * xa ** (1.0 - p) / (1.0 - p)
        pi[above] = vp.mu / vp.sigma**2 * fb.y_star / fb.w_star * u_yy_s * xa
        c[above] = xa / fb.w_star
    return val, pi, c
