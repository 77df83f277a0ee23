"""Monte Carlo simulation of the optimally controlled surplus.

Euler-Maruyama on X with the singular control realised as a post-step
projection z <- max(z, X/w*). The feedback policy is tabulated once per
solution on a uniform grid of w = x/z in [0, w*] and read back by linear
interpolation inside a compiled per-path kernel.

Path k draws its normals from a generator seeded by a pure function of
(seed, k), so results do not depend on thread count or scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import policy
from .errors import InvalidSimConfig, SimulationAborted
from .freeboundary import FreeBoundarySolution
from .params import ValidatedParams

# the TBB layer warns on older system TBB; omp and workqueue behave identically here
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

TABLE_SIZE = 20001
ABORT_FRACTION = 1e-3


@dataclass(frozen=True)
class SimConfig:
    x0: float
    z0: float
    dt: float
    horizon: float
    n_paths: int
    seed: int
    vol_scale: float = 1.0  # 0 gives the deterministic smoke mode

    def __post_init__(self):
        for name in ("x0", "z0", "dt", "horizon"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0.0):
                raise InvalidSimConfig(f"{name} must be positive and finite, got {val!r}")
        if self.dt > self.horizon:
            raise InvalidSimConfig(f"dt={self.dt!r} exceeds horizon={self.horizon!r}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidSimConfig(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidSimConfig(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not (math.isfinite(self.vol_scale) and self.vol_scale >= 0.0):
            raise InvalidSimConfig(f"vol_scale must be finite and >= 0, got {self.vol_scale!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def truncation_factor(self, delta: float) -> float:
        return math.exp(-delta * self.n_steps * self.dt)


@dataclass(frozen=True)
class PathResult:
    ruin_time: float  # inf when the path survives to the horizon
    discounted_utility: float
    peak_final: float
    n_peak_increases: int
    x_final: float
    max_overshoot: float  # largest (X - w* z)/z before projection, after t = 0
    aborted: bool = False


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    n_ruined: int
    mean_ruin_time: float
    n_aborted: int
    analytic_value: float
    truncation_bound: float
    max_overshoot: float

    @property
    def abs_error(self) -> float:
        return abs(self.mean - self.analytic_value)


@dataclass(frozen=True)
class PolicyTable:
    """pi*/z, c*/z and V/z^(1-p) on a uniform grid of w over [0, w*]."""

    w_star: float
    pi: np.ndarray
    c: np.ndarray
    value: np.ndarray

    @classmethod
    def build(cls, fb: FreeBoundarySolution, vp: ValidatedParams, n: int = TABLE_SIZE) -> PolicyTable:
        w = np.linspace(0.0, fb.w_star, n)
        val, pi, c = policy.policy_on_grid(w, 1.0, fb, vp)
        return cls(fb.w_star, pi, c, val)


def path_seed(seed: int, k: int) -> int:
    """32-bit generator seed for path k; depends on (seed, k) only."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(k),)).generate_state(1)[0])


def path_seeds(seed: int, n: int) -> np.ndarray:
    return np.array([path_seed(seed, k) for k in range(n)], dtype=np.uint32)


@numba.njit(cache=True, inline="always")
def _interp(table, w, inv_h):
    u = w * inv_h
    i = int(u)
    if i >= table.shape[0] - 1:
        return table[table.shape[0] - 1]
    f = u - i
    return table[i] + f * (table[i + 1] - table[i])


@numba.njit(cache=True)
def _run_path(x0, z0, n_steps, dt, mu, sig, delta, p, w_star, pi_t, c_t, seed32,
              trace, stride):
    """One path; returns (ruin_time, utility, z, n_up, x, overshoot, aborted, n_rec).

    When trace has rows, (t, X, z, c, pi) is written every stride steps and
    at the terminal time.
    """
    np.random.seed(seed32)
    inv_h = (pi_t.shape[0] - 1) / w_star
    sq = math.sqrt(dt)
    disc_step = math.exp(-delta * dt)
    one_p = 1.0 - p
    x = x0
    z = z0
    n_up = 0
    if x > w_star * z:
        z = x / w_star
        n_up = 1
    disc = 1.0
    util = 0.0
    over = -np.inf
    ruin = np.inf
    n_rec = 0
    max_rec = trace.shape[0]
    t = 0.0
    for k in range(n_steps):
        t = k * dt
        w = x / z
        pi = _interp(pi_t, w, inv_h) * z
        c = _interp(c_t, w, inv_h) * z
        if n_rec < max_rec and k % stride == 0:
            trace[n_rec, 0] = t
            trace[n_rec, 1] = x
            trace[n_rec, 2] = z
            trace[n_rec, 3] = c
            trace[n_rec, 4] = pi
            n_rec += 1
        u = c**one_p / one_p
        xn = x + (mu * pi - c) * dt + sig * pi * sq * np.random.standard_normal()
        if not math.isfinite(xn):
            return ruin, util, z, n_up, x, over, True, n_rec
        if xn <= 0.0:
            frac = x / (x - xn)  # linear crossing inside the step
            util += disc * u * frac * dt
            ruin = t + frac * dt
            x = 0.0
            break
        util += disc * u * dt
        disc *= disc_step
        x = xn
        o = (x - w_star * z) / z
        if o > over:
            over = o
        if o > 0.0:
            z = x / w_star
            n_up += 1
    else:
        t = n_steps * dt
    if n_rec < max_rec:
        w = x / z
        trace[n_rec, 0] = ruin if ruin < np.inf else t
        trace[n_rec, 1] = x
        trace[n_rec, 2] = z
        trace[n_rec, 3] = _interp(c_t, w, inv_h) * z
        trace[n_rec, 4] = _interp(pi_t, w, inv_h) * z
        n_rec += 1
    return ruin, util, z, n_up, x, over, False, n_rec


@numba.njit(cache=True, parallel=True)
def _run_many(x0, z0, n_steps, dt, mu, sig, delta, p, w_star, pi_t, c_t, seeds, out, flags):
    empty = np.empty((0, 5))
    for k in numba.prange(seeds.shape[0]):
        r = _run_path(x0, z0, n_steps, dt, mu, sig, delta, p, w_star, pi_t, c_t,
                      seeds[k], empty, 1)
        out[k, 0] = r[0]
        out[k, 1] = r[1]
        out[k, 2] = r[2]
        out[k, 3] = r[3]
        out[k, 4] = r[4]
        out[k, 5] = r[5]
        flags[k] = r[6]


def _kernel_args(cfg: SimConfig, vp: ValidatedParams, table: PolicyTable):
    return (float(cfg.x0), float(cfg.z0), cfg.n_steps, float(cfg.dt), vp.mu,
            vp.sigma * cfg.vol_scale, vp.delta, vp.p, table.w_star, table.pi, table.c)


def simulate_path(cfg: SimConfig, fb: FreeBoundarySolution, vp: ValidatedParams, path_index: int = 0,
                  table: PolicyTable | None = None, trace_stride: int = 0):
    """Simulate path ``path_index`` of the stream defined by cfg.seed.

    With trace_stride > 0 also returns an array of rows (t, X, z, c, pi).
    """
    table = table or PolicyTable.build(fb, vp)
    rows = cfg.n_steps // trace_stride + 2 if trace_stride > 0 else 0
    trace = np.empty((rows, 5))
    r = _run_path(*_kernel_args(cfg, vp, table), np.uint32(path_seed(cfg.seed, path_index)),
                  trace, max(trace_stride, 1))
    res = PathResult(r[0], r[1], r[2], int(r[3]), r[4], r[5], bool(r[6]))
    return (res, trace[: r[7]]) if trace_stride > 0 else res


def run_paths(cfg: SimConfig, fb: FreeBoundarySolution, vp: ValidatedParams, threads: int | None = None,
              table: PolicyTable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-path results in path order: columns ruin, utility, z, n_up, x, overshoot; plus abort flags."""
    table = table or PolicyTable.build(fb, vp)
    seeds = path_seeds(cfg.seed, cfg.n_paths)
    out = np.empty((cfg.n_paths, 6))
    flags = np.zeros(cfg.n_paths, dtype=np.bool_)
    prev = numba.get_num_threads()
    numba.set_num_threads(max(1, min(threads or numba.config.NUMBA_NUM_THREADS, numba.config.NUMBA_NUM_THREADS)))
    try:
        _run_many(*_kernel_args(cfg, vp, table), seeds, out, flags)
    finally:
        numba.set_num_threads(prev)
    return out, flags


def monte_carlo(cfg: SimConfig, fb: FreeBoundarySolution, vp: ValidatedParams,
                threads: int | None = None) -> MCEstimate:
    table = PolicyTable.build(fb, vp)
    out, flags = run_paths(cfg, fb, vp, threads, table)
    n_abort = int(flags.sum())
    if n_abort > ABORT_FRACTION * cfg.n_paths:
        raise SimulationAborted(f"{n_abort} of {cfg.n_paths} paths hit a non-finite state")
    ok = out[~flags]
    util = ok[:, 1]
    n = util.shape[0]
    mean = float(util.sum() / n)  # fixed path order, so bit-stable
    stderr = float(util.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    ruined = np.isfinite(ok[:, 0])
    n_ruined = int(ruined.sum())
    mean_ruin = float(ok[ruined, 0].mean()) if n_ruined else math.nan
    cens = ok[~ruined]
    if cens.shape[0]:
        w = np.minimum(cens[:, 4] / cens[:, 2], fb.w_star)
        v_t = np.interp(w, np.linspace(0.0, fb.w_star, table.value.shape[0]), table.value)
        trunc = cfg.truncation_factor(vp.delta) * float(np.abs(v_t * cens[:, 2] ** (1 - vp.p)).mean())
    else:
        trunc = 0.0
    return MCEstimate(mean, stderr, n, n_ruined, mean_ruin, n_abort,
                      policy.value(cfg.x0, cfg.z0, fb, vp), trunc, float(ok[:, 5].max()))
