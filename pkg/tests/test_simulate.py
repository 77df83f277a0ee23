import json
import os
import subprocess
import sys

import numpy as np
import pytest

from drawdown_dividend import policy as P, simulate as S
from drawdown_dividend.errors import InvalidSimConfig, SimulationAborted
from drawdown_dividend.freeboundary import solve


@pytest.fixture(scope="module")
def table(fb, vp):
    return S.PolicyTable.build(fb, vp)


def test_config_validation():
    with pytest.raises(InvalidSimConfig):
        S.SimConfig(0.0, 1.0, 1e-3, 1.0, 10, 0)
    with pytest.raises(InvalidSimConfig):
        S.SimConfig(1.0, 1.0, 2.0, 1.0, 10, 0)
    with pytest.raises(InvalidSimConfig):
        S.SimConfig(1.0, 1.0, 1e-3, 1.0, 0, 0)
    with pytest.raises(InvalidSimConfig):
        S.SimConfig(1.0, 1.0, 1e-3, 1.0, 10, -1)


def test_path_seed_is_pure():
    assert S.path_seed(42, 7) == S.path_seed(42, 7)
    assert S.path_seed(42, 7) != S.path_seed(42, 8)
    assert S.path_seed(42, 7) != S.path_seed(43, 7)


def test_table_matches_policy(fb, vp, table):
    w = np.linspace(0.0, fb.w_star, table.pi.shape[0])
    for i in (0, 1234, 9999, 20000):
        e = P.evaluate(float(w[i]), 1.0, fb, vp)
        assert table.pi[i] == pytest.approx(e.pi, rel=1e-12)
        assert table.c[i] == pytest.approx(e.c, rel=1e-12)


def test_initial_jump(fb, vp, table):
    cfg = S.SimConfig(2 * fb.w_star, 1.0, 1e-3, 1.0, 1, 3)
    _, tr = S.simulate_path(cfg, fb, vp, 0, table=table, trace_stride=1)
    assert tr[0, 2] == pytest.approx(2.0, rel=1e-15)
    assert tr[0, 3] == pytest.approx(2.0, rel=1e-12)  # c = x/w*


def test_no_jump_inside(fb, vp, table):
    cfg = S.SimConfig(5.0, 1.0, 1e-3, 1.0, 1, 3)
    _, tr = S.simulate_path(cfg, fb, vp, 0, table=table, trace_stride=1)
    assert tr[0, 2] == 1.0


def test_zero_volatility_is_deterministic(fb, vp, table):
    cfg = S.SimConfig(5.0, 1.0, 1e-3, 60.0, 1, 11, vol_scale=0.0)
    a = S.simulate_path(cfg, fb, vp, 0, table=table)
    b = S.simulate_path(cfg, fb, vp, 0, table=table)
    c = S.simulate_path(S.SimConfig(5.0, 1.0, 1e-3, 60.0, 1, 999, vol_scale=0.0), fb, vp, 5, table=table)
    assert a == b == c


@pytest.mark.parametrize("x0", [2.0, 5.0, 9.0, 20.0])
def test_trace_structure(fb, vp, table, x0):
    cfg = S.SimConfig(x0, 1.0, 1e-3, 30.0, 5, 17)
    for k in range(5):
        res, tr = S.simulate_path(cfg, fb, vp, k, table=table, trace_stride=1)
        t, x, z = tr[:, 0], tr[:, 1], tr[:, 2]
        assert np.all(np.diff(t) > 0)
        assert np.all(np.diff(z) >= 0)
        assert np.all(x <= fb.w_star * z * (1 + 1e-9))
        assert res.peak_final == z[-1]
        assert (z[0] > 1.0) == (x0 > fb.w_star)


def test_path_matches_batch(fb, vp, table):
    cfg = S.SimConfig(5.0, 1.0, 2e-3, 40.0, 6, 5)
    out, flags = S.run_paths(cfg, fb, vp, threads=1, table=table)
    assert not flags.any()
    for k in range(6):
        r = S.simulate_path(cfg, fb, vp, k, table=table)
        assert (r.ruin_time, r.discounted_utility, r.peak_final) == (out[k, 0], out[k, 1], out[k, 2])


def test_ruin_time_interpolated(fb, vp, table):
    cfg = S.SimConfig(0.5, 1.0, 1e-2, 50.0, 20, 8)
    out, _ = S.run_paths(cfg, fb, vp, table=table)
    ruined = out[np.isfinite(out[:, 0]), 0]
    assert ruined.size > 0
    assert np.any(np.abs(ruined / cfg.dt - np.round(ruined / cfg.dt)) > 1e-6)


def test_monte_carlo_close_to_value(fb, vp):
    cfg = S.SimConfig(5.0, 1.0, 2e-3, 100.0, 4000, 20240601)
    est = S.monte_carlo(cfg, fb, vp)
    assert est.analytic_value == pytest.approx(P.value(5.0, 1.0, fb, vp))
    assert est.abs_error <= max(3 * est.stderr, 0.02 * est.analytic_value)
    assert est.n_aborted == 0


def test_stderr_halves_with_doubled_paths(fb, vp):
    a = S.monte_carlo(S.SimConfig(5.0, 1.0, 4e-3, 100.0, 2000, 77), fb, vp)
    b = S.monte_carlo(S.SimConfig(5.0, 1.0, 4e-3, 100.0, 4000, 77), fb, vp)
    assert a.stderr / b.stderr == pytest.approx(np.sqrt(2), rel=0.2)


def test_near_merton_estimate(vp):
    va = vp.with_alpha(1e-4)
    fa = solve(va)
    est = S.monte_carlo(S.SimConfig(5.0, 1.0, 2e-3, 100.0, 2000, 5), fa, va)
    v0 = float(P.merton_limit(vp).value(5.0))
    assert abs(est.mean - v0) <= max(3 * est.stderr, 0.02 * v0)
    assert est.truncation_bound < 1e-6


def test_discretisation_bias_trend(fb, vp):
    errs, ses = [], []
    for dt in (4e-3, 2e-3, 1e-3):
        e = S.monte_carlo(S.SimConfig(5.0, 1.0, dt, 100.0, 4000, 2024), fb, vp)
        errs.append(e.abs_error)
        ses.append(e.stderr)
    for i in range(2):
        assert errs[i + 1] <= errs[i] + 2 * max(ses[i], ses[i + 1])


def test_nonfinite_paths_abort(fb, vp, monkeypatch):
    bad = S.PolicyTable(fb.w_star, np.full(11, np.nan), np.full(11, 0.5), np.zeros(11))
    cfg = S.SimConfig(5.0, 1.0, 1e-2, 1.0, 10, 1)
    _, flags = S.run_paths(cfg, fb, vp, table=bad)
    assert flags.all()
    monkeypatch.setattr(S.PolicyTable, "build", classmethod(lambda cls, fb, vp, n=0: bad))
    with pytest.raises(SimulationAborted):
        S.monte_carlo(cfg, fb, vp)


_THREAD_SCRIPT = """
import json, sys
from drawdown_dividend.params import make_params
from drawdown_dividend.freeboundary import solve
from drawdown_dividend import simulate as S
vp = make_params(); fb = solve(vp)
cfg = S.SimConfig(5.0, 1.0, 4e-3, 50.0, 64, 99)
print(json.dumps([S.monte_carlo(cfg, fb, vp, threads=t).mean.hex() for t in (1, 2, 4)]))
"""


def test_identical_across_thread_counts():
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    out = subprocess.run([sys.executable, "-c", _THREAD_SCRIPT], env=env, capture_output=True, text=True,
                         check=True)
    means = json.loads(out.stdout.strip().splitlines()[-1])
    assert means[0] == means[1] == means[2]
