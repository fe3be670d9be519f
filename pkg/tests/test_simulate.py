import json
import math

import numpy as np
import pytest
from scipy import stats

from hamswitch.errors import BlowUpError, ConfigurationError, RunawaySwitchingError
from hamswitch.model import HybridState, builtin_test_functions
from hamswitch.rng import RngStream
from hamswitch.simulate import (Target, dynkin_test, em_step, estimate_transition,
                                martingale_residual, run_ensemble, simulate_killed,
                                simulate_trajectory, snapshot_at, time_grid)
from hamswitch.systems import (constant_switching, langevin_2regime, ornstein_uhlenbeck,
                               overdamped_langevin, vanderpol_2regime)


def test_em_step_examples():
    free = constant_switching(sigma=0.0)
    s = em_step(free, HybridState.of(free, 1.0, 2.0, 1), 0.01, [0.0])
    assert s.x[0] == pytest.approx(1.02) and s.y[0] == 2.0
    vdp = vanderpol_2regime()
    dt = 1e-3
    s = em_step(vdp, HybridState.of(vdp, 0.0, 1.0, 1), dt, [0.0])
    assert s.y[0] == pytest.approx(1 + dt) and s.x[0] == pytest.approx(dt)
    od = overdamped_langevin()
    s = em_step(od, HybridState.of(od, 2.0, None, 2), dt, [0.0])
    assert s.x[0] == pytest.approx(2 - 2 * dt)
    with pytest.raises(ConfigurationError):
        em_step(vdp, HybridState.of(vdp, 0.0, 1.0, 1), 0.0, [0.0])


def test_time_grid():
    g = time_grid(1.0, 0.3, extra=[0.5])
    np.testing.assert_allclose(g, [0, 0.3, 0.5, 0.6, 0.9, 1.0])
    with pytest.raises(ConfigurationError):
        time_grid(0.1, 1.0)


def test_pure_diffusion_has_no_jumps():
    spec = ornstein_uhlenbeck()
    traj = simulate_trajectory(spec, HybridState.of(spec, 1.0, None, 1), 5.0, 1e-2, rng=3)
    assert traj.events == [] and np.all(traj.k == 1)
    killed = simulate_killed(spec, [1.0], 1, 5.0, 1e-2, rng=3)
    assert not killed.killed
    np.testing.assert_array_equal(killed.x, traj.x)


def test_ctmc_holding_times():
    spec = constant_switching(q12=1.0, q21=2.0, qhat12=2.5, qhat21=2.5)
    traj = simulate_trajectory(spec, HybridState.of(spec, 0.0, 0.0, 1), 3000.0, 0.05, rng=5)
    jumps = [e for e in traj.events if not e.phantom]
    times = np.array([0.0] + [e.time for e in jumps])
    src = np.array([1] + [e.target for e in jumps])[:-1]
    hold = np.diff(times)
    for k, q in ((1, 1.0), (2, 2.0)):
        assert stats.kstest(hold[src == k], stats.expon(scale=1 / q).cdf).pvalue > 0.01
    assert any(e.phantom for e in traj.events)


def test_mean_jump_count_bounded_by_H_T():
    spec = vanderpol_2regime()
    res = run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), 10.0, 1e-2, 2000, rng=8)
    assert np.mean(res.final.n_accepted) <= spec.H_bound * 10.0
    assert np.all(np.isfinite(res.final.x))


def test_constant_kill_survival():
    r, t = 1.5, 0.8
    spec = constant_switching(q12=r, q21=1.0, qhat12=2.0)
    res = run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), t, 1e-2, 20000, rng=9,
                       kill_on_accept=True)
    p = res.final.alive.mean()
    assert abs(p - math.exp(-r * t)) < 3 * math.sqrt(p * (1 - p) / 20000)
    assert np.all(res.final.k == 1)


def test_weight_identically_one_when_rates_equal_bounds():
    spec = constant_switching(q12=1.0, q21=2.0)
    res = run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), 2.0, 1e-2, 500, rng=1,
                       mode="weighted")
    np.testing.assert_allclose(res.final.weight, 1.0, rtol=1e-12)


def test_weight_without_jumps_is_exponential():
    r, T = 0.7, 1.5
    spec = constant_switching(q12=0.0, q21=0.0, qhat12=r, qhat21=r)
    res = run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), T, 1e-2, 2000, rng=2,
                       mode="weighted")
    none = res.n_events == 0
    assert none.any() and (~none).any()
    np.testing.assert_allclose(res.final.weight[none], math.exp(r * T), rtol=1e-12)
    assert np.all(res.final.weight[~none] == 0)


def test_transition_edge_cases():
    spec = vanderpol_2regime()
    s0 = HybridState.of(spec, 0.0, 0.0, 1)
    inside = estimate_transition(spec, s0, 0.0, Target((-1, -1), (1, 1), 1), 100)
    assert (inside.probability, inside.standard_error) == (1.0, 0.0)
    outside = estimate_transition(spec, s0, 0.0, Target((2, 2), (3, 3), 1), 100)
    assert outside.probability == 0.0
    total = sum(estimate_transition(spec, s0, 0.5, Target(None, None, k), 400, dt=1e-2,
                                    rng=4).probability for k in (1, 2))
    assert total == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        estimate_transition(spec, s0, 0.5, Target(), 10)


def test_one_regime_matches_killed_exactly():
    spec = ornstein_uhlenbeck()
    s0 = HybridState.of(spec, 0.5, None, 1)
    a = run_ensemble(spec, s0, 1.0, 1e-2, 300, rng=6)
    b = run_ensemble(spec, s0, 1.0, 1e-2, 300, rng=6, kill_on_accept=True)
    np.testing.assert_array_equal(a.final.x, b.final.x)
    assert b.final.alive.all()


def test_weighted_transition_reports_ess():
    spec = vanderpol_2regime()
    est = estimate_transition(spec, HybridState.of(spec, 0.0, 0.0, 1), 0.5,
                              Target(None, None, 2), 500, dt=1e-2, mode="weighted", rng=3)
    assert est.ess is not None and 0 < est.ess <= 500
    lo, hi = est.interval
    assert 0 <= lo <= hi <= 1


def test_worker_and_block_invariance():
    spec = vanderpol_2regime()
    s0 = HybridState.of(spec, 0.2, -0.1, 2)
    a = run_ensemble(spec, s0, 0.5, 1e-2, 250, rng=RngStream(4), block_size=64, workers=1)
    b = run_ensemble(spec, s0, 0.5, 1e-2, 250, rng=RngStream(4), block_size=64, workers=3)
    np.testing.assert_array_equal(a.final.x, b.final.x)
    np.testing.assert_array_equal(a.final.k, b.final.k)
    np.testing.assert_array_equal(a.n_events, b.n_events)


def test_modes_share_brownian_path_without_switching():
    spec = ornstein_uhlenbeck()
    s0 = HybridState.of(spec, 1.0, None, 1)
    a = run_ensemble(spec, s0, 1.0, 1e-2, 50, rng=2)
    b = run_ensemble(spec, s0, 1.0, 1e-2, 50, rng=2, mode="weighted")
    np.testing.assert_array_equal(a.final.x, b.final.x)


def test_snapshots_at_save_times():
    spec = vanderpol_2regime()
    res = run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), 1.0, 1e-2, 20, rng=0,
                       save_times=[0.25, 0.5])
    assert snapshot_at(res, 0.25).t == pytest.approx(0.25)
    assert snapshot_at(res, 1.0).t == pytest.approx(1.0)


def test_ndjson_layout():
    spec = vanderpol_2regime()
    traj = simulate_trajectory(spec, HybridState.of(spec, 0.0, 0.0, 1), 3.0, 1e-2, rng=11,
                               mode="weighted")
    lines = [json.loads(l) for l in traj.ndjson_lines({"tool": "t"})]
    assert lines[0] == {"tool": "t"}
    times = [rec["t"] for rec in lines[1:]]
    assert times == sorted(times)
    samples = [rec for rec in lines[1:] if "x" in rec]
    assert all("w" in rec and rec["w"] >= 0 for rec in samples)
    for i, rec in enumerate(lines[1:-1], start=1):
        if "from" in rec:
            nxt = lines[i + 1]
            assert nxt["t"] >= rec["t"]
    killed = simulate_killed(vanderpol_2regime(H_tilde=5.0), [0.0, 0.0], 2, 20.0, 1e-2, rng=1)
    assert killed.killed
    assert json.loads(killed.ndjson_lines()[-1]) == {"t": killed.kill_time, "killed": True}


def test_blow_up_is_structured():
    spec = langevin_2regime()
    with pytest.raises(BlowUpError) as info:
        run_ensemble(spec, HybridState.of(spec, 50.0, 0.0, 1), 1.0, 0.1, 4, rng=0)
    assert info.value.time is not None


def test_runaway_switching_guard():
    spec = constant_switching(q12=1.0, q21=1.0)
    with pytest.raises(RunawaySwitchingError):
        run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), 100.0, 0.1, 1, rng=0,
                     max_events=5)


def test_bad_mode_rejected():
    spec = vanderpol_2regime()
    with pytest.raises(ConfigurationError):
        run_ensemble(spec, HybridState.of(spec, 0.0, 0.0, 1), 1.0, 0.1, 2, mode="exact")


def test_dynkin_small_time():
    spec = vanderpol_2regime()
    f = builtin_test_functions()["regime-bump"]
    rows = dynkin_test(spec, f, HybridState.of(spec, 0.5, 0.5, 1), hs=(0.1, 0.01),
                       n_paths=4000, rng=3)
    assert all(row.passed for row in rows)


def test_martingale_residual_small():
    spec = vanderpol_2regime()
    f = builtin_test_functions()["trig"]
    rows = martingale_residual(spec, f, HybridState.of(spec, 0.0, 0.0, 1), (0.5,),
                               n_paths=1000, dt=1e-2, rng=2)
    assert rows[0].passed
