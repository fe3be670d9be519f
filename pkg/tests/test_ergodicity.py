import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hamswitch.errors import ConfigurationError
from hamswitch.ergodicity import (Binning, OccupationMeasure, PassageSample, fit_decay,
                                  fit_log_linear, hyper_recurrence_probe, long_run_occupation,
                                  noise_floor, occupation_measure, passage_cdf,
                                  passage_density, passage_ks, passage_times, psi_distance,
                                  tv_distance)
from hamswitch.model import HybridState
from hamswitch.simulate import Trajectory
from hamswitch.systems import ornstein_uhlenbeck, overdamped_langevin

import oracles


def line_binning(lo=-1.0, hi=1.0, width=0.5, regimes=None):
    return Binning.uniform(lo, hi, width, 1, regimes=regimes)


def traj(times, xs, ks=None):
    xs = np.asarray(xs, dtype=float)[:, None]
    ks = np.ones(len(times), dtype=int) if ks is None else np.asarray(ks)
    return Trajectory(np.asarray(times, float), xs, np.zeros((len(times), 0)), ks, [], None,
                      False, None)


def test_binning_indexing():
    b = line_binning(regimes=(1, 2))
    assert b.n_cells == 8
    idx = b.flat_index(np.array([[-0.9], [0.1], [0.1], [5.0]]), np.zeros((4, 0)),
                       np.array([1, 1, 2, 1]))
    np.testing.assert_array_equal(idx, [0, 2, 6, -1])
    with pytest.raises(ConfigurationError):
        Binning((np.array([1.0, 0.0]),))


def test_occupation_dirac_and_halves():
    b = line_binning()
    mu = occupation_measure(traj([0, 1, 2, 3], [0.1, 0.1, 0.1, 0.1]), b)
    assert mu.masses[2] == pytest.approx(1.0) and mu.outside == 0
    nu = occupation_measure(traj([0, 1, 2], [-0.9, 0.6, 0.6]), b)
    np.testing.assert_allclose(nu.masses, [0.5, 0, 0, 0.5])
    with pytest.raises(ConfigurationError):
        occupation_measure(traj([0], [0.0]), b)


def test_tv_properties():
    b = line_binning()
    mu = OccupationMeasure(b, np.array([1.0, 0, 0, 0]), 0.0)
    nu = OccupationMeasure(b, np.array([0, 0, 0.5, 0.5]), 0.0)
    assert tv_distance(mu, mu) == 0.0
    assert tv_distance(mu, nu) == pytest.approx(1.0)
    assert psi_distance(mu, nu, lambda z, k: np.ones(z.shape[0])) == \
        pytest.approx(2 * tv_distance(mu, nu))
    with pytest.raises(ConfigurationError):
        tv_distance(mu, OccupationMeasure(line_binning(width=0.25), np.zeros(8), 1.0))


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4),
       st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_tv_bounds_and_symmetry(a, c):
    b = line_binning()
    sa, sc = sum(a) + 1.0, sum(c) + 1.0
    mu = OccupationMeasure(b, np.array(a) / sa, 1.0 / sa)
    nu = OccupationMeasure(b, np.array(c) / sc, 1.0 / sc)
    d = tv_distance(mu, nu)
    assert 0 <= d <= 1 + 1e-12
    assert d == pytest.approx(tv_distance(nu, mu))


def test_from_cdf_matches_quadrature():
    from hamswitch.systems import speed_cdf_regime2
    b = Binning.uniform(-4, 4, 0.1, 1, regimes=(2,))
    mu = OccupationMeasure.from_cdf(b, speed_cdf_regime2)
    np.testing.assert_allclose(mu.masses, oracles.speed_bin_masses(b.edges[0]), atol=1e-12)
    assert mu.total == pytest.approx(1.0)


def test_long_run_occupation_short():
    spec = overdamped_langevin().frozen(2)
    b = Binning.uniform(-4, 4, 0.5, 1, regimes=(2,))
    mu = long_run_occupation(spec, HybridState.of(spec, 0.0, None, 2), 50.0, b, 1e-2, 0.1, 8,
                             rng=3)
    ref = OccupationMeasure(b, oracles.speed_bin_masses(b.edges[0]), 0.0)
    assert mu.total == pytest.approx(1.0)
    assert tv_distance(mu, ref) < 0.1


def test_noise_floor_and_fit():
    p = np.array([0.5, 0.5])
    assert noise_floor(p, p, 100, 100) > 0
    slope, intercept, (lo, hi) = fit_log_linear([1, 2, 3, 4], np.exp([-1, -2, -3, -4]))
    assert slope == pytest.approx(-1) and lo == pytest.approx(-1) and hi == pytest.approx(-1)


def test_identical_starts_refuse_fit():
    spec = ornstein_uhlenbeck()
    s = HybridState.of(spec, 0.0, None, 1)
    fit = fit_decay(spec, (s, s), [0.5, 1.0, 1.5, 2.0], 2000, line_binning(-3, 3, 0.5),
                    dt=1e-2, rng=1)
    assert fit.refused and not fit.contracting


def test_ou_decay_rate():
    spec = ornstein_uhlenbeck()
    pair = (HybridState.of(spec, 2.0, None, 1), HybridState.of(spec, -2.0, None, 1))
    times = [0.25 * i for i in range(1, 13)]
    fit = fit_decay(spec, pair, times, 20000, line_binning(-4, 4, 0.25), dt=1e-2, rng=2)
    assert not fit.refused
    assert 0.2 < fit.theta < 0.6
    assert fit.contracting


def test_passage_density_values():
    assert passage_density(1.0, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    t = np.array([0.3, 1.0, 2.5])
    np.testing.assert_allclose(passage_density(1.0, t), oracles.ig_density(1.0, t))
    np.testing.assert_allclose(passage_cdf(1.0, t), oracles.ig_cdf(1.0)(t), atol=1e-8)
    with pytest.raises(ConfigurationError):
        passage_density(0.0, 1.0)


def test_passage_edge_and_wald():
    zero = passage_times(1.0, 2.0, 2.0, 10)
    assert np.all(zero.times == 0)
    s = passage_times(1.0, 0.0, 1.0, 4000, dt=1e-3, rng=5)
    assert s.censored == 0 and not s.horizon_too_small
    se = s.times.std(ddof=1) / math.sqrt(s.n)
    assert abs(s.times.mean() - 1.0) <= 3 * se
    assert passage_ks(s)[1] > 0.01


def test_censoring_flag():
    s = passage_times(-1.0, 0.0, 1.0, 200, dt=1e-2, horizon=1.0, rng=1)
    assert s.horizon_too_small


def test_hyper_recurrence_controls():
    rng = np.random.default_rng(0)
    exp = PassageSample(1.0, 0.0, np.sort(rng.exponential(0.5, 10000)), 0, 100.0)
    probe = hyper_recurrence_probe(exp, 1.0)
    assert not probe.diverging
    assert probe.means[-1] == pytest.approx(2.0, rel=0.1)
    flat = hyper_recurrence_probe(exp, 0.0)
    assert not flat.diverging and np.all(flat.means == 1)
    ig = passage_times(1.0, 0.0, 1.0, 10000, dt=1e-3, rng=3)
    assert hyper_recurrence_probe(ig, 1.0).diverging
