import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hamswitch.errors import ConfigurationError, DominationError, InvariantViolation
from hamswitch.model import (HybridState, SystemSpec, TestFunction, audit_domination,
                             builtin_test_functions, check_derivatives, check_noise,
                             eval_generator, eval_Lk, eval_Q, generator_batch)
from hamswitch.systems import get_system, langevin_2regime, overdamped_langevin, \
    vanderpol_2regime

import oracles


def linear_y():
    return TestFunction(lambda x, y, k: y[..., 0], grad_x=lambda x, y, k: np.zeros_like(x),
                        grad_y=lambda x, y, k: np.ones_like(y),
                        hess_y=lambda x, y, k: np.zeros(y.shape + y.shape[-1:]), name="y")


def linear_x():
    return TestFunction(lambda x, y, k: x[..., 0], grad_x=lambda x, y, k: np.ones_like(x),
                        grad_y=lambda x, y, k: np.zeros_like(y),
                        hess_y=lambda x, y, k: np.zeros(y.shape + y.shape[-1:]), name="x")


def regime_index():
    zero = lambda x, y, k: np.zeros_like(x)
    return TestFunction(lambda x, y, k: np.full(x.shape[:-1], float(k)), grad_x=zero,
                        grad_y=lambda x, y, k: np.zeros_like(y),
                        hess_y=lambda x, y, k: np.zeros(y.shape + y.shape[-1:]), name="k")


def quadratic_regime():
    """U(x, k) = k x^2 + 1 for the overdamped example."""
    return TestFunction(lambda x, y, k: k * x[..., 0] ** 2 + 1,
                        grad_x=lambda x, y, k: 2 * k * x,
                        hess_x=lambda x, y, k: np.full(x.shape + x.shape[-1:], 2.0 * k),
                        name="kx2+1")


def test_constant_is_annihilated():
    spec = vanderpol_2regime()
    f = TestFunction.constant(3.0)
    for k in (1, 2):
        s = HybridState.of(spec, 0.7, -1.3, k)
        assert eval_Lk(spec, f, s) == 0.0
        assert eval_Q(spec, f, s) == 0.0
        assert eval_generator(spec, f, s) == 0.0


def test_vanderpol_lk_of_y():
    spec = vanderpol_2regime()
    assert eval_Lk(spec, linear_y(), HybridState.of(spec, 0.0, 1.0, 1)) == pytest.approx(1.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([1, 2]))
def test_transport_term_for_x(x, y, k):
    spec = vanderpol_2regime()
    assert eval_Lk(spec, linear_x(), HybridState.of(spec, x, y, k)) == pytest.approx(y)


def test_vanderpol_switching_examples():
    f = regime_index()
    spec = vanderpol_2regime()
    assert eval_Q(spec, f, HybridState.of(spec, 0.0, 0.0, 1)) == pytest.approx(1.0)
    spec3 = vanderpol_2regime(H_tilde=3.0)
    assert eval_Q(spec3, f, HybridState.of(spec3, 1.0, 1.0, 2)) == pytest.approx(-1.0)


def test_vanderpol_full_generator_of_y():
    spec = vanderpol_2regime()
    assert eval_generator(spec, linear_y(), HybridState.of(spec, 0.0, 1.0, 1)) == \
        pytest.approx(1.0)


def test_overdamped_ratio_zero_at_one():
    spec = overdamped_langevin(rate_cap=None)
    f = quadratic_regime()
    s = HybridState.of(spec, 1.0, None, 1)
    assert eval_generator(spec, f, s) / 2.0 == pytest.approx(0.0, abs=1e-15)


@given(st.floats(-6, 6).filter(lambda v: abs(v) > 1e-3))
def test_overdamped_ratio_formulas(x):
    spec = overdamped_langevin(rate_cap=None)
    f = quadratic_regime()
    xs = np.array([[x]])
    y = np.zeros((1, 0))
    r1 = generator_batch(spec, f, xs, y, 1)[0] / (x * x + 1)
    assert r1 == pytest.approx(oracles.ldp_ratio_k1(x), rel=1e-12, abs=1e-12)
    if abs(x) > 1:
        r2 = generator_batch(spec, f, xs, y, 2)[0] / (2 * x * x + 1)
        assert r2 == pytest.approx(oracles.ldp_ratio_k2(x), rel=1e-12, abs=1e-12)


def test_builtin_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    for spec in (vanderpol_2regime(), overdamped_langevin()):
        for f in builtin_test_functions().values():
            assert check_derivatives(f, spec, rng, regimes=(1, 2)), f.name


def test_finite_difference_function_matches_analytic():
    spec = vanderpol_2regime()
    exact = builtin_test_functions()["trig"]
    fd = TestFunction.finite_difference(exact.value)
    x = np.array([[0.3], [-1.2]])
    y = np.array([[0.5], [2.0]])
    for k in (1, 2):
        np.testing.assert_allclose(generator_batch(spec, fd, x, y, k),
                                   generator_batch(spec, exact, x, y, k), rtol=1e-4, atol=1e-5)


def test_dominating_rows_and_audit():
    spec = vanderpol_2regime(H_tilde=2.5)
    row = spec.dominating(2)
    assert row.total == pytest.approx(2.5)
    assert audit_domination(spec, np.random.default_rng(1)).passed
    assert audit_domination(langevin_2regime(), np.random.default_rng(1)).passed


def test_domination_breach_detected():
    base = vanderpol_2regime()
    bad = SystemSpec(dim=1, grad_potential=base.grad_potential, damping=base.damping,
                     noise=base.noise, q_row=lambda k, x, y: [(3 - k, np.full(x.shape[:-1], 2.0))],
                     qhat_row=lambda k: [(3 - k, 1.0)], H_bound=1.0, regimes=(1, 2))
    assert not audit_domination(bad, np.random.default_rng(0), n_samples=100).passed
    with pytest.raises(DominationError):
        bad.rates(1, np.zeros((2, 1)), np.zeros((2, 1)))


def test_h_bound_enforced():
    base = vanderpol_2regime()
    with pytest.raises(InvariantViolation):
        SystemSpec(dim=1, grad_potential=base.grad_potential, damping=base.damping,
                   noise=base.noise, q_row=base.q_row, qhat_row=lambda k: [(3 - k, 5.0)],
                   H_bound=1.0, regimes=(1, 2)).dominating(1)


def test_noise_checks():
    check_noise(np.eye(2)[None])
    with pytest.raises(InvariantViolation):
        check_noise(np.array([[[1.0, 2.0], [0.0, 1.0]]]))
    with pytest.raises(InvariantViolation):
        check_noise(np.array([[[-1.0]]]))


def test_state_validation_and_shapes():
    spec = vanderpol_2regime()
    with pytest.raises(ConfigurationError):
        HybridState.of(spec, np.nan, 0.0, 1)
    with pytest.raises(ConfigurationError):
        HybridState.of(spec, 0.0, 0.0, 0)
    od = HybridState.of(overdamped_langevin(), 1.0, 5.0, 2)
    assert od.y.size == 0
    with pytest.raises(ConfigurationError):
        generator_batch(spec, linear_y(), np.zeros((3, 2)), np.zeros((3, 1)), 1)


def test_frozen_spec_has_no_switching():
    spec = vanderpol_2regime().frozen(2)
    assert spec.rates(2, np.zeros((1, 1)), np.zeros((1, 1))) == []
    assert spec.regimes == (2,)


def test_registry():
    assert get_system("langevin-2regime").H_bound == 2.0
    with pytest.raises(ConfigurationError):
        get_system("no-such-system")
    with pytest.raises(ConfigurationError):
        get_system("vanderpol-2regime", nonsense=1)
    with pytest.raises(ConfigurationError):
        get_system("vanderpol-2regime", sigma=-1)
