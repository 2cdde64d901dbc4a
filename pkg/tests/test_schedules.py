import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critbench import benchmarks
from critbench.core import ObjectiveMeta
from critbench.optim import Method, OptimizerConfig, OptimizerState, StopRule, run
from critbench.schedules import (StepKind, StepRule, TheoremBudget, adam_bias_corrected_alpha,
                                 adam_optimal_step, adam_theorem_alpha, adam_theorem_params, rmsprop_det_budget,
                                 rmsprop_noshift_alpha, rmsprop_noshift_budget, rmsprop_stoch_budget)

UNIT = ObjectiveMeta(L=1.0, sigma=1.0, f_star=0.0)


# -- deterministic RMSProp -----------------------------------------------------

def test_det_budget_hand_values():
    b = rmsprop_det_budget(UNIT, 1.0, beta2=0.9, xi=1.0, eps=0.1)
    # alpha = 0.1 * 1 / (1 * sqrt(2)); T = 2 * 1 * 2 * 1 / (0.1 * 1 * 0.01)
    assert b.alpha_rule.alpha == pytest.approx(0.1 / math.sqrt(2), abs=1e-15)
    assert abs(b.alpha_rule.alpha - 0.070711) <= 1e-6
    assert b.T == 4000
    assert b.derived["delta2"] == pytest.approx(1 / (2 * math.sqrt(2)))


@pytest.mark.parametrize("eps", [0.1, 0.03, 0.5, 1.7])
def test_det_budget_eps_doubling_quarters_T_real(eps):
    a = rmsprop_det_budget(UNIT, 3.0, 0.9, 0.5, eps)
    b = rmsprop_det_budget(UNIT, 3.0, 0.9, 0.5, 2 * eps)
    assert b.derived["T_real"] == pytest.approx(a.derived["T_real"] / 4, rel=1e-14)


def test_det_budget_eps_doubling_exact_T():
    assert rmsprop_det_budget(UNIT, 1.0, 0.9, 1.0, 0.2).T == 1000


def test_det_budget_already_critical():
    b = rmsprop_det_budget(UNIT, 0.0, 0.9, 1.0, 0.1)
    assert b.T == 1 and b.already_critical


def test_det_budget_rejects_bad_inputs():
    with pytest.raises(ValueError):
        rmsprop_det_budget(UNIT, -1.0, 0.9, 1.0, 0.1)
    with pytest.raises(ValueError):
        rmsprop_det_budget(UNIT, 1.0, 0.9, 0.0, 0.1)
    with pytest.raises(ValueError):
        rmsprop_det_budget(UNIT, 1.0, 1.0, 1.0, 0.1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.01, 10), st.floats(0, 0.99),
       st.floats(1e-3, 10), st.floats(1e-2, 1))
def test_det_budget_positive_and_monotone(L, sigma, gap, beta2, xi, eps):
    meta = ObjectiveMeta(L=L, sigma=sigma, f_star=0.0)
    b = rmsprop_det_budget(meta, gap, beta2, xi, eps)
    assert b.T >= 1 and b.alpha_rule.alpha > 0
    assert all(b.derived[k] > 0 for k in ("delta2", "mu_min", "mu_max"))
    assert rmsprop_det_budget(meta, 2 * gap, beta2, xi, eps).T >= b.T
    assert rmsprop_det_budget(meta, gap, beta2, xi, eps / 2).T >= b.T


# -- stochastic RMSProp --------------------------------------------------------

def test_stoch_budget_hand_values():
    b = rmsprop_stoch_budget(UNIT, 1.0, 1.0, beta2=0.9, xi=1.0, eps=0.5)
    # T = 2*1*1*2*1 / (0.1 * 1 * 0.0625); alpha = sqrt(2*1*0.1*1/1) / sqrt(T)
    assert b.T == 640
    assert b.alpha_rule.alpha == pytest.approx(math.sqrt(0.2) / math.sqrt(640), rel=1e-14)
    assert abs(b.alpha_rule.alpha - 0.017678) <= 1e-6
    assert b.stochastic and b.method == "RMSPROP"


def test_stoch_budget_eps_halving_multiplies_T_by_16():
    a = rmsprop_stoch_budget(UNIT, 1.0, 1.0, 0.9, 1.0, 0.5)
    b = rmsprop_stoch_budget(UNIT, 1.0, 1.0, 0.9, 1.0, 0.25)
    assert b.T == 16 * a.T


def test_stoch_budget_xi_ratio():
    a = rmsprop_stoch_budget(UNIT, 1.0, 1.0, 0.9, 1.0, 0.5)
    b = rmsprop_stoch_budget(UNIT, 1.0, 1.0, 0.9, 3.0, 0.5)
    # (sigma_f^2 + xi)/xi goes from 2/1 to 4/3
    assert b.derived["T_real"] / a.derived["T_real"] == pytest.approx(2 / 3, rel=1e-14)


# -- no-shift RMSProp ----------------------------------------------------------

@pytest.mark.parametrize("t,expected", [(1, 0.3), (4, 0.15), (100, 0.03)])
def test_noshift_alpha(t, expected):
    assert rmsprop_noshift_alpha(t, 0.3) == pytest.approx(expected, rel=1e-15)


def test_noshift_budget_needs_bounds_and_is_unbounded():
    with pytest.raises(ValueError):
        rmsprop_noshift_budget(UNIT, 0.1, 0.1)
    meta = benchmarks.gaussian_well(2).meta
    b = rmsprop_noshift_budget(meta, 0.1, 0.1)
    assert math.isinf(b.T) and b.alpha_rule.kind is StepKind.INV_SQRT
    assert TheoremBudget.from_dict(b.to_dict()).T == math.inf


# -- ADAM ----------------------------------------------------------------------

def test_adam_theorem_unit_case():
    b = adam_theorem_params(UNIT, 1.0, eps=1.0)
    assert b.derived["beta1"] == pytest.approx(1 / 3, rel=1e-15)
    assert b.derived["xi"] == 2.0
    assert b.T == 9
    g = np.array([0.6, -0.8, 0.5])
    # (1 - 1/3)^2 = 4/9 and 4/(3*9) = 4/27 give alpha_1 = ||g||^2 / (3 L)
    assert b.alpha_rule(1, g) == pytest.approx(float(g @ g) / 3, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.1, 10))
def test_adam_theorem_preconditions_hold(eps, sigma, L):
    meta = ObjectiveMeta(L=L, sigma=sigma, f_star=0.0)
    d = adam_theorem_params(meta, 1.0, eps).derived
    assert d["beta1"] < eps / (eps + sigma)
    assert d["xi"] > d["xi_bound"] > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2), st.floats(0.1, 3), st.integers(1, 50), st.floats(1e-3, 10))
def test_adam_theorem_alpha_scaled_constant(eps, sigma, t, gnorm):
    # alpha_t (1 - beta1^t)^2 / ||g||^2 is the same constant at every t
    beta1 = eps / (eps + 2 * sigma)
    c = adam_theorem_alpha(gnorm ** 2, t, 1.5, beta1, eps, sigma) * (1 - beta1 ** t) ** 2 / gnorm ** 2
    assert c == pytest.approx(4 * eps / (3 * 1.5 * (eps + 2 * sigma) ** 2), rel=1e-12)


def test_adam_theorem_rule_needs_gradient():
    rule = adam_theorem_params(UNIT, 1.0, 1.0).alpha_rule
    with pytest.raises(ValueError):
        rule(1)


def test_bias_corrected_alpha():
    assert adam_bias_corrected_alpha(1e-3, 0.9, 0.999, 1) == pytest.approx(1e-3 * math.sqrt(0.001) / 0.1, rel=1e-12)
    assert adam_bias_corrected_alpha(1e-3, 0.9, 0.999, 1) == pytest.approx(3.1623e-4, rel=1e-4)
    assert adam_bias_corrected_alpha(1e-3, 0.9, 0.999, 10 ** 6) == pytest.approx(1e-3, rel=1e-9)
    for t in (1, 7, 1000):
        assert adam_bias_corrected_alpha(0.01, 0.0, 0.0, t) == 0.01


def test_step_rule_serialisation_and_index_check():
    rule = StepRule(StepKind.BIAS_CORRECTED, alpha=1e-3, beta1=0.9, beta2=0.999)
    assert StepRule.from_dict(rule.to_dict()) == rule
    with pytest.raises(ValueError):
        rule(0)


def test_budget_round_trip():
    b = rmsprop_det_budget(UNIT, 1.0, 0.9, 1.0, 0.1)
    assert TheoremBudget.from_dict(b.to_dict()) == b


def test_optimal_step_minimises_quadratic_model():
    rng = np.random.default_rng(0)
    g, m, v = rng.standard_normal(4), rng.standard_normal(4), rng.uniform(0.1, 2, 4)
    xi, L = 0.1, 2.0
    a = adam_optimal_step(g, m, v, xi, L)
    pm = m / (np.sqrt(v) + xi)

    def model(s):
        return -s * float(g @ pm) + 0.5 * L * s * s * float(pm @ pm)

    assert model(a) <= min(model(a * 0.9), model(a * 1.1))


# -- budgets certify on real runs ----------------------------------------------

def test_det_budget_certifies_on_logistic_sum():
    obj = benchmarks.random_logistic_sum(4, 6, seed=1)
    x1 = np.full(4, 2.0)
    b = rmsprop_det_budget(obj.meta, obj.value_fn(x1), 0.9, 1.0, 0.2)
    cfg = OptimizerConfig(Method.RMSPROP, b.alpha_rule, beta2=0.9, xi=1.0)
    res = run(OptimizerState.initial(x1), cfg, obj, StopRule(b.T, b.epsilon))
    assert res.status == "hit" and res.hit_time <= b.T


def test_adam_budget_certifies_on_gaussian_well():
    obj = benchmarks.gaussian_well(3, depth=1.0, width=1.0)
    x1 = np.array([0.5, 0.4, -0.3])
    eps = 0.5
    meta = obj.meta
    beta1 = eps / (eps + 2 * meta.sigma)
    rule = StepRule(StepKind.ADAM_THEOREM, beta1=beta1, beta2=0.999, L=meta.L, epsilon=eps, sigma=meta.sigma)
    cfg = OptimizerConfig(Method.ADAM, rule, beta1=beta1, beta2=0.999, xi=2 * meta.sigma)
    from critbench.optim import adam_step

    x2 = adam_step(OptimizerState.initial(x1), cfg, obj.grad_fn).x
    b = adam_theorem_params(meta, obj.value_fn(x2), eps)
    res = run(OptimizerState.initial(x1), cfg, obj, StopRule(b.T, eps))
    assert res.status == "hit" and res.hit_time <= b.T
