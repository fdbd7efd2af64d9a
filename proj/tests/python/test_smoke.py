import math
import os

import pytest

import agentpomdp as ap

FIXTURES = os.environ.get(
    "AGENTPOMDP_FIXTURE_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")
)




def test_model_roundtrip_native():
    doc = ap.load_model_file(os.path.join(FIXTURES, "blind.pomdpz"))
    text = ap.serialize_native(doc)
    again = ap.parse_native(text)
    assert ap.serialize_native(again) == text
    assert again.model.n_actions == 2
    assert again.machine("blind").n_agent_states == 1


def test_parse_error_is_typed():
    with pytest.raises(ap.ParseError):
        ap.parse_native("[model]\nstates = nope\n")
    with pytest.raises(ap.ValidationError):
        ap.load_model_file("/nonexistent/model.pomdpz")


def test_single_state_value():
    m = ap.Model(1, 1, 1, [1.0], [2.0], [1.0], 0.5)
    mach = ap.singleton_machine(1, 1)
    ev = ap.policy_evaluate(m, mach, ap.DecisionRule.deterministic([0], 1))
    assert ev.performance == pytest.approx(4.0, abs=1e-12)


def test_blind_sweep_interior_optimum():
    m = ap.blind_randomization_model()
    curve = ap.sweep_1param(m, ap.unit_grid(200))
    best_p, best_j = max(curve, key=lambda pt: pt[1])
    assert 0.3 < best_p < 0.45
    assert best_j > curve[0][1] + 1e-3
    assert best_j > curve[-1][1] + 1e-3


def test_designer_beats_stationary_on_counting_chain():
    m = ap.counting_chain_model()
    mach = ap.singleton_machine(m.n_obs, m.n_actions)
    rule, j_zsd = ap.enumerate_stationary_det(m, mach)
    plan = ap.plan_designer(m, mach, tol=1e-6)
    assert plan.value.lo > j_zsd + 1.0
    assert plan.value.hi >= plan.value.lo


def test_ordering_holds_on_small_mdp():
    m = ap.small_mdp()
    mach = ap.identity_machine(m.n_obs, m.n_actions)
    rep = ap.verify_ordering(m, mach, history_tol=1e-4, history_horizon=200)
    assert rep["violations"] == 0
    assert "J_ZSD" in rep["text"]


def test_gradient_matches_finite_difference():
    m = ap.random_pomdp(7, 3, 2, 2)
    mach = ap.identity_machine(m.n_obs, m.n_actions)
    theta = [0.3, -0.2, 0.1, 0.4]

    def value(th):
        probs = []
        for z in range(2):
            row = [math.exp(v) for v in th[2 * z : 2 * z + 2]]
            tot = sum(row)
            probs += [v / tot for v in row]
        return ap.policy_evaluate(m, mach, ap.DecisionRule.stochastic(probs, 2, 2)).performance

    grad = ap.exact_policy_gradient(m, mach, theta)
    h = 1e-5
    for i in range(4):
        up = list(theta)
        dn = list(theta)
        up[i] += h
        dn[i] -= h
        assert grad[i] == pytest.approx((value(up) - value(dn)) / (2 * h), abs=1e-6)


def test_ais_bound_holds_on_mdp():
    m = ap.small_mdp()
    mach = ap.identity_machine(m.n_obs, m.n_actions)
    mu = ap.DecisionRule.uniform(mach.n_agent_states, m.n_actions)
    ais = ap.fit_ais(m, mach, mu)
    audit = ap.ais_audit(m, mach, ais)
    assert audit["eps"] < 1e-9
    assert audit["delta"] < 1e-9


def test_asql_approaches_fixed_point():
    m = ap.small_mdp()
    mach = ap.identity_machine(m.n_obs, m.n_actions)
    mu = ap.DecisionRule.uniform(mach.n_agent_states, m.n_actions)
    q_star, residual = ap.asql_fixed_point(m, mach, mu)
    assert residual < 1e-9
    q = ap.asql_run(m, mach, mu, steps=200_000, seed=1)
    scale = max(abs(v) for v in q_star)
    assert max(abs(a - b) for a, b in zip(q, q_star)) < 0.1 * max(scale, 1.0)


def test_capacity_error_is_typed():
    m = ap.small_mdp()
    with pytest.raises(ap.CapacityError):
        ap.window_machine(12, m.n_obs, m.n_actions, cap=10)
