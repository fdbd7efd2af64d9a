#include <doctest.h>

#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"
#include "support.hpp"

using namespace agentpomdp;
using namespace testsupport;

namespace {
DecisionRule blind_rule(double p) { return DecisionRule::stochastic({1.0 - p, p}, 1, 2); }
}  // namespace

TEST_SUITE("exact_eval") {
    TEST_CASE("product chain with a singleton machine is the state kernel") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        const ProductChain chain(m, singleton_machine(1, 2));
        for (Index s = 0; s < 3; ++s)
            for (Index a = 0; a < 2; ++a)
                for (Index sn = 0; sn < 3; ++sn) CHECK(chain.prob(s, 0, a, sn, 0) == m.state_transition(s, a, sn));
        CHECK(chain.prob(0, 0, 0, 0, 0) == 1.0);
        CHECK(chain.prob(2, 0, 1, 1, 0) == 0.5);
    }

    TEST_CASE("identity machine on an MDP keeps z' = s'") {
        Rng rng(4);
        const PomdpModel m = benchmarks::random_mdp(rng, 3, 2, 0.9);
        const ProductChain chain(m, identity_machine(3, 2));
        for (Index s = 0; s < 3; ++s)
            for (Index z = 0; z < 3; ++z)
                for (Index a = 0; a < 2; ++a)
                    for (const auto& e : chain.row(s, z, a)) CHECK(e.next / 3 == e.next % 3);
    }

    TEST_CASE("geometric series and blind chain endpoints") {
        const PomdpModel one = single_state(1.0);
        const EvalBundle b = policy_evaluate(one, singleton_machine(1, 1), DecisionRule::deterministic({0}, 1));
        CHECK(b.V(0, 0) == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(b.performance == doctest::Approx(10.0).epsilon(1e-12));

        const PomdpModel blind = benchmarks::blind_randomization_model();
        const auto single = singleton_machine(1, 2);
        CHECK(std::abs(policy_evaluate(blind, single, blind_rule(1.0)).performance + 5.0) < 1e-9);
        CHECK(std::abs(policy_evaluate(blind, single, blind_rule(0.0)).performance + 10.0) < 1e-9);
        CHECK(policy_evaluate(blind, single, blind_rule(0.39)).performance ==
              doctest::Approx(blind_value(0.39)).epsilon(1e-12));
    }

    TEST_CASE("occupancy sums to the effective horizon") {
        Rng rng(8);
        const PomdpModel m = benchmarks::random_pomdp(rng, 3, 2, 2, 0.8);
        const EvalBundle b = policy_evaluate(m, identity_machine(2, 2), DecisionRule::uniform(2, 2));
        double total = 0.0;
        for (double d : b.occupancy) total += d;
        CHECK(total == doctest::Approx(5.0).epsilon(1e-10));
    }

    TEST_CASE("stationary and non-stationary wrappers agree") {
        Rng rng(12);
        const PomdpModel m = benchmarks::random_pomdp(rng, 3, 2, 2, 0.9);
        const auto id = identity_machine(2, 2);
        const DecisionRule r = DecisionRule::stochastic({0.3, 0.7, 0.9, 0.1}, 2, 2);
        const PerformanceResult a = performance(m, id, Policy::stationary(r));
        const PerformanceResult b = performance(m, id, Policy::non_stationary({r, r, r}, r));
        const PerformanceResult c = rollout_performance(m, id, Policy::non_stationary({r, r}, r), 1e-9);
        CHECK(std::abs(a.value - b.value) <= 2e-9);
        CHECK(std::abs(a.value - c.value) <= 2e-9 + c.radius);
    }

    TEST_CASE("counting chain: best stationary rule and open-loop plan") {
        const double g = 0.9;
        const PomdpModel m = benchmarks::counting_chain_model(g);
        const auto id = identity_machine(2, 2);
        const double closed = (1 + g - g * g) / (1 - g * g * g);
        double best = -1e300;
        for (std::size_t code = 0; code < 4; ++code)
            best = std::max(best, policy_evaluate(m, id, DecisionRule::from_code(code, 2, 2)).performance);
        CHECK(std::abs(best - closed) < 1e-6);

        // Open loop: play the correct action for the step count.
        std::vector<DecisionRule> rules;
        for (Index t = 0; t < m.n_states(); ++t) {
            const Index a = benchmarks::counting_chain_prefers_zero(t + 1) ? 0 : 1;
            rules.push_back(DecisionRule::deterministic({a, a}, 2));
        }
        const PerformanceResult r = rollout_performance(m, id, Policy::non_stationary(rules, rules.back()), 1e-9);
        CHECK(std::abs(r.value - 10.0) <= 1e-6 + r.radius);
    }

    TEST_CASE("stationary distributions") {
        const StationaryDist one = stationary_dist(single_state(), singleton_machine(1, 1), DecisionRule::uniform(1, 1));
        CHECK(one.zeta.size() == 1);
        CHECK(one.zeta[0] == doctest::Approx(1.0));
        CHECK(one.irreducible);

        const PomdpModel flip = flip_chain();
        const StationaryDist f = stationary_dist(flip, identity_machine(2, 2), DecisionRule::uniform(2, 2));
        // Reachable tuples: (s, y = s, z = s, a) for both s and a.
        for (Index s = 0; s < 2; ++s)
            for (Index a = 0; a < 2; ++a) CHECK(f.at(s, s, s, a) == doctest::Approx(0.25));
        CHECK(f.period == 2);
        CHECK(f.a1_violated);
    }

    TEST_CASE("stationary distribution matches simulation frequencies") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        const auto single = singleton_machine(1, 2);
        const StationaryDist d = stationary_dist(m, single, blind_rule(0.5));
        Rng rng(21);
        auto [s, y] = sample_initial(m, rng);
        std::vector<double> count(3 * 2, 0.0);
        const std::size_t N = 1'000'000;
        for (std::size_t t = 0; t < N; ++t) {
            const Index a = rng() % 2;
            count[s * 2 + a] += 1.0;
            const StepOutcome o = sample_step(m, s, a, rng);
            s = o.next_state;
        }
        for (Index st = 0; st < 3; ++st)
            for (Index a = 0; a < 2; ++a) {
                const double p = d.at(st, 0, 0, a), f = count[st * 2 + a] / N;
                // Correlated chain: allow 3 sigma with a generous mixing factor of 30.
                CHECK(std::abs(p - f) <= 3.0 * std::sqrt(30.0 * p * (1 - p) / N) + 1e-12);
            }
    }

    TEST_CASE("multiple closed classes are ambiguous") {
        ModelData d;
        d.n_states = 2;
        d.n_actions = 1;
        d.n_obs = 1;
        d.kernel = {1.0, 0.0, 0.0, 1.0};
        d.reward = {0.0, 0.0};
        d.init_state = {0.5, 0.5};
        CHECK_THROWS_AS(stationary_dist(PomdpModel(d), singleton_machine(1, 1), DecisionRule::uniform(1, 1)),
                        AmbiguityError);
    }

    TEST_CASE("Monte Carlo estimates bracket the exact value") {
        Rng rng(31);
        const MonteCarloEstimate one =
            monte_carlo_J(single_state(), singleton_machine(1, 1), Policy::stationary(DecisionRule::uniform(1, 1)), 100,
                          400, rng);
        CHECK(one.estimate == doctest::Approx(10.0).epsilon(1e-6));

        const PomdpModel blind = benchmarks::blind_randomization_model();
        const MonteCarloEstimate b =
            monte_carlo_J(blind, singleton_machine(1, 2), Policy::stationary(blind_rule(0.39)), 20000, 250, rng);
        CHECK(std::abs(b.estimate - blind_value(0.39)) <= b.half_width);

        int inside = 0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng mr(seed);
            const PomdpModel m = benchmarks::random_pomdp(mr, 3, 2, 2, 0.8);
            const auto id = identity_machine(2, 2);
            const DecisionRule r = DecisionRule::stochastic({0.6, 0.4, 0.2, 0.8}, 2, 2);
            const double exact = policy_evaluate(m, id, r).performance;
            const MonteCarloEstimate e = monte_carlo_J(m, id, Policy::stationary(r), 4000, 120, mr);
            inside += std::abs(e.estimate - exact) <= e.half_width;
        }
        // 95% intervals: at least 42 of 50 expected (binomial lower tail below 1%).
        CHECK(inside >= 42);
    }
}
