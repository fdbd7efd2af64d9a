#include <doctest.h>

#include <sstream>

#include "agentpomdp/bruteforce.hpp"
#include "agentpomdp/designer.hpp"
#include "agentpomdp/errors.hpp"
#include "support.hpp"

using namespace agentpomdp;
using namespace testsupport;

TEST_SUITE("designer") {
    TEST_CASE("initial joint distribution") {
        const JointXi one = xi_init(single_state(), singleton_machine(1, 1));
        CHECK(one == JointXi{1.0});
        const JointXi blind = xi_init(benchmarks::blind_randomization_model(), singleton_machine(1, 2));
        CHECK(blind == JointXi{1.0, 0.0, 0.0});

        ModelData d = flip_chain().data();
        const JointXi diag = xi_init(PomdpModel(d), identity_machine(2, 2));
        CHECK(diag[0 * 2 + 0] == 0.5);
        CHECK(diag[1 * 2 + 1] == 0.5);
        CHECK(diag[0 * 2 + 1] == 0.0);
    }

    TEST_CASE("xi dynamics") {
        const auto one = singleton_machine(1, 1);
        CHECK(xi_update(single_state(), one, JointXi{1.0}, DecisionRule::uniform(1, 1)) == JointXi{1.0});

        const PomdpModel blind = benchmarks::blind_randomization_model();
        const auto single = singleton_machine(1, 2);
        const DecisionRule p1 = DecisionRule::deterministic({1}, 2);
        const JointXi xi1 = xi_init(blind, single);
        const JointXi xi2 = xi_update(blind, single, xi1, p1);
        CHECK(xi2[0] == doctest::Approx(0.5));
        CHECK(xi2[1] == doctest::Approx(0.5));
        CHECK(xi_reward(blind, xi1, 1, p1) == -0.5);
        CHECK(xi_reward(blind, JointXi{0.0, 0.0, 1.0}, 1, DecisionRule::deterministic({0}, 2)) == 2.0);
    }

    TEST_CASE("linearity in xi and in the rule") {
        Rng rng(17);
        const PomdpModel m = benchmarks::random_pomdp(rng, 3, 2, 2, 0.9);
        const auto id = identity_machine(2, 2);
        auto random_xi = [&] {
            JointXi xi(6);
            double t = 0.0;
            for (double& v : xi) t += (v = std::uniform_real_distribution<double>(0, 1)(rng));
            for (double& v : xi) v /= t;
            return xi;
        };
        const JointXi a = random_xi(), b = random_xi();
        const DecisionRule r = random_stochastic_rule(rng, 2, 2);
        JointXi mix(6);
        for (Index i = 0; i < 6; ++i) mix[i] = 0.3 * a[i] + 0.7 * b[i];
        const JointXi fm = xi_update(m, id, mix, r), fa = xi_update(m, id, a, r), fb = xi_update(m, id, b, r);
        for (Index i = 0; i < 6; ++i) CHECK(fm[i] == doctest::Approx(0.3 * fa[i] + 0.7 * fb[i]).epsilon(1e-12));

        const DecisionRule r2 = random_stochastic_rule(rng, 2, 2);
        std::vector<double> probs(4);
        for (Index i = 0; i < 4; ++i) probs[i] = 0.4 * r.probs()[i] + 0.6 * r2.probs()[i];
        const DecisionRule rm = DecisionRule::stochastic(probs, 2, 2);
        CHECK(xi_reward(m, a, 2, rm) ==
              doctest::Approx(0.4 * xi_reward(m, a, 2, r) + 0.6 * xi_reward(m, a, 2, r2)).epsilon(1e-12));
    }

    TEST_CASE("single action plan is the exact value") {
        const PomdpModel m = single_action(3);
        const auto id = identity_machine(2, 1);
        const MetaPlan plan = plan_designer(m, id, [] { DesignerOptions o; o.tol = 1e-8; return o; }());
        const double exact = policy_evaluate(m, id, DecisionRule::deterministic({0, 0}, 1)).performance;
        CHECK(plan.value.lo <= exact + 1e-9);
        CHECK(plan.value.hi >= exact - 1e-9);
        CHECK(plan.value.width() <= 1e-8);
    }

    TEST_CASE("counting chain plan reaches the open-loop optimum") {
        const PomdpModel m = benchmarks::counting_chain_model(0.9);
        const MetaPlan plan = plan_designer(m, identity_machine(2, 2), [] { DesignerOptions o; o.tol = 1e-6; return o; }());
        CHECK(plan.value.contains(10.0, 1e-9));
        CHECK(plan.value.width() <= 1e-6);
        CHECK(std::abs(performance(m, identity_machine(2, 2), plan.policy()).value - plan.value.lo) <= 1e-9);
    }

    TEST_CASE("blind chain plan against exhaustive horizon search") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        const auto single = singleton_machine(1, 2);
        DesignerOptions opts;
        opts.horizon = 8;
        const MetaPlan plan = plan_designer(m, single, opts);
        CHECK(plan.value.lo >= -5.0);
        // Exhaustive: every open-loop sequence of length 8 with the best stationary tail afterwards.
        double best = -1e300;
        for (unsigned code = 0; code < (1u << 8); ++code) {
            std::vector<DecisionRule> rules;
            for (int t = 0; t < 8; ++t) rules.push_back(DecisionRule::deterministic({(code >> t) & 1u}, 2));
            for (Index tail = 0; tail < 2; ++tail)
                best = std::max(best, performance(m, single, Policy::non_stationary(rules, DecisionRule::deterministic({tail}, 2))).value);
        }
        // A short horizon certifies an upper bound; the full-tolerance plan attains the exhaustive optimum.
        CHECK(plan.value.hi >= best - 1e-9);
        const MetaPlan full = plan_designer(m, single, DesignerOptions{});
        CHECK(full.value.lo >= best - 1e-6);
        CHECK(full.value.hi >= best - 1e-9);
        CHECK(std::abs(sequence_value(m, single, plan.rules) - plan.horizon_value) < 1e-12);
    }

    TEST_CASE("memoisation and pruning do not change the value") {
        Rng rng(23);
        const PomdpModel m = benchmarks::random_pomdp(rng, 2, 2, 2, 0.9);
        const auto id = identity_machine(2, 2);
        DesignerOptions full;
        full.horizon = 5;
        full.memoize = false;
        full.prune = false;
        DesignerOptions fast = full;
        fast.memoize = true;
        fast.prune = true;
        const MetaPlan a = plan_designer(m, id, full), b = plan_designer(m, id, fast);
        CHECK(a.value.hi == doctest::Approx(b.value.hi).epsilon(1e-12));
        CHECK(a.horizon_value == doctest::Approx(b.horizon_value).epsilon(1e-12));
        CHECK(b.nodes_expanded <= a.nodes_expanded);
    }

    TEST_CASE("stochastic class certificate") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        DesignerOptions opts;
        opts.horizon = 4;
        opts.rule_class = RuleClass::Stochastic;
        opts.stochastic_samples = 500;
        const MetaPlan plan = plan_designer(m, singleton_machine(1, 2), opts);
        CHECK(plan.vertex_certified);
        CHECK(plan.rule_class == RuleClass::Stochastic);
    }

    TEST_CASE("non-stationary classes") {
        Rng rng(5);
        const PomdpModel blind = benchmarks::blind_randomization_model();
        const ClassComparison c = compare_nonstationary_classes(blind, singleton_machine(1, 2), 3, 10000, rng);
        CHECK(c.certified);
        CHECK(c.best_deterministic >= c.best_stochastic - 1e-9);
        CHECK(c.min_gap >= -1e-9);

        const ClassComparison s = compare_nonstationary_classes(single_action(2), identity_machine(2, 1), 3, 100, rng);
        CHECK(s.best_deterministic == doctest::Approx(s.best_stochastic).epsilon(1e-12));
        CHECK(s.max_gap == doctest::Approx(0.0).epsilon(1e-12));
    }

    TEST_CASE("rule caps are enforced") {
        Rng rng(1);
        const PomdpModel m = benchmarks::random_pomdp(rng, 2, 4, 7, 0.9);
        DesignerOptions opts;
        opts.horizon = 2;
        CHECK_THROWS_AS(plan_designer(m, identity_machine(7, 4), opts), CapacityError);
    }

    TEST_CASE("xi trajectory csv") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        DesignerOptions opts;
        opts.horizon = 2;
        const MetaPlan plan = plan_designer(m, singleton_machine(1, 2), opts);
        std::ostringstream out;
        write_xi_trajectory_csv(out, plan, 1);
        CHECK(out.str().rfind("t,s,z,xi\n", 0) == 0);
    }
}
