#include <doctest.h>

#include <sstream>

#include "agentpomdp/bruteforce.hpp"
#include "agentpomdp/errors.hpp"
#include "support.hpp"

using namespace agentpomdp;
using namespace testsupport;

TEST_SUITE("bruteforce") {
    TEST_CASE("stationary deterministic enumeration") {
        const double g = 0.9;
        const PomdpModel chain = benchmarks::counting_chain_model(g);
        const StationaryDetResult c = enumerate_stationary_det(chain, identity_machine(2, 2));
        CHECK(c.values.size() == 4);
        CHECK(std::abs(c.value - (1 + g - g * g) / (1 - g * g * g)) < 1e-6);

        const StationaryDetResult b = enumerate_stationary_det(benchmarks::blind_randomization_model(), singleton_machine(1, 2));
        CHECK(std::abs(b.value + 5.0) < 1e-9);
        CHECK(b.best.action(0) == 1);

        Rng rng(6);
        const PomdpModel mdp = benchmarks::random_mdp(rng, 3, 2, 0.9);
        CHECK(enumerate_stationary_det(mdp, identity_machine(3, 2)).value ==
              doctest::Approx(mdp_optimal_value(mdp)).epsilon(1e-9));
        CHECK_THROWS_AS(enumerate_stationary_det(mdp, identity_machine(3, 2), 4), CapacityError);
    }

    TEST_CASE("non-stationary search on the counting chain") {
        const PomdpModel chain = benchmarks::counting_chain_model(0.9);
        const auto id = identity_machine(2, 2);
        const MetaPlan plan = search_nonstationary_det(chain, id, 1e-6);
        CHECK(plan.value.contains(10.0, 1e-9));
        CHECK(enumerate_stationary_det(chain, id).value < plan.value.lo);

        const PomdpModel one = single_action(8);
        const MetaPlan p1 = search_nonstationary_det(one, identity_machine(2, 1), 1e-9);
        CHECK(p1.value.width() <= 1e-9);
    }

    TEST_CASE("grid search over stationary stochastic rules") {
        const PomdpModel blind = benchmarks::blind_randomization_model();
        const GridResult g = grid_search_stationary_stoch(blind, singleton_machine(1, 2), 0.005);
        CHECK(g.points == 201);
        CHECK(g.best.prob(0, 1) >= 0.385);
        CHECK(g.best.prob(0, 1) <= 0.395);
        CHECK(g.value > -5.0);

        const GridResult one = grid_search_stationary_stoch(single_action(2), identity_machine(2, 1), 0.1);
        CHECK(one.points == 1);

        Rng rng(13);
        const PomdpModel mdp = benchmarks::random_mdp(rng, 2, 2, 0.9);
        const auto id = identity_machine(2, 2);
        CHECK(std::abs(grid_search_stationary_stoch(mdp, id, 0.1).value - enumerate_stationary_det(mdp, id).value) < 1e-6);
        CHECK_THROWS_AS(grid_search_stationary_stoch(mdp, id, 0.3), ContractError);
    }

    TEST_CASE("history DP brackets") {
        Rng rng(4);
        const PomdpModel mdp = benchmarks::random_mdp(rng, 3, 2, 0.9);
        const HistoryDpResult h = history_dp(mdp, 100, 1e-8);
        CHECK(h.value.contains(mdp_optimal_value(mdp), 1e-9));
        CHECK(h.converged);

        const HistoryDpResult c = history_dp(benchmarks::counting_chain_model(0.9), 400, 1e-6);
        CHECK(c.value.contains(10.0, 1e-9));

        const PomdpModel one = single_action(5);
        const HistoryDpResult s = history_dp(one, 400, 1e-8);
        const double exact = policy_evaluate(one, identity_machine(2, 1), DecisionRule::uniform(2, 1)).performance;
        CHECK(s.value.contains(exact, 1e-9));
        CHECK(s.value.width() <= 1e-8);
    }

    TEST_CASE("fast informed bound dominates the MDP on nothing and equals it on MDPs") {
        Rng rng(15);
        const PomdpModel mdp = benchmarks::random_mdp(rng, 3, 2, 0.9);
        const auto fib = fast_informed_bound(mdp);
        const auto q = mdp_optimal_q(mdp);
        for (Index i = 0; i < q.size(); ++i) CHECK(fib[i] == doctest::Approx(q[i]).epsilon(1e-9));
    }

    TEST_CASE("ordering on the reference models") {
        OrderingBudgets budgets;
        budgets.history_tol = 1e-4;
        budgets.history_horizon = 400;
        const ClassReport blind = verify_ordering(benchmarks::blind_randomization_model(), singleton_machine(1, 2), budgets);
        CHECK(blind.violations() == 0);
        bool strict_ss = false;
        for (const auto& o : blind.orderings)
            if (o.relation == "J_ZSD <= J_ZSS") strict_ss = o.strict_gap > 2.0;
        CHECK(strict_ss);

        const ClassReport chain = verify_ordering(benchmarks::counting_chain_model(0.9), identity_machine(2, 2), budgets);
        CHECK(chain.violations() == 0);
        for (const auto& o : chain.orderings)
            if (o.relation == "J_ZSD <= J_ZND") CHECK(o.strict_gap == doctest::Approx(10.0 - 4.0221402214).epsilon(1e-6));

        std::ostringstream csv, text;
        write_class_report_csv(csv, chain);
        write_class_report_text(text, chain);
        CHECK(csv.str().find("J_ZSD") != std::string::npos);
        CHECK(text.str().find("violations: 0") != std::string::npos);
    }

    TEST_CASE("information-state collapse on an MDP") {
        const PomdpModel mdp = benchmarks::small_mdp();
        const auto id = identity_machine(3, 2);
        const ClassReport r = verify_ordering(mdp, id);
        CHECK(r.violations() == 0);
        for (double v : {r.j_znd.lo, r.j_znd.hi, r.j_zss, r.j_hnd.lo, r.j_hnd.hi}) CHECK(std::abs(v - r.j_zsd) < 1e-6);
    }

    TEST_CASE("random ordering suite") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const PomdpModel m = benchmarks::random_pomdp(rng, 3, 2, 2, 0.9);
            OrderingBudgets b;
            b.designer_horizon = 5;
            b.history_horizon = 7;
            b.class_samples = 200;
            b.seed = seed;
            CHECK(verify_ordering(m, identity_machine(2, 2), b).violations() == 0);
        }
    }
}
