#include <doctest.h>

#include <algorithm>

#include "agentpomdp/errors.hpp"
#include "agentpomdp/policy_search.hpp"
#include "support.hpp"

using namespace agentpomdp;
using namespace testsupport;

namespace {

SoftmaxParams blind_params(double p) {
    SoftmaxParams params = SoftmaxParams::zeros(1, 2);
    params.at(0, 1) = std::log(p / (1.0 - p));
    return params;
}

SoftmaxParams random_params(Rng& rng, Index Z, Index A) {
    SoftmaxParams p = SoftmaxParams::zeros(Z, A);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& t : p.theta) t = n(rng);
    return p;
}

double inf_norm(const Gradient& g) {
    double m = 0.0;
    for (double v : g) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

TEST_SUITE("policy_search") {
    TEST_CASE("single action has no gradient") {
        const PomdpModel m = single_action(4);
        CHECK(inf_norm(exact_policy_gradient(m, identity_machine(2, 1), SoftmaxParams::zeros(2, 1))) == 0.0);
    }

    TEST_CASE("constant reward has zero gradient") {
        Rng rng(2);
        ModelData d = benchmarks::random_pomdp(rng, 3, 2, 2, 0.9).data();
        std::fill(d.reward.begin(), d.reward.end(), 0.7);
        const PomdpModel m(d);
        CHECK(inf_norm(finite_diff_gradient(m, identity_machine(2, 2), random_params(rng, 2, 2))) < 1e-8);
    }

    TEST_CASE("gradient vanishes at the exact maximiser of the blind sweep") {
        // Golden-section search on the independent closed form.
        double lo = 0.3, hi = 0.5;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int i = 0; i < 200; ++i) {
            const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
            if (blind_value(a) < blind_value(b)) lo = a;
            else hi = b;
        }
        const double p_star = 0.5 * (lo + hi);
        CHECK(p_star == doctest::Approx(0.38728).epsilon(1e-4));
        const PomdpModel m = benchmarks::blind_randomization_model();
        const auto single = singleton_machine(1, 2);
        CHECK(inf_norm(exact_policy_gradient(m, single, blind_params(p_star))) < 1e-6);
        // At the rounded value 0.39 the slope is small but not below 1e-3.
        const double g39 = inf_norm(exact_policy_gradient(m, single, blind_params(0.39)));
        CHECK(g39 > 1e-3);
        CHECK(g39 < 0.1);
    }

    TEST_CASE("analytic gradient matches finite differences") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng rng(seed);
            const PomdpModel m = benchmarks::random_pomdp(rng, 3, 2, 2, 0.9);
            const GradientReport r = gradient_report(m, identity_machine(2, 2), random_params(rng, 2, 2));
            CHECK(r.max_rel_err < 1e-5);
        }
    }

    TEST_CASE("gradient scales with the reward") {
        Rng rng(6);
        const PomdpModel m = benchmarks::random_pomdp(rng, 3, 2, 2, 0.9);
        const auto id = identity_machine(2, 2);
        const SoftmaxParams p = random_params(rng, 2, 2);
        const Gradient g1 = finite_diff_gradient(m, id, p), g2 = finite_diff_gradient(m.with_scaled_reward(2.0), id, p);
        for (Index i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-6));
    }

    TEST_CASE("ascent on the blind chain finds the randomised optimum") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        const AscentResult r = gradient_ascent(m, singleton_machine(1, 2), blind_params(0.5));
        const double p = r.params.rule().prob(0, 1);
        CHECK(p >= 0.35);
        CHECK(p <= 0.43);
        CHECK(r.value > -5.0);
        CHECK(r.converged);
        CHECK(std::is_sorted(r.accepted_values.begin(), r.accepted_values.end()));
    }

    TEST_CASE("ascent on a single action converges immediately") {
        const AscentResult r = gradient_ascent(single_action(1), identity_machine(2, 1), SoftmaxParams::zeros(2, 1));
        CHECK(r.converged);
        CHECK(r.iterations <= 1);
    }

    TEST_CASE("ascent on an MDP reaches the value-iteration optimum") {
        Rng rng(14);
        const PomdpModel m = benchmarks::random_mdp(rng, 3, 2, 0.9);
        AscentOptions opts;
        opts.iters = 5000;
        opts.grad_tol = 1e-9;
        const AscentResult r = gradient_ascent(m, identity_machine(3, 2), SoftmaxParams::zeros(3, 2), opts);
        CHECK(std::abs(r.value - mdp_optimal_value(m)) < 1e-6);
    }

    TEST_CASE("sweep endpoints and argmax") {
        const PomdpModel m = benchmarks::blind_randomization_model();
        const auto curve = sweep_1param(m, unit_grid(200));
        REQUIRE(curve.size() == 201);
        CHECK(std::abs(curve.front().value + 10.0) < 1e-9);
        CHECK(std::abs(curve.back().value + 5.0) < 1e-9);
        const auto best = std::max_element(curve.begin(), curve.end(),
                                           [](const SweepPoint& a, const SweepPoint& b) { return a.value < b.value; });
        CHECK(best->p >= 0.385);
        CHECK(best->p <= 0.395);
        for (const auto& pt : curve) CHECK(pt.value == doctest::Approx(blind_value(pt.p)).epsilon(1e-10));
        CHECK_THROWS_AS(sweep_1param(m, {1.5}), ContractError);
    }
}
