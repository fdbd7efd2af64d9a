// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "agentpomdp/ais.hpp"
#include "agentpomdp/benchmarks.hpp"
#include "agentpomdp/bruteforce.hpp"
#include "agentpomdp/designer.hpp"
#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"
#include "agentpomdp/learning.hpp"
#include "agentpomdp/model_io.hpp"
#include "agentpomdp/policy_search.hpp"

using namespace agentpomdp;
namespace bm = agentpomdp::benchmarks;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s %2d %-34s %8.2fs (limit %gs)  %s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(), secs, limit_s,
                o.detail.c_str(), in_time ? "" : "  [too slow]");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

DecisionRule blind_rule(double p) { return DecisionRule::stochastic({1.0 - p, p}, 1, 2); }

std::vector<double> random_simplex(Rng& rng, Index n) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(n);
    double t = 0.0;
    for (double& x : v) t += (x = e(rng));
    for (double& x : v) x /= t;
    return v;
}

// ------------------------------------------------------------------ random documents for round trips

AgentStateMachine random_machine(Rng& rng, const PomdpModel& m, int i) {
    const Index Y = m.n_obs(), A = m.n_actions();
    const std::string name = "m" + std::to_string(i);
    switch (rng() % 5) {
        case 0: return identity_machine(Y, A).with_label(name);
        case 1: return singleton_machine(Y, A).with_label(name);
        case 2: return window_machine(rng() % 2, Y, A).with_label(name);
        case 3: return belief_machine(m, 1 + rng() % 3).with_label(name);
        default: {
            const Index Z = 1 + rng() % 4;
            std::vector<Index> init(Y), update(Z * Y * A);
            for (auto& v : init) v = rng() % Z;
            for (auto& v : update) v = rng() % Z;
            return AgentStateMachine(Z, Y, A, init, update, name);
        }
    }
}

ModelDocument random_document(Rng& rng) {
    ModelData d;
    d.n_states = 1 + rng() % 4;
    d.n_actions = 1 + rng() % 3;
    d.n_obs = 1 + rng() % 3;
    const Index S = d.n_states, A = d.n_actions, Y = d.n_obs;
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (Index i = 0; i < S * A; ++i) {
        auto row = random_simplex(rng, S * Y);
        // Sparse rows exercise the omitted-zero encoding.
        if (rng() % 2) {
            for (double& x : row)
                if (rng() % 3 == 0) x = 0.0;
            double t = 0.0;
            for (double x : row) t += x;
            if (t == 0.0) row[0] = t = 1.0;
            for (double& x : row) x /= t;
        }
        d.kernel.insert(d.kernel.end(), row.begin(), row.end());
        d.reward.push_back(rng() % 4 == 0 ? std::round(u(rng)) : u(rng) * 1e-3 * double(rng() % 1000));
    }
    d.init_state = random_simplex(rng, S);
    if (rng() % 2)
        for (Index s = 0; s < S; ++s) {
            const auto row = random_simplex(rng, Y);
            d.init_obs.insert(d.init_obs.end(), row.begin(), row.end());
        }
    d.gamma = std::uniform_real_distribution<double>(0.05, 0.999)(rng);
    if (rng() % 3 == 0) d.r_max = 10.0 + u(rng);
    ModelDocument doc{PomdpModel(d), {}, {}};
    const int n_machines = rng() % 3;
    for (int i = 0; i < n_machines; ++i) doc.machines.push_back(random_machine(rng, doc.model, i));
    if (rng() % 2) doc.metadata["seed_note"] = "value with spaces " + std::to_string(rng() % 1000);
    return doc;
}

// Dyadic classic files: probabilities are multiples of 1/8, each row keeps mass on its own state.
struct ClassicCase {
    std::string text;
    Index S, A, Y;
    std::vector<double> T;  // (s*A + a)*S + s'
    std::vector<double> O;  // (a*S + s')*Y + y
};

std::vector<double> dyadic_row(Rng& rng, Index n, Index keep) {
    std::vector<int> eighths(n, 0);
    eighths[keep] = 1;
    for (int i = 1; i < 8; ++i) ++eighths[rng() % n];
    std::vector<double> row(n);
    for (Index i = 0; i < n; ++i) row[i] = eighths[i] / 8.0;
    return row;
}

ClassicCase random_classic(Rng& rng) {
    ClassicCase c;
    c.S = 2 + rng() % 3;
    c.A = 1 + rng() % 3;
    c.Y = 1 + rng() % 3;
    const bool named = rng() % 2;
    auto sname = [&](Index s) { return named ? "s" + std::to_string(s) : std::to_string(s); };
    auto aname = [&](Index a) { return named ? "act" + std::to_string(a) : std::to_string(a); };
    auto yname = [&](Index y) { return named ? "o" + std::to_string(y) : std::to_string(y); };
    std::ostringstream out;
    out << "# generated\ndiscount: 0.875\nvalues: reward\n";
    auto alphabet = [&](const char* key, Index n, auto name) {
        out << key << ": ";
        if (named)
            for (Index i = 0; i < n; ++i) out << name(i) << ' ';
        else
            out << n;
        out << '\n';
    };
    alphabet("states", c.S, sname);
    alphabet("actions", c.A, aname);
    alphabet("observations", c.Y, yname);
    out << "start: uniform\n";
    c.T.assign(c.S * c.A * c.S, 0.0);
    c.O.assign(c.A * c.S * c.Y, 0.0);
    for (Index a = 0; a < c.A; ++a) {
        const int form = rng() % 3;
        if (form == 0) out << "T: " << aname(a) << '\n';
        for (Index s = 0; s < c.S; ++s) {
            const auto row = dyadic_row(rng, c.S, s);
            for (Index sn = 0; sn < c.S; ++sn) c.T[(s * c.A + a) * c.S + sn] = row[sn];
            if (form == 1) out << "T: " << aname(a) << " : " << sname(s) << '\n';
            for (Index sn = 0; sn < c.S; ++sn) {
                if (form == 2)
                    out << "T: " << aname(a) << " : " << sname(s) << " : " << sname(sn) << ' ' << row[sn] << '\n';
                else
                    out << row[sn] << (sn + 1 < c.S ? " " : "\n");
            }
        }
        const bool row_form = rng() % 2;
        if (!row_form) out << "O: " << aname(a) << '\n';
        for (Index sn = 0; sn < c.S; ++sn) {
            const auto row = dyadic_row(rng, c.Y, rng() % c.Y);
            for (Index y = 0; y < c.Y; ++y) c.O[(a * c.S + sn) * c.Y + y] = row[y];
            if (row_form) out << "O: " << aname(a) << " : " << sname(sn) << '\n';
            for (Index y = 0; y < c.Y; ++y) out << row[y] << (y + 1 < c.Y ? " " : "\n");
        }
    }
    out << "R: * : * : * : * -1\n";
    c.text = out.str();
    return c;
}

}  // namespace

int main() {
    std::printf("acceptance run\n");

    criterion(1, "blind chain endpoints", 1.0, [] {
        const PomdpModel m = bm::blind_randomization_model(0.9);
        const auto one = singleton_machine(1, 2);
        const double j0 = policy_evaluate(m, one, blind_rule(0.0)).performance;
        const double j1 = policy_evaluate(m, one, blind_rule(1.0)).performance;
        const double res = std::max(std::abs(j0 + 10.0), std::abs(j1 + 5.0));
        return Outcome{res < 1e-9, fmt("J(0)=%.12f J(1)=%.12f residual=%.1e", j0, j1, res)};
    });

    criterion(2, "blind chain optimum on the 0.005 grid", 5.0, [] {
        const auto curve = sweep_1param(bm::blind_randomization_model(0.9), unit_grid(200));
        const auto best = *std::max_element(curve.begin(), curve.end(),
                                            [](const SweepPoint& a, const SweepPoint& b) { return a.value < b.value; });
        return Outcome{best.p >= 0.385 && best.p <= 0.395 && best.value > -5.0,
                       fmt("argmax p=%.3f J=%.10f", best.p, best.value)};
    });

    criterion(3, "counting chain separation", 60.0, [] {
        const double g = 0.9, tol = 1e-6;
        const PomdpModel m = bm::counting_chain_model(g);
        const auto id = identity_machine(2, 2);
        const double zsd = enumerate_stationary_det(m, id).value;
        const double closed = (1 + g - g * g) / (1 - g * g * g);
        DesignerOptions opts;
        opts.tol = tol;
        const MetaPlan plan = plan_designer(m, id, opts);
        const bool ok = std::abs(zsd - closed) < 1e-6 && std::abs(plan.value.lo - 10.0) <= tol &&
                        plan.value.contains(10.0, 1e-12) && zsd < plan.value.lo;
        return Outcome{ok, fmt("J_ZSD=%.10f (closed %.10f) J_ZND>=%.10f", zsd, closed, plan.value.lo) +
                               fmt(" strict gap=%.6f", plan.value.lo - zsd)};
    });

    criterion(4, "policy gradient vs finite differences", 60.0, [] {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(1000 + seed);
            const Index S = 1 + rng() % 3, A = 1 + rng() % 3, Y = 1 + rng() % 3;
            const PomdpModel m = bm::random_pomdp(rng, S, A, Y, 0.9);
            const AgentStateMachine mach = rng() % 2 ? identity_machine(Y, A) : belief_machine(m, 2);
            SoftmaxParams p = SoftmaxParams::zeros(mach.n_agent_states(), A);
            std::normal_distribution<double> n(0.0, 1.0);
            for (double& t : p.theta) t = n(rng);
            worst = std::max(worst, gradient_report(m, mach, p).max_rel_err);
        }
        return Outcome{worst < 1e-4, fmt("100 instances, max rel err=%.2e", worst)};
    });

    criterion(5, "ASQL convergence on the blind chain", 120.0, [] {
        const PomdpModel m = bm::blind_randomization_model(0.9);
        const auto one = singleton_machine(1, 2);
        const DecisionRule mu = DecisionRule::uniform(1, 2);
        const FixedPoint fp = asql_fixed_point(m, one, mu);
        int close = 0;
        std::string dists;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            LearningConfig c;
            c.steps = 1'000'000;
            c.seed = seed;
            c.lr_exponent = 0.8;
            const double d = sup_distance(asql_run(m, one, mu, c).final_q(), fp.q);
            close += d < 0.05;
            dists += fmt("%.4f ", d);
        }
        return Outcome{close >= 4 && fp.residual < 1e-10,
                       "distances " + dists + fmt("(%g of 5 < 0.05) fixed-point residual=%.1e", close, fp.residual)};
    });

    criterion(6, "ASQL limit depends on behaviour", 10.0, [] {
        const PomdpModel blind = bm::blind_randomization_model(0.9);
        const auto one = singleton_machine(1, 2);
        const double pomdp_gap = sup_distance(asql_fixed_point(blind, one, DecisionRule::uniform(1, 2)).q,
                                              asql_fixed_point(blind, one, blind_rule(0.8)).q);
        const PomdpModel mdp = bm::small_mdp(0.9);
        const auto id = identity_machine(3, 2);
        const double mdp_gap =
            sup_distance(asql_fixed_point(mdp, id, DecisionRule::uniform(3, 2)).q,
                         asql_fixed_point(mdp, id, DecisionRule::stochastic({0.9, 0.1, 0.3, 0.7, 0.6, 0.4}, 3, 2)).q);
        return Outcome{pomdp_gap > 1e-3 && mdp_gap < 1e-8, fmt("blind gap=%.4f mdp gap=%.1e", pomdp_gap, mdp_gap)};
    });

    criterion(7, "AIS bound soundness", 600.0, [] {
        int evaluated = 0, violations = 0, skipped = 0;
        double worst_ratio = 0.0;
        auto check = [&](const PomdpModel& m, const AgentStateMachine& mach, std::size_t loss_h, std::size_t hist_h,
                         double hist_tol) {
            const AisModel ais = fit_ais(m, mach, DecisionRule::uniform(mach.n_agent_states(), m.n_actions()));
            const IpmSpec tv = IpmSpec::total_variation(mach.n_agent_states());
            const AisLossReport rep = compute_ais_losses(m, mach, ais, tv, loss_h);
            const AisSolution sol = solve_ais_dp(ais, m.gamma());
            const double bound = suboptimality_bound(rep, tv, sol.v, m.gamma());
            const double j = policy_evaluate(m, mach, sol.policy).performance;
            const double measured = history_dp(m, hist_h, hist_tol).value.hi - j;
            ++evaluated;
            if (measured > bound + 1e-9) ++violations;
            if (bound > 0.0) worst_ratio = std::max(worst_ratio, measured / bound);
        };
        for (std::uint64_t seed = 0; evaluated < 50 && seed < 500; ++seed) {
            Rng rng(7000 + seed);
            const Index S = 2 + rng() % 2;
            const PomdpModel m = bm::random_pomdp(rng, S, 2, 2, 0.9);
            try {
                check(m, belief_machine(m, 4), 4, 8, 1e-6);
            } catch (const AmbiguityError&) {
                ++skipped;
            }
        }
        check(bm::blind_randomization_model(0.9), singleton_machine(1, 2), 6, 200, 1e-4);
        return Outcome{violations == 0 && evaluated == 51,
                       fmt("%g instances, %g violations, max measured/bound=%.3f", evaluated, violations, worst_ratio) +
                           fmt(" (%g seeds skipped: several closed classes)", skipped)};
    });

    criterion(8, "ordering diagram", 600.0, [] {
        std::size_t violations = 0;
        int instances = 0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng rng(8000 + seed);
            const Index S = 2 + rng() % 2, Y = 1 + rng() % 2;
            const PomdpModel m = bm::random_pomdp(rng, S, 2, Y, 0.9);
            OrderingBudgets b;
            b.designer_horizon = 5;
            b.history_horizon = 7;
            b.class_samples = 500;
            b.seed = seed;
            violations += verify_ordering(m, identity_machine(Y, 2), b).violations();
            ++instances;
        }
        OrderingBudgets fixed;
        fixed.history_tol = 1e-4;
        fixed.history_horizon = 400;
        violations += verify_ordering(bm::blind_randomization_model(0.9), singleton_machine(1, 2), fixed).violations();
        violations += verify_ordering(bm::counting_chain_model(0.9), identity_machine(2, 2), fixed).violations();
        instances += 2;
        return Outcome{violations == 0, fmt("%g instances, %g violations", instances, double(violations))};
    });

    criterion(9, "information-state collapse on an MDP", 30.0, [] {
        const PomdpModel m = bm::small_mdp(0.9);
        const auto id = identity_machine(3, 2);
        const ClassReport r = verify_ordering(m, id);
        double spread = 0.0;
        for (double v : {r.j_znd.lo, r.j_znd.hi, r.j_zss, r.j_hnd.lo, r.j_hnd.hi})
            spread = std::max(spread, std::abs(v - r.j_zsd));
        const InfoStateReport info = check_information_state(m, id, 6);
        const double resid = std::max({info.p1_residual, info.p2_residual, info.p2b_residual});
        return Outcome{spread < 1e-6 && resid == 0.0 && info.is_info_state,
                       fmt("J_ZSD=%.10f spread=%.1e residuals=%.1e", r.j_zsd, spread, resid)};
    });

    criterion(10, "non-stationary class equality", 300.0, [] {
        int certified = 0;
        double worst = -1e300;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(10000 + seed);
            const Index S = 2 + rng() % 2, Y = 1 + rng() % 2;
            const PomdpModel m = bm::random_pomdp(rng, S, 2, Y, 0.9);
            const ClassComparison c = compare_nonstationary_classes(m, identity_machine(Y, 2), 3, 10000, rng);
            certified += c.certified;
            worst = std::max(worst, c.best_stochastic - c.best_deterministic);
        }
        return Outcome{certified == 20, fmt("%g of 20 certified, max(stoch - det)=%.2e", certified, worst)};
    });

    criterion(11, "IPM inequality and TV identity", 60.0, [] {
        Rng rng(11);
        double worst = -1e300, tv_gap = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const Index n = 2 + rng() % 5;
            const auto nu1 = random_simplex(rng, n), nu2 = random_simplex(rng, n);
            std::vector<double> f(n);
            std::normal_distribution<double> g(0.0, 3.0);
            for (double& x : f) x = g(rng);
            std::vector<double> pts(n);
            for (double& x : pts) x = std::uniform_real_distribution<double>(0, 10)(rng);
            std::vector<double> metric(n * n);
            for (Index a = 0; a < n; ++a)
                for (Index b = 0; b < n; ++b) metric[a * n + b] = std::abs(pts[a] - pts[b]);
            double lhs = 0.0;
            for (Index k = 0; k < n; ++k) lhs += f[k] * (nu1[k] - nu2[k]);
            lhs = std::abs(lhs);
            for (const IpmSpec& spec : {IpmSpec::total_variation(n), IpmSpec::wasserstein(metric, n)}) {
                const double rhs = minkowski_norm(spec, f) * ipm_distance(spec, nu1, nu2);
                worst = std::max(worst, lhs - rhs);
            }
            tv_gap = std::max(tv_gap, std::abs(ipm_distance(IpmSpec::total_variation(n), nu1, nu2) -
                                               ipm_distance(IpmSpec::discrete_wasserstein(n), nu1, nu2)));
        }
        return Outcome{worst <= 1e-12 && tv_gap <= 1e-10,
                       fmt("max(lhs - rhs)=%.2e, |TV - W_discrete|=%.1e", worst, tv_gap)};
    });

    criterion(12, "round-trip parsing", 60.0, [] {
        Rng rng(12);
        int native_ok = 0;
        for (int i = 0; i < 200; ++i) {
            const ModelDocument doc = random_document(rng);
            native_ok += documents_equal(doc, parse_native(serialize_native(doc)));
        }
        int classic_ok = 0;
        for (int i = 0; i < 20; ++i) {
            const ClassicCase c = random_classic(rng);
            const FactoredKernel f = factor_kernel(parse_cassandra(c.text));
            classic_ok += f.transition == c.T && f.observation == c.O;
        }
        return Outcome{native_ok == 200 && classic_ok == 20,
                       fmt("native %g/200 bit-exact, classic %g/20 exact factors", native_ok, classic_ok)};
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
