#include "agentpomdp/bruteforce.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>

#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"

namespace agentpomdp {

StationaryDetResult enumerate_stationary_det(const PomdpModel& model, const AgentStateMachine& machine,
                                             std::size_t cap) {
    machine.check_compatible(model);
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    const auto count = deterministic_rule_count(Z, A, cap);
    if (!count) throw CapacityError("|A|^|Z| deterministic rules exceed the cap of " + std::to_string(cap));
    const ProductChain chain(model, machine);
    const JointXi xi1 = xi_init(model, machine);
    StationaryDetResult out;
    out.values.reserve(*count);
    out.value = -std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t code = 0; code < *count; ++code) {
        const double v = policy_evaluate(chain, DecisionRule::from_code(code, Z, A), xi1, model.gamma()).performance;
        out.values.push_back(v);
        if (v > out.value) {
            out.value = v;
            best = code;
        }
    }
    out.best = DecisionRule::from_code(best, Z, A);
    return out;
}

MetaPlan search_nonstationary_det(const PomdpModel& model, const AgentStateMachine& machine, double tol,
                                  std::optional<std::size_t> horizon, const Caps& caps) {
    DesignerOptions opts;
    opts.tol = tol;
    opts.horizon = horizon;
    opts.caps = caps;
    return plan_designer(model, machine, opts);
}

GridResult grid_search_stationary_stoch(const PomdpModel& model, const AgentStateMachine& machine, double resolution,
                                        std::size_t cap) {
    machine.check_compatible(model);
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    if (Z * (A - 1) > 6) throw CapacityError("grid search is limited to |Z| (|A| - 1) <= 6 dimensions");
    if (!(resolution > 0.0 && resolution <= 1.0)) throw ContractError("grid resolution must lie in (0, 1]");
    const auto n = static_cast<std::size_t>(std::llround(1.0 / resolution));
    if (std::abs(static_cast<double>(n) * resolution - 1.0) > 1e-9)
        throw ContractError("grid resolution must divide 1");
    const auto lattice = simplex_lattice(A, n, cap);
    const std::size_t per_row = lattice.size();
    std::size_t total = 1;
    for (Index z = 0; z < Z; ++z) {
        if (total > cap / per_row) throw CapacityError("grid has more than " + std::to_string(cap) + " points");
        total *= per_row;
    }

    const ProductChain chain(model, machine);
    const JointXi xi1 = xi_init(model, machine);
    GridResult out;
    out.divisions = n;
    out.points = total;
    out.value = -std::numeric_limits<double>::infinity();
    std::vector<double> probs(Z * A);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t rest = code;
        for (Index z = 0; z < Z; ++z) {
            const auto& row = lattice[rest % per_row];
            rest /= per_row;
            double acc = 0.0;
            for (Index a = 0; a + 1 < A; ++a) acc += probs[z * A + a] = static_cast<double>(row[a]) / static_cast<double>(n);
            probs[z * A + A - 1] = std::max(0.0, 1.0 - acc);
        }
        auto rule = DecisionRule::stochastic(probs, Z, A);
        const double v = policy_evaluate(chain, rule, xi1, model.gamma()).performance;
        if (v > out.value) {
            out.value = v;
            out.best = std::move(rule);
        }
    }
    return out;
}

std::vector<double> fast_informed_bound(const PomdpModel& model) {
    const Index S = model.n_states(), A = model.n_actions(), Y = model.n_obs();
    const double gamma = model.gamma();
    std::vector<double> q(S * A, std::max(model.reward_max(), 0.0) / (1.0 - gamma) + 1e-9);
    std::vector<double> next(S * A);
    for (int it = 0; it < 100'000; ++it) {
        double change = 0.0;
        for (Index s = 0; s < S; ++s)
            for (Index a = 0; a < A; ++a) {
                double v = model.reward(s, a);
                for (Index y = 0; y < Y; ++y) {
                    double best = -std::numeric_limits<double>::infinity();
                    bool any = false;
                    for (Index an = 0; an < A; ++an) {
                        double acc = 0.0;
                        for (Index sn = 0; sn < S; ++sn) {
                            const double p = model.kernel(s, a, sn, y);
                            if (p != 0.0) {
                                acc += p * q[sn * A + an];
                                any = true;
                            }
                        }
                        best = std::max(best, acc);
                    }
                    if (any) v += gamma * best;
                }
                // Iterating down from above the fixed point keeps an upper bound; guard against rounding.
                v = std::min(q[s * A + a], v + 1e-13 * (1.0 + std::abs(v)));
                change = std::max(change, q[s * A + a] - v);
                next[s * A + a] = v;
            }
        q.swap(next);
        if (change < 1e-14) break;
    }
    return q;
}

namespace {

struct BeliefLayer {
    std::vector<std::vector<double>> belief;
    std::vector<Index> obs;
    std::vector<double> leaf_lo, leaf_hi;
    std::vector<std::size_t> child_offset;           // (node * A + a) -> start in children
    std::vector<std::pair<double, Index>> children;  // (probability, node in next layer)
};

class LeafBounds {
public:
    explicit LeafBounds(const PomdpModel& model) : model_(model), fib_(fast_informed_bound(model)) {
        const Index Y = model.n_obs(), A = model.n_actions();
        const AgentStateMachine memoryless = identity_machine(Y, A);
        const ProductChain chain(model, memoryless);
        const JointXi xi1 = xi_init(model, memoryless);
        std::vector<DecisionRule> rules;
        if (const auto count = deterministic_rule_count(Y, A, 4096)) {
            for (std::size_t code = 0; code < *count; ++code) rules.push_back(DecisionRule::from_code(code, Y, A));
        } else {
            for (Index a = 0; a < A; ++a) rules.push_back(DecisionRule::deterministic(std::vector<Index>(Y, a), A));
        }
        for (const auto& rule : rules) values_.push_back(policy_evaluate(chain, rule, xi1, model.gamma()).value);
    }

    double upper(const std::vector<double>& b) const {
        const Index S = model_.n_states(), A = model_.n_actions();
        double best = -std::numeric_limits<double>::infinity();
        for (Index a = 0; a < A; ++a) {
            double v = 0.0;
            for (Index s = 0; s < S; ++s) v += b[s] * fib_[s * A + a];
            best = std::max(best, v);
        }
        return best;
    }

    double lower(const std::vector<double>& b, Index y) const {
        const Index S = model_.n_states(), Y = model_.n_obs();
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& v : values_) {
            double acc = 0.0;
            for (Index s = 0; s < S; ++s) acc += b[s] * v[s * Y + y];
            best = std::max(best, acc);
        }
        return best;
    }

private:
    const PomdpModel& model_;
    std::vector<double> fib_;
    std::vector<std::vector<double>> values_;
};

std::string belief_key(const std::vector<double>& b, Index y) {
    std::string key;
    auto put = [&](std::uint64_t v) {
        char buf[8];
        std::memcpy(buf, &v, 8);
        key.append(buf, 8);
    };
    put(y);
    for (double p : b) put(static_cast<std::uint64_t>(std::llround(p * 1e12)));
    return key;
}

}  // namespace

HistoryDpResult history_dp(const PomdpModel& model, std::size_t horizon, double tol, std::size_t node_cap) {
    const Index S = model.n_states(), A = model.n_actions(), Y = model.n_obs();
    const double gamma = model.gamma();
    const LeafBounds bounds(model);
    HistoryDpResult out;

    std::vector<BeliefLayer> layers(1);
    std::vector<std::pair<double, Index>> roots;
    auto add_node = [&](BeliefLayer& layer, std::unordered_map<std::string, Index>& index, std::vector<double> b,
                        Index y) -> Index {
        auto [it, inserted] = index.emplace(belief_key(b, y), layer.belief.size());
        if (inserted) {
            if (++out.nodes > node_cap)
                throw CapacityError("belief tree exceeded " + std::to_string(node_cap) + " nodes");
            layer.leaf_lo.push_back(bounds.lower(b, y));
            layer.leaf_hi.push_back(bounds.upper(b));
            layer.obs.push_back(y);
            layer.belief.push_back(std::move(b));
        }
        return it->second;
    };
    {
        std::unordered_map<std::string, Index> index;
        for (Index y = 0; y < Y; ++y) {
            const double py = initial_obs_probability(model, y);
            if (py > 0.0) roots.emplace_back(py, add_node(layers[0], index, initial_belief(model, y), y));
        }
    }

    auto evaluate = [&]() {
        // Layers 0..D-1 are expanded, layer D holds leaves.
        std::vector<double> lo = layers.back().leaf_lo, hi = layers.back().leaf_hi;
        for (std::size_t l = layers.size() - 1; l-- > 0;) {
            const auto& layer = layers[l];
            std::vector<double> nlo(layer.belief.size()), nhi(layer.belief.size());
            for (Index i = 0; i < layer.belief.size(); ++i) {
                double best_lo = -std::numeric_limits<double>::infinity(), best_hi = best_lo;
                for (Index a = 0; a < A; ++a) {
                    double r = 0.0;
                    for (Index s = 0; s < S; ++s) r += layer.belief[i][s] * model.reward(s, a);
                    double clo = 0.0, chi = 0.0;
                    for (std::size_t k = layer.child_offset[i * A + a]; k < layer.child_offset[i * A + a + 1]; ++k) {
                        clo += layer.children[k].first * lo[layer.children[k].second];
                        chi += layer.children[k].first * hi[layer.children[k].second];
                    }
                    best_lo = std::max(best_lo, r + gamma * clo);
                    best_hi = std::max(best_hi, r + gamma * chi);
                }
                nlo[i] = best_lo;
                nhi[i] = best_hi;
            }
            lo.swap(nlo);
            hi.swap(nhi);
        }
        Interval iv{0.0, 0.0};
        for (const auto& [p, i] : roots) {
            iv.lo += p * lo[i];
            iv.hi += p * hi[i];
        }
        iv.hi = std::max(iv.hi, iv.lo);
        return iv;
    };

    out.value = evaluate();
    while (out.value.width() > tol && out.depth < horizon) {
        BeliefLayer& cur = layers.back();
        BeliefLayer next;
        std::unordered_map<std::string, Index> index;
        cur.child_offset.assign(1, 0);
        for (Index i = 0; i < cur.belief.size(); ++i)
            for (Index a = 0; a < A; ++a) {
                for (Index y = 0; y < Y; ++y) {
                    double py = 0.0;
                    for (Index s = 0; s < S; ++s)
                        if (cur.belief[i][s] != 0.0)
                            for (Index sn = 0; sn < S; ++sn) py += cur.belief[i][s] * model.kernel(s, a, sn, y);
                    if (!(py > 0.0)) continue;
                    const Index child = add_node(next, index, belief_update(model, cur.belief[i], a, y), y);
                    cur.children.emplace_back(py, child);
                }
                cur.child_offset.push_back(cur.children.size());
            }
        layers.push_back(std::move(next));
        ++out.depth;
        out.value = evaluate();
    }
    out.converged = out.value.width() <= tol;
    return out;
}

std::size_t ClassReport::violations() const {
    return static_cast<std::size_t>(
        std::count_if(orderings.begin(), orderings.end(), [](const OrderingCheck& c) { return !c.holds; }));
}

ClassReport verify_ordering(const PomdpModel& model, const AgentStateMachine& machine, const OrderingBudgets& budgets) {
    ClassReport rep;
    rep.j_zsd = enumerate_stationary_det(model, machine, budgets.caps.stationary_rules).value;
    const MetaPlan plan =
        search_nonstationary_det(model, machine, budgets.designer_tol, budgets.designer_horizon, budgets.caps);
    rep.j_znd = plan.value;
    rep.j_zns = plan.value;
    rep.j_zss = grid_search_stationary_stoch(model, machine, budgets.grid_resolution, budgets.caps.grid_points).value;
    rep.j_hnd = history_dp(model, budgets.history_horizon, budgets.history_tol, budgets.caps.belief_nodes).value;
    Rng rng(budgets.seed);
    rep.nonstationary_classes = compare_nonstationary_classes(model, machine, budgets.class_horizon,
                                                              budgets.class_samples, rng, budgets.caps);

    auto check = [&](std::string relation, double lhs_lo, double lhs_hi, double rhs_lo, double rhs_hi) {
        OrderingCheck c;
        c.relation = std::move(relation);
        c.lhs = lhs_lo;
        c.rhs = rhs_hi;
        c.slack = budgets.slack;
        c.holds = lhs_lo <= rhs_hi + budgets.slack;
        c.strict_gap = rhs_lo - lhs_hi;
        rep.orderings.push_back(std::move(c));
    };
    check("J_ZSD <= J_ZND", rep.j_zsd, rep.j_zsd, rep.j_znd.lo, rep.j_znd.hi);
    check("J_ZND <= J_HND", rep.j_znd.lo, rep.j_znd.hi, rep.j_hnd.lo, rep.j_hnd.hi);
    check("J_ZSD <= J_ZSS", rep.j_zsd, rep.j_zsd, rep.j_zss, std::numeric_limits<double>::infinity());
    rep.orderings.back().rhs = rep.j_zss;
    rep.orderings.back().holds = rep.j_zsd <= rep.j_zss + budgets.slack;
    check("J_ZSS <= J_ZNS", rep.j_zss, rep.j_zss, rep.j_zns.lo, rep.j_zns.hi);
    check("J_ZSD <= J_HND", rep.j_zsd, rep.j_zsd, rep.j_hnd.lo, rep.j_hnd.hi);
    // Deterministic non-stationary rules dominate stochastic ones at the sampled horizon.
    OrderingCheck det;
    det.relation = "sampled J_ZNS(H) <= J_ZND(H)";
    det.lhs = rep.nonstationary_classes.best_stochastic;
    det.rhs = rep.nonstationary_classes.best_deterministic;
    det.slack = 1e-9;
    det.holds = rep.nonstationary_classes.certified;
    det.strict_gap = rep.nonstationary_classes.min_gap;
    rep.orderings.push_back(det);
    return rep;
}

void write_class_report_csv(std::ostream& out, const ClassReport& report) {
    out << "relation,lhs,rhs,slack,holds,strict_gap\n";
    char buf[256];
    for (const auto& c : report.orderings) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.3g,%s,%.17g\n", c.relation.c_str(), c.lhs, c.rhs, c.slack,
                      c.holds ? "true" : "false", c.strict_gap);
        out << buf;
    }
}

void write_class_report_text(std::ostream& out, const ClassReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "J_ZSD = %.10f\n", report.j_zsd);
    out << buf;
    std::snprintf(buf, sizeof buf, "J_ZSS >= %.10f (%s)\n", report.j_zss, report.j_zss_method.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "J_ZND in [%.10f, %.10f]\n", report.j_znd.lo, report.j_znd.hi);
    out << buf;
    std::snprintf(buf, sizeof buf, "J_ZNS in [%.10f, %.10f] (equal to J_ZND; sampled certificate %s)\n",
                  report.j_zns.lo, report.j_zns.hi, report.nonstationary_classes.certified ? "holds" : "FAILS");
    out << buf;
    std::snprintf(buf, sizeof buf, "J_HND in [%.10f, %.10f] (J_HNS = J_HND)\n", report.j_hnd.lo, report.j_hnd.hi);
    out << buf;
    for (const auto& c : report.orderings) {
        std::snprintf(buf, sizeof buf, "%-28s %s  lhs=%.10f rhs=%.10f slack=%.1e gap=%.10f\n", c.relation.c_str(),
                      c.holds ? "ok  " : "VIOLATED", c.lhs, c.rhs, c.slack, c.strict_gap);
        out << buf;
    }
    out << "violations: " << report.violations() << '\n';
}

}  // namespace agentpomdp
