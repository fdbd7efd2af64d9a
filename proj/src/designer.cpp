#include "agentpomdp/designer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <unordered_map>

#include "agentpomdp/errors.hpp"

namespace agentpomdp {

namespace {

constexpr double kQuantum = 1e-12;
constexpr double kPruneSlack = 1e-12;

/// Optimal values of the fully observed MDP with terminal values `leaf`: v[k][s] with k steps to go.
std::vector<std::vector<double>> mdp_horizon_values(const PomdpModel& model, std::size_t horizon,
                                                    const std::vector<double>& leaf) {
    const Index S = model.n_states(), A = model.n_actions();
    std::vector<double> trans(S * A * S, 0.0);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            for (Index sn = 0; sn < S; ++sn) trans[(s * A + a) * S + sn] = model.state_transition(s, a, sn);
    std::vector<std::vector<double>> v(horizon + 1, leaf);
    for (std::size_t k = 1; k <= horizon; ++k)
        for (Index s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (Index a = 0; a < A; ++a) {
                double q = model.reward(s, a);
                for (Index sn = 0; sn < S; ++sn) q += model.gamma() * trans[(s * A + a) * S + sn] * v[k - 1][sn];
                best = std::max(best, q);
            }
            v[k][s] = best;
        }
    return v;
}

/// Upper bound on the optimal values of the fully observed MDP: value iteration started above
/// the fixed point stays above it.
std::vector<double> mdp_value_upper(const PomdpModel& model) {
    const Index S = model.n_states(), A = model.n_actions();
    const double gamma = model.gamma();
    std::vector<double> v(S, std::max(model.reward_max(), 0.0) / (1.0 - gamma) + 1e-9);
    for (int it = 0; it < 100'000; ++it) {
        double change = 0.0;
        for (Index s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (Index a = 0; a < A; ++a) {
                double q = model.reward(s, a);
                for (Index sn = 0; sn < S; ++sn) q += gamma * model.state_transition(s, a, sn) * v[sn];
                best = std::max(best, q);
            }
            // Rounding must not take the iterate below the fixed point.
            best = std::min(v[s], best + 1e-13 * (1.0 + std::abs(best)));
            change = std::max(change, v[s] - best);
            v[s] = best;
        }
        if (change < 1e-14) break;
    }
    return v;
}

struct MemoEntry {
    double value;
    std::vector<Index> actions;  // empty at the leaves
};

/// Exhaustive search over deterministic rule sequences on the deterministic xi dynamics.
class TreeSearch {
public:
    /// `leaf[s]` is the value credited for mass on state s after the last step.
    TreeSearch(const PomdpModel& model, const AgentStateMachine& machine, std::size_t horizon,
               const std::vector<double>& leaf, bool memoize, bool prune, std::size_t node_cap)
        : model_(model), machine_(machine), memoize_(memoize), prune_(prune), node_cap_(node_cap),
          leaf_(leaf), bound_(mdp_horizon_values(model, horizon, leaf)) {}

    double solve(const JointXi& xi, std::size_t remaining) {
        if (remaining == 0) {
            double v = 0.0;
            for (Index j = 0; j < xi.size(); ++j) v += xi[j] * leaf_[j / machine_.n_agent_states()];
            return v;
        }
        const std::string key = make_key(xi, remaining);
        if (memoize_) {
            if (auto it = memo_.find(key); it != memo_.end()) return it->second.value;
        }
        if (++nodes_ > node_cap_)
            throw CapacityError("designer search exceeded " + std::to_string(node_cap_) +
                                " nodes; use a smaller |Z| or |A|, or a looser tolerance");

        const Index S = model_.n_states(), Z = machine_.n_agent_states(), A = model_.n_actions();
        const Index Y = model_.n_obs();
        const double gamma = model_.gamma();

        // Agent states carrying mass; actions elsewhere do not affect the future.
        std::vector<Index> support;
        for (Index z = 0; z < Z; ++z) {
            double mass = 0.0;
            for (Index s = 0; s < S; ++s) mass += xi[s * Z + z];
            if (mass > 0.0) support.push_back(z);
        }
        // Per (support agent state, action): reward and next-xi contribution.
        const Index n_sup = support.size();
        std::vector<double> part_reward(n_sup * A, 0.0);
        std::vector<JointXi> part_next(n_sup * A, JointXi(S * Z, 0.0));
        for (Index i = 0; i < n_sup; ++i) {
            const Index z = support[i];
            for (Index a = 0; a < A; ++a) {
                auto& next = part_next[i * A + a];
                double r = 0.0;
                for (Index s = 0; s < S; ++s) {
                    const double w = xi[s * Z + z];
                    if (w == 0.0) continue;
                    r += w * model_.reward(s, a);
                    const auto row = model_.kernel_row(s, a);
                    for (Index sn = 0; sn < S; ++sn)
                        for (Index y = 0; y < Y; ++y) {
                            const double p = row[sn * Y + y];
                            if (p != 0.0) next[sn * Z + machine_.update_unchecked(z, y, a)] += w * p;
                        }
                }
                part_reward[i * A + a] = r;
            }
        }

        std::size_t n_children = 1;
        for (Index i = 0; i < n_sup; ++i) n_children *= A;
        struct Child {
            std::size_t code;
            double reward;
            double upper;
            JointXi next;
        };
        std::vector<Child> children;
        children.reserve(n_children);
        const auto& v_next = bound_[remaining - 1];
        for (std::size_t code = 0; code < n_children; ++code) {
            Child c{code, 0.0, 0.0, JointXi(S * Z, 0.0)};
            std::size_t rest = code;
            for (Index i = 0; i < n_sup; ++i) {
                const Index a = rest % A;
                rest /= A;
                c.reward += part_reward[i * A + a];
                const auto& p = part_next[i * A + a];
                for (Index j = 0; j < S * Z; ++j) c.next[j] += p[j];
            }
            double ub = 0.0;
            for (Index s = 0; s < S; ++s)
                for (Index z = 0; z < Z; ++z) ub += c.next[s * Z + z] * v_next[s];
            c.upper = c.reward + gamma * ub;
            children.push_back(std::move(c));
        }
        std::stable_sort(children.begin(), children.end(),
                         [](const Child& a, const Child& b) { return a.upper > b.upper; });

        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_code = children.front().code;
        for (const auto& c : children) {
            if (prune_ && c.upper <= best + kPruneSlack) break;
            const double v = c.reward + gamma * solve(c.next, remaining - 1);
            if (v > best) {
                best = v;
                best_code = c.code;
            }
        }

        std::vector<Index> actions(Z, 0);
        std::size_t rest = best_code;
        for (Index i = 0; i < n_sup; ++i) {
            actions[support[i]] = rest % A;
            rest /= A;
        }
        memo_[key] = MemoEntry{best, std::move(actions)};
        return best;
    }

    /// Rule chosen at a node that has already been solved.
    DecisionRule best_rule(const JointXi& xi, std::size_t remaining) {
        auto it = memo_.find(make_key(xi, remaining));
        if (it == memo_.end()) {
            solve(xi, remaining);
            it = memo_.find(make_key(xi, remaining));
        }
        return DecisionRule::deterministic(it->second.actions, model_.n_actions());
    }

    std::size_t nodes() const { return nodes_; }

private:
    static std::string make_key(const JointXi& xi, std::size_t remaining) {
        std::string key;
        key.reserve(16 * xi.size() / 4 + 8);
        auto put = [&](std::uint64_t v) {
            char buf[8];
            std::memcpy(buf, &v, 8);
            key.append(buf, 8);
        };
        put(remaining);
        for (Index j = 0; j < xi.size(); ++j) {
            const auto q = static_cast<std::int64_t>(std::llround(xi[j] / kQuantum));
            if (q == 0) continue;
            put(j);
            put(static_cast<std::uint64_t>(q));
        }
        return key;
    }

    const PomdpModel& model_;
    const AgentStateMachine& machine_;
    bool memoize_;
    bool prune_;
    std::size_t node_cap_;
    std::vector<double> leaf_;
    std::vector<std::vector<double>> bound_;
    std::unordered_map<std::string, MemoEntry> memo_;
    std::size_t nodes_ = 0;
};

void check_rule_cap(const AgentStateMachine& machine, Index n_actions, const Caps& caps) {
    if (!deterministic_rule_count(machine.n_agent_states(), n_actions, caps.designer_rules))
        throw CapacityError("|A|^|Z| deterministic rules exceed the designer cap of " +
                            std::to_string(caps.designer_rules) + "; use a smaller |Z| or |A|");
}

struct SearchResult {
    double value;
    std::vector<DecisionRule> rules;
    std::vector<JointXi> xi;
    std::size_t nodes;
};

SearchResult search(const PomdpModel& model, const AgentStateMachine& machine, std::size_t horizon,
                    const std::vector<double>& leaf, bool memoize, bool prune, const Caps& caps) {
    TreeSearch tree(model, machine, horizon, leaf, memoize, prune, caps.search_nodes);
    SearchResult out;
    JointXi xi = xi_init(model, machine);
    out.value = tree.solve(xi, horizon);
    out.xi.push_back(xi);
    for (std::size_t t = 0; t < horizon; ++t) {
        DecisionRule rule = tree.best_rule(xi, horizon - t);
        xi = xi_update(model, machine, xi, rule);
        out.rules.push_back(std::move(rule));
        out.xi.push_back(xi);
    }
    out.nodes = tree.nodes();
    return out;
}

std::vector<DecisionRule> random_sequence(Rng& rng, std::size_t length, Index Z, Index A, double concentration) {
    std::vector<DecisionRule> rules;
    rules.reserve(length);
    for (std::size_t t = 0; t < length; ++t) rules.push_back(random_stochastic_rule(rng, Z, A, concentration));
    return rules;
}

/// Alternates flat and vertex-heavy Dirichlet draws.
double sample_concentration(std::size_t i) { return i % 2 == 0 ? 1.0 : 0.2; }

}  // namespace

DecisionRule random_stochastic_rule(Rng& rng, Index n_agent_states, Index n_actions, double concentration) {
    std::gamma_distribution<double> draw(concentration, 1.0);
    std::vector<double> probs(n_agent_states * n_actions);
    for (Index z = 0; z < n_agent_states; ++z) {
        double total = 0.0;
        for (Index a = 0; a < n_actions; ++a) total += probs[z * n_actions + a] = draw(rng);
        if (total <= 0.0) {
            for (Index a = 0; a < n_actions; ++a) probs[z * n_actions + a] = a == 0 ? 1.0 : 0.0;
            continue;
        }
        double acc = 0.0;
        for (Index a = 0; a + 1 < n_actions; ++a) acc += probs[z * n_actions + a] /= total;
        probs[z * n_actions + n_actions - 1] = std::max(0.0, 1.0 - acc);
    }
    return DecisionRule::stochastic(std::move(probs), n_agent_states, n_actions);
}

double sequence_value(const PomdpModel& model, const AgentStateMachine& machine, const std::vector<DecisionRule>& rules) {
    JointXi xi = xi_init(model, machine);
    double value = 0.0, discount = 1.0;
    for (const auto& rule : rules) {
        value += discount * xi_reward(model, xi, machine.n_agent_states(), rule);
        xi = xi_update(model, machine, xi, rule);
        discount *= model.gamma();
    }
    return value;
}

MetaPlan plan_designer(const PomdpModel& model, const AgentStateMachine& machine, const DesignerOptions& options) {
    machine.check_compatible(model);
    if (!(options.tol > 0.0)) throw ContractError("designer tolerance must be positive");
    check_rule_cap(machine, model.n_actions(), options.caps);
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    const double gamma = model.gamma();

    MetaPlan plan;
    plan.rule_class = options.rule_class;
    plan.horizon = options.horizon ? *options.horizon
                                   : horizon_for_tail(gamma, model.reward_max() - model.reward_min(), options.tol);

    const std::vector<double> leaf = mdp_value_upper(model);
    auto found = search(model, machine, plan.horizon, leaf, options.memoize, options.prune, options.caps);
    plan.rules = std::move(found.rules);
    plan.xi_trajectory = std::move(found.xi);
    plan.nodes_expanded = found.nodes;
    plan.horizon_value = sequence_value(model, machine, plan.rules);

    // Best stationary deterministic continuation from xi_{T+1}.
    const ProductChain chain(model, machine, options.caps.product_states);
    const std::size_t n_rules = *deterministic_rule_count(Z, A, options.caps.designer_rules);
    double tail_value = -std::numeric_limits<double>::infinity();
    std::size_t tail_code = 0;
    for (std::size_t code = 0; code < n_rules; ++code) {
        const double v = policy_evaluate(chain, DecisionRule::from_code(code, Z, A), plan.xi_trajectory.back(), gamma)
                             .performance;
        if (v > tail_value) {
            tail_value = v;
            tail_code = code;
        }
    }
    plan.tail = DecisionRule::from_code(tail_code, Z, A);

    // hi: no policy beats the best T-step plan followed by full state observation.
    const double discount = std::pow(gamma, static_cast<double>(plan.horizon));
    plan.value.lo = plan.horizon_value + discount * tail_value;
    plan.value.hi = std::max(found.value, plan.value.lo);

    if (options.rule_class == RuleClass::Stochastic) {
        Rng rng(options.seed);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < options.stochastic_samples; ++i) {
            const auto rules = random_sequence(rng, plan.horizon, Z, A, sample_concentration(i));
            JointXi xi = xi_init(model, machine);
            double v = 0.0, w = 1.0;
            for (const auto& rule : rules) {
                v += w * xi_reward(model, xi, Z, rule);
                xi = xi_update(model, machine, xi, rule);
                w *= gamma;
            }
            for (Index j = 0; j < xi.size(); ++j) v += w * xi[j] * leaf[j / Z];
            best = std::max(best, v);
        }
        plan.best_sampled_stochastic = best;
        plan.vertex_certified = options.stochastic_samples == 0 || best <= found.value + options.tol;
    }
    return plan;
}

ClassComparison compare_nonstationary_classes(const PomdpModel& model, const AgentStateMachine& machine,
                                              std::size_t horizon, std::size_t samples, Rng& rng, const Caps& caps) {
    machine.check_compatible(model);
    check_rule_cap(machine, model.n_actions(), caps);
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    ClassComparison out;
    out.best_deterministic = search(model, machine, horizon, std::vector<double>(model.n_states(), 0.0), true, true, caps).value;
    out.samples = samples;
    out.best_stochastic = -std::numeric_limits<double>::infinity();
    out.min_gap = std::numeric_limits<double>::infinity();
    out.max_gap = -std::numeric_limits<double>::infinity();
    double gap_sum = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double v = sequence_value(model, machine, random_sequence(rng, horizon, Z, A, sample_concentration(i)));
        out.best_stochastic = std::max(out.best_stochastic, v);
        const double gap = out.best_deterministic - v;
        out.min_gap = std::min(out.min_gap, gap);
        out.max_gap = std::max(out.max_gap, gap);
        gap_sum += gap;
    }
    if (samples == 0) {
        out.best_stochastic = out.best_deterministic;
        out.min_gap = out.max_gap = 0.0;
    }
    out.mean_gap = samples == 0 ? 0.0 : gap_sum / static_cast<double>(samples);
    out.certified = out.best_stochastic <= out.best_deterministic + 1e-9;
    return out;
}

void write_xi_trajectory_csv(std::ostream& out, const MetaPlan& plan, Index n_agent_states) {
    out << "t,s,z,xi\n";
    char buf[64];
    for (std::size_t t = 0; t < plan.xi_trajectory.size(); ++t) {
        const auto& xi = plan.xi_trajectory[t];
        for (Index j = 0; j < xi.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", xi[j]);
            out << (t + 1) << ',' << j / n_agent_states << ',' << j % n_agent_states << ',' << buf << '\n';
        }
    }
}

}  // namespace agentpomdp
