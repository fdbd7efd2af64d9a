#include "agentpomdp/policy.hpp"

#include <cmath>
#include <string>

#include "agentpomdp/errors.hpp"

namespace agentpomdp {

DecisionRule DecisionRule::deterministic(std::vector<Index> actions, Index n_actions) {
    if (actions.empty() || n_actions == 0) throw ValidationError("decision rule needs at least one agent state and action");
    std::vector<double> probs(actions.size() * n_actions, 0.0);
    for (Index z = 0; z < actions.size(); ++z) {
        if (actions[z] >= n_actions) throw ValidationError("decision rule action out of range at z=" + std::to_string(z));
        probs[z * n_actions + actions[z]] = 1.0;
    }
    const Index n_z = actions.size();
    return {n_z, n_actions, std::move(probs), std::move(actions)};
}

DecisionRule DecisionRule::stochastic(std::vector<double> probs, Index n_agent_states, Index n_actions) {
    if (n_agent_states == 0 || n_actions == 0) throw ValidationError("decision rule needs at least one agent state and action");
    if (probs.size() != n_agent_states * n_actions) throw ValidationError("stochastic rule has wrong size");
    for (Index z = 0; z < n_agent_states; ++z) {
        double sum = 0.0;
        for (Index a = 0; a < n_actions; ++a) {
            const double p = probs[z * n_actions + a];
            if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("stochastic rule has a negative entry at z=" + std::to_string(z));
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("stochastic rule row z=" + std::to_string(z) + " does not sum to 1");
    }
    return {n_agent_states, n_actions, std::move(probs), std::nullopt};
}

DecisionRule DecisionRule::uniform(Index n_agent_states, Index n_actions) {
    return stochastic(std::vector<double>(n_agent_states * n_actions, 1.0 / static_cast<double>(n_actions)),
                      n_agent_states, n_actions);
}

DecisionRule DecisionRule::from_code(std::size_t code, Index n_agent_states, Index n_actions) {
    std::vector<Index> actions(n_agent_states);
    for (Index z = 0; z < n_agent_states; ++z) {
        actions[z] = code % n_actions;
        code /= n_actions;
    }
    return deterministic(std::move(actions), n_actions);
}

Index DecisionRule::action(Index z) const {
    if (!actions_) throw ContractError("action() called on a stochastic rule");
    return (*actions_)[z];
}

const std::vector<Index>& DecisionRule::actions() const {
    if (!actions_) throw ContractError("actions() called on a stochastic rule");
    return *actions_;
}

std::optional<std::size_t> deterministic_rule_count(Index n_agent_states, Index n_actions, std::size_t cap) {
    std::size_t count = 1;
    for (Index z = 0; z < n_agent_states; ++z) {
        if (count > cap / n_actions) return std::nullopt;
        count *= n_actions;
    }
    if (count > cap) return std::nullopt;
    return count;
}

Policy Policy::stationary(DecisionRule rule) { return Policy({}, std::move(rule)); }

Policy Policy::non_stationary(std::vector<DecisionRule> rules, DecisionRule tail) {
    if (rules.empty()) throw ValidationError("non-stationary policy needs at least one explicit rule");
    for (const auto& r : rules) {
        if (r.n_agent_states() != tail.n_agent_states() || r.n_actions() != tail.n_actions()) {
            throw ValidationError("non-stationary policy rules have inconsistent dimensions");
        }
    }
    return Policy(std::move(rules), std::move(tail));
}

const DecisionRule& Policy::rule_at(std::size_t t) const {
    if (t == 0) throw ContractError("policy time index starts at 1");
    return t <= rules_.size() ? rules_[t - 1] : tail_;
}

}  // namespace agentpomdp
