#pragma once

#include <optional>
#include <span>
#include <vector>

#include "agentpomdp/types.hpp"

namespace agentpomdp {

/// A map Z -> A or Z -> Delta(A). Probabilities are always available;
/// deterministic rules additionally expose their action table.
class DecisionRule {
public:
    static DecisionRule deterministic(std::vector<Index> actions, Index n_actions);
    /// `probs[z * A + a]`; rows must sum to 1 within 1e-12.
    static DecisionRule stochastic(std::vector<double> probs, Index n_agent_states, Index n_actions);
    static DecisionRule uniform(Index n_agent_states, Index n_actions);

    /// The rule with index `code` in the mixed-radix enumeration of A^Z (z = 0 is least significant).
    static DecisionRule from_code(std::size_t code, Index n_agent_states, Index n_actions);

    bool is_deterministic() const { return actions_.has_value(); }
    Index n_agent_states() const { return n_z_; }
    Index n_actions() const { return n_a_; }

    double prob(Index z, Index a) const { return probs_[z * n_a_ + a]; }
    std::span<const double> row(Index z) const { return {probs_.data() + z * n_a_, n_a_}; }
    const std::vector<double>& probs() const { return probs_; }

    /// Only valid for deterministic rules.
    Index action(Index z) const;
    const std::vector<Index>& actions() const;

    bool operator==(const DecisionRule& other) const = default;

private:
    DecisionRule(Index n_z, Index n_a, std::vector<double> probs, std::optional<std::vector<Index>> actions)
        : n_z_(n_z), n_a_(n_a), probs_(std::move(probs)), actions_(std::move(actions)) {}

    Index n_z_;
    Index n_a_;
    std::vector<double> probs_;
    std::optional<std::vector<Index>> actions_;
};

/// Number of deterministic rules |A|^|Z|, or nullopt when it exceeds `cap`.
std::optional<std::size_t> deterministic_rule_count(Index n_agent_states, Index n_actions, std::size_t cap);

/// Stationary rule, or a finite list of rules followed by a tail rule used for all later steps.
class Policy {
public:
    static Policy stationary(DecisionRule rule);
    static Policy non_stationary(std::vector<DecisionRule> rules, DecisionRule tail);

    bool is_stationary() const { return rules_.empty(); }
    /// Rule used at time t >= 1.
    const DecisionRule& rule_at(std::size_t t) const;
    const std::vector<DecisionRule>& rules() const { return rules_; }
    const DecisionRule& tail() const { return tail_; }
    Index n_agent_states() const { return tail_.n_agent_states(); }
    Index n_actions() const { return tail_.n_actions(); }

    bool operator==(const Policy& other) const = default;

private:
    Policy(std::vector<DecisionRule> rules, DecisionRule tail) : rules_(std::move(rules)), tail_(std::move(tail)) {}

    std::vector<DecisionRule> rules_;
    DecisionRule tail_;
};

}  // namespace agentpomdp
