#pragma once

#include <optional>
#include <vector>

#include "agentpomdp/exact_eval.hpp"
#include "agentpomdp/policy.hpp"
#include "agentpomdp/types.hpp"

namespace agentpomdp {

enum class RuleClass { Deterministic, Stochastic };

struct DesignerOptions {
    /// Width of the certified value interval.
    double tol = 1e-6;
    RuleClass rule_class = RuleClass::Deterministic;
    /// Explicit search horizon; derived from `tol` when unset.
    std::optional<std::size_t> horizon;
    bool memoize = true;
    bool prune = true;
    /// Random stochastic plans drawn for the vertex certificate (class Stochastic only).
    std::size_t stochastic_samples = 1000;
    std::uint64_t seed = 0;
    Caps caps;
};

/// Open-loop sequence of decision rules found by searching the deterministic xi dynamics.
/// The search maximises T-step reward plus the fully observed MDP value of xi_{T+1}.
struct MetaPlan {
    std::vector<DecisionRule> rules;       ///< pi*_1 .. pi*_T
    DecisionRule tail = DecisionRule::uniform(1, 1);  ///< best stationary deterministic rule from xi*_{T+1}
    std::vector<JointXi> xi_trajectory;    ///< xi*_1 .. xi*_{T+1}
    Interval value;                        ///< lo = exact value of this plan, hi = certified upper bound
    double horizon_value = 0.0;            ///< discounted reward of the first T steps of the plan
    std::size_t horizon = 0;
    RuleClass rule_class = RuleClass::Deterministic;
    std::size_t nodes_expanded = 0;
    /// Stochastic class: no sampled stochastic plan beat the deterministic search objective by more than tol.
    bool vertex_certified = true;
    double best_sampled_stochastic = 0.0;

    Policy policy() const { return Policy::non_stationary(rules, tail); }
};

MetaPlan plan_designer(const PomdpModel& model, const AgentStateMachine& machine, const DesignerOptions& options = {});

/// Discounted reward of the first rules.size() steps of a rule sequence.
double sequence_value(const PomdpModel& model, const AgentStateMachine& machine, const std::vector<DecisionRule>& rules);

struct ClassComparison {
    double best_deterministic = 0.0;
    double best_stochastic = 0.0;
    double min_gap = 0.0;   ///< over samples of (best_deterministic - sample value)
    double mean_gap = 0.0;
    double max_gap = 0.0;
    std::size_t samples = 0;
    bool certified = false;  ///< every sample <= best_deterministic + 1e-9
};

/// Finite-horizon comparison of the best deterministic rule sequence against random stochastic ones.
ClassComparison compare_nonstationary_classes(const PomdpModel& model, const AgentStateMachine& machine,
                                              std::size_t horizon, std::size_t samples, Rng& rng,
                                              const Caps& caps = {});

/// Random stochastic rule; rows drawn from a symmetric Dirichlet(concentration).
DecisionRule random_stochastic_rule(Rng& rng, Index n_agent_states, Index n_actions, double concentration = 1.0);

/// Columns t,s,z,xi.
void write_xi_trajectory_csv(std::ostream& out, const MetaPlan& plan, Index n_agent_states);

}  // namespace agentpomdp
