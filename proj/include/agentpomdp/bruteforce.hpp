#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agentpomdp/designer.hpp"
#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"
#include "agentpomdp/policy.hpp"
#include "agentpomdp/types.hpp"

namespace agentpomdp {

struct StationaryDetResult {
    DecisionRule best = DecisionRule::uniform(1, 1);
    double value = 0.0;            ///< J_ZSD
    std::vector<double> values;    ///< J per rule code
};

/// Exact J of every deterministic stationary rule; ties keep the lowest code.
StationaryDetResult enumerate_stationary_det(const PomdpModel& model, const AgentStateMachine& machine,
                                             std::size_t cap = 1'000'000);

/// Certified interval for J_ZND from the designer search.
MetaPlan search_nonstationary_det(const PomdpModel& model, const AgentStateMachine& machine, double tol,
                                  std::optional<std::size_t> horizon = std::nullopt, const Caps& caps = {});

struct GridResult {
    DecisionRule best = DecisionRule::uniform(1, 1);
    double value = 0.0;         ///< grid maximum (a lower bound on J_ZSS)
    std::size_t divisions = 0;  ///< probabilities are multiples of 1 / divisions
    std::size_t points = 0;
    std::string method = "grid";
};

/// Exact evaluation of every stochastic rule whose rows lie on the simplex grid with step `resolution`.
/// Requires |Z| (|A| - 1) <= 6.
GridResult grid_search_stationary_stoch(const PomdpModel& model, const AgentStateMachine& machine, double resolution,
                                        std::size_t cap = 2'000'000);

struct HistoryDpResult {
    Interval value;          ///< certified interval for J_HND
    std::size_t depth = 0;   ///< decision steps expanded
    std::size_t nodes = 0;   ///< distinct (belief, last observation) nodes
    bool converged = false;  ///< width <= tol
};

/// Belief-tree backward induction with iterative deepening up to `horizon` steps, stopping once the
/// interval is narrower than `tol`. Leaves are bracketed by the fast informed bound (above) and the
/// best memoryless observation-based rule (below).
HistoryDpResult history_dp(const PomdpModel& model, std::size_t horizon, double tol, std::size_t node_cap = 1'000'000);

/// Fast-informed-bound action values Q(s, a) at s * A + a (an upper bound on the POMDP optimum).
std::vector<double> fast_informed_bound(const PomdpModel& model);

struct OrderingBudgets {
    double designer_tol = 1e-6;
    std::optional<std::size_t> designer_horizon;  ///< explicit horizon for long or generic models
    double grid_resolution = 0.05;
    std::size_t history_horizon = 200;
    double history_tol = 1e-6;
    std::size_t class_horizon = 3;
    std::size_t class_samples = 1000;
    double slack = 1e-9;
    std::uint64_t seed = 0;
    Caps caps;
};

struct OrderingCheck {
    std::string relation;  ///< e.g. "J_ZSD <= J_ZND"
    double lhs = 0.0;      ///< lower end of the left-hand quantity
    double rhs = 0.0;      ///< upper end of the right-hand quantity
    double slack = 0.0;
    bool holds = true;     ///< lhs <= rhs + slack
    double strict_gap = 0.0;  ///< certified lower end of rhs minus upper end of lhs (positive = strict)
};

struct ClassReport {
    double j_zsd = 0.0;
    Interval j_znd;
    double j_zss = 0.0;
    std::string j_zss_method = "grid";
    Interval j_zns;            ///< equals j_znd by the deterministic-suffices property
    Interval j_hnd;
    ClassComparison nonstationary_classes;
    std::vector<OrderingCheck> orderings;

    std::size_t violations() const;
};

ClassReport verify_ordering(const PomdpModel& model, const AgentStateMachine& machine,
                            const OrderingBudgets& budgets = {});

/// Columns relation,lhs,rhs,slack,holds,strict_gap.
void write_class_report_csv(std::ostream& out, const ClassReport& report);
void write_class_report_text(std::ostream& out, const ClassReport& report);

}  // namespace agentpomdp
