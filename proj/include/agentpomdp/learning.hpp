#pragma once

#include <iosfwd>
#include <vector>

#include "agentpomdp/ais.hpp"
#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"
#include "agentpomdp/policy.hpp"

namespace agentpomdp {

struct QTable {
    Index n_agent_states = 0;
    Index n_actions = 0;
    std::vector<double> q;  ///< z * A + a

    static QTable zeros(Index n_agent_states, Index n_actions);
    double& at(Index z, Index a) { return q[z * n_actions + a]; }
    double at(Index z, Index a) const { return q[z * n_actions + a]; }
    double max_at(Index z) const;
};

/// ||a - b||_inf
double sup_distance(const QTable& a, const QTable& b);

struct LearningConfig {
    std::size_t steps = 1'000'000;
    /// alpha(z, a) = 1 / (1 + visits(z, a))^omega
    double lr_exponent = 0.85;
    std::uint64_t seed = 0;
    /// Steps between snapshots; 0 keeps only the final table.
    std::size_t eval_stride = 0;
};

struct Snapshot {
    std::size_t step;
    QTable q;
};

struct LearningRun {
    std::vector<Snapshot> snapshots;  ///< last entry is the final table
    std::vector<std::size_t> visits;  ///< per (z, a)

    const QTable& final_q() const { return snapshots.back().q; }
};

/// Agent-state Q-learning along one continuing trajectory driven by the behaviour rule mu.
LearningRun asql_run(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& mu,
                     const LearningConfig& cfg);

/// On-policy TD(0) (SARSA-style) evaluation of pi along one continuing trajectory.
LearningRun asac_td_run(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& pi,
                        const LearningConfig& cfg);

struct FixedPoint {
    QTable q;
    AisModel ais;               ///< (P^mu, r^mu) built from the stationary conditionals
    double residual = 0.0;      ///< sup-norm fixed-point residual of q
    bool a1_violated = false;   ///< behaviour chain periodic; built from the Cesaro average
};

/// Q = r^mu + gamma P^mu max Q. Throws ZeroVisitError for an unvisited (z, a).
FixedPoint asql_fixed_point(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& mu,
                            double tol = 1e-12);

/// Q = r^pi + gamma sum_{z'} P^pi(z' | z, a) sum_{a'} pi(a' | z') Q(z', a'), by a linear solve.
FixedPoint asac_fixed_point(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& pi,
                            double tol = 1e-12);

/// Greedy rule; ties go to the lowest action.
DecisionRule asql_policy(const QTable& q);

/// sum_z xi_1(z) sum_a pi(a | z) Q(z, a).
double asac_value(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& pi, const QTable& q);

/// (eps + gamma delta rho_F(V)) / (1 - gamma) with V(z) = sum_a pi(a | z) Q(z, a).
double asac_evaluation_bound(const AisLossReport& report, const IpmSpec& spec, const DecisionRule& pi, const QTable& q,
                             double gamma);

/// Columns step,z,a,q.
void write_snapshots_csv(std::ostream& out, const LearningRun& run);

}  // namespace agentpomdp
