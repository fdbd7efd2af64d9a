#pragma once

#include <iosfwd>
#include <vector>

#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"
#include "agentpomdp/policy.hpp"

namespace agentpomdp {

/// Softmax logits theta(z, a) at z * A + a.
struct SoftmaxParams {
    Index n_agent_states = 0;
    Index n_actions = 0;
    std::vector<double> theta;

    static SoftmaxParams zeros(Index n_agent_states, Index n_actions);
    double& at(Index z, Index a) { return theta[z * n_actions + a]; }
    double at(Index z, Index a) const { return theta[z * n_actions + a]; }
    DecisionRule rule() const;
};

/// dJ/dtheta laid out like SoftmaxParams::theta.
using Gradient = std::vector<double>;

/// sum_{s,z,a} d(s,z,a) Q(s,z,a) grad log pi(a|z), with d and Q from the product chain.
Gradient exact_policy_gradient(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params);

/// Central differences of the exact performance.
Gradient finite_diff_gradient(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params,
                              double h = 1e-5);

struct GradientReport {
    Gradient analytic;
    Gradient numeric;
    double max_rel_err = 0.0;  ///< ||analytic - numeric||_inf / ||numeric||_inf (absolute when numeric is ~0)
};

GradientReport gradient_report(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params,
                               double h = 1e-5);

struct AscentOptions {
    double step = 0.1;
    std::size_t iters = 1000;
    double grad_tol = 1e-6;
};

struct AscentResult {
    SoftmaxParams params;
    double value = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> accepted_values;  ///< J after every accepted step, starting with J(params0)
};

/// Gradient ascent; a step that lowers J is halved and retried, an accepted step doubles the next one.
AscentResult gradient_ascent(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params0,
                             const AscentOptions& options = {});

struct SweepPoint {
    double p;
    double value;
};

/// J of the blind rule "action 1 w.p. p" for each p, from (I - gamma P_p)^{-1} r_p
/// with (P_p, r_p) = (1 - p)(P_0, r_0) + p (P_1, r_1). Requires |A| = 2.
std::vector<SweepPoint> sweep_1param(const PomdpModel& model, const std::vector<double>& grid);

/// Grid {0, 1/n, ..., 1}.
std::vector<double> unit_grid(std::size_t n);

/// Columns p,J.
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve);

}  // namespace agentpomdp
