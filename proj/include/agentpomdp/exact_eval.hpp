#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"
#include "agentpomdp/policy.hpp"
#include "agentpomdp/types.hpp"

namespace agentpomdp {

/// Controlled chain on (S_t, Z_t): P_prod(s', z' | s, z, a) = sum_{y'} P(s', y' | s, a) 1{z' = phi(z, y', a)}.
/// Rows are stored sparsely; product states are indexed s * |Z| + z.
class ProductChain {
public:
    struct Entry {
        Index next;  ///< s' * |Z| + z'
        double prob;
    };

    ProductChain(const PomdpModel& model, const AgentStateMachine& machine, std::size_t cap = 1'000'000);

    Index n_states() const { return n_s_; }
    Index n_agent_states() const { return n_z_; }
    Index n_actions() const { return n_a_; }
    Index size() const { return n_s_ * n_z_; }
    Index index(Index s, Index z) const { return s * n_z_ + z; }

    std::span<const Entry> row(Index s, Index z, Index a) const {
        const Index r = (s * n_z_ + z) * n_a_ + a;
        return {entries_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
    }
    double reward(Index s, Index a) const { return reward_[s * n_a_ + a]; }
    double prob(Index s, Index z, Index a, Index s_next, Index z_next) const;

private:
    Index n_s_, n_z_, n_a_;
    std::vector<Index> offsets_;
    std::vector<Entry> entries_;
    std::vector<double> reward_;
};

/// Joint initial distribution xi_1(s, z) = xi_1(s) sum_{y} nu(y | s) 1{z = phi0(y)}, indexed s * |Z| + z.
using JointXi = std::vector<double>;

JointXi xi_init(const PomdpModel& model, const AgentStateMachine& machine);

struct EvalBundle {
    Index n_states = 0, n_agent_states = 0, n_actions = 0;
    std::vector<double> value;      ///< V(s, z)
    std::vector<double> q;          ///< Q(s, z, a) at ((s * Z) + z) * A + a
    std::vector<double> occupancy;  ///< d(s, z, a), unnormalised (sums to 1 / (1 - gamma))
    double performance = 0.0;       ///< J = sum xi_1 V

    double V(Index s, Index z) const { return value[s * n_agent_states + z]; }
    double Q(Index s, Index z, Index a) const { return q[(s * n_agent_states + z) * n_actions + a]; }
    double d(Index s, Index z, Index a) const { return occupancy[(s * n_agent_states + z) * n_actions + a]; }
};

/// Exact evaluation of a stationary rule on the product chain. Direct LU for up to 2000
/// product states, otherwise iteration until the sup-norm error is below `tol`.
EvalBundle policy_evaluate(const ProductChain& chain, const DecisionRule& rule, const JointXi& xi1, double gamma,
                           double tol = 1e-12);

/// Convenience overload that builds the chain and xi_1.
EvalBundle policy_evaluate(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule);

/// Columns s,z,a,V,Q,d.
void write_eval_csv(std::ostream& out, const EvalBundle& bundle);

/// Value of any policy: midpoint and certified radius.
struct PerformanceResult {
    double value = 0.0;
    double radius = 0.0;
};

/// Stationary policies are solved exactly. Non-stationary policies roll xi forward through
/// their explicit rules and then evaluate the stationary tail rule exactly.
PerformanceResult performance(const PomdpModel& model, const AgentStateMachine& machine, const Policy& policy);

/// xi-rollout truncated at the first T with gamma^T r_max / (1 - gamma) <= horizon_tol.
PerformanceResult rollout_performance(const PomdpModel& model, const AgentStateMachine& machine, const Policy& policy,
                                      double horizon_tol = 1e-9);

/// One step of the xi dynamics and the expected reward under a rule.
JointXi xi_update(const PomdpModel& model, const AgentStateMachine& machine, const JointXi& xi,
                  const DecisionRule& rule);
double xi_reward(const PomdpModel& model, const JointXi& xi, Index n_agent_states, const DecisionRule& rule);

/// Stationary law of the chain (S_t, Y_t, Z_t, A_t) under a stationary rule.
/// Index of (s, y, z, a) is ((s * Y + y) * Z + z) * A + a.
struct StationaryDist {
    Index n_states = 0, n_obs = 0, n_agent_states = 0, n_actions = 0;
    std::vector<double> zeta;
    bool irreducible = false;  ///< reachable set is a single closed class
    bool aperiodic = false;
    Index period = 1;
    bool a1_violated = false;      ///< periodic class; zeta is the Cesaro average
    double residual_l1 = 0.0;      ///< ||zeta P - zeta||_1
    Index class_size = 0;

    Index index(Index s, Index y, Index z, Index a) const {
        return ((s * n_obs + y) * n_agent_states + z) * n_actions + a;
    }
    double at(Index s, Index y, Index z, Index a) const { return zeta[index(s, y, z, a)]; }
    /// zeta(z, a)
    double mass(Index z, Index a) const;
    /// zeta(s | z, a); throws ZeroVisitError when zeta(z, a) = 0.
    std::vector<double> state_given(Index z, Index a) const;
};

StationaryDist stationary_dist(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule,
                               std::size_t cap = 1'000'000);

/// Monte-Carlo estimate of J with a 95% normal half-width.
struct MonteCarloEstimate {
    double estimate = 0.0;
    double half_width = 0.0;
};

MonteCarloEstimate monte_carlo_J(const PomdpModel& model, const AgentStateMachine& machine, const Policy& policy,
                                 std::size_t episodes, std::size_t horizon, Rng& rng);

/// Smallest horizon T with gamma^T * scale / (1 - gamma) <= tol.
std::size_t horizon_for_tail(double gamma, double scale, double tol);

}  // namespace agentpomdp
