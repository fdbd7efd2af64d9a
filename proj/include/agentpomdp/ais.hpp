#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"
#include "agentpomdp/policy.hpp"
#include "agentpomdp/types.hpp"

namespace agentpomdp {

enum class IpmKind { TotalVariation, Wasserstein };

/// Integral probability metric on a finite space of `size` points.
class IpmSpec {
public:
    static IpmSpec total_variation(Index size);
    /// `metric[i * n + j]`; checked for nonnegativity, zero diagonal, symmetry and the triangle inequality (1e-12).
    static IpmSpec wasserstein(std::vector<double> metric, Index size);
    /// Wasserstein with d = 1 off the diagonal.
    static IpmSpec discrete_wasserstein(Index size);

    IpmKind kind() const { return kind_; }
    Index size() const { return size_; }
    double metric(Index i, Index j) const { return metric_[i * size_ + j]; }
    const std::vector<double>& metric_table() const { return metric_; }
    /// Largest pairwise distance (1 for TV).
    double diameter() const;

private:
    IpmSpec(IpmKind kind, Index size, std::vector<double> metric)
        : kind_(kind), size_(size), metric_(std::move(metric)) {}
    IpmKind kind_;
    Index size_;
    std::vector<double> metric_;
};

/// TV: half the l1 distance. Wasserstein: optimal transport cost, solved exactly.
double ipm_distance(const IpmSpec& spec, std::span<const double> nu1, std::span<const double> nu2);

/// TV: the span (paired with the half-l1 distance). Wasserstein: Lipschitz constant w.r.t. the metric.
double minkowski_norm(const IpmSpec& spec, std::span<const double> f);

/// Optimal transport cost between two distributions on a finite metric space.
double transport_cost(std::span<const double> metric, std::span<const double> nu1, std::span<const double> nu2);

struct AisModel {
    Index n_agent_states = 0;
    Index n_actions = 0;
    std::vector<double> p_ais;  ///< P_AIS(z' | z, a) at (z * A + a) * Z + z'
    std::vector<double> r_ais;  ///< r_AIS(z, a) at z * A + a
    std::vector<bool> unvisited;  ///< fit_ais: (z, a) cells with zero stationary mass (uniform / zero fill)

    double p(Index z, Index a, Index z_next) const { return p_ais[(z * n_actions + a) * n_agent_states + z_next]; }
    double r(Index z, Index a) const { return r_ais[z * n_actions + a]; }
    std::span<const double> row(Index z, Index a) const {
        return {p_ais.data() + (z * n_actions + a) * n_agent_states, n_agent_states};
    }
    /// Rows normalised within 1e-12, sizes consistent.
    void validate() const;
    bool any_unvisited() const;
};

struct InfoStateReport {
    double p1_residual = 0.0;   ///< spread of E[R | H, A] across histories sharing (z, a)
    double p2_residual = 0.0;   ///< TV spread of Pr(Z' | H, A)
    double p2b_residual = 0.0;  ///< TV spread of Pr(Y' | H, A)
    std::size_t histories = 0;  ///< distinct (agent state, belief) nodes visited
    bool is_info_state = false;
};

InfoStateReport check_information_state(const PomdpModel& model, const AgentStateMachine& machine, std::size_t horizon,
                                        double tol = 1e-9, std::size_t history_cap = 1'000'000);

struct AisLossReport {
    std::vector<double> eps_t;    ///< t = 1..T
    std::vector<double> delta_t;  ///< t = 1..T
    double eps_tail = 0.0;        ///< used for every t > T
    double delta_tail = 0.0;
    double eps = 0.0;             ///< (1 - gamma) sum_t gamma^{t-1} eps_t, tail included
    double delta = 0.0;
    double gamma = 0.0;
    double bound = 0.0;           ///< filled by compute_ais_losses with rho_F(V_AIS) of the optimal AIS values
};

AisLossReport compute_ais_losses(const PomdpModel& model, const AgentStateMachine& machine, const AisModel& ais,
                                 const IpmSpec& spec, std::size_t horizon, std::size_t history_cap = 1'000'000);

struct AisSolution {
    std::vector<double> q;  ///< Q_AIS(z, a) at z * A + a
    std::vector<double> v;  ///< V_AIS(z)
    DecisionRule policy = DecisionRule::uniform(1, 1);
    std::size_t iterations = 0;
};

/// Value iteration on the AIS until the fixed-point residual is below tol; greedy ties pick the lowest action.
AisSolution solve_ais_dp(const AisModel& ais, double gamma, double tol = 1e-10);

/// (2 / (1 - gamma)) (eps + gamma delta rho_F(V_AIS)).
double suboptimality_bound(const AisLossReport& report, const IpmSpec& spec, std::span<const double> v_ais,
                           double gamma);

/// Conditional-expectation AIS under the stationary law of the behaviour rule mu.
AisModel fit_ais(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& mu,
                 std::size_t cap = 1'000'000);

/// Columns t,eps_t,delta_t followed by tail and aggregate rows.
void write_ais_report_csv(std::ostream& out, const AisLossReport& report);

}  // namespace agentpomdp
