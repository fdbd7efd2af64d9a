#include "agentpomdp/learning.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"

namespace agentpomdp {

QTable QTable::zeros(Index n_agent_states, Index n_actions) {
    return {n_agent_states, n_actions, std::vector<double>(n_agent_states * n_actions, 0.0)};
}

double QTable::max_at(Index z) const {
    double best = -std::numeric_limits<double>::infinity();
    for (Index a = 0; a < n_actions; ++a) best = std::max(best, at(z, a));
    return best;
}

double sup_distance(const QTable& a, const QTable& b) {
    if (a.q.size() != b.q.size()) throw ContractError("Q tables have different shapes");
    double d = 0.0;
    for (Index i = 0; i < a.q.size(); ++i) d = std::max(d, std::abs(a.q[i] - b.q[i]));
    return d;
}

namespace {

void check_rule(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule) {
    machine.check_compatible(model);
    if (rule.n_agent_states() != machine.n_agent_states() || rule.n_actions() != model.n_actions())
        throw ContractError("decision rule does not match the machine and model");
}

enum class Target { Max, OnPolicy };

LearningRun run_td(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule,
                   const LearningConfig& cfg, Target target) {
    check_rule(model, machine, rule);
    if (!(cfg.lr_exponent > 0.5 && cfg.lr_exponent <= 1.0)) throw ContractError("learning-rate exponent must lie in (0.5, 1]");
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    const double gamma = model.gamma();
    Rng rng(cfg.seed);
    LearningRun run;
    run.visits.assign(Z * A, 0);
    QTable q = QTable::zeros(Z, A);

    auto [s, y] = sample_initial(model, rng);
    Index z = machine.init_unchecked(y);
    Index a = sample_categorical(rule.row(z), rng);
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        const StepOutcome out = sample_step(model, s, a, rng);
        const Index zn = machine.update_unchecked(z, out.next_obs, a);
        const Index an = sample_categorical(rule.row(zn), rng);
        const double next_value = target == Target::Max ? q.max_at(zn) : q.at(zn, an);
        auto& n = run.visits[z * A + a];
        const double alpha = 1.0 / std::pow(1.0 + static_cast<double>(n), cfg.lr_exponent);
        ++n;
        q.at(z, a) += alpha * (out.reward + gamma * next_value - q.at(z, a));
        s = out.next_state;
        z = zn;
        a = an;
        if (cfg.eval_stride > 0 && t % cfg.eval_stride == 0 && t != cfg.steps) run.snapshots.push_back({t, q});
    }
    run.snapshots.push_back({cfg.steps, std::move(q)});
    return run;
}

AisModel behaviour_model(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule,
                         bool& a1_violated) {
    check_rule(model, machine, rule);
    a1_violated = stationary_dist(model, machine, rule).a1_violated;
    AisModel m = fit_ais(model, machine, rule);
    for (Index i = 0; i < m.unvisited.size(); ++i)
        if (m.unvisited[i])
            throw ZeroVisitError("agent state " + std::to_string(i / m.n_actions) + " with action " +
                                 std::to_string(i % m.n_actions) + " is never visited under the behaviour rule");
    return m;
}

}  // namespace

LearningRun asql_run(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& mu,
                     const LearningConfig& cfg) {
    return run_td(model, machine, mu, cfg, Target::Max);
}

LearningRun asac_td_run(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& pi,
                        const LearningConfig& cfg) {
    return run_td(model, machine, pi, cfg, Target::OnPolicy);
}

FixedPoint asql_fixed_point(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& mu,
                            double tol) {
    FixedPoint fp;
    fp.ais = behaviour_model(model, machine, mu, fp.a1_violated);
    const AisSolution sol = solve_ais_dp(fp.ais, model.gamma(), tol);
    fp.q = QTable{fp.ais.n_agent_states, fp.ais.n_actions, sol.q};
    const Index Z = fp.q.n_agent_states, A = fp.q.n_actions;
    for (Index z = 0; z < Z; ++z)
        for (Index a = 0; a < A; ++a) {
            double target = fp.ais.r(z, a);
            for (Index zn = 0; zn < Z; ++zn) target += model.gamma() * fp.ais.p(z, a, zn) * fp.q.max_at(zn);
            fp.residual = std::max(fp.residual, std::abs(target - fp.q.at(z, a)));
        }
    return fp;
}

FixedPoint asac_fixed_point(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& pi,
                            double tol) {
    FixedPoint fp;
    fp.ais = behaviour_model(model, machine, pi, fp.a1_violated);
    const Index Z = fp.ais.n_agent_states, A = fp.ais.n_actions, n = Z * A;
    const double gamma = model.gamma();
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd r(n);
    for (Index z = 0; z < Z; ++z)
        for (Index a = 0; a < A; ++a) {
            r(z * A + a) = fp.ais.r(z, a);
            for (Index zn = 0; zn < Z; ++zn)
                for (Index an = 0; an < A; ++an)
                    M(z * A + a, zn * A + an) -= gamma * fp.ais.p(z, a, zn) * pi.prob(zn, an);
        }
    const Eigen::VectorXd q = M.partialPivLu().solve(r);
    fp.q = QTable{Z, A, std::vector<double>(q.data(), q.data() + n)};
    fp.residual = (M * q - r).lpNorm<Eigen::Infinity>();
    if (fp.residual > tol) {
        // One refinement step on the residual.
        const Eigen::VectorXd fixed = q + M.partialPivLu().solve(r - M * q);
        fp.q.q.assign(fixed.data(), fixed.data() + n);
        fp.residual = (M * fixed - r).lpNorm<Eigen::Infinity>();
    }
    return fp;
}

DecisionRule asql_policy(const QTable& q) {
    std::vector<Index> actions(q.n_agent_states, 0);
    for (Index z = 0; z < q.n_agent_states; ++z)
        for (Index a = 1; a < q.n_actions; ++a)
            if (q.at(z, a) > q.at(z, actions[z])) actions[z] = a;
    return DecisionRule::deterministic(std::move(actions), q.n_actions);
}

double asac_value(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& pi, const QTable& q) {
    const JointXi xi = xi_init(model, machine);
    const Index Z = machine.n_agent_states();
    double value = 0.0;
    for (Index j = 0; j < xi.size(); ++j) {
        const Index z = j % Z;
        for (Index a = 0; a < q.n_actions; ++a) value += xi[j] * pi.prob(z, a) * q.at(z, a);
    }
    return value;
}

double asac_evaluation_bound(const AisLossReport& report, const IpmSpec& spec, const DecisionRule& pi, const QTable& q,
                             double gamma) {
    std::vector<double> v(q.n_agent_states, 0.0);
    for (Index z = 0; z < q.n_agent_states; ++z)
        for (Index a = 0; a < q.n_actions; ++a) v[z] += pi.prob(z, a) * q.at(z, a);
    const double rho = report.delta > 0.0 ? minkowski_norm(spec, v) : 0.0;
    return (report.eps + gamma * report.delta * rho) / (1.0 - gamma);
}

void write_snapshots_csv(std::ostream& out, const LearningRun& run) {
    out << "step,z,a,q\n";
    char buf[96];
    for (const auto& snap : run.snapshots)
        for (Index z = 0; z < snap.q.n_agent_states; ++z)
            for (Index a = 0; a < snap.q.n_actions; ++a) {
                std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", snap.step, z, a, snap.q.at(z, a));
                out << buf;
            }
}

}  // namespace agentpomdp
