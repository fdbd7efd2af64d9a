#include "agentpomdp/policy_search.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"

namespace agentpomdp {

SoftmaxParams SoftmaxParams::zeros(Index n_agent_states, Index n_actions) {
    return {n_agent_states, n_actions, std::vector<double>(n_agent_states * n_actions, 0.0)};
}

DecisionRule SoftmaxParams::rule() const {
    if (theta.size() != n_agent_states * n_actions) throw ContractError("softmax parameters have wrong size");
    std::vector<double> probs(theta.size());
    for (Index z = 0; z < n_agent_states; ++z) {
        const double* row = theta.data() + z * n_actions;
        for (Index a = 0; a < n_actions; ++a)
            if (!std::isfinite(row[a])) throw ContractError("softmax logits must be finite");
        const double top = *std::max_element(row, row + n_actions);
        double total = 0.0;
        for (Index a = 0; a < n_actions; ++a) total += probs[z * n_actions + a] = std::exp(row[a] - top);
        for (Index a = 0; a < n_actions; ++a) probs[z * n_actions + a] /= total;
    }
    return DecisionRule::stochastic(std::move(probs), n_agent_states, n_actions);
}

namespace {

void check_params(const AgentStateMachine& machine, const PomdpModel& model, const SoftmaxParams& params) {
    machine.check_compatible(model);
    if (params.n_agent_states != machine.n_agent_states() || params.n_actions != model.n_actions())
        throw ContractError("softmax parameters do not match the machine and model");
}

double exact_value(const ProductChain& chain, const JointXi& xi1, double gamma, const SoftmaxParams& params) {
    return policy_evaluate(chain, params.rule(), xi1, gamma).performance;
}

}  // namespace

Gradient exact_policy_gradient(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params) {
    check_params(machine, model, params);
    const Index S = model.n_states(), Z = params.n_agent_states, A = params.n_actions;
    const DecisionRule rule = params.rule();
    const EvalBundle ev = policy_evaluate(ProductChain(model, machine), rule, xi_init(model, machine), model.gamma());
    Gradient grad(Z * A, 0.0);
    for (Index s = 0; s < S; ++s)
        for (Index z = 0; z < Z; ++z)
            for (Index a = 0; a < A; ++a) {
                const double w = ev.d(s, z, a) * ev.Q(s, z, a);
                if (w == 0.0) continue;
                for (Index b = 0; b < A; ++b) grad[z * A + b] += w * ((a == b ? 1.0 : 0.0) - rule.prob(z, b));
            }
    return grad;
}

Gradient finite_diff_gradient(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params,
                              double h) {
    check_params(machine, model, params);
    const ProductChain chain(model, machine);
    const JointXi xi1 = xi_init(model, machine);
    Gradient grad(params.theta.size(), 0.0);
    SoftmaxParams p = params;
    for (Index i = 0; i < p.theta.size(); ++i) {
        const double base = p.theta[i];
        p.theta[i] = base + h;
        const double up = exact_value(chain, xi1, model.gamma(), p);
        p.theta[i] = base - h;
        const double down = exact_value(chain, xi1, model.gamma(), p);
        p.theta[i] = base;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

GradientReport gradient_report(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params,
                               double h) {
    GradientReport r;
    r.analytic = exact_policy_gradient(model, machine, params);
    r.numeric = finite_diff_gradient(model, machine, params, h);
    double diff = 0.0, scale = 0.0;
    for (Index i = 0; i < r.numeric.size(); ++i) {
        diff = std::max(diff, std::abs(r.analytic[i] - r.numeric[i]));
        scale = std::max(scale, std::abs(r.numeric[i]));
    }
    r.max_rel_err = scale > 1e-12 ? diff / scale : diff;
    return r;
}

AscentResult gradient_ascent(const PomdpModel& model, const AgentStateMachine& machine, const SoftmaxParams& params0,
                             const AscentOptions& options) {
    check_params(machine, model, params0);
    const ProductChain chain(model, machine);
    const JointXi xi1 = xi_init(model, machine);
    AscentResult out;
    out.params = params0;
    out.value = exact_value(chain, xi1, model.gamma(), out.params);
    out.accepted_values.push_back(out.value);
    double step = options.step;
    for (out.iterations = 0; out.iterations < options.iters; ++out.iterations) {
        const Gradient g = exact_policy_gradient(model, machine, out.params);
        double sup = 0.0;
        for (double v : g) sup = std::max(sup, std::abs(v));
        if (sup < options.grad_tol) {
            out.converged = true;
            return out;
        }
        bool accepted = false;
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
            SoftmaxParams trial = out.params;
            for (Index i = 0; i < g.size(); ++i) trial.theta[i] += step * g[i];
            const double v = exact_value(chain, xi1, model.gamma(), trial);
            if (v >= out.value) {
                out.params = std::move(trial);
                out.value = v;
                out.accepted_values.push_back(v);
                accepted = true;
                step = std::min(step * 2.0, 1e8);
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) {
            // No step size improves J: a numerical stationary point.
            out.converged = true;
            return out;
        }
    }
    const Gradient g = exact_policy_gradient(model, machine, out.params);
    double sup = 0.0;
    for (double v : g) sup = std::max(sup, std::abs(v));
    out.converged = sup < options.grad_tol;
    return out;
}

std::vector<SweepPoint> sweep_1param(const PomdpModel& model, const std::vector<double>& grid) {
    if (model.n_actions() != 2) throw ContractError("sweep_1param needs exactly two actions");
    const Index S = model.n_states();
    Eigen::MatrixXd P0(S, S), P1(S, S);
    Eigen::VectorXd r0(S), r1(S), xi(S);
    for (Index s = 0; s < S; ++s) {
        r0(s) = model.reward(s, 0);
        r1(s) = model.reward(s, 1);
        xi(s) = model.init_state(s);
        for (Index sn = 0; sn < S; ++sn) {
            P0(s, sn) = model.state_transition(s, 0, sn);
            P1(s, sn) = model.state_transition(s, 1, sn);
        }
    }
    std::vector<SweepPoint> curve;
    curve.reserve(grid.size());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(S, S);
    for (double p : grid) {
        if (!(p >= 0.0 && p <= 1.0)) throw ContractError("sweep grid values must lie in [0, 1]");
        const Eigen::MatrixXd Pp = (1.0 - p) * P0 + p * P1;
        const Eigen::VectorXd rp = (1.0 - p) * r0 + p * r1;
        const Eigen::VectorXd v = (I - model.gamma() * Pp).partialPivLu().solve(rp);
        curve.push_back({p, xi.dot(v)});
    }
    return curve;
}

std::vector<double> unit_grid(std::size_t n) {
    if (n == 0) throw ContractError("grid needs at least one interval");
    std::vector<double> grid(n + 1);
    for (std::size_t i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(n);
    return grid;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve) {
    out << "p,J\n";
    char buf[80];
    for (const auto& pt : curve) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", pt.p, pt.value);
        out << buf;
    }
}

}  // namespace agentpomdp
