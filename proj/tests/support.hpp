#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "agentpomdp/benchmarks.hpp"
#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"

namespace testsupport {

using agentpomdp::Index;
using agentpomdp::ModelData;
using agentpomdp::PomdpModel;

/// |S| = |A| = |Y| = 1 with reward r.
inline PomdpModel single_state(double r = 1.0, double gamma = 0.9) {
    ModelData d;
    d.n_states = d.n_actions = d.n_obs = 1;
    d.kernel = {1.0};
    d.reward = {r};
    d.init_state = {1.0};
    d.gamma = gamma;
    return PomdpModel(d);
}

/// Random model restricted to one action.
inline PomdpModel single_action(std::uint64_t seed, Index S = 3, Index Y = 2) {
    agentpomdp::Rng rng(seed);
    return agentpomdp::benchmarks::random_pomdp(rng, S, 1, Y, 0.9);
}

/// Two states that swap every step regardless of action; observation = next state.
inline PomdpModel flip_chain(double gamma = 0.9) {
    ModelData d;
    d.n_states = 2;
    d.n_actions = 2;
    d.n_obs = 2;
    d.kernel.assign(2 * 2 * 2 * 2, 0.0);
    for (Index s = 0; s < 2; ++s)
        for (Index a = 0; a < 2; ++a) d.kernel[((s * 2 + a) * 2 + (1 - s)) * 2 + (1 - s)] = 1.0;
    d.reward = {1.0, 0.0, 0.0, 1.0};
    d.init_state = {0.5, 0.5};
    d.init_obs = {1.0, 0.0, 0.0, 1.0};
    d.gamma = gamma;
    return PomdpModel(d);
}

/// Optimal Q of the underlying fully observed MDP, by plain value iteration.
inline std::vector<double> mdp_optimal_q(const PomdpModel& m, double tol = 1e-13) {
    const Index S = m.n_states(), A = m.n_actions();
    std::vector<double> v(S, 0.0), q(S * A, 0.0);
    for (int it = 0; it < 100000; ++it) {
        double change = 0.0;
        for (Index s = 0; s < S; ++s)
            for (Index a = 0; a < A; ++a) {
                double x = m.reward(s, a);
                for (Index sn = 0; sn < S; ++sn) x += m.gamma() * m.state_transition(s, a, sn) * v[sn];
                q[s * A + a] = x;
            }
        for (Index s = 0; s < S; ++s) {
            const double nv = *std::max_element(q.begin() + s * A, q.begin() + (s + 1) * A);
            change = std::max(change, std::abs(nv - v[s]));
            v[s] = nv;
        }
        if (change < tol) break;
    }
    return q;
}

/// Optimal value of the fully observed MDP from the initial distribution.
inline double mdp_optimal_value(const PomdpModel& m) {
    const auto q = mdp_optimal_q(m);
    const Index A = m.n_actions();
    double j = 0.0;
    for (Index s = 0; s < m.n_states(); ++s)
        j += m.init_state(s) * *std::max_element(q.begin() + s * A, q.begin() + (s + 1) * A);
    return j;
}

/// Dense Gaussian elimination with partial pivoting; solves M x = b in place.
inline std::vector<double> solve_dense(std::vector<double> M, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(M[r * n + c]) > std::abs(M[p * n + c])) p = r;
        for (std::size_t k = 0; k < n; ++k) std::swap(M[c * n + k], M[p * n + k]);
        std::swap(b[c], b[p]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = M[r * n + c] / M[c * n + c];
            for (std::size_t k = c; k < n; ++k) M[r * n + k] -= f * M[c * n + k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= M[i * n + k] * x[k];
        x[i] = s / M[i * n + i];
    }
    return x;
}

/// J of the blind chain when action 1 is played with probability p, by direct solve of (I - g P_p) v = r_p.
inline double blind_value(double p, double gamma = 0.9) {
    const PomdpModel m = agentpomdp::benchmarks::blind_randomization_model(gamma);
    std::vector<double> M(9), r(3);
    for (Index s = 0; s < 3; ++s) {
        r[s] = (1 - p) * m.reward(s, 0) + p * m.reward(s, 1);
        for (Index sn = 0; sn < 3; ++sn)
            M[s * 3 + sn] = (s == sn ? 1.0 : 0.0) -
                            gamma * ((1 - p) * m.state_transition(s, 0, sn) + p * m.state_transition(s, 1, sn));
    }
    return solve_dense(M, r)[0];
}

}  // namespace testsupport
