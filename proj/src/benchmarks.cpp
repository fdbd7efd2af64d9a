#include "agentpomdp/benchmarks.hpp"

#include <cmath>

#include "agentpomdp/errors.hpp"

namespace agentpomdp::benchmarks {

PomdpModel blind_randomization_model(double gamma) {
    ModelData d;
    d.n_states = 3;
    d.n_actions = 2;
    d.n_obs = 1;
    d.kernel.assign(3 * 2 * 3, 0.0);
    auto set = [&](Index s, Index a, Index sn, double p) { d.kernel[(s * 2 + a) * 3 + sn] = p; };
    set(0, 0, 0, 1.0);
    set(1, 0, 0, 0.5);
    set(1, 0, 2, 0.5);
    set(2, 0, 2, 1.0);
    set(0, 1, 0, 0.5);
    set(0, 1, 1, 0.5);
    set(1, 1, 1, 1.0);
    set(2, 1, 2, 0.5);
    set(2, 1, 1, 0.5);
    d.reward = {-1.0, -0.5, 0.0, -0.5, 2.0, -0.5};
    d.init_state = {1.0, 0.0, 0.0};
    d.gamma = gamma;
    return PomdpModel(std::move(d));
}

Index counting_chain_length(double gamma, double tail_tol) {
    // r_max = 1 for the counting chain.
    const double n = std::log(tail_tol * (1.0 - gamma)) / std::log(gamma);
    return static_cast<Index>(std::floor(n)) + 1;
}

bool counting_chain_prefers_zero(Index state) {
    // state - 1 must be a triangular number n(n+1)/2.
    const Index t = state - 1;
    Index n = static_cast<Index>(std::floor((std::sqrt(8.0 * static_cast<double>(t) + 1.0) - 1.0) / 2.0));
    while (n * (n + 1) / 2 > t) --n;
    while ((n + 1) * (n + 2) / 2 <= t) ++n;
    return n * (n + 1) / 2 == t;
}

PomdpModel counting_chain_model(double gamma, Index n_states) {
    const Index N = n_states == 0 ? counting_chain_length(gamma) : n_states;
    if (N < 2) throw ContractError("counting chain needs at least two states");
    const Index A = 2, Y = 2;
    auto obs_of = [](Index idx) { return (idx + 1) % 2 == 1 ? Index{0} : Index{1}; };

    ModelData d;
    d.n_states = N;
    d.n_actions = A;
    d.n_obs = Y;
    d.kernel.assign(N * A * N * Y, 0.0);
    d.reward.assign(N * A, 0.0);
    for (Index s = 0; s < N; ++s) {
        const Index correct = counting_chain_prefers_zero(s + 1) ? 0 : 1;
        for (Index a = 0; a < A; ++a) {
            Index next = 0;
            if (a == correct) {
                next = s + 1 < N ? s + 1 : 0;
                d.reward[s * A + a] = 1.0;
            } else {
                d.reward[s * A + a] = -1.0;
            }
            d.kernel[((s * A + a) * N + next) * Y + obs_of(next)] = 1.0;
        }
    }
    d.init_state.assign(N, 0.0);
    d.init_state[0] = 1.0;
    d.init_obs.assign(N * Y, 0.0);
    for (Index s = 0; s < N; ++s) d.init_obs[s * Y + obs_of(s)] = 1.0;
    d.gamma = gamma;
    return PomdpModel(std::move(d));
}

PomdpModel small_mdp(double gamma) {
    ModelData d;
    d.n_states = 3;
    d.n_actions = 2;
    d.n_obs = 3;
    // State-transition matrices; the observation equals the next state.
    const double T[2][3][3] = {{{0.7, 0.3, 0.0}, {0.0, 0.6, 0.4}, {0.5, 0.0, 0.5}},
                               {{0.1, 0.0, 0.9}, {0.8, 0.2, 0.0}, {0.0, 0.25, 0.75}}};
    d.kernel.assign(3 * 2 * 3 * 3, 0.0);
    for (Index s = 0; s < 3; ++s)
        for (Index a = 0; a < 2; ++a)
            for (Index sn = 0; sn < 3; ++sn) d.kernel[((s * 2 + a) * 3 + sn) * 3 + sn] = T[a][s][sn];
    d.reward = {1.0, 0.0, -0.5, 2.0, 0.25, -1.0};
    d.init_state = {0.5, 0.25, 0.25};
    d.init_obs.assign(9, 0.0);
    for (Index s = 0; s < 3; ++s) d.init_obs[s * 3 + s] = 1.0;
    d.gamma = gamma;
    return PomdpModel(std::move(d));
}

namespace {

std::vector<double> dirichlet_row(Rng& rng, Index n) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> row(n);
    double total = 0.0;
    for (double& v : row) {
        v = expo(rng);
        total += v;
    }
    for (double& v : row) v /= total;
    return row;
}

}  // namespace

PomdpModel random_pomdp(Rng& rng, Index n_states, Index n_actions, Index n_obs, double gamma) {
    ModelData d;
    d.n_states = n_states;
    d.n_actions = n_actions;
    d.n_obs = n_obs;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (Index s = 0; s < n_states; ++s)
        for (Index a = 0; a < n_actions; ++a) {
            const auto row = dirichlet_row(rng, n_states * n_obs);
            d.kernel.insert(d.kernel.end(), row.begin(), row.end());
        }
    for (Index i = 0; i < n_states * n_actions; ++i) d.reward.push_back(unit(rng));
    d.init_state = dirichlet_row(rng, n_states);
    for (Index s = 0; s < n_states; ++s) {
        const auto row = dirichlet_row(rng, n_obs);
        d.init_obs.insert(d.init_obs.end(), row.begin(), row.end());
    }
    d.gamma = gamma;
    return PomdpModel(std::move(d));
}

PomdpModel random_mdp(Rng& rng, Index n_states, Index n_actions, double gamma) {
    ModelData d;
    d.n_states = n_states;
    d.n_actions = n_actions;
    d.n_obs = n_states;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    d.kernel.assign(n_states * n_actions * n_states * n_states, 0.0);
    for (Index s = 0; s < n_states; ++s)
        for (Index a = 0; a < n_actions; ++a) {
            const auto row = dirichlet_row(rng, n_states);
            for (Index sn = 0; sn < n_states; ++sn)
                d.kernel[((s * n_actions + a) * n_states + sn) * n_states + sn] = row[sn];
        }
    for (Index i = 0; i < n_states * n_actions; ++i) d.reward.push_back(unit(rng));
    d.init_state = dirichlet_row(rng, n_states);
    d.init_obs.assign(n_states * n_states, 0.0);
    for (Index s = 0; s < n_states; ++s) d.init_obs[s * n_states + s] = 1.0;
    d.gamma = gamma;
    return PomdpModel(std::move(d));
}

}  // namespace agentpomdp::benchmarks
