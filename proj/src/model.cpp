#include "agentpomdp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "agentpomdp/errors.hpp"

namespace agentpomdp {

namespace {

void check_distribution(std::span<const double> row, const std::string& what) {
    double sum = 0.0;
    for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ValidationError(what + " has a negative or non-finite entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > PomdpModel::kSumTolerance) {
        throw ValidationError(what + " sums to " + std::to_string(sum) + ", expected 1");
    }
}

}  // namespace

Caps Caps::uniform(std::size_t value) {
    Caps caps;
    caps.agent_states = caps.product_states = caps.stationary_rules = caps.designer_rules = value;
    caps.search_nodes = caps.histories = caps.belief_nodes = caps.grid_points = value;
    return caps;
}

Caps Caps::from_env() {
    const char* raw = std::getenv("AGENTPOMDP_CAP");
    if (raw == nullptr) return {};
    char* end = nullptr;
    const unsigned long long value = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0' || value == 0) return {};
    return uniform(static_cast<std::size_t>(value));
}

PomdpModel::PomdpModel(ModelData data) : data_(std::move(data)) {
    const Index S = data_.n_states, A = data_.n_actions, Y = data_.n_obs;
    if (S == 0 || A == 0 || Y == 0) throw ValidationError("model dimensions must be positive");
    if (data_.kernel.size() != S * A * S * Y) throw ValidationError("kernel has wrong size");
    if (data_.reward.size() != S * A) throw ValidationError("reward table has wrong size");
    if (data_.init_state.size() != S) throw ValidationError("initial state distribution has wrong size");
    if (!(data_.gamma > 0.0 && data_.gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");

    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) {
            check_distribution(kernel_row(s, a),
                               "kernel row (s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")");
        }
    }
    check_distribution(data_.init_state, "initial state distribution");

    if (data_.init_obs.empty()) {
        init_obs_.assign(S * Y, 0.0);
        for (Index s = 0; s < S; ++s) init_obs_[s * Y] = 1.0;
    } else {
        if (data_.init_obs.size() != S * Y) throw ValidationError("initial observation kernel has wrong size");
        init_obs_ = data_.init_obs;
        for (Index s = 0; s < S; ++s) {
            check_distribution(std::span<const double>(init_obs_).subspan(s * Y, Y),
                               "initial observation row s=" + std::to_string(s));
        }
    }

    double abs_max = 0.0;
    reward_min_ = data_.reward.front();
    reward_max_ = data_.reward.front();
    for (double r : data_.reward) {
        if (!std::isfinite(r)) throw ValidationError("reward has a non-finite entry");
        abs_max = std::max(abs_max, std::abs(r));
        reward_min_ = std::min(reward_min_, r);
        reward_max_ = std::max(reward_max_, r);
    }
    if (data_.r_max) {
        if (*data_.r_max < abs_max) {
            throw ValidationError("declared r_max " + std::to_string(*data_.r_max) +
                                  " is below max |r| = " + std::to_string(abs_max));
        }
        r_max_ = *data_.r_max;
    } else {
        r_max_ = abs_max;
    }
}

double PomdpModel::state_transition(Index s, Index a, Index s_next) const {
    double total = 0.0;
    for (Index y = 0; y < data_.n_obs; ++y) total += kernel(s, a, s_next, y);
    return total;
}

double PomdpModel::obs_probability(Index s, Index a, Index y_next) const {
    double total = 0.0;
    for (Index sn = 0; sn < data_.n_states; ++sn) total += kernel(s, a, sn, y_next);
    return total;
}

PomdpModel PomdpModel::with_gamma(double gamma) const {
    ModelData copy = data_;
    copy.gamma = gamma;
    return PomdpModel(std::move(copy));
}

PomdpModel PomdpModel::with_scaled_reward(double scale) const {
    ModelData copy = data_;
    for (double& r : copy.reward) r *= scale;
    if (copy.r_max) copy.r_max = *copy.r_max * std::abs(scale);
    return PomdpModel(std::move(copy));
}

void PomdpModel::check_state(Index s) const {
    if (s >= data_.n_states) throw ContractError("state index " + std::to_string(s) + " out of range");
}
void PomdpModel::check_action(Index a) const {
    if (a >= data_.n_actions) throw ContractError("action index " + std::to_string(a) + " out of range");
}
void PomdpModel::check_obs(Index y) const {
    if (y >= data_.n_obs) throw ContractError("observation index " + std::to_string(y) + " out of range");
}

Index sample_categorical(std::span<const double> probs, Rng& rng) {
    double total = 0.0;
    for (double p : probs) total += p;
    std::uniform_real_distribution<double> unit(0.0, total);
    const double u = unit(rng);
    double acc = 0.0;
    Index last_positive = 0;
    for (Index i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

StepOutcome sample_step(const PomdpModel& model, Index s, Index a, Rng& rng) {
    model.check_state(s);
    model.check_action(a);
    const Index joint = sample_categorical(model.kernel_row(s, a), rng);
    return {joint / model.n_obs(), joint % model.n_obs(), model.reward(s, a)};
}

std::pair<Index, Index> sample_initial(const PomdpModel& model, Rng& rng) {
    const Index s = sample_categorical(model.init_state_dist(), rng);
    std::vector<double> row(model.n_obs());
    for (Index y = 0; y < model.n_obs(); ++y) row[y] = model.init_obs(s, y);
    return {s, sample_categorical(row, rng)};
}

std::vector<double> belief_update(const PomdpModel& model, std::span<const double> belief, Index a,
                                  Index y_next) {
    model.check_action(a);
    model.check_obs(y_next);
    if (belief.size() != model.n_states()) throw ContractError("belief has wrong dimension");
    const Index S = model.n_states();
    std::vector<double> next(S, 0.0);
    for (Index s = 0; s < S; ++s) {
        if (belief[s] == 0.0) continue;
        for (Index sn = 0; sn < S; ++sn) next[sn] += belief[s] * model.kernel(s, a, sn, y_next);
    }
    double total = 0.0;
    for (double v : next) total += v;
    if (!(total > 0.0)) {
        throw ImpossibleObservationError("observation " + std::to_string(y_next) +
                                         " has probability zero after action " + std::to_string(a));
    }
    for (double& v : next) v /= total;
    return next;
}

double initial_obs_probability(const PomdpModel& model, Index y) {
    model.check_obs(y);
    double total = 0.0;
    for (Index s = 0; s < model.n_states(); ++s) total += model.init_state(s) * model.init_obs(s, y);
    return total;
}

std::vector<double> initial_belief(const PomdpModel& model, Index y) {
    model.check_obs(y);
    std::vector<double> b(model.n_states());
    double total = 0.0;
    for (Index s = 0; s < model.n_states(); ++s) {
        b[s] = model.init_state(s) * model.init_obs(s, y);
        total += b[s];
    }
    if (!(total > 0.0)) {
        throw ImpossibleObservationError("initial observation " + std::to_string(y) + " has probability zero");
    }
    for (double& v : b) v /= total;
    return b;
}

}  // namespace agentpomdp
