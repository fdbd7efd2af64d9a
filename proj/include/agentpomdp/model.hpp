#pragma once

#include <optional>
#include <span>
#include <vector>

#include "agentpomdp/types.hpp"

namespace agentpomdp {

/// Raw tables for a finite POMDP. All tables are row-major:
///   kernel[((s * A + a) * S + s') * Y + y'] = P(s', y' | s, a)
///   reward[s * A + a]                       = r(s, a)
///   init_obs[s * Y + y]                     = nu(y | s)
/// An empty init_obs means "observation 0 is emitted deterministically at t = 1".
struct ModelData {
    Index n_states = 0;
    Index n_actions = 0;
    Index n_obs = 0;
    std::vector<double> kernel;
    std::vector<double> reward;
    std::vector<double> init_state;
    std::vector<double> init_obs;
    double gamma = 0.9;
    std::optional<double> r_max;

    bool operator==(const ModelData&) const = default;
};

/// Immutable, validated finite POMDP with joint kernel P(s', y' | s, a).
class PomdpModel {
public:
    static constexpr double kSumTolerance = 1e-12;

    explicit PomdpModel(ModelData data);

    Index n_states() const { return data_.n_states; }
    Index n_actions() const { return data_.n_actions; }
    Index n_obs() const { return data_.n_obs; }
    double gamma() const { return data_.gamma; }
    double r_max() const { return r_max_; }
    double reward_min() const { return reward_min_; }
    double reward_max() const { return reward_max_; }

    double kernel(Index s, Index a, Index s_next, Index y_next) const {
        return data_.kernel[((s * data_.n_actions + a) * data_.n_states + s_next) * data_.n_obs + y_next];
    }
    /// Row P(., . | s, a) laid out as [s' * Y + y'].
    std::span<const double> kernel_row(Index s, Index a) const {
        const Index width = data_.n_states * data_.n_obs;
        return {data_.kernel.data() + (s * data_.n_actions + a) * width, width};
    }
    double reward(Index s, Index a) const { return data_.reward[s * data_.n_actions + a]; }
    double init_state(Index s) const { return data_.init_state[s]; }
    double init_obs(Index s, Index y) const { return init_obs_[s * data_.n_obs + y]; }

    /// sum_{y'} P(s', y' | s, a)
    double state_transition(Index s, Index a, Index s_next) const;
    /// sum_{s'} P(s', y' | s, a)
    double obs_probability(Index s, Index a, Index y_next) const;

    const ModelData& data() const { return data_; }
    std::span<const double> init_state_dist() const { return data_.init_state; }

    /// Same model with a different discount factor.
    PomdpModel with_gamma(double gamma) const;
    /// Same model with every reward multiplied by `scale`.
    PomdpModel with_scaled_reward(double scale) const;

    void check_state(Index s) const;
    void check_action(Index a) const;
    void check_obs(Index y) const;

private:
    ModelData data_;
    std::vector<double> init_obs_;
    double r_max_ = 0.0;
    double reward_min_ = 0.0;
    double reward_max_ = 0.0;
};

struct StepOutcome {
    Index next_state;
    Index next_obs;
    double reward;
};

/// Draw an index from a probability row; the row need not be normalised exactly.
Index sample_categorical(std::span<const double> probs, Rng& rng);

/// Sample (s', y') ~ P(., . | s, a) and report r(s, a).
StepOutcome sample_step(const PomdpModel& model, Index s, Index a, Rng& rng);

/// Sample (s_1, y_1) from the initial distribution.
std::pair<Index, Index> sample_initial(const PomdpModel& model, Rng& rng);

/// Bayes filter: b'(s') proportional to sum_s b(s) P(s', y' | s, a).
/// Throws ImpossibleObservationError when Pr(y' | b, a) = 0.
std::vector<double> belief_update(const PomdpModel& model, std::span<const double> belief, Index a,
                                  Index y_next);

/// Posterior over S_1 given Y_1 = y. Throws ImpossibleObservationError when Pr(Y_1 = y) = 0.
std::vector<double> initial_belief(const PomdpModel& model, Index y);

/// Pr(Y_1 = y).
double initial_obs_probability(const PomdpModel& model, Index y);

}  // namespace agentpomdp
