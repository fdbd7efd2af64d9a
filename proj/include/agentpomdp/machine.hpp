#pragma once

#include <span>
#include <string>
#include <vector>

#include "agentpomdp/model.hpp"
#include "agentpomdp/types.hpp"

namespace agentpomdp {

enum class MachineKind { Identity, Singleton, Window, Belief, Table };

/// How a machine was built; `parameter` is the window length or lattice resolution.
struct MachineSpec {
    MachineKind kind = MachineKind::Table;
    Index parameter = 0;
};

/// Deterministic agent-state machine: Z_1 = phi0(Y_1), Z_{t+1} = phi(Z_t, Y_{t+1}, A_t).
class AgentStateMachine {
public:
    /// `init[y]` and `update[(z * Y + y) * A + a]`.
    AgentStateMachine(Index n_agent_states, Index n_obs, Index n_actions, std::vector<Index> init,
                      std::vector<Index> update, std::string label, MachineSpec spec = {});

    Index n_agent_states() const { return n_z_; }
    Index n_obs() const { return n_obs_; }
    Index n_actions() const { return n_actions_; }
    const std::string& label() const { return label_; }
    const MachineSpec& spec() const { return spec_; }

    Index init(Index y) const;
    Index update(Index z, Index y_next, Index a) const;

    /// Unchecked table lookups for inner loops.
    Index init_unchecked(Index y) const { return init_[y]; }
    Index update_unchecked(Index z, Index y_next, Index a) const {
        return update_[(z * n_obs_ + y_next) * n_actions_ + a];
    }

    const std::vector<Index>& init_table() const { return init_; }
    const std::vector<Index>& update_table() const { return update_; }

    /// Lattice coordinates for belief machines (k * p as integers), empty otherwise.
    const std::vector<std::vector<Index>>& lattice() const { return lattice_; }

    AgentStateMachine with_label(std::string label) const;

    void check_compatible(const PomdpModel& model) const;

private:
    friend AgentStateMachine belief_machine(const PomdpModel&, Index, std::size_t);

    Index n_z_;
    Index n_obs_;
    Index n_actions_;
    std::vector<Index> init_;
    std::vector<Index> update_;
    std::string label_;
    MachineSpec spec_;
    std::vector<std::vector<Index>> lattice_;
};

/// Observations Y_1..Y_t and actions A_1..A_{t-1}.
struct History {
    std::vector<Index> observations;
    std::vector<Index> actions;
};

Index agent_state_init(const AgentStateMachine& m, Index y1);
Index agent_state_update(const AgentStateMachine& m, Index z, Index y_next, Index a);

/// Left fold of the update over the history starting from phi0(Y_1).
Index compress_history(const AgentStateMachine& m, const History& h);

/// Z_t = Y_t.
AgentStateMachine identity_machine(Index n_obs, Index n_actions);

/// |Z| = 1.
AgentStateMachine singleton_machine(Index n_obs, Index n_actions);

/// Window of the last n observation/action pairs plus the current observation.
/// Pre-history slots hold a padding symbol (index n_obs for observations,
/// n_actions for actions); the current observation is never padded, so
/// |Z| = n_obs * ((n_obs + 1) * (n_actions + 1))^n.
AgentStateMachine window_machine(Index n, Index n_obs, Index n_actions, std::size_t cap = 1'000'000);

/// Window contents: oldest pair first, then the current observation.
struct WindowContents {
    std::vector<Index> past_obs;      ///< y_{t-n} .. y_{t-1}, padding = n_obs
    std::vector<Index> past_actions;  ///< a_{t-n} .. a_{t-1}, padding = n_actions
    Index current_obs = 0;
};

Index window_encode(Index n, Index n_obs, Index n_actions, const WindowContents& w);
WindowContents window_decode(Index n, Index n_obs, Index n_actions, Index z);

/// Belief lattice {p in Delta(S) : k p integer} with Bayes update followed by
/// l1-nearest lattice projection (lexicographically smallest point on ties).
AgentStateMachine belief_machine(const PomdpModel& model, Index k, std::size_t cap = 1'000'000);

/// All compositions of k into n_parts non-negative parts, in lexicographic order.
std::vector<std::vector<Index>> simplex_lattice(Index n_parts, Index k, std::size_t cap);

/// Index of the l1-nearest lattice point to `p` (ties: lowest index).
Index project_to_lattice(const std::vector<std::vector<Index>>& lattice, Index k, std::span<const double> p);

/// Lattice point as a probability vector.
std::vector<double> lattice_point(const std::vector<Index>& counts, Index k);

}  // namespace agentpomdp
