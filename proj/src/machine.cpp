#include "agentpomdp/machine.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "agentpomdp/errors.hpp"

namespace agentpomdp {

AgentStateMachine::AgentStateMachine(Index n_agent_states, Index n_obs, Index n_actions,
                                     std::vector<Index> init, std::vector<Index> update, std::string label,
                                     MachineSpec spec)
    : n_z_(n_agent_states), n_obs_(n_obs), n_actions_(n_actions), init_(std::move(init)),
      update_(std::move(update)), label_(std::move(label)), spec_(spec) {
    if (n_z_ == 0 || n_obs_ == 0 || n_actions_ == 0) throw ValidationError("machine dimensions must be positive");
    if (init_.size() != n_obs_) throw ValidationError("machine init table must have one entry per observation");
    if (update_.size() != n_z_ * n_obs_ * n_actions_) throw ValidationError("machine update table has wrong size");
    for (Index z : init_) {
        if (z >= n_z_) throw ValidationError("machine init maps outside [0, |Z|)");
    }
    for (Index z : update_) {
        if (z >= n_z_) throw ValidationError("machine update maps outside [0, |Z|)");
    }
}

Index AgentStateMachine::init(Index y) const {
    if (y >= n_obs_) throw ContractError("observation " + std::to_string(y) + " out of range");
    return init_[y];
}

Index AgentStateMachine::update(Index z, Index y_next, Index a) const {
    if (z >= n_z_) throw ContractError("agent state " + std::to_string(z) + " out of range");
    if (y_next >= n_obs_) throw ContractError("observation " + std::to_string(y_next) + " out of range");
    if (a >= n_actions_) throw ContractError("action " + std::to_string(a) + " out of range");
    return update_unchecked(z, y_next, a);
}

AgentStateMachine AgentStateMachine::with_label(std::string label) const {
    AgentStateMachine copy = *this;
    copy.label_ = std::move(label);
    return copy;
}

void AgentStateMachine::check_compatible(const PomdpModel& model) const {
    if (model.n_obs() != n_obs_ || model.n_actions() != n_actions_) {
        throw ContractError("machine '" + label_ + "' alphabets do not match the model");
    }
}

Index agent_state_init(const AgentStateMachine& m, Index y1) { return m.init(y1); }

Index agent_state_update(const AgentStateMachine& m, Index z, Index y_next, Index a) {
    return m.update(z, y_next, a);
}

Index compress_history(const AgentStateMachine& m, const History& h) {
    if (h.observations.empty()) throw ContractError("history has no observations");
    if (h.observations.size() != h.actions.size() + 1) {
        throw ContractError("history needs exactly one more observation than actions");
    }
    Index z = m.init(h.observations.front());
    for (Index t = 0; t < h.actions.size(); ++t) z = m.update(z, h.observations[t + 1], h.actions[t]);
    return z;
}

AgentStateMachine identity_machine(Index n_obs, Index n_actions) {
    std::vector<Index> init(n_obs), update(n_obs * n_obs * n_actions);
    for (Index y = 0; y < n_obs; ++y) init[y] = y;
    for (Index z = 0; z < n_obs; ++z)
        for (Index y = 0; y < n_obs; ++y)
            for (Index a = 0; a < n_actions; ++a) update[(z * n_obs + y) * n_actions + a] = y;
    return {n_obs, n_obs, n_actions, std::move(init), std::move(update), "identity", {MachineKind::Identity, 0}};
}

AgentStateMachine singleton_machine(Index n_obs, Index n_actions) {
    return {1,
            n_obs,
            n_actions,
            std::vector<Index>(n_obs, 0),
            std::vector<Index>(n_obs * n_actions, 0),
            "singleton",
            {MachineKind::Singleton, 0}};
}

namespace {

Index checked_mul(Index a, Index b, std::size_t cap, const char* what) {
    if (a != 0 && b > std::numeric_limits<Index>::max() / a) throw CapacityError(std::string(what) + " overflows");
    const Index r = a * b;
    if (r > cap) throw CapacityError(std::string(what) + " exceeds cap of " + std::to_string(cap));
    return r;
}

}  // namespace

Index window_encode(Index n, Index n_obs, Index n_actions, const WindowContents& w) {
    if (w.past_obs.size() != n || w.past_actions.size() != n) throw ContractError("window contents have wrong length");
    Index code = 0;
    for (Index k = 0; k < n; ++k) {
        if (w.past_obs[k] > n_obs || w.past_actions[k] > n_actions) throw ContractError("window symbol out of range");
        code = code * (n_obs + 1) + w.past_obs[k];
        code = code * (n_actions + 1) + w.past_actions[k];
    }
    if (w.current_obs >= n_obs) throw ContractError("current observation out of range");
    return code * n_obs + w.current_obs;
}

WindowContents window_decode(Index n, Index n_obs, Index n_actions, Index z) {
    WindowContents w;
    w.past_obs.assign(n, 0);
    w.past_actions.assign(n, 0);
    w.current_obs = z % n_obs;
    z /= n_obs;
    for (Index k = n; k-- > 0;) {
        w.past_actions[k] = z % (n_actions + 1);
        z /= (n_actions + 1);
        w.past_obs[k] = z % (n_obs + 1);
        z /= (n_obs + 1);
    }
    return w;
}

AgentStateMachine window_machine(Index n, Index n_obs, Index n_actions, std::size_t cap) {
    if (n == 0) {
        auto m = identity_machine(n_obs, n_actions);
        return AgentStateMachine(m.n_agent_states(), n_obs, n_actions, m.init_table(), m.update_table(), "window0",
                                 {MachineKind::Window, 0});
    }
    Index size = n_obs;
    for (Index k = 0; k < n; ++k) {
        size = checked_mul(size, n_obs + 1, cap, "window machine size");
        size = checked_mul(size, n_actions + 1, cap, "window machine size");
    }
    checked_mul(size, n_obs * n_actions, std::numeric_limits<std::size_t>::max(), "window update table");

    std::vector<Index> init(n_obs);
    for (Index y = 0; y < n_obs; ++y) {
        WindowContents w{std::vector<Index>(n, n_obs), std::vector<Index>(n, n_actions), y};
        init[y] = window_encode(n, n_obs, n_actions, w);
    }
    std::vector<Index> update(size * n_obs * n_actions);
    for (Index z = 0; z < size; ++z) {
        const WindowContents w = window_decode(n, n_obs, n_actions, z);
        WindowContents shifted = w;
        for (Index k = 0; k + 1 < n; ++k) {
            shifted.past_obs[k] = w.past_obs[k + 1];
            shifted.past_actions[k] = w.past_actions[k + 1];
        }
        shifted.past_obs[n - 1] = w.current_obs;
        for (Index y = 0; y < n_obs; ++y) {
            shifted.current_obs = y;
            for (Index a = 0; a < n_actions; ++a) {
                shifted.past_actions[n - 1] = a;
                update[(z * n_obs + y) * n_actions + a] = window_encode(n, n_obs, n_actions, shifted);
            }
        }
    }
    return {size, n_obs, n_actions, std::move(init), std::move(update), "window" + std::to_string(n),
            {MachineKind::Window, n}};
}

std::vector<std::vector<Index>> simplex_lattice(Index n_parts, Index k, std::size_t cap) {
    std::vector<std::vector<Index>> out;
    std::vector<Index> current(n_parts, 0);
    // Depth-first over the first n_parts - 1 coordinates; the last one absorbs the remainder.
    auto recurse = [&](auto&& self, Index pos, Index remaining) -> void {
        if (pos + 1 == n_parts) {
            current[pos] = remaining;
            if (out.size() >= cap) throw CapacityError("belief lattice exceeds cap of " + std::to_string(cap));
            out.push_back(current);
            return;
        }
        for (Index v = 0; v <= remaining; ++v) {
            current[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    if (n_parts == 0) return out;
    recurse(recurse, 0, k);
    return out;
}

std::vector<double> lattice_point(const std::vector<Index>& counts, Index k) {
    std::vector<double> p(counts.size());
    for (Index i = 0; i < counts.size(); ++i) p[i] = static_cast<double>(counts[i]) / static_cast<double>(k);
    return p;
}

Index project_to_lattice(const std::vector<std::vector<Index>>& lattice, Index k, std::span<const double> p) {
    // Distances are compared in the scaled space k * p so that lattice points are integral.
    Index best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < lattice.size(); ++i) {
        double dist = 0.0;
        for (Index j = 0; j < p.size(); ++j) dist += std::abs(static_cast<double>(k) * p[j] - static_cast<double>(lattice[i][j]));
        if (dist < best_dist - 1e-12) {
            best_dist = dist;
            best = i;
        }
    }
    return best;
}

namespace {

// Posterior that keeps phi total when the projected belief rules out y'.
std::vector<double> robust_update(const PomdpModel& model, std::span<const double> b, Index a, Index y) {
    try {
        return belief_update(model, b, a, y);
    } catch (const ImpossibleObservationError&) {
    }
    const Index S = model.n_states();
    std::vector<double> uniform(S, 1.0 / static_cast<double>(S));
    try {
        return belief_update(model, uniform, a, y);
    } catch (const ImpossibleObservationError&) {
    }
    std::vector<double> predicted(S, 0.0);
    for (Index s = 0; s < S; ++s)
        for (Index sn = 0; sn < S; ++sn) predicted[sn] += b[s] * model.state_transition(s, a, sn);
    return predicted;
}

std::vector<double> robust_initial(const PomdpModel& model, Index y) {
    if (initial_obs_probability(model, y) > 0.0) return initial_belief(model, y);
    const Index S = model.n_states();
    std::vector<double> b(S, 0.0);
    double total = 0.0;
    for (Index s = 0; s < S; ++s) {
        b[s] = model.init_obs(s, y);
        total += b[s];
    }
    if (total > 0.0) {
        for (double& v : b) v /= total;
        return b;
    }
    return {model.init_state_dist().begin(), model.init_state_dist().end()};
}

}  // namespace

AgentStateMachine belief_machine(const PomdpModel& model, Index k, std::size_t cap) {
    if (k == 0) throw ContractError("belief lattice resolution must be at least 1");
    const Index S = model.n_states(), Y = model.n_obs(), A = model.n_actions();
    auto lattice = simplex_lattice(S, k, cap);
    const Index Z = lattice.size();

    std::vector<Index> init(Y);
    for (Index y = 0; y < Y; ++y) init[y] = project_to_lattice(lattice, k, robust_initial(model, y));

    std::vector<Index> update(Z * Y * A);
    for (Index z = 0; z < Z; ++z) {
        const auto b = lattice_point(lattice[z], k);
        for (Index y = 0; y < Y; ++y)
            for (Index a = 0; a < A; ++a)
                update[(z * Y + y) * A + a] = project_to_lattice(lattice, k, robust_update(model, b, a, y));
    }
    AgentStateMachine m(Z, Y, A, std::move(init), std::move(update), "belief" + std::to_string(k),
                        {MachineKind::Belief, k});
    m.lattice_ = std::move(lattice);
    return m;
}

}  // namespace agentpomdp
