#include "agentpomdp/exact_eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "agentpomdp/errors.hpp"

namespace agentpomdp {

namespace {

constexpr Index kDirectSolveLimit = 2000;
constexpr Index kDenseStationaryLimit = 4000;

}  // namespace

ProductChain::ProductChain(const PomdpModel& model, const AgentStateMachine& machine, std::size_t cap)
    : n_s_(model.n_states()), n_z_(machine.n_agent_states()), n_a_(model.n_actions()) {
    machine.check_compatible(model);
    if (n_z_ != 0 && n_s_ > cap / n_z_) {
        throw CapacityError("product chain |S||Z| = " + std::to_string(n_s_) + "*" + std::to_string(n_z_) +
                            " exceeds cap of " + std::to_string(cap));
    }
    const Index Y = model.n_obs();
    offsets_.reserve(n_s_ * n_z_ * n_a_ + 1);
    offsets_.push_back(0);
    std::vector<double> scratch(n_s_ * n_z_, 0.0);
    std::vector<Index> touched;
    for (Index s = 0; s < n_s_; ++s) {
        for (Index z = 0; z < n_z_; ++z) {
            for (Index a = 0; a < n_a_; ++a) {
                const auto row = model.kernel_row(s, a);
                for (Index sn = 0; sn < n_s_; ++sn) {
                    for (Index y = 0; y < Y; ++y) {
                        const double p = row[sn * Y + y];
                        if (p == 0.0) continue;
                        const Index next = sn * n_z_ + machine.update_unchecked(z, y, a);
                        if (scratch[next] == 0.0) touched.push_back(next);
                        scratch[next] += p;
                    }
                }
                std::sort(touched.begin(), touched.end());
                for (Index next : touched) {
                    entries_.push_back({next, scratch[next]});
                    scratch[next] = 0.0;
                }
                touched.clear();
                offsets_.push_back(entries_.size());
            }
        }
    }
    reward_.resize(n_s_ * n_a_);
    for (Index s = 0; s < n_s_; ++s)
        for (Index a = 0; a < n_a_; ++a) reward_[s * n_a_ + a] = model.reward(s, a);
}

double ProductChain::prob(Index s, Index z, Index a, Index s_next, Index z_next) const {
    const Index target = s_next * n_z_ + z_next;
    for (const auto& e : row(s, z, a))
        if (e.next == target) return e.prob;
    return 0.0;
}

JointXi xi_init(const PomdpModel& model, const AgentStateMachine& machine) {
    machine.check_compatible(model);
    const Index Z = machine.n_agent_states();
    JointXi xi(model.n_states() * Z, 0.0);
    for (Index s = 0; s < model.n_states(); ++s) {
        const double ps = model.init_state(s);
        if (ps == 0.0) continue;
        for (Index y = 0; y < model.n_obs(); ++y) xi[s * Z + machine.init_unchecked(y)] += ps * model.init_obs(s, y);
    }
    return xi;
}

EvalBundle policy_evaluate(const ProductChain& chain, const DecisionRule& rule, const JointXi& xi1, double gamma,
                           double tol) {
    const Index S = chain.n_states(), Z = chain.n_agent_states(), A = chain.n_actions(), n = chain.size();
    if (rule.n_agent_states() != Z || rule.n_actions() != A) throw ContractError("decision rule dimensions do not match the chain");
    if (xi1.size() != n) throw ContractError("initial joint distribution has wrong size");

    std::vector<double> r_pi(n, 0.0);
    for (Index s = 0; s < S; ++s)
        for (Index z = 0; z < Z; ++z)
            for (Index a = 0; a < A; ++a) r_pi[s * Z + z] += rule.prob(z, a) * chain.reward(s, a);

    // Visit the policy-averaged transitions of product state i.
    auto for_each_transition = [&](Index i, auto&& fn) {
        const Index s = i / Z, z = i % Z;
        for (Index a = 0; a < A; ++a) {
            const double pa = rule.prob(z, a);
            if (pa == 0.0) continue;
            for (const auto& e : chain.row(s, z, a)) fn(e.next, pa * e.prob);
        }
    };

    std::vector<double> V(n, 0.0), d_sz(n, 0.0);
    if (n <= kDirectSolveLimit) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (Index i = 0; i < n; ++i)
            for_each_transition(i, [&](Index j, double p) {
                M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -= gamma * p;
            });
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
        const Eigen::VectorXd v = lu.solve(Eigen::Map<const Eigen::VectorXd>(r_pi.data(), static_cast<Eigen::Index>(n)));
        const Eigen::VectorXd d =
            lu.transpose().solve(Eigen::Map<const Eigen::VectorXd>(xi1.data(), static_cast<Eigen::Index>(n)));
        for (Index i = 0; i < n; ++i) {
            V[i] = v(static_cast<Eigen::Index>(i));
            d_sz[i] = d(static_cast<Eigen::Index>(i));
        }
    } else {
        // Successive approximation; the error after a step of size delta is at most gamma delta / (1 - gamma).
        const double stop = tol * (1.0 - gamma) / gamma;
        std::vector<double> next(n);
        for (;;) {
            double delta = 0.0;
            for (Index i = 0; i < n; ++i) {
                double acc = r_pi[i];
                for_each_transition(i, [&](Index j, double p) { acc += gamma * p * V[j]; });
                delta = std::max(delta, std::abs(acc - V[i]));
                next[i] = acc;
            }
            V.swap(next);
            if (delta <= stop) break;
        }
        d_sz = xi1;
        for (;;) {
            std::fill(next.begin(), next.end(), 0.0);
            for (Index i = 0; i < n; ++i) {
                if (d_sz[i] == 0.0) continue;
                for_each_transition(i, [&](Index j, double p) { next[j] += gamma * p * d_sz[i]; });
            }
            double delta = 0.0;
            for (Index i = 0; i < n; ++i) {
                next[i] += xi1[i];
                delta += std::abs(next[i] - d_sz[i]);
            }
            d_sz.swap(next);
            if (delta <= stop) break;
        }
    }

    EvalBundle out;
    out.n_states = S;
    out.n_agent_states = Z;
    out.n_actions = A;
    out.value = V;
    out.q.assign(n * A, 0.0);
    out.occupancy.assign(n * A, 0.0);
    for (Index s = 0; s < S; ++s) {
        for (Index z = 0; z < Z; ++z) {
            const Index i = s * Z + z;
            for (Index a = 0; a < A; ++a) {
                double acc = 0.0;
                for (const auto& e : chain.row(s, z, a)) acc += e.prob * V[e.next];
                out.q[i * A + a] = chain.reward(s, a) + gamma * acc;
                out.occupancy[i * A + a] = d_sz[i] * rule.prob(z, a);
            }
        }
    }
    out.performance = std::inner_product(xi1.begin(), xi1.end(), V.begin(), 0.0);
    return out;
}

EvalBundle policy_evaluate(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule) {
    const ProductChain chain(model, machine);
    return policy_evaluate(chain, rule, xi_init(model, machine), model.gamma());
}

void write_eval_csv(std::ostream& out, const EvalBundle& b) {
    out << "s,z,a,V,Q,d\n";
    char buf[160];
    for (Index s = 0; s < b.n_states; ++s)
        for (Index z = 0; z < b.n_agent_states; ++z)
            for (Index a = 0; a < b.n_actions; ++a) {
                std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g\n", s, z, a, b.V(s, z), b.Q(s, z, a),
                              b.d(s, z, a));
                out << buf;
            }
}

JointXi xi_update(const PomdpModel& model, const AgentStateMachine& machine, const JointXi& xi,
                  const DecisionRule& rule) {
    const Index S = model.n_states(), Z = machine.n_agent_states(), A = model.n_actions(), Y = model.n_obs();
    if (xi.size() != S * Z) throw ContractError("joint distribution has wrong size");
    JointXi next(S * Z, 0.0);
    for (Index s = 0; s < S; ++s) {
        for (Index z = 0; z < Z; ++z) {
            const double w = xi[s * Z + z];
            if (w == 0.0) continue;
            for (Index a = 0; a < A; ++a) {
                const double wa = w * rule.prob(z, a);
                if (wa == 0.0) continue;
                const auto row = model.kernel_row(s, a);
                for (Index sn = 0; sn < S; ++sn)
                    for (Index y = 0; y < Y; ++y) {
                        const double p = row[sn * Y + y];
                        if (p != 0.0) next[sn * Z + machine.update_unchecked(z, y, a)] += wa * p;
                    }
            }
        }
    }
    return next;
}

double xi_reward(const PomdpModel& model, const JointXi& xi, Index n_agent_states, const DecisionRule& rule) {
    const Index S = model.n_states(), Z = n_agent_states, A = model.n_actions();
    if (xi.size() != S * Z) throw ContractError("joint distribution has wrong size");
    double total = 0.0;
    for (Index s = 0; s < S; ++s)
        for (Index z = 0; z < Z; ++z) {
            const double w = xi[s * Z + z];
            if (w == 0.0) continue;
            for (Index a = 0; a < A; ++a) total += w * rule.prob(z, a) * model.reward(s, a);
        }
    return total;
}

PerformanceResult performance(const PomdpModel& model, const AgentStateMachine& machine, const Policy& policy) {
    const ProductChain chain(model, machine);
    JointXi xi = xi_init(model, machine);
    const double gamma = model.gamma();
    double value = 0.0, discount = 1.0;
    for (const auto& rule : policy.rules()) {
        value += discount * xi_reward(model, xi, machine.n_agent_states(), rule);
        xi = xi_update(model, machine, xi, rule);
        discount *= gamma;
    }
    value += discount * policy_evaluate(chain, policy.tail(), xi, gamma).performance;
    return {value, 0.0};
}

std::size_t horizon_for_tail(double gamma, double scale, double tol) {
    if (scale <= 0.0) return 0;
    std::size_t T = 0;
    double tail = scale / (1.0 - gamma);
    while (tail > tol) {
        tail *= gamma;
        ++T;
    }
    return T;
}

PerformanceResult rollout_performance(const PomdpModel& model, const AgentStateMachine& machine, const Policy& policy,
                                      double horizon_tol) {
    const double gamma = model.gamma();
    const std::size_t T = horizon_for_tail(gamma, model.r_max(), horizon_tol);
    JointXi xi = xi_init(model, machine);
    double value = 0.0, discount = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
        const auto& rule = policy.rule_at(t);
        value += discount * xi_reward(model, xi, machine.n_agent_states(), rule);
        xi = xi_update(model, machine, xi, rule);
        discount *= gamma;
    }
    const double lo = value + discount * model.reward_min() / (1.0 - gamma);
    const double hi = value + discount * model.reward_max() / (1.0 - gamma);
    return {0.5 * (lo + hi), 0.5 * (hi - lo)};
}

double StationaryDist::mass(Index z, Index a) const {
    double total = 0.0;
    for (Index s = 0; s < n_states; ++s)
        for (Index y = 0; y < n_obs; ++y) total += at(s, y, z, a);
    return total;
}

std::vector<double> StationaryDist::state_given(Index z, Index a) const {
    std::vector<double> out(n_states, 0.0);
    double total = 0.0;
    for (Index s = 0; s < n_states; ++s) {
        for (Index y = 0; y < n_obs; ++y) out[s] += at(s, y, z, a);
        total += out[s];
    }
    if (!(total > 0.0)) {
        throw ZeroVisitError("agent state " + std::to_string(z) + " with action " + std::to_string(a) +
                             " has zero stationary mass");
    }
    for (double& v : out) v /= total;
    return out;
}

namespace {

struct SparseGraph {
    std::vector<Index> offsets;
    std::vector<Index> targets;
    std::vector<double> probs;
};

// Iterative Tarjan over the nodes flagged in `active`; returns the component id per node.
std::vector<Index> strongly_connected(const SparseGraph& g, const std::vector<char>& active, Index& n_components) {
    const Index n = g.offsets.size() - 1;
    constexpr Index kUnset = static_cast<Index>(-1);
    std::vector<Index> index(n, kUnset), low(n, 0), comp(n, kUnset);
    std::vector<char> on_stack(n, 0);
    std::vector<Index> stack;
    std::vector<std::pair<Index, Index>> call;
    Index counter = 0;
    n_components = 0;
    for (Index root = 0; root < n; ++root) {
        if (!active[root] || index[root] != kUnset) continue;
        call.push_back({root, g.offsets[root]});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& [v, edge] = call.back();
            if (edge < g.offsets[v + 1]) {
                const Index w = g.targets[edge++];
                if (!active[w]) continue;
                if (index[w] == kUnset) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, g.offsets[w]});
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
            } else {
                const Index done = v;
                call.pop_back();
                if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
                if (low[done] == index[done]) {
                    Index w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = n_components;
                    } while (w != done);
                    ++n_components;
                }
            }
        }
    }
    return comp;
}

}  // namespace

StationaryDist stationary_dist(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& rule,
                               std::size_t cap) {
    machine.check_compatible(model);
    const Index S = model.n_states(), Y = model.n_obs(), Z = machine.n_agent_states(), A = model.n_actions();
    if (rule.n_agent_states() != Z || rule.n_actions() != A) throw ContractError("decision rule dimensions do not match");
    const std::size_t n = S * Y * Z * A;
    if (n > cap) throw CapacityError("extended chain (s,y,z,a) size " + std::to_string(n) + " exceeds cap");

    StationaryDist out;
    out.n_states = S;
    out.n_obs = Y;
    out.n_agent_states = Z;
    out.n_actions = A;
    auto idx = [&](Index s, Index y, Index z, Index a) { return ((s * Y + y) * Z + z) * A + a; };

    SparseGraph g;
    g.offsets.reserve(n + 1);
    g.offsets.push_back(0);
    for (Index s = 0; s < S; ++s)
        for (Index y = 0; y < Y; ++y)
            for (Index z = 0; z < Z; ++z)
                for (Index a = 0; a < A; ++a) {
                    const auto row = model.kernel_row(s, a);
                    for (Index sn = 0; sn < S; ++sn)
                        for (Index yn = 0; yn < Y; ++yn) {
                            const double p = row[sn * Y + yn];
                            if (p == 0.0) continue;
                            const Index zn = machine.update_unchecked(z, yn, a);
                            for (Index an = 0; an < A; ++an) {
                                const double q = rule.prob(zn, an);
                                if (q == 0.0) continue;
                                g.targets.push_back(idx(sn, yn, zn, an));
                                g.probs.push_back(p * q);
                            }
                        }
                    g.offsets.push_back(g.targets.size());
                }

    std::vector<double> init(n, 0.0);
    for (Index s = 0; s < S; ++s)
        for (Index y = 0; y < Y; ++y) {
            const double w = model.init_state(s) * model.init_obs(s, y);
            if (w == 0.0) continue;
            const Index z = machine.init_unchecked(y);
            for (Index a = 0; a < A; ++a) init[idx(s, y, z, a)] += w * rule.prob(z, a);
        }

    std::vector<char> reachable(n, 0);
    std::vector<Index> frontier;
    for (Index i = 0; i < n; ++i)
        if (init[i] > 0.0) {
            reachable[i] = 1;
            frontier.push_back(i);
        }
    while (!frontier.empty()) {
        const Index v = frontier.back();
        frontier.pop_back();
        for (Index e = g.offsets[v]; e < g.offsets[v + 1]; ++e)
            if (!reachable[g.targets[e]]) {
                reachable[g.targets[e]] = 1;
                frontier.push_back(g.targets[e]);
            }
    }

    Index n_comp = 0;
    const auto comp = strongly_connected(g, reachable, n_comp);
    std::vector<char> closed(n_comp, 1);
    for (Index v = 0; v < n; ++v) {
        if (!reachable[v]) continue;
        for (Index e = g.offsets[v]; e < g.offsets[v + 1]; ++e)
            if (comp[g.targets[e]] != comp[v]) closed[comp[v]] = 0;
    }
    std::vector<Index> closed_ids;
    for (Index c = 0; c < n_comp; ++c)
        if (closed[c]) closed_ids.push_back(c);
    if (closed_ids.size() != 1) {
        std::ostringstream msg;
        msg << closed_ids.size() << " closed classes reachable from the initial distribution:";
        for (Index c : closed_ids) {
            msg << " {";
            Index shown = 0;
            for (Index v = 0; v < n && shown < 4; ++v)
                if (reachable[v] && comp[v] == c) {
                    const Index a = v % A, z = (v / A) % Z, y = (v / (A * Z)) % Y, s = v / (A * Z * Y);
                    msg << (shown++ ? " " : "") << "(s=" << s << ",y=" << y << ",z=" << z << ",a=" << a << ")";
                }
            msg << "}";
        }
        throw AmbiguityError(msg.str());
    }

    const Index cls = closed_ids.front();
    std::vector<Index> members, local(n, 0);
    Index reachable_count = 0;
    for (Index v = 0; v < n; ++v) {
        if (!reachable[v]) continue;
        ++reachable_count;
        if (comp[v] == cls) {
            local[v] = members.size();
            members.push_back(v);
        }
    }
    const Index m = members.size();
    out.class_size = m;
    out.irreducible = reachable_count == m;

    // Period: gcd of level differences along intra-class edges of a BFS tree.
    {
        constexpr Index kUnset = static_cast<Index>(-1);
        std::vector<Index> level(m, kUnset);
        std::vector<Index> queue{0};
        level[0] = 0;
        for (Index head = 0; head < queue.size(); ++head) {
            const Index u = members[queue[head]];
            for (Index e = g.offsets[u]; e < g.offsets[u + 1]; ++e) {
                const Index w = local[g.targets[e]];
                if (level[w] == kUnset) {
                    level[w] = level[queue[head]] + 1;
                    queue.push_back(w);
                }
            }
        }
        Index period = 0;
        for (Index i = 0; i < m; ++i) {
            const Index u = members[i];
            for (Index e = g.offsets[u]; e < g.offsets[u + 1]; ++e) {
                const Index j = local[g.targets[e]];
                const long long diff = static_cast<long long>(level[i]) + 1 - static_cast<long long>(level[j]);
                period = std::gcd(period, static_cast<Index>(diff < 0 ? -diff : diff));
            }
        }
        out.period = period == 0 ? 1 : period;
        out.aperiodic = out.period == 1;
        out.a1_violated = !out.aperiodic;
    }

    std::vector<double> pi(m, 0.0);
    if (m <= kDenseStationaryLimit) {
        // zeta (P - I) = 0 with one balance equation replaced by normalisation.
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (Index i = 0; i < m; ++i) {
            const Index u = members[i];
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) -= 1.0;
            for (Index e = g.offsets[u]; e < g.offsets[u + 1]; ++e)
                M(static_cast<Eigen::Index>(local[g.targets[e]]), static_cast<Eigen::Index>(i)) += g.probs[e];
        }
        M.row(static_cast<Eigen::Index>(m - 1)).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        rhs(static_cast<Eigen::Index>(m - 1)) = 1.0;
        const Eigen::VectorXd sol = M.partialPivLu().solve(rhs);
        for (Index i = 0; i < m; ++i) pi[i] = std::max(0.0, sol(static_cast<Eigen::Index>(i)));
    } else {
        // Lazy chain (I + P) / 2 has the same invariant law and is aperiodic.
        std::fill(pi.begin(), pi.end(), 1.0 / static_cast<double>(m));
        std::vector<double> next(m);
        for (int it = 0; it < 1'000'000; ++it) {
            for (Index i = 0; i < m; ++i) next[i] = 0.5 * pi[i];
            for (Index i = 0; i < m; ++i) {
                const Index u = members[i];
                for (Index e = g.offsets[u]; e < g.offsets[u + 1]; ++e) next[local[g.targets[e]]] += 0.5 * pi[i] * g.probs[e];
            }
            double delta = 0.0;
            for (Index i = 0; i < m; ++i) delta += std::abs(next[i] - pi[i]);
            pi.swap(next);
            if (delta < 1e-14) break;
        }
    }
    const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
    out.zeta.assign(n, 0.0);
    for (Index i = 0; i < m; ++i) out.zeta[members[i]] = pi[i] / total;

    std::vector<double> moved(n, 0.0);
    for (Index v = 0; v < n; ++v) {
        if (out.zeta[v] == 0.0) continue;
        for (Index e = g.offsets[v]; e < g.offsets[v + 1]; ++e) moved[g.targets[e]] += out.zeta[v] * g.probs[e];
    }
    for (Index v = 0; v < n; ++v) out.residual_l1 += std::abs(moved[v] - out.zeta[v]);
    return out;
}

MonteCarloEstimate monte_carlo_J(const PomdpModel& model, const AgentStateMachine& machine, const Policy& policy,
                                 std::size_t episodes, std::size_t horizon, Rng& rng) {
    machine.check_compatible(model);
    if (episodes < 2) throw ContractError("monte_carlo_J needs at least two episodes");
    const double gamma = model.gamma();
    double mean = 0.0, m2 = 0.0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        auto [s, y] = sample_initial(model, rng);
        Index z = machine.init_unchecked(y);
        double ret = 0.0, discount = 1.0;
        for (std::size_t t = 1; t <= horizon; ++t) {
            const Index a = sample_categorical(policy.rule_at(t).row(z), rng);
            const auto step = sample_step(model, s, a, rng);
            ret += discount * step.reward;
            discount *= gamma;
            s = step.next_state;
            z = machine.update_unchecked(z, step.next_obs, a);
        }
        const double delta = ret - mean;
        mean += delta / static_cast<double>(ep + 1);
        m2 += delta * (ret - mean);
    }
    const double var = m2 / static_cast<double>(episodes - 1);
    return {mean, 1.96 * std::sqrt(var / static_cast<double>(episodes))};
}

}  // namespace agentpomdp
