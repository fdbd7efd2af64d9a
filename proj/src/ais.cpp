#include "agentpomdp/ais.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>

#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"

namespace agentpomdp {

namespace {

constexpr double kMetricTol = 1e-12;
constexpr double kFlowEps = 1e-15;
constexpr double kBeliefQuantum = 1e-12;

void check_distribution(std::span<const double> nu, Index n, const char* what) {
    if (nu.size() != n) throw ContractError(std::string(what) + " has wrong size");
    double total = 0.0;
    for (double v : nu) {
        if (!(v >= 0.0)) throw ContractError(std::string(what) + " has a negative entry");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError(std::string(what) + " is not normalised");
}

void append_u64(std::string& key, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    key.append(buf, 8);
}

std::string quantized_key(std::span<const double> values, std::uint64_t tag) {
    std::string key;
    append_u64(key, tag);
    for (double v : values) append_u64(key, static_cast<std::uint64_t>(std::llround(v / kBeliefQuantum)));
    return key;
}

}  // namespace

IpmSpec IpmSpec::total_variation(Index size) {
    std::vector<double> metric(size * size, 1.0);
    for (Index i = 0; i < size; ++i) metric[i * size + i] = 0.0;
    return IpmSpec(IpmKind::TotalVariation, size, std::move(metric));
}

IpmSpec IpmSpec::wasserstein(std::vector<double> metric, Index size) {
    if (metric.size() != size * size) throw ContractError("metric table must be size x size");
    for (Index i = 0; i < size; ++i) {
        if (std::abs(metric[i * size + i]) > kMetricTol) throw ContractError("metric must vanish on the diagonal");
        for (Index j = 0; j < size; ++j) {
            const double d = metric[i * size + j];
            if (!std::isfinite(d) || d < 0.0) throw ContractError("metric entries must be finite and nonnegative");
            if (std::abs(d - metric[j * size + i]) > kMetricTol) throw ContractError("metric must be symmetric");
            for (Index k = 0; k < size; ++k)
                if (d > metric[i * size + k] + metric[k * size + j] + kMetricTol)
                    throw ContractError("metric violates the triangle inequality");
        }
    }
    return IpmSpec(IpmKind::Wasserstein, size, std::move(metric));
}

IpmSpec IpmSpec::discrete_wasserstein(Index size) {
    std::vector<double> metric(size * size, 1.0);
    for (Index i = 0; i < size; ++i) metric[i * size + i] = 0.0;
    return wasserstein(std::move(metric), size);
}

double IpmSpec::diameter() const {
    if (kind_ == IpmKind::TotalVariation) return size_ > 1 ? 1.0 : 0.0;
    return metric_.empty() ? 0.0 : *std::max_element(metric_.begin(), metric_.end());
}

double transport_cost(std::span<const double> metric, std::span<const double> nu1, std::span<const double> nu2) {
    const Index n = nu1.size();
    if (nu2.size() != n || metric.size() != n * n) throw ContractError("transport inputs have inconsistent sizes");
    // Mass shared by both sides stays in place at zero cost.
    std::vector<double> supply(n), demand(n);
    for (Index i = 0; i < n; ++i) {
        const double common = std::min(nu1[i], nu2[i]);
        supply[i] = nu1[i] - common;
        demand[i] = nu2[i] - common;
    }

    // Successive shortest paths on source -> supply_i -> demand_j -> sink.
    struct Edge {
        Index to;
        double cap;
        double cost;
    };
    const Index source = 2 * n, sink = 2 * n + 1, nodes = 2 * n + 2;
    std::vector<Edge> edges;
    std::vector<std::vector<Index>> adj(nodes);
    auto add = [&](Index u, Index v, double cap, double cost) {
        adj[u].push_back(edges.size());
        edges.push_back({v, cap, cost});
        adj[v].push_back(edges.size());
        edges.push_back({u, 0.0, -cost});
    };
    for (Index i = 0; i < n; ++i) {
        if (supply[i] > kFlowEps) add(source, i, supply[i], 0.0);
        if (demand[i] > kFlowEps) add(n + i, sink, demand[i], 0.0);
    }
    const double inf_cap = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
        if (supply[i] <= kFlowEps) continue;
        for (Index j = 0; j < n; ++j)
            if (demand[j] > kFlowEps) add(i, n + j, inf_cap, metric[i * n + j]);
    }

    double total = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    for (;;) {
        std::vector<double> dist(nodes, inf);
        std::vector<Index> hops(nodes, 0), via(nodes, static_cast<Index>(-1));
        dist[source] = 0.0;
        for (Index round = 0; round + 1 < nodes; ++round) {
            bool changed = false;
            for (Index u = 0; u < nodes; ++u) {
                if (dist[u] == inf) continue;
                for (Index e : adj[u]) {
                    const Edge& ed = edges[e];
                    if (ed.cap <= kFlowEps) continue;
                    const double nd = dist[u] + ed.cost;
                    const bool better = nd < dist[ed.to] - 1e-15 ||
                                        (std::abs(nd - dist[ed.to]) <= 1e-15 && hops[u] + 1 < hops[ed.to]);
                    if (better) {
                        dist[ed.to] = nd;
                        hops[ed.to] = hops[u] + 1;
                        via[ed.to] = e;
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        if (dist[sink] == inf) break;
        double push = inf;
        for (Index v = sink; v != source; v = edges[via[v] ^ 1].to) push = std::min(push, edges[via[v]].cap);
        if (!(push > kFlowEps)) break;
        for (Index v = sink; v != source; v = edges[via[v] ^ 1].to) {
            edges[via[v]].cap -= push;
            edges[via[v] ^ 1].cap += push;
        }
        total += push * dist[sink];
    }
    return total;
}

double ipm_distance(const IpmSpec& spec, std::span<const double> nu1, std::span<const double> nu2) {
    check_distribution(nu1, spec.size(), "first distribution");
    check_distribution(nu2, spec.size(), "second distribution");
    if (spec.kind() == IpmKind::TotalVariation) {
        double l1 = 0.0;
        for (Index i = 0; i < nu1.size(); ++i) l1 += std::abs(nu1[i] - nu2[i]);
        return 0.5 * l1;
    }
    return transport_cost(spec.metric_table(), nu1, nu2);
}

double minkowski_norm(const IpmSpec& spec, std::span<const double> f) {
    if (f.size() != spec.size()) throw ContractError("function has wrong size");
    if (f.empty()) return 0.0;
    if (spec.kind() == IpmKind::TotalVariation) {
        const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
        return *hi - *lo;
    }
    double lip = 0.0;
    for (Index i = 0; i < f.size(); ++i)
        for (Index j = i + 1; j < f.size(); ++j) {
            const double diff = std::abs(f[i] - f[j]);
            const double d = spec.metric(i, j);
            if (d > 0.0) lip = std::max(lip, diff / d);
            else if (diff > 0.0) return std::numeric_limits<double>::infinity();
        }
    return lip;
}

void AisModel::validate() const {
    const Index Z = n_agent_states, A = n_actions;
    if (p_ais.size() != Z * A * Z || r_ais.size() != Z * A) throw ContractError("AIS tables have wrong size");
    for (Index z = 0; z < Z; ++z)
        for (Index a = 0; a < A; ++a) {
            double total = 0.0;
            for (double p : row(z, a)) {
                if (!(p >= 0.0)) throw ValidationError("AIS transition row has a negative entry");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-12) throw ValidationError("AIS transition row does not sum to 1");
        }
}

bool AisModel::any_unvisited() const { return std::find(unvisited.begin(), unvisited.end(), true) != unvisited.end(); }

namespace {

/// Merged history node: agent state and posterior over S.
struct HistoryNode {
    Index z;
    std::vector<double> belief;
};

/// Nodes reachable with positive probability at depths 1..T, merged by (z, belief).
/// `visit(depth, node)` is called once per merged node.
template <class Visit>
std::size_t walk_histories(const PomdpModel& model, const AgentStateMachine& machine, std::size_t horizon,
                           std::size_t cap, Visit&& visit) {
    machine.check_compatible(model);
    const Index S = model.n_states(), A = model.n_actions(), Y = model.n_obs();
    std::vector<HistoryNode> layer;
    std::unordered_map<std::string, Index> seen;
    std::size_t total = 0;
    auto push = [&](std::vector<HistoryNode>& into, Index z, std::vector<double> b) {
        auto key = quantized_key(b, z);
        if (seen.emplace(std::move(key), into.size()).second) {
            if (++total > cap)
                throw CapacityError("history enumeration exceeded " + std::to_string(cap) + " nodes");
            into.push_back({z, std::move(b)});
        }
    };
    for (Index y = 0; y < Y; ++y)
        if (initial_obs_probability(model, y) > 0.0) push(layer, machine.init_unchecked(y), initial_belief(model, y));

    for (std::size_t depth = 1; depth <= horizon && !layer.empty(); ++depth) {
        for (const auto& node : layer) visit(depth, node);
        if (depth == horizon) break;
        std::vector<HistoryNode> next;
        seen.clear();
        for (const auto& node : layer)
            for (Index a = 0; a < A; ++a)
                for (Index y = 0; y < Y; ++y) {
                    double py = 0.0;
                    for (Index s = 0; s < S; ++s)
                        if (node.belief[s] != 0.0)
                            for (Index sn = 0; sn < S; ++sn) py += node.belief[s] * model.kernel(s, a, sn, y);
                    if (!(py > 0.0)) continue;
                    push(next, machine.update_unchecked(node.z, y, a), belief_update(model, node.belief, a, y));
                }
        layer = std::move(next);
    }
    return total;
}

/// Pr(Z' | b, z, a) and Pr(Y' | b, a).
void predict(const PomdpModel& model, const AgentStateMachine& machine, const HistoryNode& node, Index a,
             std::vector<double>& z_next, std::vector<double>& y_next) {
    const Index S = model.n_states(), Y = model.n_obs();
    std::fill(z_next.begin(), z_next.end(), 0.0);
    std::fill(y_next.begin(), y_next.end(), 0.0);
    for (Index s = 0; s < S; ++s) {
        const double w = node.belief[s];
        if (w == 0.0) continue;
        const auto row = model.kernel_row(s, a);
        for (Index sn = 0; sn < S; ++sn)
            for (Index y = 0; y < Y; ++y) y_next[y] += w * row[sn * Y + y];
    }
    for (Index y = 0; y < Y; ++y) z_next[machine.update_unchecked(node.z, y, a)] += y_next[y];
}

double expected_reward(const PomdpModel& model, const std::vector<double>& belief, Index a) {
    double r = 0.0;
    for (Index s = 0; s < belief.size(); ++s) r += belief[s] * model.reward(s, a);
    return r;
}

/// max over pairs of 0.5 ||p_i - p_j||_1.
double max_pairwise_tv(const std::vector<std::vector<double>>& dists) {
    if (dists.size() < 2) return 0.0;
    const Index n = dists.front().size(), k = dists.size();
    // TV(p, q) = max_B p(B) - q(B); over a family, max_B [max_i p_i(B) - min_i p_i(B)].
    const bool use_subsets = n < 20 && (std::size_t{1} << n) < k;
    double best = 0.0;
    if (use_subsets) {
        for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
            double hi = -1.0, lo = 2.0;
            for (const auto& p : dists) {
                double m = 0.0;
                for (Index i = 0; i < n; ++i)
                    if (mask >> i & 1U) m += p[i];
                hi = std::max(hi, m);
                lo = std::min(lo, m);
            }
            best = std::max(best, hi - lo);
        }
        return best;
    }
    for (Index i = 0; i < k; ++i)
        for (Index j = i + 1; j < k; ++j) {
            double l1 = 0.0;
            for (Index c = 0; c < n; ++c) l1 += std::abs(dists[i][c] - dists[j][c]);
            best = std::max(best, 0.5 * l1);
        }
    return best;
}

}  // namespace

InfoStateReport check_information_state(const PomdpModel& model, const AgentStateMachine& machine, std::size_t horizon,
                                        double tol, std::size_t history_cap) {
    const Index Z = machine.n_agent_states(), A = model.n_actions(), Y = model.n_obs();
    struct Group {
        double r_lo = std::numeric_limits<double>::infinity();
        double r_hi = -std::numeric_limits<double>::infinity();
        std::map<std::string, std::vector<double>> z_dists, y_dists;
    };
    std::vector<Group> groups(Z * A);
    std::vector<double> z_next(Z), y_next(Y);
    InfoStateReport report;
    report.histories = walk_histories(model, machine, horizon, history_cap, [&](std::size_t, const HistoryNode& node) {
        for (Index a = 0; a < A; ++a) {
            auto& g = groups[node.z * A + a];
            const double r = expected_reward(model, node.belief, a);
            g.r_lo = std::min(g.r_lo, r);
            g.r_hi = std::max(g.r_hi, r);
            predict(model, machine, node, a, z_next, y_next);
            g.z_dists.emplace(quantized_key(z_next, 0), z_next);
            g.y_dists.emplace(quantized_key(y_next, 0), y_next);
        }
    });
    for (const auto& g : groups) {
        if (g.r_hi < g.r_lo) continue;
        report.p1_residual = std::max(report.p1_residual, g.r_hi - g.r_lo);
        std::vector<std::vector<double>> zd, yd;
        for (const auto& [k, v] : g.z_dists) zd.push_back(v);
        for (const auto& [k, v] : g.y_dists) yd.push_back(v);
        report.p2_residual = std::max(report.p2_residual, max_pairwise_tv(zd));
        report.p2b_residual = std::max(report.p2b_residual, max_pairwise_tv(yd));
    }
    report.is_info_state = report.p1_residual <= tol && report.p2_residual <= tol && report.p2b_residual <= tol;
    return report;
}

AisSolution solve_ais_dp(const AisModel& ais, double gamma, double tol) {
    ais.validate();
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("discount must lie in [0, 1)");
    const Index Z = ais.n_agent_states, A = ais.n_actions;
    AisSolution sol;
    sol.v.assign(Z, 0.0);
    sol.q.assign(Z * A, 0.0);
    const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / (2.0 * gamma) : std::numeric_limits<double>::infinity();
    for (;;) {
        ++sol.iterations;
        double change = 0.0;
        std::vector<double> v_new(Z, -std::numeric_limits<double>::infinity());
        for (Index z = 0; z < Z; ++z)
            for (Index a = 0; a < A; ++a) {
                double q = ais.r(z, a);
                for (Index zn = 0; zn < Z; ++zn) q += gamma * ais.p(z, a, zn) * sol.v[zn];
                sol.q[z * A + a] = q;
                v_new[z] = std::max(v_new[z], q);
            }
        for (Index z = 0; z < Z; ++z) change = std::max(change, std::abs(v_new[z] - sol.v[z]));
        sol.v = std::move(v_new);
        if (change <= stop || sol.iterations > 100'000'000) break;
    }
    // Q consistent with the final V.
    std::vector<Index> actions(Z, 0);
    for (Index z = 0; z < Z; ++z) {
        for (Index a = 0; a < A; ++a) {
            double q = ais.r(z, a);
            for (Index zn = 0; zn < Z; ++zn) q += gamma * ais.p(z, a, zn) * sol.v[zn];
            sol.q[z * A + a] = q;
        }
        for (Index a = 1; a < A; ++a)
            if (sol.q[z * A + a] > sol.q[z * A + actions[z]]) actions[z] = a;
    }
    sol.policy = DecisionRule::deterministic(std::move(actions), A);
    return sol;
}

double suboptimality_bound(const AisLossReport& report, const IpmSpec& spec, std::span<const double> v_ais,
                           double gamma) {
    const double rho = report.delta > 0.0 ? minkowski_norm(spec, v_ais) : 0.0;
    return 2.0 / (1.0 - gamma) * (report.eps + gamma * report.delta * rho);
}

AisLossReport compute_ais_losses(const PomdpModel& model, const AgentStateMachine& machine, const AisModel& ais,
                                 const IpmSpec& spec, std::size_t horizon, std::size_t history_cap) {
    ais.validate();
    const Index Z = machine.n_agent_states(), A = model.n_actions(), S = model.n_states(), Y = model.n_obs();
    if (ais.n_agent_states != Z || ais.n_actions != A) throw ContractError("AIS dimensions do not match the machine");
    if (spec.size() != Z) throw ContractError("IPM space must be the agent-state space");
    const double gamma = model.gamma();

    AisLossReport rep;
    rep.gamma = gamma;
    rep.eps_t.assign(horizon, 0.0);
    rep.delta_t.assign(horizon, 0.0);
    std::vector<double> z_next(Z), y_next(Y);
    walk_histories(model, machine, horizon, history_cap, [&](std::size_t depth, const HistoryNode& node) {
        for (Index a = 0; a < A; ++a) {
            const double e = std::abs(expected_reward(model, node.belief, a) - ais.r(node.z, a));
            rep.eps_t[depth - 1] = std::max(rep.eps_t[depth - 1], e);
            predict(model, machine, node, a, z_next, y_next);
            const double d = ipm_distance(spec, z_next, ais.row(node.z, a));
            rep.delta_t[depth - 1] = std::max(rep.delta_t[depth - 1], d);
        }
    });

    // Tail terms range over (s, z) pairs reachable under any action sequence. Beliefs beyond the horizon are
    // supported on these pairs, and the IPM is convex, so the per-state maxima bound every later step.
    std::vector<char> reach(S * Z, 0);
    std::vector<Index> frontier;
    for (Index s = 0; s < S; ++s)
        if (model.init_state(s) > 0.0)
            for (Index y = 0; y < Y; ++y)
                if (model.init_obs(s, y) > 0.0 && !reach[s * Z + machine.init_unchecked(y)]) {
                    reach[s * Z + machine.init_unchecked(y)] = 1;
                    frontier.push_back(s * Z + machine.init_unchecked(y));
                }
    while (!frontier.empty()) {
        const Index node = frontier.back();
        frontier.pop_back();
        const Index s = node / Z, z = node % Z;
        for (Index a = 0; a < A; ++a)
            for (Index sn = 0; sn < S; ++sn)
                for (Index y = 0; y < Y; ++y) {
                    if (model.kernel(s, a, sn, y) <= 0.0) continue;
                    const Index next = sn * Z + machine.update_unchecked(z, y, a);
                    if (!reach[next]) {
                        reach[next] = 1;
                        frontier.push_back(next);
                    }
                }
    }
    for (Index s = 0; s < S; ++s)
        for (Index z = 0; z < Z; ++z) {
            if (!reach[s * Z + z]) continue;
            for (Index a = 0; a < A; ++a) {
                rep.eps_tail = std::max(rep.eps_tail, std::abs(model.reward(s, a) - ais.r(z, a)));
                std::fill(z_next.begin(), z_next.end(), 0.0);
                for (Index sn = 0; sn < S; ++sn)
                    for (Index y = 0; y < Y; ++y) z_next[machine.update_unchecked(z, y, a)] += model.kernel(s, a, sn, y);
                rep.delta_tail = std::max(rep.delta_tail, ipm_distance(spec, z_next, ais.row(z, a)));
            }
        }

    double discount = 1.0, eps = 0.0, delta = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        eps += discount * rep.eps_t[t];
        delta += discount * rep.delta_t[t];
        discount *= gamma;
    }
    eps += discount / (1.0 - gamma) * rep.eps_tail;
    delta += discount / (1.0 - gamma) * rep.delta_tail;
    rep.eps = (1.0 - gamma) * eps;
    rep.delta = (1.0 - gamma) * delta;

    const AisSolution sol = solve_ais_dp(ais, gamma);
    rep.bound = suboptimality_bound(rep, spec, sol.v, gamma);
    return rep;
}

AisModel fit_ais(const PomdpModel& model, const AgentStateMachine& machine, const DecisionRule& mu, std::size_t cap) {
    const StationaryDist zeta = stationary_dist(model, machine, mu, cap);
    const Index S = model.n_states(), Z = machine.n_agent_states(), A = model.n_actions(), Y = model.n_obs();
    AisModel ais;
    ais.n_agent_states = Z;
    ais.n_actions = A;
    ais.p_ais.assign(Z * A * Z, 0.0);
    ais.r_ais.assign(Z * A, 0.0);
    ais.unvisited.assign(Z * A, false);
    for (Index z = 0; z < Z; ++z)
        for (Index a = 0; a < A; ++a) {
            if (!(zeta.mass(z, a) > 0.0)) {
                ais.unvisited[z * A + a] = true;
                for (Index zn = 0; zn < Z; ++zn) ais.p_ais[(z * A + a) * Z + zn] = 1.0 / static_cast<double>(Z);
                continue;
            }
            const auto cond = zeta.state_given(z, a);
            double r = 0.0;
            for (Index s = 0; s < S; ++s) {
                if (cond[s] == 0.0) continue;
                r += cond[s] * model.reward(s, a);
                const auto row = model.kernel_row(s, a);
                for (Index sn = 0; sn < S; ++sn)
                    for (Index y = 0; y < Y; ++y)
                        ais.p_ais[(z * A + a) * Z + machine.update_unchecked(z, y, a)] += cond[s] * row[sn * Y + y];
            }
            ais.r_ais[z * A + a] = r;
            // Remove rounding drift so the row passes the 1e-12 normalisation check.
            double total = 0.0;
            for (Index zn = 0; zn < Z; ++zn) total += ais.p_ais[(z * A + a) * Z + zn];
            for (Index zn = 0; zn < Z; ++zn) ais.p_ais[(z * A + a) * Z + zn] /= total;
        }
    return ais;
}

void write_ais_report_csv(std::ostream& out, const AisLossReport& report) {
    out << "t,eps_t,delta_t\n";
    char buf[96];
    for (std::size_t t = 0; t < report.eps_t.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t + 1, report.eps_t[t], report.delta_t[t]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "tail,%.17g,%.17g\n", report.eps_tail, report.delta_tail);
    out << buf;
    std::snprintf(buf, sizeof buf, "aggregate,%.17g,%.17g\n", report.eps, report.delta);
    out << buf;
    std::snprintf(buf, sizeof buf, "bound,%.17g,\n", report.bound);
    out << buf;
}

}  // namespace agentpomdp
