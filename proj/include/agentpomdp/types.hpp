#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace agentpomdp {

using Index = std::size_t;
using Rng = std::mt19937_64;

/// Closed interval [lo, hi] certified to contain some quantity.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double mid() const { return 0.5 * (lo + hi); }
    double width() const { return hi - lo; }
    double radius() const { return 0.5 * (hi - lo); }
    bool contains(double x, double slack = 0.0) const { return x >= lo - slack && x <= hi + slack; }
};

/// Capacity limits shared by the enumerating algorithms.
struct Caps {
    std::size_t agent_states = 1'000'000;
    std::size_t product_states = 1'000'000;
    std::size_t stationary_rules = 1'000'000;
    std::size_t designer_rules = 4096;
    std::size_t search_nodes = 5'000'000;
    std::size_t histories = 1'000'000;
    std::size_t belief_nodes = 1'000'000;
    std::size_t grid_points = 2'000'000;

    /// All caps set to AGENTPOMDP_CAP when the variable is set and parses as a positive integer.
    static Caps from_env();
    static Caps uniform(std::size_t value);
};

}  // namespace agentpomdp
