#pragma once

#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"

namespace agentpomdp::benchmarks {

/// Three-state, blind, two-action model where the best stationary policy randomizes.
/// Action 0: 0 -> 0, 1 -> {0, 2} w.p. 1/2, 2 -> 2; rewards (-1, 0, 2).
/// Action 1: 0 -> {0, 1}, 1 -> 1, 2 -> {2, 1} w.p. 1/2; reward -0.5 everywhere.
PomdpModel blind_randomization_model(double gamma = 0.9);

/// Smallest N with gamma^N r_max / (1 - gamma) < tail_tol for the counting chain.
Index counting_chain_length(double gamma, double tail_tol = 1e-8);

/// Counting chain on states 1..N (index 0..N-1) started at 1. In states
/// n(n+1)/2 + 1 (n >= 0) action 0 is "correct", elsewhere action 1 is. A correct action
/// pays +1 and moves right, a wrong one pays -1 and resets to 1; moving right from N
/// also resets to 1. The observation is the parity of the 1-based state index.
PomdpModel counting_chain_model(double gamma = 0.9, Index n_states = 0);

/// Whether 1-based state `state` is of the "action 0 is correct" kind.
bool counting_chain_prefers_zero(Index state);

/// Fully observed 3-state, 2-action MDP (Y = S, observation = next state).
PomdpModel small_mdp(double gamma = 0.9);

/// Dense random POMDP; kernel rows from a flat Dirichlet, rewards uniform in [-1, 1].
PomdpModel random_pomdp(Rng& rng, Index n_states, Index n_actions, Index n_obs, double gamma);

/// Random MDP observed perfectly (Y = S).
PomdpModel random_mdp(Rng& rng, Index n_states, Index n_actions, double gamma);

}  // namespace agentpomdp::benchmarks
