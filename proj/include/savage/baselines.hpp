#pragma once

#include "savage/attack.hpp"

namespace savage {

struct BaselineConfig {
    enum class Kind { rand, aiga };

    Kind kind = Kind::rand;
    double p = 0.25;      // rand: activation probability (0.25 = RAND-L, 0.75 = RAND-H)
    int budget = 50;      // aiga: vicious nodes it may use, all reported as spent
    int max_flips = 100;  // aiga: greedy iteration budget
    double success_threshold = 0.6;
    uint64_t seed = 0;

    void validate(int n_vicious) const;
};

/// Stochastic baseline. Every vicious node activates independently with
/// probability p; each acting node (the source plus the active vicious
/// nodes) toggles min(ceil(20p), 20) uniformly chosen feasible slots in its
/// row, restricted to columns of nodes that exist after activation.
AttackResult rand_attack(const AugmentedGraph& aug, const LinkPredictor& model,
                         const BaselineConfig& config);

/// Adapted iterative gradient attack: greedy single-slot flips ranked by
/// the gradient of the adversarial loss at the current discrete graph,
/// with a one-step lookahead that rolls back flips that hurt. Considers
/// only the first `budget` vicious nodes and always reports the budget as
/// spent.
AttackResult aiga_attack(const AugmentedGraph& aug, const LinkPredictor& model,
                         const BaselineConfig& config);

}  // namespace savage
