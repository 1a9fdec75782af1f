#pragma once

#include <optional>
#include <string>
#include <vector>

#include "savage/graph.hpp"
#include "savage/linkpred.hpp"

namespace savage {

enum class InitMode { random, zeros_eps, ones_eps, neg_ones_eps };

InitMode init_mode_from_name(const std::string& name);
std::string init_mode_name(InitMode mode);

enum class AttackOptimizer { adam, sgd };

struct AttackConfig {
    double beta = 0.1;   // weight of the adjacency-distance penalty
    double gamma = 0.1;  // weight of the vicious-node-count penalty
    double t_plus = 0.5;
    double t_minus = -0.5;
    InitMode init_mode = InitMode::random;
    double eps_init = 0.1;  // must stay below 0.3
    double lr = 0.1;
    int max_iters = 500;
    // adam converges fastest; sgd keeps the update force proportional to
    // the penalty weights, which the sweep analyses rely on
    AttackOptimizer optimizer = AttackOptimizer::adam;
    double success_threshold = 0.6;
    uint64_t seed = 0;

    void validate() const;
};

/// The attack variable: pre-tanh logits over every edge slot plus the
/// binary feasibility mask. Only masked slots (rows of controlled nodes,
/// no diagonal, minus the separation exclusions) ever reach the graph.
/// The soft vicious activation vector is derived on demand.
struct PerturbationState {
    Matrix logits;            // n' x n'
    Matrix feasibility_mask;  // n' x n', binary
};

/// Feasible slots: rows of controlled nodes over all columns, excluding
/// the diagonal, every slot into the target, and slots that would pull the
/// source into the target's 2-hop neighborhood.
Matrix feasibility_mask(const AugmentedGraph& aug);

/// Fresh state with logits drawn per init_mode (tanh(logits) within
/// eps_init of the mode's anchor point) on feasible slots, zero elsewhere.
PerturbationState make_state(const AugmentedGraph& aug, const AttackConfig& config);

/// Seeds the state from an externally produced discrete perturbation
/// (entries in {-1,0,+1} inside the mask) so that discretize() recovers it
/// before any optimization step.
PerturbationState init_from(const Matrix& external_p, const AugmentedGraph& aug,
                            const AttackConfig& config);

/// clamp01(A' + mask ⊙ tanh(logits)); the relaxed adjacency the encoder
/// sees during optimization.
ad::Tensor relaxed_adjacency(ad::Tape& tape, ad::Tensor logits, ad::Tensor mask,
                             ad::Tensor adjacency_prime);
Matrix relaxed_adjacency(const PerturbationState& state, const Matrix& adjacency_prime);

/// Soft vicious-node activation: per vicious node, the strongest pending
/// edge addition touching it (max of relu(tanh(logits)) over its feasible
/// incident slots). Empty when the graph has no vicious nodes.
Matrix soft_activation(const PerturbationState& state, int n_vicious);

struct LossBreakdown {
    double total = 0.0;
    double adv = 0.0;    // -log f(h_t, h~_s)
    double dist = 0.0;   // L1 distance between relaxed and intermediate adjacency
    double vnew = 0.0;   // L1 norm of the soft activation
    double relaxed_prob = 0.0;
};

struct LossGraph {
    ad::Tensor total;   // scalar, on the caller's tape
    ad::Tensor logits;  // leaf to read gradients from
    LossBreakdown parts;
};

/// Builds the instance loss adv + beta*dist + gamma*vnew on the tape. The
/// target embedding comes from the clean base graph (and may be passed in
/// precomputed); the source embedding from the relaxed adjacency.
LossGraph attack_loss(ad::Tape& tape, const PerturbationState& state,
                      const LinkPredictor& model, const AugmentedGraph& aug,
                      const AttackConfig& config,
                      const Matrix* cached_target_embedding = nullptr);

/// Thresholds tanh(logits) into {-1,0,+1} inside the mask (>= t_plus,
/// <= t_minus), zero everywhere else.
Matrix discretize(const PerturbationState& state, const AttackConfig& config);

/// clamp01(P + A'): redundant additions and vacuous removals are absorbed.
Matrix apply_perturbation(const Matrix& p, const Matrix& adjacency_prime);

/// A vicious node is active iff the perturbation adds at least one edge
/// incident to it.
int count_active_vicious(const Matrix& p, int n_base, int n_vicious);

struct AttackResult {
    bool success = false;
    double pre_prob = 0.0;
    double post_prob = 0.0;
    Matrix discrete_p;
    Matrix attacked_adjacency;
    int n_active_vicious = 0;
    int edges_added = 0;
    int edges_removed = 0;
    double kl_shift = 0.0;
    int iterations_used = 0;
    std::vector<double> loss_trace;
};

/// Scores a discrete perturbation end to end: applies it, re-encodes the
/// attacked graph, reports the post probability, resource counts and KL
/// shift. Shared by every attack method.
AttackResult evaluate_perturbation(const Matrix& p, const AugmentedGraph& aug,
                                   const LinkPredictor& model,
                                   double success_threshold);

/// Full attack: initialize (or take the provided state), run max_iters
/// optimizer steps on the relaxed loss, discretize, apply, re-score the
/// discrete graph. Deterministic per config seed.
AttackResult run_attack(const AugmentedGraph& aug, const LinkPredictor& model,
                        const AttackConfig& config,
                        const PerturbationState* initial_state = nullptr);

}  // namespace savage
