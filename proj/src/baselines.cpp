#include "savage/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace savage {

using ad::Tape;
using ad::Tensor;

namespace {

constexpr double kProbFloor = 1e-12;

Matrix target_embedding(const AugmentedGraph& aug, const LinkPredictor& model) {
    const Matrix h = model_embeddings(model, aug.base.adjacency, aug.base.features);
    Matrix h_t(1, h.cols);
    for (int j = 0; j < h.cols; ++j) h_t.at(0, j) = h.at(aug.target, j);
    return h_t;
}

double score_on(const Matrix& adjacency, const AugmentedGraph& aug,
                const LinkPredictor& model, const Matrix& h_t) {
    const Matrix h = model_embeddings(model, adjacency, aug.features_prime);
    Matrix h_s(1, h.cols);
    for (int j = 0; j < h.cols; ++j) h_s.at(0, j) = h.at(aug.source, j);
    return predict_link(h_t, h_s, model.decoder);
}

}  // namespace

void BaselineConfig::validate(int n_vicious) const {
    if (p < 0.0 || p > 1.0) throw ContractError("BaselineConfig: p must be in [0,1]");
    if (kind == Kind::aiga && budget > n_vicious)
        throw ContractError("BaselineConfig: budget exceeds the number of vicious nodes");
    if (budget < 0 || max_flips < 0)
        throw ContractError("BaselineConfig: budget and max_flips must be >= 0");
    if (!(success_threshold > 0.0 && success_threshold < 1.0))
        throw ContractError("BaselineConfig: success threshold must be in (0,1)");
}

AttackResult rand_attack(const AugmentedGraph& aug, const LinkPredictor& model,
                         const BaselineConfig& config) {
    config.validate(aug.n_vicious);
    const Matrix mask = feasibility_mask(aug);
    const int np = aug.n_prime();
    Rng rng(config.seed);

    std::vector<bool> active(aug.n_vicious, false);
    for (int v = 0; v < aug.n_vicious; ++v) active[v] = rng.uniform() < config.p;

    // deactivated vicious nodes do not exist for this attack
    std::vector<bool> column_alive(np, true);
    for (int v = 0; v < aug.n_vicious; ++v) column_alive[aug.base.n + v] = active[v];

    std::vector<int> actors;
    for (int id : aug.controlled)
        if (!aug.is_vicious(id) || active[id - aug.base.n]) actors.push_back(id);

    const int toggles =
        std::min(static_cast<int>(std::ceil(config.p * 20.0)), 20);

    Matrix p_matrix = Matrix::zeros(np, np);
    for (int actor : actors) {
        std::vector<int> slots;
        for (int j = 0; j < np; ++j)
            if (mask.at(actor, j) != 0.0 && column_alive[j]) slots.push_back(j);
        const int m = std::min<int>(toggles, static_cast<int>(slots.size()));
        // partial Fisher-Yates draw of m distinct slots
        for (int k = 0; k < m; ++k) {
            const int pick = k + rng.uniform_int(static_cast<int>(slots.size()) - k);
            std::swap(slots[k], slots[pick]);
            const int j = slots[k];
            p_matrix.at(actor, j) = aug.adjacency_prime.at(actor, j) == 0.0 ? 1.0 : -1.0;
        }
    }

    AttackResult result =
        evaluate_perturbation(p_matrix, aug, model, config.success_threshold);
    result.iterations_used = 0;
    return result;
}

AttackResult aiga_attack(const AugmentedGraph& aug, const LinkPredictor& model,
                         const BaselineConfig& config) {
    config.validate(aug.n_vicious);
    const int np = aug.n_prime();

    // restrict the feasible slots to the budgeted vicious nodes
    Matrix mask = feasibility_mask(aug);
    for (int v = config.budget; v < aug.n_vicious; ++v) {
        const int id = aug.base.n + v;
        for (int j = 0; j < np; ++j) {
            mask.at(id, j) = 0.0;
            mask.at(j, id) = 0.0;
        }
    }

    const Matrix h_t = target_embedding(aug, model);
    Matrix p_matrix = Matrix::zeros(np, np);
    Matrix current = aug.adjacency_prime;
    double current_prob = score_on(current, aug, model, h_t);
    std::vector<bool> tried(static_cast<size_t>(np) * np, false);

    int attempts = 0;
    while (attempts < config.max_flips && current_prob < config.success_threshold) {
        // gradient of -log f with respect to every adjacency entry at the
        // current discrete graph
        Tape tape;
        Tensor adj = tape.leaf(current, true);
        Tensor h = model_encode(tape, model, adj, aug.features_prime);
        Tensor h_s = tape.gather_rows(h, {aug.source});
        Tensor prob = predict_links(tape, tape.constant(h_t), h_s,
                                    tape.constant(model.decoder.m1),
                                    tape.constant(model.decoder.b1),
                                    tape.constant(model.decoder.m2),
                                    tape.constant(model.decoder.b2));
        Tensor adv = tape.scale(tape.log(tape.clamp_min(prob, kProbFloor)), -1.0);
        tape.backward(adv);
        const Matrix& grad = adj.grad();

        // the most beneficial untried slot: additions want negative gradient,
        // removals of existing edges want positive gradient
        int best_i = -1, best_j = -1;
        double best_benefit = 0.0;
        for (int i = 0; i < np; ++i) {
            for (int j = 0; j < np; ++j) {
                if (mask.at(i, j) == 0.0 || tried[static_cast<size_t>(i) * np + j])
                    continue;
                const double g = grad.at(i, j);
                const double benefit = current.at(i, j) == 0.0 ? -g : g;
                if (benefit > best_benefit) {
                    best_benefit = benefit;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (best_i < 0) break;  // no slot promises improvement

        ++attempts;
        tried[static_cast<size_t>(best_i) * np + best_j] = true;
        const bool adding = current.at(best_i, best_j) == 0.0;
        current.at(best_i, best_j) = adding ? 1.0 : 0.0;
        const double new_prob = score_on(current, aug, model, h_t);
        if (new_prob < current_prob) {
            // one-step lookahead: the realized effect was negative, roll back
            current.at(best_i, best_j) = adding ? 0.0 : 1.0;
            continue;
        }
        p_matrix.at(best_i, best_j) = adding ? 1.0 : -1.0;
        current_prob = new_prob;
    }

    AttackResult result =
        evaluate_perturbation(p_matrix, aug, model, config.success_threshold);
    result.iterations_used = attempts;
    // the budget is considered spent regardless of how many nodes the flips
    // actually touched
    result.n_active_vicious = std::min(config.budget, aug.n_vicious);
    return result;
}

}  // namespace savage
