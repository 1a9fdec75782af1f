#include "savage/attack.hpp"

#include <algorithm>
#include <cmath>

namespace savage {

using ad::Tape;
using ad::Tensor;

namespace {

constexpr double kProbFloor = 1e-12;
// tanh(logits) may not reach +-1; cap the init anchor just inside
constexpr double kMaxAbsPhat = 1.0 - 1e-12;

double atanh_clamped(double phat) {
    phat = std::clamp(phat, -kMaxAbsPhat, kMaxAbsPhat);
    return std::atanh(phat);
}

void check_pair_bound(const AugmentedGraph& aug) {
    if (aug.source < 0 || aug.target < 0)
        throw ContractError("attack: augmented graph has no (source, target) pair bound");
}

}  // namespace

InitMode init_mode_from_name(const std::string& name) {
    if (name == "random") return InitMode::random;
    if (name == "zeros_eps") return InitMode::zeros_eps;
    if (name == "ones_eps") return InitMode::ones_eps;
    if (name == "neg_ones_eps") return InitMode::neg_ones_eps;
    throw ContractError("unknown init mode: " + name);
}

std::string init_mode_name(InitMode mode) {
    switch (mode) {
        case InitMode::random: return "random";
        case InitMode::zeros_eps: return "zeros_eps";
        case InitMode::ones_eps: return "ones_eps";
        case InitMode::neg_ones_eps: return "neg_ones_eps";
    }
    throw ContractError("unknown init mode");
}

void AttackConfig::validate() const {
    if (beta < 0.0 || gamma < 0.0)
        throw ContractError("AttackConfig: penalty weights must be >= 0");
    if (!(t_minus < 0.0 && 0.0 < t_plus))
        throw ContractError("AttackConfig: thresholds must satisfy t_minus < 0 < t_plus");
    if (!(success_threshold > 0.0 && success_threshold < 1.0))
        throw ContractError("AttackConfig: success threshold must be in (0,1)");
    if (eps_init < 0.0 || eps_init >= 0.3)
        throw ContractError("AttackConfig: eps_init must be in [0, 0.3)");
    if ((init_mode == InitMode::ones_eps || init_mode == InitMode::neg_ones_eps) &&
        eps_init == 0.0)
        throw ContractError("AttackConfig: ones-anchored init needs eps_init > 0");
    if (lr <= 0.0) throw ContractError("AttackConfig: lr must be positive");
    if (max_iters < 0) throw ContractError("AttackConfig: max_iters must be >= 0");
}

Matrix feasibility_mask(const AugmentedGraph& aug) {
    check_pair_bound(aug);
    const int np = aug.n_prime();
    Matrix mask = Matrix::zeros(np, np);
    for (int i : aug.controlled)
        for (int j = 0; j < np; ++j)
            if (j != i) mask.at(i, j) = 1.0;

    // never touch the target directly
    for (int i = 0; i < np; ++i) mask.at(i, aug.target) = 0.0;

    // an edge x -> source with x an out-neighbor of the target would put
    // the source inside the target's 2-hop neighborhood
    for (int x : l_hop_neighborhood(aug.base, aug.target, 1))
        mask.at(x, aug.source) = 0.0;
    return mask;
}

PerturbationState make_state(const AugmentedGraph& aug, const AttackConfig& config) {
    config.validate();
    Matrix mask = feasibility_mask(aug);
    const int np = aug.n_prime();
    Matrix logits = Matrix::zeros(np, np);
    Rng rng(config.seed);
    for (int i = 0; i < np; ++i) {
        for (int j = 0; j < np; ++j) {
            if (mask.at(i, j) == 0.0) continue;
            double phat = 0.0;
            switch (config.init_mode) {
                case InitMode::random:
                    phat = rng.uniform(-config.eps_init, config.eps_init);
                    break;
                case InitMode::zeros_eps:
                    phat = rng.uniform(0.0, config.eps_init);
                    break;
                case InitMode::ones_eps:
                    phat = 1.0 - rng.uniform(0.0, config.eps_init);
                    break;
                case InitMode::neg_ones_eps:
                    phat = -1.0 + rng.uniform(0.0, config.eps_init);
                    break;
            }
            logits.at(i, j) = atanh_clamped(phat);
        }
    }
    return PerturbationState{std::move(logits), std::move(mask)};
}

PerturbationState init_from(const Matrix& external_p, const AugmentedGraph& aug,
                            const AttackConfig& config) {
    config.validate();
    Matrix mask = feasibility_mask(aug);
    if (!external_p.same_shape(mask))
        throw DimensionError("init_from: perturbation shape mismatch");
    Rng rng(config.seed);
    Matrix logits = Matrix::zeros(mask.rows, mask.cols);
    for (size_t i = 0; i < mask.size(); ++i) {
        const double p = external_p.data[i];
        if (p != -1.0 && p != 0.0 && p != 1.0)
            throw ContractError("init_from: entries must be in {-1,0,1}");
        if (p != 0.0 && mask.data[i] == 0.0)
            throw ContractError("init_from: nonzero entry outside the feasibility mask");
        if (mask.data[i] == 0.0) continue;
        // 0.9 anchor plus slight noise keeps discretize() an exact inverse
        logits.data[i] = atanh_clamped(0.9 * p) + 0.01 * rng.uniform(-1.0, 1.0);
    }
    return PerturbationState{std::move(logits), std::move(mask)};
}

Tensor relaxed_adjacency(Tape& tape, Tensor logits, Tensor mask, Tensor adjacency_prime) {
    Tensor masked = tape.hadamard(tape.tanh(logits), mask);
    return tape.clamp01(tape.add(adjacency_prime, masked));
}

Matrix relaxed_adjacency(const PerturbationState& state, const Matrix& adjacency_prime) {
    Tape tape;
    return relaxed_adjacency(tape, tape.constant(state.logits),
                             tape.constant(state.feasibility_mask),
                             tape.constant(adjacency_prime))
        .value();
}

Matrix soft_activation(const PerturbationState& state, int n_vicious) {
    if (n_vicious == 0) return Matrix(1, 0);
    Tape tape;
    Tensor w = tape.hadamard(tape.relu(tape.tanh(tape.constant(state.logits))),
                             tape.constant(state.feasibility_mask));
    return tape.incident_max(w, n_vicious).value();
}

LossGraph attack_loss(Tape& tape, const PerturbationState& state,
                      const LinkPredictor& model, const AugmentedGraph& aug,
                      const AttackConfig& config,
                      const Matrix* cached_target_embedding) {
    check_pair_bound(aug);

    // target embedding from the clean base graph; the separation constraint
    // guarantees the attack cannot move it
    Matrix h_t;
    if (cached_target_embedding) {
        h_t = *cached_target_embedding;
    } else {
        Matrix h_base = model_embeddings(model, aug.base.adjacency, aug.base.features);
        h_t = Matrix(1, h_base.cols);
        for (int j = 0; j < h_base.cols; ++j) h_t.at(0, j) = h_base.at(aug.target, j);
    }

    Tensor logits = tape.leaf(state.logits, true);
    Tensor mask = tape.constant(state.feasibility_mask);
    Tensor aprime = tape.constant(aug.adjacency_prime);

    Tensor phat = tape.tanh(logits);
    Tensor masked = tape.hadamard(phat, mask);
    Tensor relaxed = tape.clamp01(tape.add(aprime, masked));

    Tensor h = model_encode(tape, model, relaxed, aug.features_prime);
    Tensor h_s = tape.gather_rows(h, {aug.source});
    Tensor prob = predict_links(tape, tape.constant(h_t), h_s,
                                tape.constant(model.decoder.m1),
                                tape.constant(model.decoder.b1),
                                tape.constant(model.decoder.m2),
                                tape.constant(model.decoder.b2));
    Tensor adv = tape.scale(tape.log(tape.clamp_min(prob, kProbFloor)), -1.0);
    Tensor dist = tape.l1_norm(tape.sub(relaxed, aprime));
    Tensor total = tape.add(adv, tape.scale(dist, config.beta));

    LossGraph out;
    out.parts.adv = adv.value().at(0, 0);
    out.parts.dist = dist.value().at(0, 0);
    out.parts.relaxed_prob = prob.value().at(0, 0);
    if (aug.n_vicious > 0) {
        Tensor w = tape.hadamard(tape.relu(phat), mask);
        Tensor vnew = tape.l1_norm(tape.incident_max(w, aug.n_vicious));
        out.parts.vnew = vnew.value().at(0, 0);
        total = tape.add(total, tape.scale(vnew, config.gamma));
    }
    out.total = total;
    out.logits = logits;
    out.parts.total = total.value().at(0, 0);
    return out;
}

Matrix discretize(const PerturbationState& state, const AttackConfig& config) {
    Matrix p = Matrix::zeros(state.logits.rows, state.logits.cols);
    for (size_t i = 0; i < p.size(); ++i) {
        if (state.feasibility_mask.data[i] == 0.0) continue;
        const double phat = std::tanh(state.logits.data[i]);
        if (phat >= config.t_plus)
            p.data[i] = 1.0;
        else if (phat <= config.t_minus)
            p.data[i] = -1.0;
    }
    return p;
}

Matrix apply_perturbation(const Matrix& p, const Matrix& adjacency_prime) {
    if (!p.same_shape(adjacency_prime))
        throw DimensionError("apply_perturbation: shape mismatch");
    Matrix out(p.rows, p.cols);
    for (size_t i = 0; i < p.size(); ++i) {
        const double v = p.data[i] + adjacency_prime.data[i];
        out.data[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

int count_active_vicious(const Matrix& p, int n_base, int n_vicious) {
    int active = 0;
    for (int v = n_base; v < n_base + n_vicious; ++v) {
        bool touched = false;
        for (int j = 0; j < p.cols && !touched; ++j) touched = p.at(v, j) == 1.0;
        for (int i = 0; i < p.rows && !touched; ++i) touched = p.at(i, v) == 1.0;
        active += touched;
    }
    return active;
}

AttackResult evaluate_perturbation(const Matrix& p, const AugmentedGraph& aug,
                                   const LinkPredictor& model,
                                   double success_threshold) {
    check_pair_bound(aug);
    const Matrix h_base = model_embeddings(model, aug.base.adjacency, aug.base.features);
    Matrix h_t(1, h_base.cols), h_s(1, h_base.cols);
    for (int j = 0; j < h_base.cols; ++j) {
        h_t.at(0, j) = h_base.at(aug.target, j);
        h_s.at(0, j) = h_base.at(aug.source, j);
    }

    AttackResult result;
    result.pre_prob = predict_link(h_t, h_s, model.decoder);
    result.discrete_p = p;
    result.attacked_adjacency = apply_perturbation(p, aug.adjacency_prime);

    const Matrix h_attacked =
        model_embeddings(model, result.attacked_adjacency, aug.features_prime);
    Matrix h_s_post(1, h_attacked.cols);
    for (int j = 0; j < h_attacked.cols; ++j)
        h_s_post.at(0, j) = h_attacked.at(aug.source, j);
    result.post_prob = predict_link(h_t, h_s_post, model.decoder);
    result.success = result.post_prob >= success_threshold;

    result.n_active_vicious = count_active_vicious(p, aug.base.n, aug.n_vicious);
    for (size_t i = 0; i < p.size(); ++i) {
        const double before = aug.adjacency_prime.data[i];
        const double after = result.attacked_adjacency.data[i];
        result.edges_added += after > before;
        result.edges_removed += before > after;
    }
    result.kl_shift = savage::kl_shift(aug.base, result.attacked_adjacency);
    return result;
}

AttackResult run_attack(const AugmentedGraph& aug, const LinkPredictor& model,
                        const AttackConfig& config,
                        const PerturbationState* initial_state) {
    config.validate();
    check_pair_bound(aug);

    const Matrix h_base = model_embeddings(model, aug.base.adjacency, aug.base.features);
    Matrix h_t(1, h_base.cols);
    for (int j = 0; j < h_base.cols; ++j) h_t.at(0, j) = h_base.at(aug.target, j);

    PerturbationState state = initial_state ? *initial_state : make_state(aug, config);
    ad::OptimizerState opt = config.optimizer == AttackOptimizer::adam
                                 ? ad::OptimizerState::adam(config.lr)
                                 : ad::OptimizerState::sgd(config.lr);
    std::vector<double> trace;
    trace.reserve(config.max_iters);
    for (int iter = 0; iter < config.max_iters; ++iter) {
        Tape tape;
        LossGraph loss = attack_loss(tape, state, model, aug, config, &h_t);
        trace.push_back(loss.parts.total);
        tape.backward(loss.total);
        Matrix* params[] = {&state.logits};
        const Matrix* grads[] = {&loss.logits.grad()};
        optimizer_step(opt, params, grads);
    }

    AttackResult result = evaluate_perturbation(discretize(state, config), aug, model,
                                                config.success_threshold);
    result.iterations_used = config.max_iters;
    result.loss_trace = std::move(trace);
    return result;
}

}  // namespace savage
