#pragma once

#include <string>
#include <utility>
#include <vector>

#include "savage/graph.hpp"
#include "savage/tensor.hpp"

namespace savage {

/// Architecture and training hyperparameters of the victim model.
struct GnnConfig {
    int hidden1 = 128;
    int hidden2 = 64;
    int decoder_hidden = 32;
    int epochs = 2000;
    double learning_rate = 1e-3;
    double test_fraction = 0.1;
    // weight of the self edge in the propagation matrix; > 1 keeps more of
    // each node's own representation through the two aggregation rounds
    double self_loop_weight = 2.0;
};

/// Graph encoder weights (two graph-convolution layers).
struct EncoderParams {
    Matrix w1;  // k x hidden1
    Matrix w2;  // hidden1 x hidden2
};

/// Edge decoder weights (two-layer MLP over the Hadamard-combined pair
/// embedding, sigmoid output).
struct DecoderParams {
    Matrix m1;  // hidden2 x decoder_hidden
    Matrix b1;  // 1 x decoder_hidden
    Matrix m2;  // decoder_hidden x 1
    Matrix b2;  // 1 x 1
};

struct LinkPredictor {
    GnnConfig config;
    EncoderParams encoder;
    DecoderParams decoder;
    // column standardization fitted on the training graph; empty = identity
    Matrix feature_shift;  // 1 x k means
    Matrix feature_scale;  // 1 x k inverse standard deviations
};

/// Supervision split. Message passing always sees the full adjacency; the
/// split only decides which node pairs train and evaluate the decoder.
struct EdgeSplit {
    std::vector<std::pair<int, int>> train_pos;
    std::vector<std::pair<int, int>> test_pos;
    std::vector<std::pair<int, int>> train_neg;
    std::vector<std::pair<int, int>> test_neg;
};

/// Shuffles E, holds out test_fraction of edges, and samples one negative
/// (true non-edge) per positive in each part.
EdgeSplit split_edges(const DirectedGraph& g, double test_fraction, uint64_t seed);

/// Two propagation rounds H = relu(Ahat (relu(Ahat X W1)) W2) with
/// Ahat = rownorm(A + c I) (out-degree normalization, self-loop weight c).
/// Differentiable in the adjacency, the features and the weights;
/// adjacency entries may be fractional during an attack.
ad::Tensor encode(ad::Tape& tape, ad::Tensor adjacency, ad::Tensor features,
                  ad::Tensor w1, ad::Tensor w2, double self_loop_weight = 1.0);

/// Value-level convenience around the tape version.
Matrix encode(const Matrix& adjacency, const Matrix& features, const EncoderParams& p,
              double self_loop_weight = 1.0);

/// The feature matrix as the model consumes it (standardization applied).
Matrix model_features(const LinkPredictor& model, const Matrix& features);

/// encode() with the model's own standardization and self-loop weight.
ad::Tensor model_encode(ad::Tape& tape, const LinkPredictor& model,
                        ad::Tensor adjacency, const Matrix& features);
Matrix model_embeddings(const LinkPredictor& model, const Matrix& adjacency,
                        const Matrix& features);

/// sigmoid(MLP(h_u ⊙ h_v)) for a batch of row-aligned embedding pairs
/// (both operands m x hidden2; result m x 1).
ad::Tensor predict_links(ad::Tape& tape, ad::Tensor h_u_rows, ad::Tensor h_v_rows,
                         ad::Tensor m1, ad::Tensor b1, ad::Tensor m2, ad::Tensor b2);

/// Single-pair probability in (0,1). Symmetric in (h_u, h_v) because the
/// Hadamard product is.
double predict_link(const Matrix& h_u, const Matrix& h_v, const DecoderParams& dec);

/// Scores a list of node pairs against precomputed embeddings H.
std::vector<double> score_pairs(const Matrix& h,
                                const std::vector<std::pair<int, int>>& pairs,
                                const DecoderParams& dec);

struct TrainResult {
    LinkPredictor model;
    std::vector<double> loss_history;  // one entry per epoch
};

/// Full-batch training: BCE over the train positives plus an equal number
/// of negatives resampled each epoch, Adam updates. Deterministic per seed.
TrainResult train(const DirectedGraph& g, const EdgeSplit& split, const GnnConfig& config,
                  uint64_t seed);

struct EvalResult {
    double accuracy = 0.0;  // at the 0.6 decision threshold
    double auroc = 0.0;
};

EvalResult evaluate(const LinkPredictor& model, const DirectedGraph& g,
                    const EdgeSplit& split);

/// Rank-comparison AUROC with ties counted one half.
double auroc(const std::vector<double>& positive_scores,
             const std::vector<double>& negative_scores);

/// JSON checkpoint holding shapes, weights at full precision and the
/// training config; loads back bit-exact.
void save_checkpoint(const LinkPredictor& model, const std::string& path);
LinkPredictor load_checkpoint(const std::string& path);

}  // namespace savage
