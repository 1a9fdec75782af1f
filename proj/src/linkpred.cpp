#include "savage/linkpred.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace savage {

using ad::Tape;
using ad::Tensor;

namespace {

constexpr double kProbFloor = 1e-12;

Matrix glorot_uniform(Rng& rng, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data) v = rng.uniform(-limit, limit);
    return w;
}

std::pair<int, int> sample_non_edge(const DirectedGraph& g, Rng& rng) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const int u = rng.uniform_int(g.n);
        const int v = rng.uniform_int(g.n);
        if (u != v && g.adjacency.at(u, v) == 0.0) return {u, v};
    }
    throw ContractError("sample_non_edge: graph too dense to sample non-edges");
}

}  // namespace

EdgeSplit split_edges(const DirectedGraph& g, double test_fraction, uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ContractError("split_edges: test_fraction must be in [0,1)");
    Rng rng(seed);
    std::vector<std::pair<int, int>> edges = g.edges();
    // Fisher-Yates with the portable rng
    for (int i = static_cast<int>(edges.size()) - 1; i > 0; --i)
        std::swap(edges[i], edges[rng.uniform_int(i + 1)]);

    const int n_test = static_cast<int>(std::floor(edges.size() * test_fraction));
    EdgeSplit split;
    split.test_pos.assign(edges.begin(), edges.begin() + n_test);
    split.train_pos.assign(edges.begin() + n_test, edges.end());

    std::set<std::pair<int, int>> used;
    auto sample_distinct = [&](size_t count) {
        std::vector<std::pair<int, int>> out;
        while (out.size() < count) {
            auto e = sample_non_edge(g, rng);
            if (used.insert(e).second) out.push_back(e);
        }
        return out;
    };
    split.test_neg = sample_distinct(split.test_pos.size());
    split.train_neg = sample_distinct(split.train_pos.size());
    return split;
}

Tensor encode(Tape& tape, Tensor adjacency, Tensor features, Tensor w1, Tensor w2,
              double self_loop_weight) {
    if (adjacency.rows() != adjacency.cols())
        throw DimensionError("encode: adjacency must be square");
    if (features.rows() != adjacency.rows())
        throw DimensionError("encode: one feature row per node required");
    if (features.cols() != w1.rows() || w1.cols() != w2.rows())
        throw DimensionError("encode: weight shapes inconsistent with features");
    if (!(self_loop_weight > 0.0))
        throw ContractError("encode: self-loop weight must be positive");
    Matrix self = Matrix::identity(adjacency.rows());
    for (int i = 0; i < self.rows; ++i) self.at(i, i) = self_loop_weight;
    Tensor ahat = tape.row_normalize(tape.add(adjacency, tape.constant(self)));
    Tensor h1 = tape.relu(tape.matmul(tape.matmul(ahat, features), w1));
    // cheaper association: Ahat (H1 W2) instead of (Ahat H1) W2
    return tape.relu(tape.matmul(ahat, tape.matmul(h1, w2)));
}

Matrix encode(const Matrix& adjacency, const Matrix& features, const EncoderParams& p,
              double self_loop_weight) {
    Tape tape;
    Tensor h = encode(tape, tape.constant(adjacency), tape.constant(features),
                      tape.constant(p.w1), tape.constant(p.w2), self_loop_weight);
    return h.value();
}

Matrix model_features(const LinkPredictor& model, const Matrix& features) {
    if (model.feature_shift.size() == 0) return features;
    if (model.feature_shift.cols != features.cols ||
        model.feature_scale.cols != features.cols)
        throw DimensionError("model_features: standardization width mismatch");
    Matrix out = features;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j)
            out.at(i, j) = (out.at(i, j) - model.feature_shift.at(0, j)) *
                           model.feature_scale.at(0, j);
    return out;
}

Tensor model_encode(Tape& tape, const LinkPredictor& model, Tensor adjacency,
                    const Matrix& features) {
    return encode(tape, adjacency, tape.constant(model_features(model, features)),
                  tape.constant(model.encoder.w1), tape.constant(model.encoder.w2),
                  model.config.self_loop_weight);
}

Matrix model_embeddings(const LinkPredictor& model, const Matrix& adjacency,
                        const Matrix& features) {
    Tape tape;
    return model_encode(tape, model, tape.constant(adjacency), features).value();
}

Tensor predict_links(Tape& tape, Tensor h_u_rows, Tensor h_v_rows, Tensor m1, Tensor b1,
                     Tensor m2, Tensor b2) {
    Tensor z = tape.hadamard(h_u_rows, h_v_rows);
    Tensor a1 = tape.relu(tape.add_row_vector(tape.matmul(z, m1), b1));
    return tape.sigmoid(tape.add_row_vector(tape.matmul(a1, m2), b2));
}

double predict_link(const Matrix& h_u, const Matrix& h_v, const DecoderParams& dec) {
    Tape tape;
    Tensor p = predict_links(tape, tape.constant(h_u), tape.constant(h_v),
                             tape.constant(dec.m1), tape.constant(dec.b1),
                             tape.constant(dec.m2), tape.constant(dec.b2));
    return p.value().at(0, 0);
}

std::vector<double> score_pairs(const Matrix& h,
                                const std::vector<std::pair<int, int>>& pairs,
                                const DecoderParams& dec) {
    if (pairs.empty()) return {};
    Tape tape;
    Tensor ht = tape.constant(h);
    std::vector<int> us, vs;
    us.reserve(pairs.size());
    vs.reserve(pairs.size());
    for (auto [u, v] : pairs) {
        us.push_back(u);
        vs.push_back(v);
    }
    Tensor p = predict_links(tape, tape.gather_rows(ht, us), tape.gather_rows(ht, vs),
                             tape.constant(dec.m1), tape.constant(dec.b1),
                             tape.constant(dec.m2), tape.constant(dec.b2));
    std::vector<double> out(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i)
        out[i] = p.value().at(static_cast<int>(i), 0);
    return out;
}

TrainResult train(const DirectedGraph& g, const EdgeSplit& split, const GnnConfig& config,
                  uint64_t seed) {
    if (split.train_pos.empty()) throw ContractError("train: no training edges");
    const int k = g.features.cols;
    Rng rng(seed);

    LinkPredictor model;
    model.config = config;
    model.encoder.w1 = glorot_uniform(rng, k, config.hidden1);
    model.encoder.w2 = glorot_uniform(rng, config.hidden1, config.hidden2);
    model.decoder.m1 = glorot_uniform(rng, config.hidden2, config.decoder_hidden);
    model.decoder.b1 = Matrix::zeros(1, config.decoder_hidden);
    model.decoder.m2 = glorot_uniform(rng, config.decoder_hidden, 1);
    model.decoder.b2 = Matrix::zeros(1, 1);

    // column standardization fitted on the training graph; raw features keep
    // the encoder from separating nodes once the aggregation averages them
    model.feature_shift = Matrix::zeros(1, k);
    model.feature_scale = Matrix::filled(1, k, 1.0);
    for (int j = 0; j < k; ++j) {
        double mu = 0.0;
        for (int i = 0; i < g.n; ++i) mu += g.features.at(i, j);
        mu /= g.n;
        double var = 0.0;
        for (int i = 0; i < g.n; ++i) {
            const double d = g.features.at(i, j) - mu;
            var += d * d;
        }
        const double sd = std::sqrt(var / g.n);
        model.feature_shift.at(0, j) = mu;
        model.feature_scale.at(0, j) = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    const Matrix x_std = model_features(model, g.features);

    std::vector<int> pos_u, pos_v;
    for (auto [u, v] : split.train_pos) {
        pos_u.push_back(u);
        pos_v.push_back(v);
    }
    const double inv_count = 1.0 / (2.0 * static_cast<double>(split.train_pos.size()));

    ad::OptimizerState opt = ad::OptimizerState::adam(config.learning_rate);
    TrainResult result;
    result.loss_history.reserve(config.epochs);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // fresh negatives every epoch, same count as the positives
        std::vector<int> neg_u, neg_v;
        for (size_t i = 0; i < split.train_pos.size(); ++i) {
            auto [u, v] = sample_non_edge(g, rng);
            neg_u.push_back(u);
            neg_v.push_back(v);
        }

        Tape tape;
        Tensor w1 = tape.leaf(model.encoder.w1, true);
        Tensor w2 = tape.leaf(model.encoder.w2, true);
        Tensor m1 = tape.leaf(model.decoder.m1, true);
        Tensor b1 = tape.leaf(model.decoder.b1, true);
        Tensor m2 = tape.leaf(model.decoder.m2, true);
        Tensor b2 = tape.leaf(model.decoder.b2, true);

        Tensor h = encode(tape, tape.constant(g.adjacency), tape.constant(x_std), w1, w2,
                          config.self_loop_weight);
        Tensor p_pos = predict_links(tape, tape.gather_rows(h, pos_u),
                                     tape.gather_rows(h, pos_v), m1, b1, m2, b2);
        Tensor p_neg = predict_links(tape, tape.gather_rows(h, neg_u),
                                     tape.gather_rows(h, neg_v), m1, b1, m2, b2);

        Tensor pos_term = tape.sum(tape.log(tape.clamp_min(p_pos, kProbFloor)));
        Tensor ones = tape.constant(Matrix::filled(p_neg.rows(), 1, 1.0));
        Tensor neg_term =
            tape.sum(tape.log(tape.clamp_min(tape.sub(ones, p_neg), kProbFloor)));
        Tensor loss = tape.scale(tape.add(pos_term, neg_term), -inv_count);
        result.loss_history.push_back(loss.value().at(0, 0));

        tape.backward(loss);
        Matrix* params[] = {&model.encoder.w1, &model.encoder.w2, &model.decoder.m1,
                            &model.decoder.b1, &model.decoder.m2, &model.decoder.b2};
        const Matrix* grads[] = {&w1.grad(), &w2.grad(), &m1.grad(),
                                 &b1.grad(), &m2.grad(), &b2.grad()};
        optimizer_step(opt, params, grads);
    }
    result.model = std::move(model);
    return result;
}

double auroc(const std::vector<double>& positive_scores,
             const std::vector<double>& negative_scores) {
    const size_t p = positive_scores.size();
    const size_t n = negative_scores.size();
    if (p == 0 || n == 0) throw ContractError("auroc: both classes must be non-empty");

    std::vector<std::pair<double, int>> scored;  // (score, is_positive)
    scored.reserve(p + n);
    for (double s : positive_scores) scored.emplace_back(s, 1);
    for (double s : negative_scores) scored.emplace_back(s, 0);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // average ranks over ties, then the Mann-Whitney statistic
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < scored.size()) {
        size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (size_t t = i; t < j; ++t)
            if (scored[t].second) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u_stat = rank_sum_pos - 0.5 * static_cast<double>(p) * (p + 1);
    return u_stat / (static_cast<double>(p) * static_cast<double>(n));
}

EvalResult evaluate(const LinkPredictor& model, const DirectedGraph& g,
                    const EdgeSplit& split) {
    if (split.test_pos.empty() || split.test_neg.empty())
        throw ContractError("evaluate: empty test set");
    const Matrix h = model_embeddings(model, g.adjacency, g.features);
    const std::vector<double> pos = score_pairs(h, split.test_pos, model.decoder);
    const std::vector<double> neg = score_pairs(h, split.test_neg, model.decoder);

    int correct = 0;
    for (double s : pos) correct += s >= 0.6;
    for (double s : neg) correct += s < 0.6;
    EvalResult r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(pos.size() + neg.size());
    r.auroc = auroc(pos, neg);
    return r;
}

// -- checkpoint --------------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != static_cast<size_t>(m.rows) * m.cols)
        throw ContractError("checkpoint: matrix payload size mismatch");
    return m;
}

}  // namespace

void save_checkpoint(const LinkPredictor& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = {{"hidden1", model.config.hidden1},
                   {"hidden2", model.config.hidden2},
                   {"decoder_hidden", model.config.decoder_hidden},
                   {"epochs", model.config.epochs},
                   {"learning_rate", model.config.learning_rate},
                   {"test_fraction", model.config.test_fraction},
                   {"self_loop_weight", model.config.self_loop_weight}};
    j["standardization"] = {{"shift", matrix_to_json(model.feature_shift)},
                            {"scale", matrix_to_json(model.feature_scale)}};
    j["encoder"] = {{"w1", matrix_to_json(model.encoder.w1)},
                    {"w2", matrix_to_json(model.encoder.w2)}};
    j["decoder"] = {{"m1", matrix_to_json(model.decoder.m1)},
                    {"b1", matrix_to_json(model.decoder.b1)},
                    {"m2", matrix_to_json(model.decoder.m2)},
                    {"b2", matrix_to_json(model.decoder.b2)}};
    std::ofstream out(path);
    if (!out) throw ContractError("save_checkpoint: cannot open " + path);
    out << j.dump(2) << '\n';
}

LinkPredictor load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("format_version").get<int>() != 1)
        throw ContractError("load_checkpoint: unsupported format version");
    LinkPredictor model;
    const auto& c = j.at("config");
    model.config.hidden1 = c.at("hidden1").get<int>();
    model.config.hidden2 = c.at("hidden2").get<int>();
    model.config.decoder_hidden = c.at("decoder_hidden").get<int>();
    model.config.epochs = c.at("epochs").get<int>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.test_fraction = c.at("test_fraction").get<double>();
    model.config.self_loop_weight = c.at("self_loop_weight").get<double>();
    model.feature_shift = matrix_from_json(j.at("standardization").at("shift"));
    model.feature_scale = matrix_from_json(j.at("standardization").at("scale"));
    model.encoder.w1 = matrix_from_json(j.at("encoder").at("w1"));
    model.encoder.w2 = matrix_from_json(j.at("encoder").at("w2"));
    model.decoder.m1 = matrix_from_json(j.at("decoder").at("m1"));
    model.decoder.b1 = matrix_from_json(j.at("decoder").at("b1"));
    model.decoder.m2 = matrix_from_json(j.at("decoder").at("m2"));
    model.decoder.b2 = matrix_from_json(j.at("decoder").at("b2"));
    return model;
}

}  // namespace savage
