#include "savage/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace savage {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// salts for deriving independent child seeds from the master seed
enum : uint64_t {
    kSeedDataset = 0xD5,
    kSeedSplit = 0x51,
    kSeedTrain = 0x7A,
    kSeedPairs = 0x9C,
    kSeedAugment = 0xA6,
    kSeedJobs = 0x1000,
};

uint64_t job_seed(uint64_t master, Method m, int pair_index) {
    return mix_seed(master, kSeedJobs + static_cast<uint64_t>(m) * 4096 +
                                static_cast<uint64_t>(pair_index));
}

json attack_config_json(const AttackConfig& a) {
    return {{"beta", a.beta},
            {"gamma", a.gamma},
            {"t_plus", a.t_plus},
            {"t_minus", a.t_minus},
            {"init_mode", init_mode_name(a.init_mode)},
            {"eps_init", a.eps_init},
            {"lr", a.lr},
            {"max_iters", a.max_iters},
            {"optimizer", a.optimizer == AttackOptimizer::adam ? "adam" : "sgd"},
            {"success_threshold", a.success_threshold},
            {"seed", a.seed}};
}

json baseline_config_json(const BaselineConfig& b) {
    return {{"kind", b.kind == BaselineConfig::Kind::rand ? "rand" : "aiga"},
            {"p", b.p},
            {"budget", b.budget},
            {"max_flips", b.max_flips},
            {"success_threshold", b.success_threshold},
            {"seed", b.seed}};
}

json sparse_matrix_json(const Matrix& m) {
    json cells = json::array();
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            if (m.at(i, j) != 0.0)
                cells.push_back({i, j, static_cast<int>(m.at(i, j))});
    return cells;
}

PairOutcome make_outcome(Method m, int pair_index, int s, int t, uint64_t seed,
                         const AttackResult& r, const AugmentedGraph& aug,
                         json method_config) {
    PairOutcome out;
    out.method = m;
    out.pair_index = pair_index;
    out.source = s;
    out.target = t;
    out.seed = seed;
    out.success = r.success;
    out.pre_prob = r.pre_prob;
    out.post_prob = r.post_prob;
    out.active_vicious = r.n_active_vicious;
    out.edges_added = r.edges_added;
    out.edges_removed = r.edges_removed;
    out.kl_shift = r.kl_shift;
    out.iterations = r.iterations_used;

    json added = json::array(), removed = json::array();
    for (int i = 0; i < r.attacked_adjacency.rows; ++i)
        for (int j = 0; j < r.attacked_adjacency.cols; ++j) {
            const double before = aug.adjacency_prime.at(i, j);
            const double after = r.attacked_adjacency.at(i, j);
            if (after > before) added.push_back({i, j});
            if (before > after) removed.push_back({i, j});
        }

    json record = {{"method", method_name(m)},
                   {"pair", pair_index},
                   {"source", s},
                   {"target", t},
                   {"seed", seed},
                   {"pre_prob", r.pre_prob},
                   {"post_prob", r.post_prob},
                   {"success", r.success},
                   {"active_vicious", r.n_active_vicious},
                   {"edges_added", r.edges_added},
                   {"edges_removed", r.edges_removed},
                   {"kl_shift", r.kl_shift},
                   {"iterations", r.iterations_used},
                   {"perturbation", sparse_matrix_json(r.discrete_p)},
                   {"added_edges", added},
                   {"removed_edges", removed},
                   {"loss_trace", r.loss_trace},
                   {"config", std::move(method_config)}};
    out.record_json = record.dump();
    return out;
}

std::vector<MethodSummary> summarize(const std::vector<Method>& methods,
                                     const std::vector<PairOutcome>& outcomes) {
    std::vector<MethodSummary> out;
    for (Method m : methods) {
        MethodSummary s;
        s.method = m;
        for (const PairOutcome& o : outcomes) {
            if (o.method != m) continue;
            s.n_pairs += 1;
            s.attack_rate += o.success;
            s.avg_prediction += o.post_prob;
            s.avg_vicious += o.active_vicious;
            s.avg_kl += o.kl_shift;
        }
        if (s.n_pairs > 0) {
            s.attack_rate /= s.n_pairs;
            s.avg_prediction /= s.n_pairs;
            s.avg_vicious /= s.n_pairs;
            s.avg_kl /= s.n_pairs;
        }
        out.push_back(s);
    }
    return out;
}

void write_summary_csv(const std::vector<MethodSummary>& summary,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ContractError("cannot open " + path);
    out << "method,n_pairs,ar,ap,an,kl_x1000\n";
    for (const MethodSummary& s : summary)
        out << method_name(s.method) << ',' << s.n_pairs << ','
            << fmt_double(s.attack_rate) << ',' << fmt_double(s.avg_prediction) << ','
            << fmt_double(s.avg_vicious) << ',' << fmt_double(s.avg_kl * 1000.0) << '\n';
}

void write_records(const std::vector<PairOutcome>& outcomes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ContractError("cannot open " + path);
    for (const PairOutcome& o : outcomes) out << o.record_json << '\n';
}

struct ExperimentContext {
    DirectedGraph graph;
    EdgeSplit split;
    LinkPredictor model;
    EvalResult eval;
    std::vector<std::pair<int, int>> pairs;
    AugmentedGraph aug0;  // pair not bound yet
};

ExperimentContext prepare(const ExperimentConfig& config, const LinkPredictor* pretrained,
                          const DirectedGraph* dataset) {
    config.validate();
    ExperimentContext ctx;
    ctx.graph = dataset ? *dataset : load_dataset(config);
    ctx.split = split_edges(ctx.graph, config.model.test_fraction,
                            mix_seed(config.master_seed, kSeedSplit));
    if (pretrained) {
        ctx.model = *pretrained;
    } else if (!config.checkpoint_path.empty()) {
        ctx.model = load_checkpoint(config.checkpoint_path);
    } else {
        ctx.model = train(ctx.graph, ctx.split, config.model,
                          mix_seed(config.master_seed, kSeedTrain))
                        .model;
    }
    ctx.eval = evaluate(ctx.model, ctx.graph, ctx.split);
    ctx.pairs = sample_pairs(ctx.graph, ctx.model, config.n_pairs,
                             config.attack.success_threshold,
                             mix_seed(config.master_seed, kSeedPairs));
    ctx.aug0 = augment(ctx.graph, config.n_vicious, config.vicious_feature_mode,
                       config.vicious_noise_scale,
                       mix_seed(config.master_seed, kSeedAugment));
    return ctx;
}

// Effective AIGA settings; the budget follows n_vicious unless pinned.
BaselineConfig aiga_config_for(const ExperimentConfig& config) {
    BaselineConfig b = config.aiga;
    b.kind = BaselineConfig::Kind::aiga;
    b.success_threshold = config.attack.success_threshold;
    if (b.budget < 0 || b.budget > config.n_vicious) b.budget = config.n_vicious;
    return b;
}

PairOutcome run_method_on_pair(const ExperimentContext& ctx,
                               const ExperimentConfig& config, Method m,
                               int pair_index) {
    const auto [s, t] = ctx.pairs[pair_index];
    const AugmentedGraph aug = with_pair(ctx.aug0, s, t);
    const uint64_t seed = job_seed(config.master_seed, m, pair_index);

    switch (m) {
        case Method::savage:
        case Method::savage_n: {
            AttackConfig a = config.attack;
            if (m == Method::savage_n) {
                a.beta = 0.0;
                a.gamma = 0.0;
            }
            a.seed = seed;
            AttackResult r = run_attack(aug, ctx.model, a);
            return make_outcome(m, pair_index, s, t, seed, r, aug,
                                attack_config_json(a));
        }
        case Method::savage_i:
        case Method::savage_ni: {
            BaselineConfig b = aiga_config_for(config);
            b.seed = mix_seed(seed, 1);
            AttackResult warm = aiga_attack(aug, ctx.model, b);
            AttackConfig a = config.attack;
            if (m == Method::savage_ni) {
                a.beta = 0.0;
                a.gamma = 0.0;
            }
            a.seed = mix_seed(seed, 2);
            PerturbationState state = init_from(warm.discrete_p, aug, a);
            AttackResult r = run_attack(aug, ctx.model, a, &state);
            json cfg_echo = attack_config_json(a);
            cfg_echo["init_from"] = "aiga";
            cfg_echo["aiga"] = baseline_config_json(b);
            return make_outcome(m, pair_index, s, t, seed, r, aug, std::move(cfg_echo));
        }
        case Method::aiga: {
            BaselineConfig b = aiga_config_for(config);
            b.seed = seed;
            AttackResult r = aiga_attack(aug, ctx.model, b);
            return make_outcome(m, pair_index, s, t, seed, r, aug,
                                baseline_config_json(b));
        }
        case Method::rand_l:
        case Method::rand_h: {
            BaselineConfig b;
            b.kind = BaselineConfig::Kind::rand;
            b.p = m == Method::rand_l ? config.rand_l_p : config.rand_h_p;
            b.success_threshold = config.attack.success_threshold;
            b.seed = seed;
            AttackResult r = rand_attack(aug, ctx.model, b);
            return make_outcome(m, pair_index, s, t, seed, r, aug,
                                baseline_config_json(b));
        }
    }
    throw ContractError("unknown method");
}

json config_echo_json(const ExperimentConfig& c) {
    json dataset;
    if (c.dataset.is_synthetic) {
        dataset = {{"kind", "synthetic"},
                   {"generator", c.dataset.synthetic.kind ==
                                         SyntheticSpec::Kind::erdos_renyi
                                     ? "erdos_renyi"
                                     : "preferential_attachment"},
                   {"n", c.dataset.synthetic.n},
                   {"density", c.dataset.synthetic.density_param},
                   {"k_features", c.dataset.synthetic.k_features}};
    } else {
        dataset = {{"kind", "files"},
                   {"edges", c.dataset.edges_path},
                   {"features", c.dataset.features_path},
                   {"k_features", c.dataset.k_features}};
    }
    json methods = json::array();
    for (Method m : c.methods) methods.push_back(method_name(m));
    return {{"dataset", dataset},
            {"model",
             {{"hidden1", c.model.hidden1},
              {"hidden2", c.model.hidden2},
              {"decoder_hidden", c.model.decoder_hidden},
              {"epochs", c.model.epochs},
              {"learning_rate", c.model.learning_rate},
              {"test_fraction", c.model.test_fraction}}},
            {"checkpoint", c.checkpoint_path},
            {"n_pairs", c.n_pairs},
            {"n_vicious", c.n_vicious},
            {"vicious_features",
             {{"mode", feature_mode_name(c.vicious_feature_mode)},
              {"noise_scale", c.vicious_noise_scale}}},
            {"methods", methods},
            {"attack", attack_config_json(c.attack)},
            {"aiga", baseline_config_json(c.aiga)},
            {"rand", {{"p_low", c.rand_l_p}, {"p_high", c.rand_h_p}}},
            {"sweep", {{"param", c.sweep.param}, {"values", c.sweep.values}}},
            {"output_dir", c.output_dir},
            {"seed", c.master_seed},
            {"threads", c.threads}};
}

void write_meta(const ExperimentConfig& config, const ExperimentContext& ctx,
                const std::string& path) {
    json meta = {
        {"model_eval",
         {{"accuracy", ctx.eval.accuracy}, {"auroc", ctx.eval.auroc}}},
        {"graph", {{"n", ctx.graph.n}, {"edges", ctx.graph.num_edges()}}},
        {"pairs", json::array()},
        {"conventions",
         {{"kl_degree", "total degree (in + out); smoothed histograms; "
                        "inactive vicious nodes excluded after the attack"},
          {"an_average", "over all attacked pairs, not only successful ones"},
          {"lift_aggregates", {"mean_of_ratios", "ratio_of_means"}}}},
        {"config", config_echo_json(config)}};
    for (auto [s, t] : ctx.pairs) meta["pairs"].push_back({s, t});
    std::ofstream out(path);
    if (!out) throw ContractError("cannot open " + path);
    out << meta.dump(2) << '\n';
}

}  // namespace

Method method_from_name(const std::string& name) {
    if (name == "savage") return Method::savage;
    if (name == "savage_n") return Method::savage_n;
    if (name == "savage_i") return Method::savage_i;
    if (name == "savage_ni") return Method::savage_ni;
    if (name == "aiga") return Method::aiga;
    if (name == "rand_l") return Method::rand_l;
    if (name == "rand_h") return Method::rand_h;
    throw ContractError("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::savage: return "savage";
        case Method::savage_n: return "savage_n";
        case Method::savage_i: return "savage_i";
        case Method::savage_ni: return "savage_ni";
        case Method::aiga: return "aiga";
        case Method::rand_l: return "rand_l";
        case Method::rand_h: return "rand_h";
    }
    throw ContractError("unknown method");
}

void ExperimentConfig::validate() const {
    if (n_pairs < 1) throw ContractError("ExperimentConfig: n_pairs must be >= 1");
    if (n_vicious < 0) throw ContractError("ExperimentConfig: n_vicious must be >= 0");
    if (methods.empty()) throw ContractError("ExperimentConfig: no methods configured");
    attack.validate();
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open config " + path);
    json j;
    in >> j;

    ExperimentConfig c;
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        const std::string kind = d.value("kind", "synthetic");
        if (kind == "synthetic") {
            c.dataset.is_synthetic = true;
            const std::string gen = d.value("generator", "erdos_renyi");
            if (gen == "erdos_renyi")
                c.dataset.synthetic.kind = SyntheticSpec::Kind::erdos_renyi;
            else if (gen == "preferential_attachment")
                c.dataset.synthetic.kind = SyntheticSpec::Kind::preferential_attachment;
            else
                throw ContractError("unknown synthetic generator: " + gen);
            c.dataset.synthetic.n = d.value("n", 200);
            c.dataset.synthetic.density_param = d.value("density", 0.05);
            c.dataset.synthetic.k_features = d.value("k_features", 16);
        } else if (kind == "files") {
            c.dataset.is_synthetic = false;
            c.dataset.edges_path = d.at("edges").get<std::string>();
            c.dataset.features_path = d.value("features", "");
            c.dataset.k_features = d.value("k_features", 16);
        } else {
            throw ContractError("unknown dataset kind: " + kind);
        }
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        c.model.hidden1 = m.value("hidden1", c.model.hidden1);
        c.model.hidden2 = m.value("hidden2", c.model.hidden2);
        c.model.decoder_hidden = m.value("decoder_hidden", c.model.decoder_hidden);
        c.model.epochs = m.value("epochs", c.model.epochs);
        c.model.learning_rate = m.value("learning_rate", c.model.learning_rate);
        c.model.test_fraction = m.value("test_fraction", c.model.test_fraction);
    }
    c.checkpoint_path = j.value("checkpoint", "");
    c.n_pairs = j.value("n_pairs", c.n_pairs);
    c.n_vicious = j.value("n_vicious", c.n_vicious);
    if (j.contains("vicious_features")) {
        const json& v = j["vicious_features"];
        c.vicious_feature_mode = feature_mode_from_name(v.value("mode", "existent"));
        c.vicious_noise_scale = v.value("noise_scale", c.vicious_noise_scale);
    }
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& name : j["methods"])
            c.methods.push_back(method_from_name(name.get<std::string>()));
    }
    if (j.contains("attack")) {
        const json& a = j["attack"];
        c.attack.beta = a.value("beta", c.attack.beta);
        c.attack.gamma = a.value("gamma", c.attack.gamma);
        c.attack.t_plus = a.value("t_plus", c.attack.t_plus);
        c.attack.t_minus = a.value("t_minus", c.attack.t_minus);
        if (a.contains("init_mode"))
            c.attack.init_mode = init_mode_from_name(a["init_mode"].get<std::string>());
        c.attack.eps_init = a.value("eps_init", c.attack.eps_init);
        c.attack.lr = a.value("lr", c.attack.lr);
        c.attack.max_iters = a.value("max_iters", c.attack.max_iters);
        if (a.contains("optimizer")) {
            const std::string opt = a["optimizer"].get<std::string>();
            if (opt == "adam")
                c.attack.optimizer = AttackOptimizer::adam;
            else if (opt == "sgd")
                c.attack.optimizer = AttackOptimizer::sgd;
            else
                throw ContractError("unknown attack optimizer: " + opt);
        }
        c.attack.success_threshold =
            a.value("success_threshold", c.attack.success_threshold);
    }
    c.aiga.kind = BaselineConfig::Kind::aiga;
    c.aiga.budget = -1;  // follow n_vicious unless pinned
    if (j.contains("aiga")) {
        const json& b = j["aiga"];
        c.aiga.budget = b.value("budget", -1);
        c.aiga.max_flips = b.value("max_flips", c.aiga.max_flips);
    }
    if (j.contains("rand")) {
        c.rand_l_p = j["rand"].value("p_low", c.rand_l_p);
        c.rand_h_p = j["rand"].value("p_high", c.rand_h_p);
    }
    if (j.contains("sweep")) {
        c.sweep.param = j["sweep"].value("param", "beta");
        if (j["sweep"].contains("values"))
            c.sweep.values = j["sweep"]["values"].get<std::vector<double>>();
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.master_seed = j.value("seed", c.master_seed);
    c.threads = j.value("threads", c.threads);
    return c;
}

DirectedGraph generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    if (spec.n < 2) throw ContractError("generate_synthetic: n must be >= 2");
    if (spec.k_features < 1)
        throw ContractError("generate_synthetic: k_features must be >= 1");
    Rng rng(seed);
    Matrix adj = Matrix::zeros(spec.n, spec.n);

    if (spec.kind == SyntheticSpec::Kind::erdos_renyi) {
        const double p = spec.density_param;
        if (p < 0.0 || p > 1.0)
            throw ContractError("generate_synthetic: ER probability must be in [0,1]");
        for (int i = 0; i < spec.n; ++i)
            for (int j = 0; j < spec.n; ++j)
                if (i != j && rng.uniform() < p) adj.at(i, j) = 1.0;
    } else {
        const int m = static_cast<int>(std::lround(spec.density_param));
        if (m < 1)
            throw ContractError(
                "generate_synthetic: PA needs density >= 1 (edges per node)");
        // new nodes attach to earlier ones proportionally to in-degree + 1
        std::vector<double> weight(spec.n, 1.0);
        for (int i = std::min(m, spec.n - 1); i < spec.n; ++i) {
            int added = 0;
            int guard = 0;
            while (added < std::min(m, i) && guard++ < 1000) {
                double total = 0.0;
                for (int j = 0; j < i; ++j) total += weight[j];
                double roll = rng.uniform() * total;
                int pick = 0;
                for (int j = 0; j < i; ++j) {
                    roll -= weight[j];
                    if (roll <= 0.0) {
                        pick = j;
                        break;
                    }
                }
                if (adj.at(i, pick) != 0.0) continue;
                adj.at(i, pick) = 1.0;
                weight[pick] += 1.0;
                ++added;
            }
        }
    }

    Matrix feat(spec.n, spec.k_features);
    for (double& v : feat.data) v = rng.uniform();
    return DirectedGraph::make(std::move(adj), std::move(feat));
}

DirectedGraph load_dataset(const ExperimentConfig& config) {
    if (config.dataset.is_synthetic)
        return generate_synthetic(config.dataset.synthetic,
                                  mix_seed(config.master_seed, kSeedDataset));
    Matrix adj = load_edge_list(config.dataset.edges_path);
    Matrix feat;
    if (!config.dataset.features_path.empty()) {
        feat = load_features_csv(config.dataset.features_path);
        if (feat.rows != adj.rows)
            throw ContractError("load_dataset: feature rows do not match node count");
    } else {
        Rng rng(mix_seed(config.master_seed, kSeedDataset));
        feat = Matrix(adj.rows, config.dataset.k_features);
        for (double& v : feat.data) v = rng.uniform();
    }
    return DirectedGraph::make(std::move(adj), std::move(feat));
}

std::vector<std::pair<int, int>> sample_pairs(const DirectedGraph& g,
                                              const LinkPredictor& model, int n_pairs,
                                              double success_threshold, uint64_t seed) {
    if (n_pairs < 1) throw ContractError("sample_pairs: n_pairs must be >= 1");
    const Matrix h = model_embeddings(model, g.adjacency, g.features);
    Rng rng(seed);

    std::vector<std::pair<int, int>> pairs;
    std::map<std::pair<int, int>, bool> taken;
    std::map<std::string, int> rejections;
    const int budget = 10000;
    for (int draw = 0; draw < budget && static_cast<int>(pairs.size()) < n_pairs;
         ++draw) {
        const int s = rng.uniform_int(g.n);
        const int t = rng.uniform_int(g.n);
        if (s == t) {
            ++rejections["identical nodes"];
            continue;
        }
        if (taken.count({s, t})) {
            ++rejections["duplicate pair"];
            continue;
        }
        if (g.adjacency.at(t, s) != 0.0) {
            ++rejections["edge (t,s) already exists"];
            continue;
        }
        const auto n2s = l_hop_neighborhood(g, s, 2);
        if (std::binary_search(n2s.begin(), n2s.end(), t)) {
            ++rejections["t inside N2(s)"];
            continue;
        }
        const auto n2t = l_hop_neighborhood(g, t, 2);
        if (std::binary_search(n2t.begin(), n2t.end(), s)) {
            ++rejections["s inside N2(t)"];
            continue;
        }
        const double score = score_pairs(h, {{t, s}}, model.decoder)[0];
        if (score >= success_threshold) {
            ++rejections["model already predicts the edge"];
            continue;
        }
        taken[{s, t}] = true;
        pairs.emplace_back(s, t);
    }
    if (static_cast<int>(pairs.size()) < n_pairs) {
        std::string dominant = "no eligible draw";
        int dominant_count = -1;
        for (const auto& [reason, count] : rejections)
            if (count > dominant_count) {
                dominant = reason;
                dominant_count = count;
            }
        std::ostringstream msg;
        msg << "sample_pairs: exhausted " << budget << " draws with only "
            << pairs.size() << "/" << n_pairs
            << " eligible pairs; dominant rejection: " << dominant << " ("
            << std::max(dominant_count, 0) << " draws)";
        throw ContractError(msg.str());
    }
    return pairs;
}

void parallel_for(int n_jobs, int n_threads, const std::function<void(int)>& fn) {
    if (n_jobs <= 0) return;
    int workers = n_threads > 0 ? n_threads
                                : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, n_jobs);
    if (workers == 1) {
        for (int i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const int i = next.fetch_add(1);
            if (i >= n_jobs) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

ExperimentOutput run_experiment(const ExperimentConfig& config,
                                const LinkPredictor* pretrained,
                                const DirectedGraph* dataset) {
    ExperimentContext ctx = prepare(config, pretrained, dataset);
    std::filesystem::create_directories(config.output_dir);

    const int n_jobs = static_cast<int>(config.methods.size()) * config.n_pairs;
    std::vector<std::optional<PairOutcome>> slots(n_jobs);
    std::exception_ptr error;
    try {
        parallel_for(n_jobs, config.threads, [&](int job) {
            const Method m = config.methods[job / config.n_pairs];
            const int pair_index = job % config.n_pairs;
            slots[job] = run_method_on_pair(ctx, config, m, pair_index);
        });
    } catch (...) {
        error = std::current_exception();
    }

    ExperimentOutput out;
    out.pairs = ctx.pairs;
    out.model_eval = ctx.eval;
    for (auto& slot : slots)
        if (slot) out.outcomes.push_back(std::move(*slot));
    out.summary = summarize(config.methods, out.outcomes);

    // flush whatever completed even when aborting
    write_records(out.outcomes, config.output_dir + "/records.jsonl");
    write_summary_csv(out.summary, config.output_dir + "/summary.csv");
    write_meta(config, ctx, config.output_dir + "/meta.json");
    if (error) std::rethrow_exception(error);
    return out;
}

TransferOutput run_transfer(const ExperimentConfig& config,
                            const LinkPredictor* pretrained,
                            const DirectedGraph* dataset) {
    ExperimentContext ctx = prepare(config, pretrained, dataset);
    std::filesystem::create_directories(config.output_dir);
    const HeuristicParams params;
    constexpr int n_heuristics = static_cast<int>(std::size(kAllHeuristics));

    struct Job {
        PairOutcome outcome;
        std::vector<TransferRow> rows;
    };
    std::vector<std::optional<Job>> slots(config.n_pairs);
    parallel_for(config.n_pairs, config.threads, [&](int pair_index) {
        Job job;
        job.outcome = run_method_on_pair(ctx, config, Method::savage, pair_index);
        const auto [s, t] = ctx.pairs[pair_index];
        const AugmentedGraph aug = with_pair(ctx.aug0, s, t);

        // rebuild the attacked adjacency from the serialized record
        const json record = json::parse(job.outcome.record_json);
        Matrix p = Matrix::zeros(aug.n_prime(), aug.n_prime());
        for (const auto& cell : record["perturbation"])
            p.at(cell[0].get<int>(), cell[1].get<int>()) = cell[2].get<double>();
        const Matrix attacked = apply_perturbation(p, aug.adjacency_prime);
        const DirectedGraph after = DirectedGraph::make(attacked, aug.features_prime);

        for (int h = 0; h < n_heuristics; ++h) {
            const Heuristic heur = kAllHeuristics[h];
            TransferRow row;
            row.heuristic = heur;
            row.pair_index = pair_index;
            // scored for the attacked directed pair (t, s)
            row.before = heuristic_score(heur, ctx.graph, t, s, params);
            row.after = heuristic_score(heur, after, t, s, params);
            row.lift = row.after / std::max(row.before, kLiftEpsilon);
            row.before_zero = row.before <= kLiftEpsilon;
            job.rows.push_back(row);
        }
        slots[pair_index] = std::move(job);
    });

    TransferOutput out;
    for (auto& slot : slots) {
        out.attack_outcomes.push_back(std::move(slot->outcome));
        for (const TransferRow& r : slot->rows) out.rows.push_back(r);
    }

    out.mean_of_ratios.assign(n_heuristics, 0.0);
    out.ratio_of_means.assign(n_heuristics, 0.0);
    for (int h = 0; h < n_heuristics; ++h) {
        double lift_sum = 0.0, before_sum = 0.0, after_sum = 0.0;
        int count = 0;
        for (const TransferRow& r : out.rows) {
            if (static_cast<int>(r.heuristic) != h) continue;
            lift_sum += r.lift;
            before_sum += r.before;
            after_sum += r.after;
            ++count;
        }
        if (count > 0) {
            out.mean_of_ratios[h] = lift_sum / count;
            out.ratio_of_means[h] =
                (after_sum / count) / std::max(before_sum / count, kLiftEpsilon);
        }
    }

    std::ofstream csv(config.output_dir + "/transfer.csv");
    if (!csv) throw ContractError("cannot open transfer.csv");
    csv << "heuristic,pair,before,after,lift,before_zero\n";
    for (const TransferRow& r : out.rows)
        csv << heuristic_name(r.heuristic) << ',' << r.pair_index << ','
            << fmt_double(r.before) << ',' << fmt_double(r.after) << ','
            << fmt_double(r.lift) << ',' << (r.before_zero ? 1 : 0) << '\n';
    for (int h = 0; h < n_heuristics; ++h) {
        csv << heuristic_name(kAllHeuristics[h]) << ",mean_of_ratios,,,"
            << fmt_double(out.mean_of_ratios[h]) << ",\n";
        csv << heuristic_name(kAllHeuristics[h]) << ",ratio_of_means,,,"
            << fmt_double(out.ratio_of_means[h]) << ",\n";
    }
    write_records(out.attack_outcomes, config.output_dir + "/records.jsonl");
    write_meta(config, ctx, config.output_dir + "/meta.json");
    return out;
}

SweepOutput run_sweep(const ExperimentConfig& config, const LinkPredictor* pretrained,
                      const DirectedGraph* dataset) {
    if (config.sweep.values.empty())
        throw ContractError("run_sweep: no sweep values configured");
    if (config.sweep.param != "beta" && config.sweep.param != "gamma")
        throw ContractError("run_sweep: param must be beta or gamma");
    ExperimentContext ctx = prepare(config, pretrained, dataset);
    std::filesystem::create_directories(config.output_dir);

    const int n_values = static_cast<int>(config.sweep.values.size());
    const int n_jobs = n_values * config.n_pairs;
    std::vector<std::optional<PairOutcome>> slots(n_jobs);
    parallel_for(n_jobs, config.threads, [&](int job) {
        const int value_index = job / config.n_pairs;
        const int pair_index = job % config.n_pairs;
        ExperimentConfig varied = config;
        if (config.sweep.param == "beta")
            varied.attack.beta = config.sweep.values[value_index];
        else
            varied.attack.gamma = config.sweep.values[value_index];
        // the value index participates in the seed through the config copy
        varied.master_seed = mix_seed(config.master_seed, 0xB000 + value_index);
        slots[job] = run_method_on_pair(ctx, varied, Method::savage, pair_index);
    });

    SweepOutput out;
    out.param = config.sweep.param;
    for (int v = 0; v < n_values; ++v) {
        SweepPoint pt;
        pt.value = config.sweep.values[v];
        for (int i = 0; i < config.n_pairs; ++i) {
            const PairOutcome& o = *slots[v * config.n_pairs + i];
            pt.avg_vicious += o.active_vicious;
            pt.avg_edges_changed += o.edges_added + o.edges_removed;
            pt.attack_rate += o.success;
            pt.avg_prediction += o.post_prob;
        }
        pt.avg_vicious /= config.n_pairs;
        pt.avg_edges_changed /= config.n_pairs;
        pt.attack_rate /= config.n_pairs;
        pt.avg_prediction /= config.n_pairs;
        out.points.push_back(pt);
    }

    std::ofstream csv(config.output_dir + "/sweep.csv");
    if (!csv) throw ContractError("cannot open sweep.csv");
    csv << "param,value,ar,ap,an,edges_changed\n";
    for (const SweepPoint& pt : out.points)
        csv << out.param << ',' << fmt_double(pt.value) << ','
            << fmt_double(pt.attack_rate) << ',' << fmt_double(pt.avg_prediction) << ','
            << fmt_double(pt.avg_vicious) << ',' << fmt_double(pt.avg_edges_changed)
            << '\n';
    return out;
}

std::vector<MethodSummary> rebuild_summary(const std::string& records_path,
                                           const std::string& summary_out_path) {
    std::ifstream in(records_path);
    if (!in) throw ContractError("cannot open " + records_path);
    std::vector<Method> order;
    std::vector<PairOutcome> outcomes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json r = json::parse(line);
        PairOutcome o;
        o.method = method_from_name(r.at("method").get<std::string>());
        o.pair_index = r.at("pair").get<int>();
        o.success = r.at("success").get<bool>();
        o.post_prob = r.at("post_prob").get<double>();
        o.active_vicious = r.at("active_vicious").get<int>();
        o.kl_shift = r.at("kl_shift").get<double>();
        outcomes.push_back(std::move(o));
        if (std::find(order.begin(), order.end(), outcomes.back().method) == order.end())
            order.push_back(outcomes.back().method);
    }
    std::vector<MethodSummary> summary = summarize(order, outcomes);
    write_summary_csv(summary, summary_out_path);
    return summary;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ContractError("spearman: need two aligned series");
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n, 0.0);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j < n && v[idx[j]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
            for (size_t k = i; k < j; ++k) r[idx[k]] = avg;
            i = j;
        }
        return r;
    };
    const std::vector<double> rx = ranks(xs);
    const std::vector<double> ry = ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
}

}  // namespace savage
