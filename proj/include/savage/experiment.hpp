#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "savage/attack.hpp"
#include "savage/baselines.hpp"
#include "savage/heuristics.hpp"
#include "savage/linkpred.hpp"

namespace savage {

enum class Method { savage, savage_n, savage_i, savage_ni, aiga, rand_l, rand_h };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct SyntheticSpec {
    enum class Kind { erdos_renyi, preferential_attachment };
    Kind kind = Kind::erdos_renyi;
    int n = 200;
    double density_param = 0.05;  // ER: edge probability; PA: out-edges per node
    int k_features = 16;
};

struct DatasetSpec {
    bool is_synthetic = true;
    SyntheticSpec synthetic;
    std::string edges_path;
    std::string features_path;  // optional; random features are generated when empty
    int k_features = 16;        // width of generated features for file datasets
};

struct SweepSpec {
    std::string param = "beta";  // "beta" or "gamma"
    std::vector<double> values;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    GnnConfig model;
    std::string checkpoint_path;  // when set, load the model instead of training
    int n_pairs = 20;
    int n_vicious = 50;
    FeatureMode vicious_feature_mode = FeatureMode::existent;
    double vicious_noise_scale = 0.05;
    std::vector<Method> methods = {Method::savage, Method::savage_n, Method::aiga,
                                   Method::rand_l, Method::rand_h};
    AttackConfig attack;       // base config for the savage family
    BaselineConfig aiga;       // budget / max_flips for AIGA (and savage_i init)
    double rand_l_p = 0.25;
    double rand_h_p = 0.75;
    SweepSpec sweep;
    std::string output_dir = "out";
    uint64_t master_seed = 1;
    int threads = 0;  // 0 = all hardware threads

    void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

/// Seeded synthetic directed graphs with uniform features in [0,1]^k.
DirectedGraph generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

/// Uniformly sampled attack pairs (s, t): (t,s) not an edge, mutually
/// outside each other's 2-hop neighborhoods, and scored below the success
/// threshold by the model. Throws ContractError naming the dominant
/// rejection reason when 10000 draws cannot produce n_pairs pairs.
std::vector<std::pair<int, int>> sample_pairs(const DirectedGraph& g,
                                              const LinkPredictor& model, int n_pairs,
                                              double success_threshold, uint64_t seed);

struct PairOutcome {
    Method method = Method::savage;
    int pair_index = 0;
    int source = 0;
    int target = 0;
    uint64_t seed = 0;
    bool success = false;
    double pre_prob = 0.0;
    double post_prob = 0.0;
    int active_vicious = 0;
    int edges_added = 0;
    int edges_removed = 0;
    double kl_shift = 0.0;
    int iterations = 0;
    std::string record_json;  // the full serialized record line
};

struct MethodSummary {
    Method method = Method::savage;
    int n_pairs = 0;
    double attack_rate = 0.0;        // AR
    double avg_prediction = 0.0;     // AP
    double avg_vicious = 0.0;        // AN
    double avg_kl = 0.0;             // KL, raw (reports show x1000)
};

struct ExperimentOutput {
    std::vector<std::pair<int, int>> pairs;
    std::vector<PairOutcome> outcomes;  // method-major, pair-minor order
    std::vector<MethodSummary> summary;
    EvalResult model_eval;
};

/// Trains (or loads) the victim, samples pairs once, runs every configured
/// method on the same pairs and writes records.jsonl, summary.csv and
/// meta.json under output_dir. A pretrained model short-circuits training.
ExperimentOutput run_experiment(const ExperimentConfig& config,
                                const LinkPredictor* pretrained = nullptr,
                                const DirectedGraph* dataset = nullptr);

struct TransferRow {
    Heuristic heuristic = Heuristic::common_neighbors;
    int pair_index = 0;
    double before = 0.0;
    double after = 0.0;
    double lift = 0.0;
    bool before_zero = false;
};

struct TransferOutput {
    std::vector<TransferRow> rows;
    std::vector<PairOutcome> attack_outcomes;
    // per heuristic, in kAllHeuristics order
    std::vector<double> mean_of_ratios;
    std::vector<double> ratio_of_means;
};

/// Runs the plain savage attack on the sampled pairs and reports every
/// heuristic's score on the attacked pair before and after, plus the two
/// aggregate conventions. Writes transfer.csv.
TransferOutput run_transfer(const ExperimentConfig& config,
                            const LinkPredictor* pretrained = nullptr,
                            const DirectedGraph* dataset = nullptr);

struct SweepPoint {
    double value = 0.0;
    double avg_vicious = 0.0;
    double avg_edges_changed = 0.0;
    double attack_rate = 0.0;
    double avg_prediction = 0.0;
};

struct SweepOutput {
    std::string param;
    std::vector<SweepPoint> points;
};

/// Repeats the savage run over config.sweep.values, varying one penalty
/// weight; the model is trained once and shared. Writes sweep.csv.
SweepOutput run_sweep(const ExperimentConfig& config,
                      const LinkPredictor* pretrained = nullptr,
                      const DirectedGraph* dataset = nullptr);

/// Rebuilds summary.csv from an existing records.jsonl.
std::vector<MethodSummary> rebuild_summary(const std::string& records_path,
                                           const std::string& summary_out_path);

/// Loads (or generates) the dataset a config points at.
DirectedGraph load_dataset(const ExperimentConfig& config);

/// Runs fn(0..n_jobs-1) over a small thread pool. Results must be written
/// to per-index slots; the call rethrows the first job exception.
void parallel_for(int n_jobs, int n_threads, const std::function<void(int)>& fn);

/// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace savage
