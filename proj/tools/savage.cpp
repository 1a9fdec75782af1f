// Command-line driver: synthesize graphs, train the victim model, run
// attack experiments, transferability checks and penalty sweeps.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "savage/experiment.hpp"

using namespace savage;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    int64_t seed_override = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("config", args.config_path, "JSON config file")->required();
    cmd->add_option("--out", args.out_override, "override the output directory");
    cmd->add_option("--seed", args.seed_override, "override the master seed");
}

ExperimentConfig load(const CommonArgs& args) {
    ExperimentConfig cfg = load_experiment_config(args.config_path);
    if (!args.out_override.empty()) cfg.output_dir = args.out_override;
    if (args.seed_override >= 0)
        cfg.master_seed = static_cast<uint64_t>(args.seed_override);
    return cfg;
}

void print_summary(const std::vector<MethodSummary>& summary) {
    std::printf("%-10s %8s %10s %10s %12s\n", "method", "AR", "AP", "AN", "KL(x1000)");
    for (const MethodSummary& s : summary)
        std::printf("%-10s %8.3f %10.4f %10.2f %12.4f\n", method_name(s.method).c_str(),
                    s.attack_rate, s.avg_prediction, s.avg_vicious, s.avg_kl * 1000.0);
}

int cmd_synth(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    DirectedGraph g = load_dataset(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    save_edge_list(g.adjacency, cfg.output_dir + "/edges.tsv");
    save_features_csv(g.features, cfg.output_dir + "/features.csv");
    std::printf("wrote %s/edges.tsv (%d nodes, %d edges) and features.csv\n",
                cfg.output_dir.c_str(), g.n, g.num_edges());
    return 0;
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    DirectedGraph g = load_dataset(cfg);
    EdgeSplit split = split_edges(g, cfg.model.test_fraction,
                                  mix_seed(cfg.master_seed, 0x51));
    TrainResult result = train(g, split, cfg.model, mix_seed(cfg.master_seed, 0x7A));
    EvalResult eval = evaluate(result.model, g, split);
    std::filesystem::create_directories(cfg.output_dir);
    const std::string path = cfg.output_dir + "/model.json";
    save_checkpoint(result.model, path);
    std::printf("trained %d epochs; test accuracy %.4f, AUROC %.4f; saved %s\n",
                cfg.model.epochs, eval.accuracy, eval.auroc, path.c_str());
    return 0;
}

int cmd_attack(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    ExperimentOutput out = run_experiment(cfg);
    std::printf("model test AUROC %.4f; %zu pairs attacked\n", out.model_eval.auroc,
                out.pairs.size());
    print_summary(out.summary);
    std::printf("records: %s/records.jsonl, summary: %s/summary.csv\n",
                cfg.output_dir.c_str(), cfg.output_dir.c_str());
    return 0;
}

int cmd_transfer(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    TransferOutput out = run_transfer(cfg);
    std::printf("%-24s %18s %18s\n", "heuristic", "mean_of_ratios", "ratio_of_means");
    for (size_t h = 0; h < std::size(kAllHeuristics); ++h)
        std::printf("%-24s %18.4f %18.4f\n",
                    heuristic_name(kAllHeuristics[h]).c_str(), out.mean_of_ratios[h],
                    out.ratio_of_means[h]);
    std::printf("transfer table: %s/transfer.csv\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    SweepOutput out = run_sweep(cfg);
    std::printf("%-8s %10s %8s %10s %14s\n", out.param.c_str(), "value", "AR", "AN",
                "edges_changed");
    for (const SweepPoint& pt : out.points)
        std::printf("%-8s %10.3f %8.3f %10.2f %14.2f\n", "", pt.value, pt.attack_rate,
                    pt.avg_vicious, pt.avg_edges_changed);
    std::printf("series: %s/sweep.csv\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_report(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    const std::string records = cfg.output_dir + "/records.jsonl";
    const std::string summary = cfg.output_dir + "/summary.csv";
    print_summary(rebuild_summary(records, summary));
    std::printf("rebuilt %s from %s\n", summary.c_str(), records.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vicious-node link prediction attack toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, attack_args, transfer_args, sweep_args,
        report_args;
    add_common(app.add_subcommand("synth", "generate a synthetic dataset"), synth_args);
    add_common(app.add_subcommand("train", "train and checkpoint the victim model"),
               train_args);
    add_common(app.add_subcommand("attack", "run the attack experiment"), attack_args);
    add_common(app.add_subcommand("transfer", "heuristic transferability report"),
               transfer_args);
    add_common(app.add_subcommand("sweep", "penalty sweep series"), sweep_args);
    add_common(app.add_subcommand("report", "rebuild summary.csv from records"),
               report_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("synth")) return cmd_synth(synth_args);
        if (app.got_subcommand("train")) return cmd_train(train_args);
        if (app.got_subcommand("attack")) return cmd_attack(attack_args);
        if (app.got_subcommand("transfer")) return cmd_transfer(transfer_args);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args);
        if (app.got_subcommand("report")) return cmd_report(report_args);
    } catch (const std::exception& e) {
        const json error = {
            {"error",
             {{"type", typeid(e).name()}, {"message", e.what()}}}};
        std::fprintf(stderr, "%s\n", error.dump().c_str());
        return 1;
    }
    return 0;
}
