#include "pen_cli/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pen/config.hpp"
#include "pen/random.hpp"
#include "pen/trainer.hpp"
#include "pen_oracle/oracle.hpp"

namespace pen::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string out = "run";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    std::size_t limit = 0;
    std::string split = "test";
};

RunConfig load(const Options& o)
{
    std::vector<std::string> overrides = o.sets;
    if (o.seed) {
        overrides.push_back("trainer.seed=" + std::to_string(*o.seed));
    }
    return load_config(o.config, overrides);
}

const std::vector<MemeRecord>& pick_split(const Dataset& data, const std::string& split)
{
    return split == "train" ? data.train : data.test;
}

std::ofstream open_out(const fs::path& path)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    return out;
}

int cmd_assemble(const Options& o, std::ostream& out)
{
    const RunConfig cfg = load(o);
    const Dataset data = load_dataset(cfg);
    const Vocabulary vocab = Vocabulary::build(data.train, cfg.encoder.min_freq, cfg.prompt);
    const auto pool = DemonstrationPool::from_training(data.demo_source(), cfg.corpus.demo_pool_limit, cfg.trainer.seed);
    // Same demonstration draws as the first training epoch or the evaluation pass.
    const bool train = o.split == "train";
    auto rng = train ? make_rng(cfg.trainer.seed, Stream::TrainDemos) : make_rng(cfg.eval_seed(), Stream::EvalDemos);
    const auto& records = pick_split(data, o.split);
    const std::size_t n = o.limit == 0 ? records.size() : std::min(o.limit, records.size());
    for (std::size_t i = 0; i < n; ++i) {
        const DemoPair d = sample_demonstrations(pool, rng, records[i].id);
        out << dump(assemble(records[i], *d.hateful, *d.non_hateful, cfg.layout, vocab)) << '\n';
    }
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out)
{
    const RunConfig cfg = load(o);
    const RunResult r = run_experiment(cfg, load_dataset(cfg), fs::path(o.out), &out);
    if (!r.test_predictions.ids.empty()) {
        out << r.metrics.to_json().dump() << '\n';
    }
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out)
{
    const RunConfig cfg = load(o);
    const Dataset data = load_dataset(cfg);
    const fs::path dir(o.out);
    if (!cfg.eval.seeds.empty()) {
        const auto run = [&](std::uint64_t seed) {
            RunConfig c = cfg;
            c.trainer.seed = seed;
            c.eval.seed = seed;
            return run_experiment(c, data, dir / ("seed-" + std::to_string(seed))).metrics;
        };
        const MultiSeedReport report = multi_seed_evaluate(run, cfg.eval.seeds);
        auto csv = open_out(dir / "multi_seed.csv");
        write_multi_seed_csv(csv, report);
        write_multi_seed_csv(out, report);
        return kExitOk;
    }
    const MetricsReport m = metrics_of(predict_from_checkpoint(cfg, data, dir, data.test));
    write_metrics(dir / kMetricsFile, m);
    out << m.to_json().dump() << '\n';
    return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out, std::ostream& err)
{
    const RunConfig cfg = load(o);
    const Dataset data = load_dataset(cfg);
    const std::vector<std::string> grid = cfg.eval.ablation.empty() ? ablation_names() : cfg.eval.ablation;
    for (const auto& name : grid) {
        apply_ablation(cfg, name);
    }
    const std::vector<std::uint64_t> seeds =
        cfg.eval.seeds.empty() ? std::vector<std::uint64_t>{cfg.trainer.seed} : cfg.eval.seeds;
    const auto rows = ablate(cfg, data, grid, seeds, &err);
    auto csv = open_out(fs::path(o.out) / "ablation.csv");
    write_ablation_csv(csv, rows);
    write_ablation_csv(out, rows);
    return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out)
{
    const RunConfig cfg = load(o);
    const Dataset data = load_dataset(cfg);
    const Predictions p = predict_from_checkpoint(cfg, data, o.out, pick_split(data, o.split));
    const fs::path path = fs::path(o.out) / (o.split == "train" ? "features_train.tsv" : std::string(kFeaturesFile));
    write_features(path, p);
    out << "wrote " << p.size() << " records to " << path.string() << '\n';
    return kExitOk;
}

int cmd_oracle(const Options& o, std::ostream& out)
{
    const RunConfig cfg = load(o);
    bool ok = true;
    for (const auto& r : oracle::run_all(cfg.trainer.seed)) {
        char line[160];
        std::snprintf(line, sizeof line, "%s %-8s max_error=%.3g tolerance=%.3g", r.passed ? "PASS" : "FAIL",
                      r.name.c_str(), r.max_error, r.tolerance);
        out << line << "  " << r.detail << '\n';
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app("Prompt-enhanced hateful meme classifier", "pen");
    app.require_subcommand(1, 1);
    Options o;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run config (JSON)")->required();
        sub->add_option("--out", o.out, "Run directory")->capture_default_str();
        sub->add_option("--seed", o.seed, "Overrides trainer.seed");
        sub->add_option("--set", o.sets, "Dotted-key override, e.g. loss.alpha=0.2 (repeatable)");
        return sub;
    };
    auto* assemble_cmd = common(app.add_subcommand("assemble", "Print assembled sequences"));
    assemble_cmd->add_option("--limit", o.limit, "Number of records (0 = all)");
    assemble_cmd->add_option("--split", o.split, "train or test")
        ->check(CLI::IsMember({"train", "test"}))
        ->capture_default_str();
    auto* train_cmd = common(app.add_subcommand("train", "Train, evaluate and write a run directory"));
    auto* eval_cmd = common(app.add_subcommand("eval", "Evaluate a run directory, or train per eval.seeds"));
    auto* ablate_cmd = common(app.add_subcommand("ablate", "Run the ablation grid over eval.seeds"));
    auto* export_cmd = common(app.add_subcommand("export-features", "Write mask features and scores"));
    export_cmd->add_option("--split", o.split, "train or test")
        ->check(CLI::IsMember({"train", "test"}))
        ->capture_default_str();
    auto* oracle_cmd = common(app.add_subcommand("oracle-check", "Run the reference-implementation checks"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (assemble_cmd->parsed()) {
            return cmd_assemble(o, out);
        }
        if (train_cmd->parsed()) {
            return cmd_train(o, out);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(o, out);
        }
        if (ablate_cmd->parsed()) {
            return cmd_ablate(o, out, err);
        }
        if (export_cmd->parsed()) {
            return cmd_export(o, out);
        }
        if (oracle_cmd->parsed()) {
            return cmd_oracle(o, out);
        }
    } catch (const ConfigError& e) {
        err << "error: config: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: runtime: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace pen::cli
