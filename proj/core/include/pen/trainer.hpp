#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pen/checkpoint.hpp"
#include "pen/config.hpp"
#include "pen/eval.hpp"
#include "pen/model.hpp"
#include "pen/pcl.hpp"

namespace pen {

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    LossReport loss;        // sample-weighted means over the epoch's batches
    double train_acc = 0.0;

    /// {epoch, ce, l1, l2, total, train_acc}
    nlohmann::ordered_json to_json() const;
};

template <typename T>
struct BatchLoss {
    typename PenModel<T>::Output output;
    LossTerms<T> terms;
};

/// Forward pass plus the full objective for one batch of labelled sequences.
template <typename T>
BatchLoss<T> batch_loss(const PenModel<T>& model, Graph<T>& g, std::span<const AssembledSequence> batch,
                        const LossConfig& loss, std::optional<std::array<double, 2>> class_weights = std::nullopt);

/// N / (2 n_c) per class; ConfigError when a class is absent.
std::array<double, 2> inverse_frequency_weights(const std::vector<MemeRecord>& records);

/// Mini-batch training. Each epoch draws demonstrations for every record
/// (or reuses the first draw under the fixed policy), never pairing a record
/// with itself, shuffles, and steps once per batch. A trailing batch of one
/// record is skipped. Throws NumericError naming the first non-finite loss term.
template <typename T>
std::vector<EpochLog> train(PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& train_set,
                            const DemonstrationPool& pool, const RunConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

struct Dataset {
    std::vector<MemeRecord> train;
    std::vector<MemeRecord> test;
    std::vector<MemeRecord> demos;  // demonstration source when not the whole train split

    const std::vector<MemeRecord>& demo_source() const { return demos.empty() ? train : demos; }
};

/// Synthetic data when configured, otherwise the two corpus files
/// (ConfigError when neither is set).
Dataset load_dataset(const RunConfig& cfg);

// Files written under a run directory.
inline constexpr std::string_view kSnapshotFile = "config.snapshot.json";
inline constexpr std::string_view kLogFile = "log.jsonl";
inline constexpr std::string_view kCheckpointFile = "checkpoint.penw";
inline constexpr std::string_view kMetricsFile = "metrics.json";
inline constexpr std::string_view kFeaturesFile = "features.tsv";

struct RunResult {
    std::vector<EpochLog> epochs;
    MetricsReport metrics;
    Predictions test_predictions;
};

/// Train on dataset.train, then evaluate and export features on
/// dataset.test. With `out_dir`, writes the snapshot, log, checkpoint,
/// metrics and features there. `progress` receives the epoch log lines.
RunResult run_experiment(const RunConfig& cfg, const Dataset& data,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                         std::ostream* progress = nullptr);

/// Restores the checkpoint in `run_dir` and scores `records`.
Predictions predict_from_checkpoint(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                                    const std::vector<MemeRecord>& records);

/// Ablation names: "w/o PMP", "w/o L1", "w/o L2", "w/o PCL", "w/o s4",
/// "w/o s2s3", "w/o s2s3s4". "Pen" is the unchanged base.
/// Throws ConfigError for other names.
RunConfig apply_ablation(const RunConfig& base, std::string_view name);
const std::vector<std::string>& ablation_names();

struct AblationRow {
    std::string name;
    MultiSeedReport report;
};

/// The base row followed by one row per grid entry, all over `seeds`.
std::vector<AblationRow> ablate(const RunConfig& base, const Dataset& data, std::span<const std::string> grid,
                                std::span<const std::uint64_t> seeds, std::ostream* progress = nullptr);

/// name,seed,accuracy,macro_f1 rows, then name,mean,... per configuration.
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace pen
