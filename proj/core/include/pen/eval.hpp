#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pen/model.hpp"

namespace pen {

/// Hateful is the positive class.
struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const Confusion&) const = default;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    ClassMetrics hateful;
    ClassMetrics non_hateful;
    Confusion confusion;

    /// Ratios with a zero denominator are 0. Throws DataError on an empty
    /// confusion table.
    static MetricsReport from_confusion(const Confusion& c);
    nlohmann::ordered_json to_json() const;
};

Confusion confusion_of(std::span<const Label> gold, std::span<const Label> predicted);

/// Per-record outputs of one pass over a corpus, in input order.
struct Predictions {
    std::size_t dim = 0;
    std::vector<std::string> ids;
    std::vector<Label> gold;
    std::vector<Label> predicted;
    std::vector<double> masks;   // [N, dim] mask-position features
    std::vector<double> scores;  // [N, 2] S_all

    std::size_t size() const { return ids.size(); }
};

/// Scores every record with demonstrations drawn from `pool` by a generator
/// seeded with `seed`. Never touches the parameters.
template <typename T>
Predictions predict_corpus(const PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& records,
                           const DemonstrationPool& pool, std::uint64_t seed, std::size_t batch_size = 64);

/// Throws DataError for an empty corpus.
template <typename T>
MetricsReport evaluate(const PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& test,
                       const DemonstrationPool& pool, std::uint64_t seed, std::size_t batch_size = 64);

MetricsReport metrics_of(const Predictions& p);

void write_metrics(const std::filesystem::path& path, const MetricsReport& report);

// Feature dump, tab separated, one line per record:
//   id  label  mask_0 .. mask_{d-1}  score_hateful  score_non_hateful
// label is "hateful" or "non_hateful"; reals use %.9g.
void write_features(std::ostream& out, const Predictions& p);
void write_features(const std::filesystem::path& path, const Predictions& p);

template <typename T>
void export_features(const PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& records,
                     const DemonstrationPool& pool, std::uint64_t seed, const std::filesystem::path& path);

/// Mean pairwise cosine of mask features within a class minus across
/// classes, over all unordered pairs.
double class_cosine_gap(const Predictions& p);

struct SeedRun {
    std::uint64_t seed = 0;
    MetricsReport metrics;
};

struct MultiSeedReport {
    std::vector<SeedRun> runs;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
};

/// Calls `run` once per seed. Throws ConfigError for an empty seed list.
MultiSeedReport multi_seed_evaluate(const std::function<MetricsReport(std::uint64_t)>& run,
                                    std::span<const std::uint64_t> seeds);

/// seed,accuracy,macro_f1 rows followed by a "mean" row.
void write_multi_seed_csv(std::ostream& out, const MultiSeedReport& report);

}  // namespace pen
