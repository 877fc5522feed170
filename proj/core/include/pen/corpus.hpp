#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace pen {

// Index order matches the score tuple (score_hateful, score_non_hateful).
enum class Label : std::uint8_t { Hateful = 0, NonHateful = 1 };

inline std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }
std::string_view label_name(Label l);

/// One meme. The image is carried only by its precomputed caption.
struct MemeRecord {
    std::string id;
    std::string text;
    std::string caption;
    std::vector<std::string> knowledge;
    Label label = Label::NonHateful;

    bool operator==(const MemeRecord&) const = default;
};

struct SplitStats {
    std::size_t train_hate = 0;
    std::size_t train_nonhate = 0;
    std::size_t test_hate = 0;
    std::size_t test_nonhate = 0;

    std::size_t total() const { return train_hate + train_nonhate + test_hate + test_nonhate; }
    SplitStats& operator+=(const SplitStats& o);
    bool operator==(const SplitStats&) const = default;
};

enum class Split { Train, Test };

/// Field names of a corpus file and the raw label values meaning each class.
/// Label values are compared case-insensitively against the JSON scalar's text
/// (numbers in their shortest form, e.g. 1 -> "1").
struct CorpusSchema {
    std::string id_field = "id";
    std::string text_field = "text";
    std::string caption_field = "caption";
    std::string knowledge_field = "knowledge";
    std::string label_field = "label";
    std::vector<std::string> hateful_values = {"1", "hateful", "harmful"};
    std::vector<std::string> non_hateful_values = {"0", "non-hateful", "not-hateful", "not harmful", "harmless"};
};

struct LoadedCorpus {
    std::vector<MemeRecord> records;
    SplitStats stats;
};

/// Reads one JSON object per line. Blank lines are skipped; unknown fields are
/// ignored; a missing id becomes "<filename>:<line>". Throws DataError naming the
/// line for malformed JSON, a missing/unknown label, or empty text.
LoadedCorpus load_corpus(const std::filesystem::path& path, const CorpusSchema& schema = {},
                         Split split = Split::Train);

/// Writes records in the layout load_corpus reads. Labels are written as the
/// first configured value of each class (as a number when it is one).
void write_corpus(const std::filesystem::path& path, const std::vector<MemeRecord>& records,
                  const CorpusSchema& schema = {});

SplitStats tally(const std::vector<MemeRecord>& records, Split split);

struct DemonstrationPool {
    std::vector<MemeRecord> hateful;
    std::vector<MemeRecord> non_hateful;

    /// Splits training records by label. A nonzero `limit` keeps a fixed
    /// random subset of at most `limit` records per class.
    static DemonstrationPool from_training(const std::vector<MemeRecord>& train, std::size_t limit = 0,
                                           std::uint64_t seed = 0);
};

struct DemoPair {
    const MemeRecord* hateful = nullptr;
    const MemeRecord* non_hateful = nullptr;
};

/// Draws one record uniformly from each class list. When `exclude_id` is
/// given, that record is never returned. Throws DataError when a list is
/// empty (or holds only the excluded record).
DemoPair sample_demonstrations(const DemonstrationPool& pool, std::mt19937_64& rng,
                               std::optional<std::string_view> exclude_id = std::nullopt);

struct SyntheticSpec {
    std::size_t n_train = 400;
    std::size_t n_test = 100;
    std::size_t vocab_size = 64;
    std::string signal_token = "zzhate";
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
    double hate_fraction = 0.5;
    // Draw demonstrations only from training records whose signal agrees
    // with their label.
    bool signal_demos = false;
};

struct SyntheticCorpus {
    std::vector<MemeRecord> train;
    std::vector<MemeRecord> test;
    std::vector<MemeRecord> demos;  // filled only with signal_demos
};

/// Filler words are "w0".."w{vocab_size-1}". Hateful texts carry the signal
/// token with probability 1 - noise_rate, non-hateful ones with probability
/// noise_rate. Each split holds round(n * hate_fraction) hateful records in
/// shuffled order. With signal_demos, `demos` keeps the noise-free training
/// records: every hateful one carries the signal token, no non-hateful one does.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace pen
