#pragma once

// Run configuration: one JSON document with sections corpus, layout,
// encoder, loss, trainer and eval. Every key is optional; unknown keys are
// rejected. Defaults:
//
//   corpus.train_path, corpus.test_path     ""   (or corpus.synthetic {...})
//   corpus.schema.{id,text,caption,knowledge,label}_field, .hateful_values,
//     .non_hateful_values                   see CorpusSchema
//   corpus.synthetic.{n_train, n_test, vocab_size, signal_token, noise_rate,
//     seed, hate_fraction, signal_demos}    see SyntheticSpec
//   corpus.demo_pool_limit                  0 (whole training split)
//   layout.len_infer / len_demo / len_prompt 192 / 64 / 3
//   layout.hateful_first                    true
//   layout.template                         ["it", "was"]
//   layout.hateful_word / non_hateful_word  "bad" / "good"
//   encoder.kind                            "tiny" | "file"
//   encoder.dim, encoder.mixing             64, true   (tiny)
//   encoder.min_freq                        1
//   encoder.archive                         ""         (file)
//   loss.alpha, loss.beta                   0.1, 0.1
//   loss.tau1, loss.tau2                    0.3, 0.3
//   loss.formulation                        "infonce" | "literal_ratio"
//   loss.l2_stop_grad                       false
//   trainer.epochs, trainer.batch_size      20, 16
//   trainer.learning_rate                   1e-3 (tiny) / 5e-4 (file)
//   trainer.seed                            0
//   trainer.views                           ["s1","s2","s3","s4"]
//   trainer.pmp_enabled                     true
//   trainer.demo_policy                     "per_epoch" | "fixed"
//   trainer.beta_m, beta_v, epsilon         0.9, 0.999, 1e-8
//   trainer.precision                       32 | 64
//   trainer.tie_region_lstm, shared_lmhead  true, true
//   trainer.class_weighting                 false
//   eval.seed                               trainer.seed
//   eval.seeds                              []  (multi-seed runs)
//   eval.ablation                           []  (ablation grid names)
//
// Overrides are dotted assignments such as "loss.alpha=0.2"; the value is
// parsed as JSON and falls back to a plain string. load_config resolves
// relative paths against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pen/assembler.hpp"
#include "pen/corpus.hpp"
#include "pen/pcl.hpp"
#include "pen/pmp.hpp"

namespace pen {

struct CorpusConfig {
    std::string train_path;
    std::string test_path;
    CorpusSchema schema;
    std::optional<SyntheticSpec> synthetic;
    std::size_t demo_pool_limit = 0;
};

enum class EncoderKind { Tiny, File };

struct EncoderConfig {
    EncoderKind kind = EncoderKind::Tiny;
    std::size_t dim = 64;
    bool mixing = true;
    std::size_t min_freq = 1;
    std::string archive;
};

enum class DemoPolicy { PerEpochResample, FixedPerSample };
enum class Precision { F32, F64 };

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    std::optional<double> learning_rate;
    std::uint64_t seed = 0;
    ViewSet views = ViewSet::all();
    bool pmp_enabled = true;
    DemoPolicy demo_policy = DemoPolicy::PerEpochResample;
    double beta_m = 0.9;
    double beta_v = 0.999;
    double epsilon = 1e-8;
    Precision precision = Precision::F32;
    bool tie_region_lstm = true;
    bool shared_lmhead = true;
    bool class_weighting = false;

    double resolved_learning_rate(EncoderKind kind) const
    {
        return learning_rate.value_or(kind == EncoderKind::Tiny ? 1e-3 : 5e-4);
    }
    void validate() const;
};

struct EvalConfig {
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> ablation;
};

struct RunConfig {
    CorpusConfig corpus;
    RegionLayout layout;
    PromptConfig prompt;
    EncoderConfig encoder;
    LossConfig loss;
    TrainConfig trainer;
    EvalConfig eval;

    HeadOptions head() const;
    std::uint64_t eval_seed() const { return eval.seed.value_or(trainer.seed); }
    void validate() const;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_config(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Sets doc[a][b]... = value for "a.b...=value".
void apply_override(nlohmann::json& doc, std::string_view assignment);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace pen
